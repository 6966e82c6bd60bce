#include "cycle/runner.hpp"

#include <charconv>
#include <chrono>
#include <fstream>
#include <map>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "cycle/error.hpp"

namespace cycle {

using Json = nlohmann::ordered_json;

namespace {

namespace fs = std::filesystem;

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        throw IoError(fmt::format("cannot create directory '{}': {}", dir.string(), ec.message()));
    }
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError(fmt::format("cannot write '{}'", path.string()));
    }
    out << text;
    if (!out) {
        throw IoError(fmt::format("write failed for '{}'", path.string()));
    }
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError(fmt::format("cannot open '{}'", path.string()));
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

Json optional_number(const std::optional<double>& value) {
    return value ? Json(*value) : Json(nullptr);
}

Json summary_json(const ExperimentReport& report) {
    return Json{{"mva", report.summary.mva},
                {"mcg", report.summary.mcg},
                {"cgs", optional_number(report.summary.cgs)},
                {"cgs_population", optional_number(report.summary_population.cgs)},
                {"pearson_cf", optional_number(report.summary.pearson_cf)}};
}

void write_manifest(const fs::path& dir, std::string_view command, std::uint64_t seed,
                    const std::vector<std::string>& artifacts, double seconds) {
    Json manifest{{"command", command}, {"seed", seed}, {"wall_clock_seconds", seconds}, {"artifacts", artifacts}};
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

PreparedData prepare_data(const ExperimentConfig& config) {
    config.validate();
    const DatasetSpec& spec = config.dataset;
    std::optional<Dataset> dataset;
    if (spec.kind == DatasetKind::Blobs) {
        Rng rng(config.seed, kDataStream);
        dataset = make_blobs(spec.num_classes, spec.dim, spec.samples_per_class, spec.spread, rng, spec.separation);
    } else {
        dataset = load_csv(spec.csv_path, spec.csv_header);
    }

    const SplitSpec& split = config.split;
    Rng split_rng(config.seed, kSplitStream);
    DataPartition partition = [&] {
        switch (split.strategy) {
            case SplitStrategy::Dirichlet:
                return split_dirichlet(*dataset, split.participants, split.delta, split.holdout_fraction, split_rng);
            case SplitStrategy::Imbalanced:
                return split_imbalanced(*dataset, split.participants, split.kappa, split.m, split.holdout_fraction,
                                        split_rng);
            case SplitStrategy::Homogeneous:
                break;
        }
        return split_homogeneous(*dataset, split.participants, split.holdout_fraction, split_rng);
    }();

    for (std::size_t i = 0; i < config.corruptions.size(); ++i) {
        const Corruption& c = config.corruptions[i];
        Rng flip_rng(config.seed, kFlipStreamBase + i);
        partition = flip_labels(std::move(partition), c.participant, c.flip_rate, dataset->num_classes(), flip_rng);
    }
    return PreparedData{std::move(*dataset), std::move(partition)};
}

SuiteReport run(const ExperimentConfig& config) {
    const auto start = std::chrono::steady_clock::now();
    config.validate();
    const fs::path out_dir = config.output_dir;
    ensure_dir(out_dir);

    const PreparedData data = prepare_data(config);
    SuiteReport suite;
    suite.config = config;

    ProtocolConfig baseline = config.protocol;
    baseline.mode = Mode::Standalone;
    suite.standalone = simulate_pdl(data.dataset, data.partition, baseline, config.seed);

    for (Mode mode : config.modes) {
        ProtocolConfig protocol = config.protocol;
        protocol.mode = mode;
        ModeResult result;
        result.report = run_protocol(data.dataset, data.partition, protocol, config.seed, &suite.standalone);
        const auto& snapshots = result.report.trace.reputations;
        if (!snapshots.empty()) {
            const fs::path rep_dir = out_dir / to_string(mode);
            ensure_dir(rep_dir);
            for (std::size_t t = 0; t < snapshots.size(); ++t) {
                const std::string name = fmt::format("{}/reputation_t{}.csv", to_string(mode), t);
                write_reputation_csv(snapshots[t], out_dir / name);
                result.reputation_files.push_back(name);
            }
        }
        suite.results.push_back(std::move(result));
    }

    Json metrics;
    metrics["seed"] = config.seed;
    metrics["participants"] = data.partition.size();
    // The echo reproduces the results; where they land is the caller's choice.
    Json echo = Json::parse(serialize_config(config));
    echo.erase("output_dir");
    metrics["config"] = echo;
    metrics["standalone"] = Json{{"final_accuracy", suite.standalone.final_accuracy},
                                 {"accuracy", suite.standalone.accuracy}};
    Json reports = Json::array();
    std::string gains_csv = "mode,participant,standalone,collaborative,gain\n";
    for (const ModeResult& result : suite.results) {
        const ExperimentReport& r = result.report;
        const std::string_view label = to_string(r.trace.mode);
        reports.push_back(Json{{"mode", label},
                               {"standalone", r.gains.standalone},
                               {"final_accuracy", r.gains.collaborative},
                               {"gains", r.gains.gains},
                               {"summary", summary_json(r)},
                               {"accuracy", r.trace.accuracy},
                               {"messages_sent", r.trace.messages_sent},
                               {"reputation_files", result.reputation_files}});
        for (std::size_t n = 0; n < r.gains.size(); ++n) {
            gains_csv += fmt::format("{},{},{},{},{}\n", label, n, r.gains.standalone[n], r.gains.collaborative[n],
                                     r.gains.gains[n]);
        }
    }
    metrics["reports"] = reports;

    write_text(out_dir / "metrics.json", metrics.dump(2) + "\n");
    write_text(out_dir / "gains.csv", gains_csv);
    suite.artifacts = {"metrics.json", "gains.csv"};
    for (const ModeResult& result : suite.results) {
        suite.artifacts.insert(suite.artifacts.end(), result.reputation_files.begin(), result.reputation_files.end());
    }
    suite.wall_clock_seconds = seconds_since(start);
    write_manifest(out_dir, "run", config.seed, suite.artifacts, suite.wall_clock_seconds);
    return suite;
}

MeanLabReport run_meanlab(const ExperimentConfig& config) {
    const auto start = std::chrono::steady_clock::now();
    config.validate();
    const fs::path out_dir = config.output_dir;
    ensure_dir(out_dir);
    const MeanLabSpec& spec = config.meanlab;

    MeanLabReport report;
    meanlab::SweepConfig sweep;
    sweep.theta_1 = spec.theta_1;
    sweep.gamma = spec.gamma;
    sweep.gamma_g_grid = spec.gamma_g_grid;
    sweep.runs = spec.runs;
    sweep.seed = config.seed;
    sweep.placement = spec.placement;
    sweep.thresholds = spec.thresholds;
    report.usefulness = meanlab::mc_usefulness_sweep(sweep);
    meanlab::write_usefulness_csv(report.usefulness, out_dir / "usefulness.csv");
    report.artifacts.push_back("usefulness.csv");

    if (!spec.imbalance_ratios.empty()) {
        meanlab::ImbalanceConfig imbalance;
        imbalance.sigma_sq = spec.sigma_sq;
        imbalance.n2 = spec.n2;
        imbalance.ratios = spec.imbalance_ratios;
        imbalance.runs = spec.runs;
        imbalance.seed = config.seed;
        imbalance.thresholds = spec.thresholds;
        report.imbalance = meanlab::mc_imbalanced(imbalance);
        meanlab::write_imbalance_csv(report.imbalance, out_dir / "imbalance.csv");
        report.artifacts.push_back("imbalance.csv");
    }
    write_manifest(out_dir, "mean-lab", config.seed, report.artifacts, seconds_since(start));
    return report;
}

fs::path generate_data(const ExperimentConfig& config) {
    const auto start = std::chrono::steady_clock::now();
    config.validate();
    if (config.dataset.kind != DatasetKind::Blobs) {
        throw ConfigError("gen-data needs dataset.kind 'blobs'");
    }
    const fs::path out_dir = config.output_dir;
    ensure_dir(out_dir);
    const DatasetSpec& spec = config.dataset;
    Rng rng(config.seed, kDataStream);
    const Dataset dataset =
        make_blobs(spec.num_classes, spec.dim, spec.samples_per_class, spec.spread, rng, spec.separation);
    const fs::path path = out_dir / "data.csv";
    save_csv(dataset, path);
    write_manifest(out_dir, "gen-data", config.seed, {"data.csv"}, seconds_since(start));
    return path;
}

std::vector<ModeSummary> load_metrics(const fs::path& path) {
    Json root;
    try {
        root = Json::parse(read_text(path));
        std::vector<ModeSummary> out;
        for (const Json& item : root.at("reports")) {
            ModeSummary summary;
            summary.label = item.at("mode").get<std::string>();
            const auto standalone = item.at("standalone").get<std::vector<double>>();
            const auto collaborative = item.at("final_accuracy").get<std::vector<double>>();
            summary.gains = gain_record(standalone, collaborative);
            summary.summary = summarize(summary.gains, SpreadConvention::Sample);
            out.push_back(std::move(summary));
        }
        return out;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(fmt::format("{}: malformed metrics file: {}", path.string(), e.what()));
    }
}

std::vector<std::pair<std::string, GainRecord>> read_gains_csv(const fs::path& path) {
    std::istringstream in(read_text(path));
    std::string line;
    if (!std::getline(in, line) || line.rfind("mode,participant,standalone,collaborative,gain", 0) != 0) {
        throw DataError(fmt::format("{}:1: missing gains header", path.string()));
    }
    std::vector<std::pair<std::string, GainRecord>> out;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::size_t pos = 0;
        for (;;) {
            const std::size_t comma = line.find(',', pos);
            cells.push_back(line.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos));
            if (comma == std::string::npos) break;
            pos = comma + 1;
        }
        if (cells.size() != 5) {
            throw DataError(fmt::format("{}:{}: expected 5 columns, got {}", path.string(), line_no, cells.size()));
        }
        double values[3];
        for (int i = 0; i < 3; ++i) {
            const std::string& cell = cells[2 + i];
            const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), values[i]);
            if (ec != std::errc{} || ptr != cell.data() + cell.size()) {
                throw DataError(fmt::format("{}:{}: bad number '{}'", path.string(), line_no, cell));
            }
        }
        if (out.empty() || out.back().first != cells[0]) {
            out.emplace_back(cells[0], GainRecord{});
        }
        GainRecord& record = out.back().second;
        record.standalone.push_back(values[0]);
        record.collaborative.push_back(values[1]);
        record.gains.push_back(values[2]);
    }
    return out;
}

Comparison compare(const ModeSummary& a, const ModeSummary& b) {
    if (a.gains.size() != b.gains.size()) {
        throw ParameterError(fmt::format("cannot compare {} participants with {}", a.gains.size(), b.gains.size()));
    }
    Comparison cmp{a.label, b.label, {}};
    auto add = [&](std::string metric, std::optional<double> x, std::optional<double> y) {
        std::optional<double> delta;
        if (x && y) delta = *y - *x;
        cmp.rows.push_back({std::move(metric), x, y, delta});
    };
    add("mva", a.summary.mva, b.summary.mva);
    add("mcg", a.summary.mcg, b.summary.mcg);
    add("cgs", a.summary.cgs, b.summary.cgs);
    for (std::size_t n = 0; n < a.gains.size(); ++n) {
        add(fmt::format("gain_p{}", n), a.gains.gains[n], b.gains.gains[n]);
    }
    return cmp;
}

namespace {

std::string cell(const std::optional<double>& value) {
    return value ? fmt::format("{}", *value) : "";
}

std::string sign(const std::optional<double>& delta) {
    if (!delta) return "";
    if (*delta > 0.0) return "+";
    if (*delta < 0.0) return "-";
    return "0";
}

}  // namespace

std::string comparison_csv(const Comparison& comparison) {
    std::string out = "metric,a,b,delta,sign\n";
    for (const ComparisonRow& row : comparison.rows) {
        out += fmt::format("{},{},{},{},{}\n", row.metric, cell(row.a), cell(row.b), cell(row.delta), sign(row.delta));
    }
    return out;
}

std::string comparison_text(const Comparison& comparison) {
    auto fixed = [](const std::optional<double>& v) { return v ? fmt::format("{:.2f}", *v) : std::string("-"); };
    std::string out = fmt::format("{:<10} {:>10} {:>10} {:>10}\n", "metric", comparison.label_a, comparison.label_b,
                                  "delta");
    for (const ComparisonRow& row : comparison.rows) {
        std::string delta = fixed(row.delta);
        if (row.delta && *row.delta > 0.0) delta = "+" + delta;
        out += fmt::format("{:<10} {:>10} {:>10} {:>10}\n", row.metric, fixed(row.a), fixed(row.b), delta);
    }
    return out;
}

}  // namespace cycle
