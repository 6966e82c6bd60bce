#include "cycle/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "cycle/error.hpp"

namespace cycle {

using Json = nlohmann::ordered_json;

namespace {

// Reads fields out of one JSON object and complains about anything left over.
class ObjectReader {
public:
    ObjectReader(const Json& object, std::string path) : object_(object), path_(std::move(path)) {
        if (!object_.is_object()) {
            throw ConfigError(fmt::format("{} must be an object", display(path_)));
        }
    }

    void finish() const {
        for (const auto& [key, value] : object_.items()) {
            if (!seen_.contains(key)) {
                throw ConfigError(fmt::format("unknown key '{}'", field(key)));
            }
        }
    }

    const Json* find(const std::string& key) {
        seen_.insert(key);
        auto it = object_.find(key);
        return it == object_.end() ? nullptr : &*it;
    }

    template <typename T>
    void read(const std::string& key, T& out) {
        const Json* value = find(key);
        if (value == nullptr) {
            return;
        }
        try {
            if constexpr (std::is_same_v<T, double>) {
                if (!value->is_number()) {
                    throw ConfigError(fmt::format("{} must be a number", field(key)));
                }
            } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
                if (!value->is_number_integer()) {
                    throw ConfigError(fmt::format("{} must be an integer", field(key)));
                }
                if constexpr (std::is_unsigned_v<T>) {
                    if (value->is_number_integer() && !value->is_number_unsigned()) {
                        throw ConfigError(fmt::format("{} must be >= 0", field(key)));
                    }
                }
            }
            out = value->get<T>();
        } catch (const nlohmann::json::exception&) {
            throw ConfigError(fmt::format("{} has the wrong type", field(key)));
        }
    }

    std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

private:
    static std::string display(const std::string& path) { return path.empty() ? "config" : path; }

    const Json& object_;
    std::string path_;
    std::set<std::string> seen_;
};

DatasetKind parse_dataset_kind(const std::string& text) {
    if (text == "blobs") return DatasetKind::Blobs;
    if (text == "csv") return DatasetKind::Csv;
    throw ConfigError(fmt::format("dataset.kind must be 'blobs' or 'csv', got '{}'", text));
}

SplitStrategy parse_strategy(const std::string& text) {
    if (text == "homogeneous") return SplitStrategy::Homogeneous;
    if (text == "dirichlet") return SplitStrategy::Dirichlet;
    if (text == "imbalanced") return SplitStrategy::Imbalanced;
    throw ConfigError(
        fmt::format("split.strategy must be homogeneous, dirichlet or imbalanced, got '{}'", text));
}

meanlab::MeanPlacement parse_placement(const std::string& text) {
    if (text == "half-distance") return meanlab::MeanPlacement::HalfDistance;
    if (text == "offset") return meanlab::MeanPlacement::Offset;
    throw ConfigError(fmt::format("meanlab.placement must be 'half-distance' or 'offset', got '{}'", text));
}

template <typename Fn>
auto rethrow_as_config(const std::string& field, Fn&& fn) {
    try {
        return fn();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        throw ConfigError(fmt::format("{}: {}", field, e.what()));
    }
}

void read_dataset(const Json& node, DatasetSpec& spec) {
    ObjectReader r(node, "dataset");
    std::string kind(to_string(spec.kind));
    r.read("kind", kind);
    spec.kind = parse_dataset_kind(kind);
    r.read("classes", spec.num_classes);
    r.read("dim", spec.dim);
    r.read("samples_per_class", spec.samples_per_class);
    r.read("spread", spec.spread);
    r.read("separation", spec.separation);
    r.read("path", spec.csv_path);
    r.read("header", spec.csv_header);
    r.finish();
}

void read_split(const Json& node, SplitSpec& spec) {
    ObjectReader r(node, "split");
    std::string strategy(to_string(spec.strategy));
    r.read("strategy", strategy);
    spec.strategy = parse_strategy(strategy);
    r.read("participants", spec.participants);
    r.read("holdout_fraction", spec.holdout_fraction);
    r.read("delta", spec.delta);
    r.read("kappa", spec.kappa);
    r.read("m", spec.m);
    r.finish();
}

void read_protocol(const Json& node, ProtocolConfig& p) {
    ObjectReader r(node, "protocol");
    r.read("alpha", p.alpha);
    r.read("tau_opt", p.tau_opt);
    r.read("tau_max", p.tau_max);
    r.read("lambda0", p.lambda0);
    r.read("share_period", p.share_period);
    r.read("rounds", p.rounds);
    r.read("warmup_epochs", p.warmup_epochs);
    r.read("lr", p.lr);
    r.read("lr_decay", p.lr_decay);
    r.read("lr_decay_every", p.lr_decay_every);
    r.read("momentum", p.momentum);
    r.read("batch_size", p.batch_size);
    r.read("batches_per_round", p.batches_per_round);
    r.read("temperature", p.temperature);
    r.read("shared_batch_schedule", p.shared_batch_schedule);
    std::string gate(to_string(p.share_gate));
    r.read("share_gate", gate);
    p.share_gate = rethrow_as_config("protocol.share_gate", [&] { return parse_share_gate(gate); });
    r.finish();
}

void read_modes(const Json& node, std::vector<Mode>& modes) {
    auto one = [](const Json& item) {
        if (!item.is_string()) {
            throw ConfigError("mode entries must be strings");
        }
        return rethrow_as_config("mode", [&] { return parse_mode(item.get<std::string>()); });
    };
    modes.clear();
    if (node.is_array()) {
        for (const auto& item : node) {
            modes.push_back(one(item));
        }
    } else {
        modes.push_back(one(node));
    }
}

void read_corruptions(const Json& node, std::vector<Corruption>& out) {
    if (!node.is_array()) {
        throw ConfigError("corruptions must be a list");
    }
    out.clear();
    for (std::size_t i = 0; i < node.size(); ++i) {
        Corruption c;
        ObjectReader r(node[i], fmt::format("corruptions[{}]", i));
        r.read("participant", c.participant);
        r.read("flip_rate", c.flip_rate);
        r.finish();
        out.push_back(c);
    }
}

void read_meanlab(const Json& node, MeanLabSpec& spec) {
    ObjectReader r(node, "meanlab");
    r.read("theta_1", spec.theta_1);
    r.read("gamma", spec.gamma);
    r.read("grid", spec.gamma_g_grid);
    r.read("runs", spec.runs);
    std::string placement(to_string(spec.placement));
    r.read("placement", placement);
    spec.placement = parse_placement(placement);
    r.read("full_trust", spec.thresholds.full_trust);
    r.read("no_trust", spec.thresholds.no_trust);
    r.read("sigma_sq", spec.sigma_sq);
    r.read("n2", spec.n2);
    r.read("imbalance_ratios", spec.imbalance_ratios);
    r.finish();
}

}  // namespace

std::string_view to_string(DatasetKind kind) {
    return kind == DatasetKind::Blobs ? "blobs" : "csv";
}

std::string_view to_string(SplitStrategy strategy) {
    switch (strategy) {
        case SplitStrategy::Homogeneous: return "homogeneous";
        case SplitStrategy::Dirichlet: return "dirichlet";
        case SplitStrategy::Imbalanced: return "imbalanced";
    }
    return "homogeneous";
}

std::string_view to_string(meanlab::MeanPlacement placement) {
    return placement == meanlab::MeanPlacement::HalfDistance ? "half-distance" : "offset";
}

void ExperimentConfig::validate() const {
    const DatasetSpec& d = dataset;
    if (d.kind == DatasetKind::Blobs) {
        if (d.num_classes < 2) throw ConfigError("dataset.classes must be >= 2");
        if (d.dim < 2) throw ConfigError("dataset.dim must be >= 2");
        if (d.samples_per_class < 2) throw ConfigError("dataset.samples_per_class must be >= 2");
        if (!(d.spread > 0.0) || !std::isfinite(d.spread)) throw ConfigError("dataset.spread must be > 0");
        if (!(d.separation >= 4.0)) throw ConfigError("dataset.separation must be >= 4");
    } else if (d.csv_path.empty()) {
        throw ConfigError("dataset.path is required when dataset.kind is 'csv'");
    }

    const SplitSpec& s = split;
    if (s.participants < 1) throw ConfigError("split.participants must be >= 1");
    if (!(s.holdout_fraction > 0.0 && s.holdout_fraction < 1.0)) {
        throw ConfigError("split.holdout_fraction must be in (0, 1)");
    }
    if (s.strategy == SplitStrategy::Dirichlet && !(s.delta > 0.0)) {
        throw ConfigError("split.delta must be > 0");
    }
    if (s.strategy == SplitStrategy::Imbalanced) {
        if (!(s.kappa > 0.0 && s.kappa < 1.0)) throw ConfigError("split.kappa must be in (0, 1)");
        if (s.m < 1 || s.m >= s.participants) throw ConfigError("split.m must be in [1, participants)");
        if (!(static_cast<double>(s.m) * s.kappa < 1.0)) throw ConfigError("split.m * split.kappa must be < 1");
    }

    if (modes.empty()) throw ConfigError("mode must name at least one protocol");
    for (std::size_t i = 0; i < modes.size(); ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            if (modes[i] == modes[j]) {
                throw ConfigError(fmt::format("mode lists {} twice", to_string(modes[i])));
            }
        }
    }
    protocol.validate();

    for (std::size_t i = 0; i < corruptions.size(); ++i) {
        const Corruption& c = corruptions[i];
        if (c.participant >= s.participants) {
            throw ConfigError(fmt::format("corruptions[{}].participant must be < {}", i, s.participants));
        }
        if (!(c.flip_rate >= 0.0 && c.flip_rate <= 1.0)) {
            throw ConfigError(fmt::format("corruptions[{}].flip_rate must be in [0, 1]", i));
        }
    }

    const MeanLabSpec& m = meanlab;
    if (!(m.gamma > 0.0)) throw ConfigError("meanlab.gamma must be > 0");
    if (m.runs < 1) throw ConfigError("meanlab.runs must be >= 1");
    if (m.gamma_g_grid.empty()) throw ConfigError("meanlab.grid must not be empty");
    for (double g : m.gamma_g_grid) {
        if (!(g >= 0.0) || !std::isfinite(g)) throw ConfigError("meanlab.grid values must be finite and >= 0");
    }
    if (!(m.thresholds.full_trust > 0.0 && m.thresholds.full_trust < m.thresholds.no_trust)) {
        throw ConfigError("meanlab.full_trust must be > 0 and < meanlab.no_trust");
    }
    if (!(m.sigma_sq > 0.0)) throw ConfigError("meanlab.sigma_sq must be > 0");
    if (m.n2 < 1) throw ConfigError("meanlab.n2 must be >= 1");
    for (double ratio : m.imbalance_ratios) {
        if (!(ratio > 0.0) || !std::isfinite(ratio)) throw ConfigError("meanlab.imbalance_ratios must be > 0");
    }
    if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
}

ExperimentConfig parse_config(std::string_view text) {
    Json root;
    try {
        root = Json::parse(text.begin(), text.end(), nullptr, true, true);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(fmt::format("config is not valid JSON: {}", e.what()));
    }

    ExperimentConfig config;
    {
        ObjectReader r(root, "");
        r.read("seed", config.seed);
        r.read("output_dir", config.output_dir);
        if (const Json* node = r.find("dataset")) read_dataset(*node, config.dataset);
        if (const Json* node = r.find("split")) read_split(*node, config.split);
        if (const Json* node = r.find("mode")) read_modes(*node, config.modes);
        if (const Json* node = r.find("protocol")) read_protocol(*node, config.protocol);
        if (const Json* node = r.find("corruptions")) read_corruptions(*node, config.corruptions);
        if (const Json* node = r.find("meanlab")) read_meanlab(*node, config.meanlab);
        r.finish();
    }
    config.validate();
    return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError(fmt::format("cannot open config {}", path.string()));
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    try {
        return parse_config(buffer.str());
    } catch (const ConfigError& e) {
        throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
    }
}

std::string serialize_config(const ExperimentConfig& config) {
    Json root;
    root["seed"] = config.seed;
    root["output_dir"] = config.output_dir;

    const DatasetSpec& d = config.dataset;
    Json dataset;
    dataset["kind"] = to_string(d.kind);
    dataset["classes"] = d.num_classes;
    dataset["dim"] = d.dim;
    dataset["samples_per_class"] = d.samples_per_class;
    dataset["spread"] = d.spread;
    dataset["separation"] = d.separation;
    dataset["path"] = d.csv_path;
    dataset["header"] = d.csv_header;
    root["dataset"] = dataset;

    const SplitSpec& s = config.split;
    root["split"] = Json{{"strategy", to_string(s.strategy)},
                         {"participants", s.participants},
                         {"holdout_fraction", s.holdout_fraction},
                         {"delta", s.delta},
                         {"kappa", s.kappa},
                         {"m", s.m}};

    Json modes = Json::array();
    for (Mode mode : config.modes) {
        modes.push_back(to_string(mode));
    }
    root["mode"] = modes;

    const ProtocolConfig& p = config.protocol;
    root["protocol"] = Json{{"alpha", p.alpha},
                            {"tau_opt", p.tau_opt},
                            {"tau_max", p.tau_max},
                            {"lambda0", p.lambda0},
                            {"share_period", p.share_period},
                            {"rounds", p.rounds},
                            {"warmup_epochs", p.warmup_epochs},
                            {"lr", p.lr},
                            {"lr_decay", p.lr_decay},
                            {"lr_decay_every", p.lr_decay_every},
                            {"momentum", p.momentum},
                            {"batch_size", p.batch_size},
                            {"batches_per_round", p.batches_per_round},
                            {"temperature", p.temperature},
                            {"shared_batch_schedule", p.shared_batch_schedule},
                            {"share_gate", to_string(p.share_gate)}};

    Json corruptions = Json::array();
    for (const Corruption& c : config.corruptions) {
        corruptions.push_back(Json{{"participant", c.participant}, {"flip_rate", c.flip_rate}});
    }
    root["corruptions"] = corruptions;

    const MeanLabSpec& m = config.meanlab;
    root["meanlab"] = Json{{"theta_1", m.theta_1},
                           {"gamma", m.gamma},
                           {"grid", m.gamma_g_grid},
                           {"runs", m.runs},
                           {"placement", to_string(m.placement)},
                           {"full_trust", m.thresholds.full_trust},
                           {"no_trust", m.thresholds.no_trust},
                           {"sigma_sq", m.sigma_sq},
                           {"n2", m.n2},
                           {"imbalance_ratios", m.imbalance_ratios}};
    return root.dump(2) + "\n";
}

}  // namespace cycle
