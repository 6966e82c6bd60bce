// cycle: command-line front end for the simulator.
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "cycle/config.hpp"
#include "cycle/error.hpp"
#include "cycle/runner.hpp"

namespace {

struct CommonFlags {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--config", flags.config_path, "JSON config file (defaults apply when omitted)");
    cmd->add_option("--seed", flags.seed, "overrides the config seed");
    cmd->add_option("--out", flags.out, "output directory (overrides output_dir)");
}

cycle::ExperimentConfig resolve(const CommonFlags& flags) {
    cycle::ExperimentConfig config =
        flags.config_path.empty() ? cycle::ExperimentConfig{} : cycle::load_config(flags.config_path);
    if (flags.seed) config.seed = *flags.seed;
    if (!flags.out.empty()) config.output_dir = flags.out;
    config.validate();
    return config;
}

const cycle::ModeSummary& pick(const std::vector<cycle::ModeSummary>& modes, const std::string& wanted,
                               const std::string& path) {
    if (modes.empty()) {
        throw cycle::DataError(fmt::format("{} holds no reports", path));
    }
    if (wanted.empty()) {
        if (modes.size() > 1) {
            throw cycle::ParameterError(fmt::format("{} holds {} reports; choose one with --mode-a/--mode-b", path,
                                                    modes.size()));
        }
        return modes.front();
    }
    for (const auto& m : modes) {
        if (m.label == wanted) return m;
    }
    throw cycle::ParameterError(fmt::format("{} has no {} report", path, wanted));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Decentralized learning simulator with reputation-gated knowledge sharing"};
    app.require_subcommand(1);

    CommonFlags run_flags;
    auto* run_cmd = app.add_subcommand("run", "standalone baseline plus the configured protocols");
    add_common(run_cmd, run_flags);

    CommonFlags lab_flags;
    auto* lab_cmd = app.add_subcommand("mean-lab", "two-client mean estimation Monte Carlo study");
    add_common(lab_cmd, lab_flags);

    CommonFlags gen_flags;
    auto* gen_cmd = app.add_subcommand("gen-data", "write the configured blobs dataset as CSV");
    add_common(gen_cmd, gen_flags);

    std::string path_a;
    std::string path_b;
    std::string mode_a;
    std::string mode_b;
    std::string compare_out;
    auto* cmp_cmd = app.add_subcommand("compare", "side-by-side MVA/MCG/CGS of two reports");
    cmp_cmd->add_option("a", path_a, "metrics.json")->required();
    cmp_cmd->add_option("b", path_b, "metrics.json (may equal a)")->required();
    cmp_cmd->add_option("--mode-a", mode_a, "report to take from a");
    cmp_cmd->add_option("--mode-b", mode_b, "report to take from b");
    cmp_cmd->add_option("--out", compare_out, "directory for compare.csv");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run_cmd) {
            const auto config = resolve(run_flags);
            const auto suite = cycle::run(config);
            for (const auto& result : suite.results) {
                const auto& s = result.report.summary;
                std::cout << fmt::format("{:<11} MVA {:6.2f}  MCG {:6.2f}  CGS {}\n",
                                         cycle::to_string(result.report.trace.mode), s.mva, s.mcg,
                                         s.cgs ? fmt::format("{:.3f}", *s.cgs) : "-");
            }
            std::cout << fmt::format("wrote {}\n", config.output_dir);
        } else if (*lab_cmd) {
            const auto config = resolve(lab_flags);
            const auto report = cycle::run_meanlab(config);
            std::cout << "gammaG  fedavg_p  cycle_p1  cycle_p2\n";
            for (const auto& p : report.usefulness) {
                std::cout << fmt::format("{:6.2f}  {:8.4f}  {:8.4f}  {:8.4f}\n", p.gamma_g, p.fedavg_p, p.cycle_p1,
                                         p.cycle_p2);
            }
            std::cout << fmt::format("wrote {}\n", config.output_dir);
        } else if (*gen_cmd) {
            const auto config = resolve(gen_flags);
            std::cout << fmt::format("wrote {}\n", cycle::generate_data(config).string());
        } else if (*cmp_cmd) {
            const auto a_modes = cycle::load_metrics(path_a);
            const auto b_modes = cycle::load_metrics(path_b);
            const auto cmp = cycle::compare(pick(a_modes, mode_a, path_a), pick(b_modes, mode_b, path_b));
            std::cout << cycle::comparison_text(cmp);
            if (!compare_out.empty()) {
                std::filesystem::create_directories(compare_out);
                const auto path = std::filesystem::path(compare_out) / "compare.csv";
                std::ofstream out(path, std::ios::binary);
                out << cycle::comparison_csv(cmp);
                if (!out) throw cycle::IoError(fmt::format("cannot write '{}'", path.string()));
            }
        }
    } catch (const std::exception& e) {
        std::cerr << "cycle: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
