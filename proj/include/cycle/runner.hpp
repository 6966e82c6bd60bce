#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cycle/config.hpp"
#include "cycle/data.hpp"
#include "cycle/meanlab.hpp"
#include "cycle/metrics.hpp"
#include "cycle/protocol.hpp"

namespace cycle {

// Rng stream ids for the data pipeline. Protocol streams start at 1000.
inline constexpr std::uint64_t kDataStream = 1;
inline constexpr std::uint64_t kSplitStream = 2;
inline constexpr std::uint64_t kFlipStreamBase = 3000;

struct PreparedData {
    Dataset dataset;
    DataPartition partition;  // corruptions already applied
};

/// Builds or loads the dataset, splits it and applies label corruption.
PreparedData prepare_data(const ExperimentConfig& config);

struct ModeResult {
    ExperimentReport report;
    std::vector<std::string> reputation_files;  // relative to the output directory
};

struct SuiteReport {
    ExperimentConfig config;
    RunTrace standalone;
    std::vector<ModeResult> results;  // in config.modes order
    std::vector<std::string> artifacts;
    double wall_clock_seconds = 0.0;
};

/// Runs the standalone baseline once, then every configured mode against it.
/// Writes metrics.json, gains.csv, per-round reputation CSVs and manifest.json
/// under config.output_dir.
SuiteReport run(const ExperimentConfig& config);

struct MeanLabReport {
    meanlab::UsefulnessCurve usefulness;
    std::vector<meanlab::ImbalancePoint> imbalance;
    std::vector<std::string> artifacts;
};

/// Usefulness sweep (usefulness.csv) and, when ratios are set, the imbalance study (imbalance.csv).
MeanLabReport run_meanlab(const ExperimentConfig& config);

/// Writes the configured blobs dataset as data.csv under config.output_dir.
std::filesystem::path generate_data(const ExperimentConfig& config);

/// One protocol's results as stored in metrics.json.
struct ModeSummary {
    std::string label;
    GainRecord gains;
    FairnessSummary summary;
};

std::vector<ModeSummary> load_metrics(const std::filesystem::path& path);

/// Long format: mode, participant, standalone, collaborative, gain.
std::vector<std::pair<std::string, GainRecord>> read_gains_csv(const std::filesystem::path& path);

struct ComparisonRow {
    std::string metric;
    std::optional<double> a;
    std::optional<double> b;
    std::optional<double> delta;  // b - a
};

struct Comparison {
    std::string label_a;
    std::string label_b;
    std::vector<ComparisonRow> rows;
};

/// MVA, MCG, CGS and per-participant gains side by side. Throws on mismatched participant counts.
Comparison compare(const ModeSummary& a, const ModeSummary& b);

/// Header metric,a,b,delta,sign.
std::string comparison_csv(const Comparison& comparison);
std::string comparison_text(const Comparison& comparison);

}  // namespace cycle
