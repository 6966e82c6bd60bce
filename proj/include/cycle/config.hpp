#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "cycle/meanlab.hpp"
#include "cycle/protocol.hpp"

namespace cycle {

enum class DatasetKind { Blobs, Csv };
enum class SplitStrategy { Homogeneous, Dirichlet, Imbalanced };

struct DatasetSpec {
    DatasetKind kind = DatasetKind::Blobs;
    int num_classes = 4;
    std::size_t dim = 16;
    std::size_t samples_per_class = 500;
    double spread = 0.1;
    double separation = 4.0;  // center distance in units of spread
    std::string csv_path;
    bool csv_header = false;
};

struct SplitSpec {
    SplitStrategy strategy = SplitStrategy::Homogeneous;
    std::size_t participants = 5;
    double holdout_fraction = kDefaultHoldoutFraction;
    double delta = 0.5;   // dirichlet
    double kappa = 0.6;   // imbalanced
    std::size_t m = 1;    // imbalanced
};

struct Corruption {
    std::size_t participant = 0;
    double flip_rate = 0.0;
};

struct MeanLabSpec {
    double theta_1 = 0.0;
    double gamma = 1.0;
    std::vector<double> gamma_g_grid = meanlab::default_gamma_g_grid();
    std::size_t runs = 10000;
    meanlab::MeanPlacement placement = meanlab::MeanPlacement::HalfDistance;
    meanlab::ReputationThresholds thresholds;
    double sigma_sq = 5.0;
    std::size_t n2 = 1;
    std::vector<double> imbalance_ratios;  // empty skips the imbalance study
};

struct ExperimentConfig {
    DatasetSpec dataset;
    SplitSpec split;
    std::vector<Mode> modes{Mode::Cycle};
    ProtocolConfig protocol;
    std::vector<Corruption> corruptions;
    MeanLabSpec meanlab;
    std::uint64_t seed = 0;
    std::string output_dir = "out";

    /// Throws ConfigError naming the offending field.
    void validate() const;
};

std::string_view to_string(DatasetKind kind);
std::string_view to_string(SplitStrategy strategy);
std::string_view to_string(meanlab::MeanPlacement placement);

/// Parses a JSON document. Absent fields keep their defaults; unknown keys are errors.
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Pretty-printed JSON with every field spelled out; parse_config inverts it.
std::string serialize_config(const ExperimentConfig& config);

}  // namespace cycle
