#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace cycle::meanlab {

/// Thresholds of the piecewise reputation on the empirical heterogeneity d.
struct ReputationThresholds {
    double full_trust = 1.0;  // r = 1 for d <= full_trust
    double no_trust = 2.0;    // r = 0 for d > no_trust, linear in between
};

/// How a sweep value gamma_G places the two true means.
enum class MeanPlacement {
    HalfDistance,  // theta_2 - theta_1 = 2 gamma_G, so ((theta_2 - theta_1) / 2)^2 = gamma_G^2
    Offset,        // theta_2 - theta_1 = gamma_G
};

double fedavg_estimate(double theta_hat_1, double theta_hat_2);

/// Empirical heterogeneity ((theta_hat_other - theta_hat_own) / 2)^2.
double empirical_heterogeneity(double theta_hat_own, double theta_hat_other);

/// 1 for d <= 1, 2 - d for 1 < d <= 2, 0 beyond (with default thresholds).
double cycle_reputation(double d, const ReputationThresholds& thresholds = {});

/// (1 - r/2) own + (r/2) other.
double cycle_estimate(double theta_hat_own, double theta_hat_other, double r);

/// gamma_hat_G^2 + (theta_hat_1 - theta_1)^2: the FedAvg empirical loss without the cross term.
double empirical_loss_fedavg(double theta_hat_1, double theta_hat_2, double theta_1);

/// r^2 gamma_hat_G^2 + (theta_hat_1 - theta_1)^2.
double empirical_loss_cycle(double theta_hat_1, double theta_hat_2, double theta_1, double r);

/// 2 exp(-gamma_G^2 / (5 gamma^2)); not clamped.
double fedavg_usefulness_upper_bound(double gamma_g, double gamma);

/// (1/8) exp(-1 / (4 gamma^2)).
double cycle_usefulness_lower_bound(double gamma);

struct SweepConfig {
    double theta_1 = 0.0;
    double gamma = 1.0;  // standard deviation of each empirical mean
    std::vector<double> gamma_g_grid;
    std::size_t runs = 10000;
    std::uint64_t seed = 0;
    MeanPlacement placement = MeanPlacement::HalfDistance;
    ReputationThresholds thresholds;
};

/// gamma_G in {0, 0.25, ..., 5}.
std::vector<double> default_gamma_g_grid();

struct UsefulnessPoint {
    double gamma_g = 0.0;
    double fedavg_p = 0.0;  // client 1 with the shared global model
    double fedavg_se = 0.0;
    double cycle_p1 = 0.0;
    double cycle_se1 = 0.0;
    double cycle_p2 = 0.0;
    double cycle_se2 = 0.0;
    double bound_upper_fedavg = 0.0;  // clamped to 1
    double bound_lower_cycle = 0.0;
};

using UsefulnessCurve = std::vector<UsefulnessPoint>;

/// sqrt(p (1 - p) / runs).
double standard_error(double p, std::size_t runs);

/// Monte Carlo usefulness P((w - theta)^2 <= (theta_hat - theta)^2); ties count as success.
UsefulnessCurve mc_usefulness_sweep(const SweepConfig& config);

/// Columns: gammaG, fedavg_p, fedavg_se, cycle_p1, cycle_p2, bound_upper_fedavg, bound_lower_cycle.
void write_usefulness_csv(const UsefulnessCurve& curve, const std::filesystem::path& path);
UsefulnessCurve read_usefulness_csv(const std::filesystem::path& path);

struct ImbalanceConfig {
    double sigma_sq = 5.0;      // per-sample noise variance
    std::size_t n2 = 1;          // client 2 sample count
    std::vector<double> ratios;  // N_1 / N_2
    std::size_t runs = 10000;
    std::uint64_t seed = 0;
    ReputationThresholds thresholds;
};

struct EstimatorStats {
    double mean = 0.0;
    double std = 0.0;
};

struct ImbalancePoint {
    double ratio = 0.0;
    std::size_t n1 = 0;
    std::size_t n2 = 0;
    double cycle_p1 = 0.0;
    double cycle_p2 = 0.0;
    double fedavg_p1 = 0.0;
    double fedavg_p2 = 0.0;
    EstimatorStats cycle_w1;
    EstimatorStats cycle_w2;
    EstimatorStats fedavg_w;
};

/// Both true means at 0; theta_hat_k ~ N(0, sigma^2 / N_k).
std::vector<ImbalancePoint> mc_imbalanced(const ImbalanceConfig& config);

void write_imbalance_csv(const std::vector<ImbalancePoint>& points, const std::filesystem::path& path);

}  // namespace cycle::meanlab
