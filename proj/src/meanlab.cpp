#include "cycle/meanlab.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <string>

#include <fmt/format.h>

#include "cycle/error.hpp"
#include "cycle/numerics.hpp"

namespace cycle::meanlab {

namespace {

constexpr std::uint64_t kSweepStreamBase = 5000;
constexpr std::uint64_t kImbalanceStreamBase = 7000;

void check_r(double r) {
    if (!(r >= 0.0 && r <= 1.0)) {
        throw ParameterError(fmt::format("reputation must be in [0, 1], got {}", r));
    }
}

void check_gamma(double gamma) {
    if (!(gamma > 0.0)) {
        throw ParameterError(fmt::format("gamma must be positive, got {}", gamma));
    }
}

bool useful(double estimate, double standalone, double truth) {
    return (estimate - truth) * (estimate - truth) <= (standalone - truth) * (standalone - truth);
}

// Welford accumulator.
struct Moments {
    std::size_t count = 0;
    double mean = 0.0;
    double m2 = 0.0;

    void add(double x) {
        ++count;
        const double delta = x - mean;
        mean += delta / static_cast<double>(count);
        m2 += delta * (x - mean);
    }

    EstimatorStats stats() const {
        return {mean, count > 1 ? std::sqrt(m2 / static_cast<double>(count - 1)) : 0.0};
    }
};

}  // namespace

double fedavg_estimate(double theta_hat_1, double theta_hat_2) {
    return (theta_hat_1 + theta_hat_2) / 2.0;
}

double empirical_heterogeneity(double theta_hat_own, double theta_hat_other) {
    const double half = (theta_hat_other - theta_hat_own) / 2.0;
    return half * half;
}

double cycle_reputation(double d, const ReputationThresholds& thresholds) {
    if (!(d >= 0.0)) {
        throw ParameterError(fmt::format("empirical heterogeneity must be >= 0, got {}", d));
    }
    if (!(thresholds.full_trust < thresholds.no_trust)) {
        throw ParameterError("reputation thresholds must satisfy full_trust < no_trust");
    }
    if (d <= thresholds.full_trust) {
        return 1.0;
    }
    if (d <= thresholds.no_trust) {
        return (thresholds.no_trust - d) / (thresholds.no_trust - thresholds.full_trust);
    }
    return 0.0;
}

double cycle_estimate(double theta_hat_own, double theta_hat_other, double r) {
    check_r(r);
    return (1.0 - r / 2.0) * theta_hat_own + (r / 2.0) * theta_hat_other;
}

double empirical_loss_fedavg(double theta_hat_1, double theta_hat_2, double theta_1) {
    const double own_error = theta_hat_1 - theta_1;
    return empirical_heterogeneity(theta_hat_1, theta_hat_2) + own_error * own_error;
}

double empirical_loss_cycle(double theta_hat_1, double theta_hat_2, double theta_1, double r) {
    check_r(r);
    const double own_error = theta_hat_1 - theta_1;
    return r * r * empirical_heterogeneity(theta_hat_1, theta_hat_2) + own_error * own_error;
}

double fedavg_usefulness_upper_bound(double gamma_g, double gamma) {
    check_gamma(gamma);
    return 2.0 * std::exp(-(gamma_g * gamma_g) / (5.0 * gamma * gamma));
}

double cycle_usefulness_lower_bound(double gamma) {
    check_gamma(gamma);
    return std::exp(-1.0 / (4.0 * gamma * gamma)) / 8.0;
}

std::vector<double> default_gamma_g_grid() {
    std::vector<double> grid;
    for (int i = 0; i <= 20; ++i) {
        grid.push_back(0.25 * i);
    }
    return grid;
}

double standard_error(double p, std::size_t runs) {
    if (runs == 0) {
        throw ParameterError("standard error needs at least one run");
    }
    return std::sqrt(p * (1.0 - p) / static_cast<double>(runs));
}

UsefulnessCurve mc_usefulness_sweep(const SweepConfig& config) {
    check_gamma(config.gamma);
    if (config.runs == 0) {
        throw ParameterError("sweep needs runs >= 1");
    }
    const double variance = config.gamma * config.gamma;
    UsefulnessCurve curve;
    for (std::size_t g = 0; g < config.gamma_g_grid.size(); ++g) {
        const double gamma_g = config.gamma_g_grid[g];
        const double theta_1 = config.theta_1;
        const double theta_2 =
            theta_1 + (config.placement == MeanPlacement::HalfDistance ? 2.0 * gamma_g : gamma_g);
        Rng rng(config.seed, kSweepStreamBase + g);
        std::size_t fedavg_hits = 0;
        std::size_t cycle_hits_1 = 0;
        std::size_t cycle_hits_2 = 0;
        for (std::size_t run = 0; run < config.runs; ++run) {
            const double hat_1 = sample_normal(theta_1, variance, rng);
            const double hat_2 = sample_normal(theta_2, variance, rng);
            const double w = fedavg_estimate(hat_1, hat_2);
            const double r = cycle_reputation(empirical_heterogeneity(hat_1, hat_2), config.thresholds);
            fedavg_hits += useful(w, hat_1, theta_1) ? 1 : 0;
            cycle_hits_1 += useful(cycle_estimate(hat_1, hat_2, r), hat_1, theta_1) ? 1 : 0;
            cycle_hits_2 += useful(cycle_estimate(hat_2, hat_1, r), hat_2, theta_2) ? 1 : 0;
        }
        const auto runs = static_cast<double>(config.runs);
        UsefulnessPoint point;
        point.gamma_g = gamma_g;
        point.fedavg_p = static_cast<double>(fedavg_hits) / runs;
        point.fedavg_se = standard_error(point.fedavg_p, config.runs);
        point.cycle_p1 = static_cast<double>(cycle_hits_1) / runs;
        point.cycle_se1 = standard_error(point.cycle_p1, config.runs);
        point.cycle_p2 = static_cast<double>(cycle_hits_2) / runs;
        point.cycle_se2 = standard_error(point.cycle_p2, config.runs);
        point.bound_upper_fedavg = std::min(1.0, fedavg_usefulness_upper_bound(gamma_g, config.gamma));
        point.bound_lower_cycle = cycle_usefulness_lower_bound(config.gamma);
        curve.push_back(point);
    }
    return curve;
}

void write_usefulness_csv(const UsefulnessCurve& curve, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw IoError(fmt::format("cannot write '{}'", path.string()));
    }
    out << "gammaG,fedavg_p,fedavg_se,cycle_p1,cycle_p2,bound_upper_fedavg,bound_lower_cycle\n";
    for (const auto& p : curve) {
        out << fmt::format("{},{},{},{},{},{},{}\n", p.gamma_g, p.fedavg_p, p.fedavg_se, p.cycle_p1, p.cycle_p2,
                           p.bound_upper_fedavg, p.bound_lower_cycle);
    }
    if (!out) {
        throw IoError(fmt::format("write failed for '{}'", path.string()));
    }
}

UsefulnessCurve read_usefulness_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError(fmt::format("cannot open '{}'", path.string()));
    }
    std::string line;
    std::getline(in, line);
    if (line.rfind("gammaG,", 0) != 0) {
        throw DataError(fmt::format("{}: missing usefulness header", path.string()));
    }
    UsefulnessCurve curve;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        double cells[7] = {};
        std::size_t start = 0;
        for (int i = 0; i < 7; ++i) {
            const std::size_t comma = line.find(',', start);
            const std::size_t end = comma == std::string::npos ? line.size() : comma;
            const auto [ptr, ec] = std::from_chars(line.data() + start, line.data() + end, cells[i]);
            if (ec != std::errc{} || ptr != line.data() + end || (i < 6 && comma == std::string::npos)) {
                throw DataError(fmt::format("{}:{}: malformed usefulness row", path.string(), line_no));
            }
            start = end + 1;
        }
        UsefulnessPoint p;
        p.gamma_g = cells[0];
        p.fedavg_p = cells[1];
        p.fedavg_se = cells[2];
        p.cycle_p1 = cells[3];
        p.cycle_p2 = cells[4];
        p.bound_upper_fedavg = cells[5];
        p.bound_lower_cycle = cells[6];
        curve.push_back(p);
    }
    return curve;
}

std::vector<ImbalancePoint> mc_imbalanced(const ImbalanceConfig& config) {
    if (config.n2 == 0) {
        throw ParameterError("client 2 needs at least one sample");
    }
    if (!(config.sigma_sq > 0.0)) {
        throw ParameterError(fmt::format("sigma_sq must be positive, got {}", config.sigma_sq));
    }
    if (config.runs == 0) {
        throw ParameterError("imbalance study needs runs >= 1");
    }
    std::vector<ImbalancePoint> points;
    for (std::size_t i = 0; i < config.ratios.size(); ++i) {
        const double ratio = config.ratios[i];
        if (!(ratio > 0.0)) {
            throw ParameterError(fmt::format("sample ratio must be positive, got {}", ratio));
        }
        ImbalancePoint point;
        point.ratio = ratio;
        point.n2 = config.n2;
        point.n1 = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(ratio * static_cast<double>(config.n2))));
        const double var_1 = config.sigma_sq / static_cast<double>(point.n1);
        const double var_2 = config.sigma_sq / static_cast<double>(point.n2);

        Rng rng(config.seed, kImbalanceStreamBase + i);
        std::size_t hits[4] = {0, 0, 0, 0};
        Moments w1;
        Moments w2;
        Moments global;
        for (std::size_t run = 0; run < config.runs; ++run) {
            const double hat_1 = sample_normal(0.0, var_1, rng);
            const double hat_2 = sample_normal(0.0, var_2, rng);
            const double r = cycle_reputation(empirical_heterogeneity(hat_1, hat_2), config.thresholds);
            const double c1 = cycle_estimate(hat_1, hat_2, r);
            const double c2 = cycle_estimate(hat_2, hat_1, r);
            const double w = fedavg_estimate(hat_1, hat_2);
            hits[0] += useful(c1, hat_1, 0.0) ? 1 : 0;
            hits[1] += useful(c2, hat_2, 0.0) ? 1 : 0;
            hits[2] += useful(w, hat_1, 0.0) ? 1 : 0;
            hits[3] += useful(w, hat_2, 0.0) ? 1 : 0;
            w1.add(c1);
            w2.add(c2);
            global.add(w);
        }
        const auto runs = static_cast<double>(config.runs);
        point.cycle_p1 = static_cast<double>(hits[0]) / runs;
        point.cycle_p2 = static_cast<double>(hits[1]) / runs;
        point.fedavg_p1 = static_cast<double>(hits[2]) / runs;
        point.fedavg_p2 = static_cast<double>(hits[3]) / runs;
        point.cycle_w1 = w1.stats();
        point.cycle_w2 = w2.stats();
        point.fedavg_w = global.stats();
        points.push_back(point);
    }
    return points;
}

void write_imbalance_csv(const std::vector<ImbalancePoint>& points, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw IoError(fmt::format("cannot write '{}'", path.string()));
    }
    out << "ratio,n1,n2,cycle_p1,cycle_p2,fedavg_p1,fedavg_p2,cycle_w1_mean,cycle_w1_std,cycle_w2_mean,"
           "cycle_w2_std,fedavg_w_mean,fedavg_w_std\n";
    for (const auto& p : points) {
        out << fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{}\n", p.ratio, p.n1, p.n2, p.cycle_p1, p.cycle_p2,
                           p.fedavg_p1, p.fedavg_p2, p.cycle_w1.mean, p.cycle_w1.std, p.cycle_w2.mean,
                           p.cycle_w2.std, p.fedavg_w.mean, p.fedavg_w.std);
    }
    if (!out) {
        throw IoError(fmt::format("write failed for '{}'", path.string()));
    }
}

}  // namespace cycle::meanlab
