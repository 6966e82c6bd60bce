#include "cycle/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "cycle/error.hpp"

namespace cycle {

namespace {

double mean(std::span<const double> xs) {
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

}  // namespace

GainRecord gain_record(std::span<const double> standalone, std::span<const double> collaborative) {
    if (standalone.size() != collaborative.size()) {
        throw ParameterError(fmt::format("standalone has {} participants, collaborative has {}",
                                         standalone.size(), collaborative.size()));
    }
    GainRecord record;
    record.standalone.assign(standalone.begin(), standalone.end());
    record.collaborative.assign(collaborative.begin(), collaborative.end());
    record.gains.reserve(standalone.size());
    for (std::size_t n = 0; n < standalone.size(); ++n) {
        record.gains.push_back(collaborative[n] - standalone[n]);
    }
    return record;
}

FairnessSummary summarize(const GainRecord& gains, SpreadConvention spread) {
    const std::size_t n = gains.size();
    if (n == 0) {
        throw ParameterError("cannot summarize an empty gain record");
    }
    if (gains.standalone.size() != n || gains.collaborative.size() != n) {
        throw ParameterError("gain record columns differ in length");
    }
    FairnessSummary summary;
    summary.mva = mean(gains.collaborative);
    summary.mcg = mean(gains.gains);

    const std::size_t denominator = spread == SpreadConvention::Sample ? n - 1 : n;
    if (denominator > 0) {
        double ss = 0.0;
        for (double g : gains.gains) {
            ss += (g - summary.mcg) * (g - summary.mcg);
        }
        summary.cgs = std::sqrt(ss / static_cast<double>(denominator));
    }
    summary.pearson_cf = pearson_cf(gains.standalone, gains.collaborative);
    return summary;
}

std::optional<double> pearson_cf(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) {
        throw ParameterError(fmt::format("pearson inputs differ in length: {} vs {}", x.size(), y.size()));
    }
    if (x.size() < 2) {
        return std::nullopt;
    }
    const double mx = mean(x);
    const double my = mean(y);
    double sxy = 0.0;
    double sxx = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) {
        return std::nullopt;
    }
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double chebyshev_negative_gain_bound(double mu, double nu) {
    if (!(mu > 0.0)) {
        throw ParameterError(fmt::format("negative-gain bound needs a positive mean gain, got {}", mu));
    }
    if (!(nu >= 0.0)) {
        throw ParameterError(fmt::format("gain spread must be nonnegative, got {}", nu));
    }
    if (nu == 0.0) {
        return 0.0;
    }
    const double ratio = mu / nu;
    return 1.0 / (1.0 + ratio * ratio);
}

}  // namespace cycle
