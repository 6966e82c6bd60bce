#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace cycle {

/// Per-participant accuracies in percent. gains[n] == collaborative[n] - standalone[n].
struct GainRecord {
    std::vector<double> standalone;     // B_n
    std::vector<double> collaborative;  // A_n
    std::vector<double> gains;          // G_n

    std::size_t size() const noexcept { return gains.size(); }
};

enum class SpreadConvention {
    Sample,      // divide by N - 1
    Population,  // divide by N
};

struct FairnessSummary {
    double mva = 0.0;  // mean of A_n
    double mcg = 0.0;  // mean of G_n
    std::optional<double> cgs;         // spread of G_n; empty when N < 2 under the sample convention
    std::optional<double> pearson_cf;  // corr(B, A); empty when either side is constant
};

/// Builds a record from standalone and collaborative accuracies of the same participants.
GainRecord gain_record(std::span<const double> standalone, std::span<const double> collaborative);

FairnessSummary summarize(const GainRecord& gains, SpreadConvention spread = SpreadConvention::Sample);

/// Pearson correlation; empty when lengths < 2 or either vector is constant.
std::optional<double> pearson_cf(std::span<const double> x, std::span<const double> y);

/// One-sided Chebyshev bound on P(G < 0) given mean gain mu > 0 and spread nu.
double chebyshev_negative_gain_bound(double mu, double nu);

}  // namespace cycle
