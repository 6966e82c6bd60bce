#include "cycle/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "cycle/error.hpp"

namespace cycle {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Log of a Gamma(shape, 1) draw. Stays finite for tiny shapes where the
// draw itself underflows.
double log_gamma_draw(double shape, Rng& rng) {
    if (shape < 1.0) {
        double u = rng.uniform();
        while (u <= 0.0) {
            u = rng.uniform();
        }
        return std::log(rng.gamma(shape + 1.0)) + std::log(u) / shape;
    }
    return std::log(rng.gamma(shape));
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), data_(std::move(values)) {
    if (data_.size() != rows * cols) {
        throw ParameterError(fmt::format("matrix {}x{} needs {} values, got {}", rows, cols,
                                         rows * cols, data_.size()));
    }
}

Matrix Matrix::gather_rows(std::span<const std::size_t> indices) const {
    Matrix out(indices.size(), cols_);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= rows_) {
            throw ParameterError(fmt::format("row index {} out of range ({} rows)", indices[i], rows_));
        }
        std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(indices[i] * cols_), cols_,
                    out.data_.begin() + static_cast<std::ptrdiff_t>(i * cols_));
    }
    return out;
}

Rng::Rng(std::uint64_t seed, std::uint64_t stream)
    : seed_(seed), stream_(stream), engine_(splitmix64(seed ^ splitmix64(stream + 0x5851f42d4c957f2dULL))) {}

double Rng::uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::size_t Rng::uniform_index(std::size_t n) {
    if (n == 0) {
        throw ParameterError("uniform_index needs n > 0");
    }
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t x = engine_();
    while (x >= limit) {
        x = engine_();
    }
    return static_cast<std::size_t>(x % bound);
}

double Rng::standard_normal() {
    if (spare_normal_) {
        const double z = *spare_normal_;
        spare_normal_.reset();
        return z;
    }
    // Marsaglia polar method.
    double u = 0.0;
    double v = 0.0;
    double s = 0.0;
    do {
        u = 2.0 * uniform() - 1.0;
        v = 2.0 * uniform() - 1.0;
        s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double factor = std::sqrt(-2.0 * std::log(s) / s);
    spare_normal_ = v * factor;
    return u * factor;
}

double Rng::gamma(double shape) {
    if (!(shape > 0.0) || !std::isfinite(shape)) {
        throw ParameterError(fmt::format("gamma shape must be positive, got {}", shape));
    }
    if (shape < 1.0) {
        double u = uniform();
        while (u <= 0.0) {
            u = uniform();
        }
        return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x = 0.0;
        double v = 0.0;
        do {
            x = standard_normal();
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = uniform();
        if (u < 1.0 - 0.0331 * x * x * x * x) {
            return d * v;
        }
        if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) {
            return d * v;
        }
    }
}

Vector softmax_t(std::span<const double> logits, double temperature) {
    if (!(temperature > 0.0)) {
        throw ParameterError(fmt::format("softmax temperature must be positive, got {}", temperature));
    }
    if (logits.size() < 2) {
        throw ParameterError("softmax needs at least two logits");
    }
    const double max_logit = *std::max_element(logits.begin(), logits.end());
    Vector out(logits.size());
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp((logits[i] - max_logit) / temperature);
        total += out[i];
    }
    for (double& p : out) {
        p /= total;
    }
    return out;
}

double dot(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size()) {
        throw ParameterError(fmt::format("length mismatch: {} vs {}", u.size(), v.size()));
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        acc += u[i] * v[i];
    }
    return acc;
}

double norm2(std::span<const double> u) {
    return std::sqrt(dot(u, u));
}

std::optional<double> cosine(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size()) {
        throw ParameterError(fmt::format("cosine length mismatch: {} vs {}", u.size(), v.size()));
    }
    const double nu = norm2(u);
    const double nv = norm2(v);
    if (nu < kNormFloor || nv < kNormFloor) {
        return std::nullopt;
    }
    return std::clamp(dot(u, v) / (nu * nv), -1.0, 1.0);
}

Vector sample_dirichlet(double delta, std::size_t n, Rng& rng) {
    if (!(delta > 0.0) || !std::isfinite(delta)) {
        throw ParameterError(fmt::format("dirichlet concentration must be positive, got {}", delta));
    }
    if (n < 2) {
        throw ParameterError("dirichlet needs at least two components");
    }
    Vector logs(n);
    for (double& l : logs) {
        l = log_gamma_draw(delta, rng);
    }
    const double max_log = *std::max_element(logs.begin(), logs.end());
    Vector out(n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = std::exp(logs[i] - max_log);
        total += out[i];
    }
    for (double& p : out) {
        p /= total;
    }
    return out;
}

double sample_normal(double mean, double variance, Rng& rng) {
    if (!(variance >= 0.0)) {
        throw ParameterError(fmt::format("normal variance must be nonnegative, got {}", variance));
    }
    if (variance == 0.0) {
        return mean;
    }
    return mean + std::sqrt(variance) * rng.standard_normal();
}

bool all_finite(std::span<const double> values) {
    return std::all_of(values.begin(), values.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace cycle
