#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

namespace cycle {

using Vector = std::vector<double>;

/// Dense row-major matrix of doubles. Dimensions are fixed at construction.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool empty() const noexcept { return rows_ == 0; }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::span<const double> values() const noexcept { return data_; }

    /// New matrix made of the given rows, in order.
    Matrix gather_rows(std::span<const std::size_t> indices) const;

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// Deterministic random stream keyed by (seed, stream id).
///
/// The engine is mt19937_64, whose output is fixed by the standard. All
/// distributions are implemented here rather than through <random>'s
/// distribution classes, whose algorithms differ between standard libraries.
class Rng {
public:
    Rng(std::uint64_t seed, std::uint64_t stream);

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t stream() const noexcept { return stream_; }

    std::uint64_t next_u64() { return engine_(); }
    /// Uniform on [0, 1) with 53 random bits.
    double uniform();
    /// Uniform integer on [0, n). n must be positive.
    std::size_t uniform_index(std::size_t n);
    double standard_normal();
    /// Gamma(shape, 1) by Marsaglia-Tsang rejection.
    double gamma(double shape);

    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::swap(items[i - 1], items[uniform_index(i)]);
        }
    }

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::mt19937_64 engine_;
    std::optional<double> spare_normal_;
};

/// Gradients whose norm falls below this have no usable direction.
inline constexpr double kNormFloor = 1e-12;

/// Softmax of logits / temperature, computed with max subtraction.
Vector softmax_t(std::span<const double> logits, double temperature);

/// Cosine similarity clamped to [-1, 1]; empty when either norm is under kNormFloor.
std::optional<double> cosine(std::span<const double> u, std::span<const double> v);

double dot(std::span<const double> u, std::span<const double> v);
double norm2(std::span<const double> u);

Vector sample_dirichlet(double delta, std::size_t n, Rng& rng);

double sample_normal(double mean, double variance, Rng& rng);

/// True when every entry is finite.
bool all_finite(std::span<const double> values);

}  // namespace cycle
