#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "cycle/numerics.hpp"

namespace cycle {

/// Multinomial logistic regression: logits = W x + b.
///
/// Parameters live in one flat vector, the M*d weights (row-major, one row per
/// class) followed by the M biases. Gradients use the same layout.
class ModelParams {
public:
    ModelParams(int num_classes, std::size_t dim, double temperature = 1.0);
    ModelParams(int num_classes, std::size_t dim, Vector values, double temperature = 1.0);

    int num_classes() const noexcept { return num_classes_; }
    std::size_t dim() const noexcept { return dim_; }
    double temperature() const noexcept { return temperature_; }
    std::size_t size() const noexcept { return values_.size(); }

    double weight(std::size_t cls, std::size_t j) const { return values_[cls * dim_ + j]; }
    double bias(std::size_t cls) const { return values_[classes() * dim_ + cls]; }
    double& weight(std::size_t cls, std::size_t j) { return values_[cls * dim_ + j]; }
    double& bias(std::size_t cls) { return values_[classes() * dim_ + cls]; }

    const Vector& values() const noexcept { return values_; }
    Vector& values() noexcept { return values_; }

    friend bool operator==(const ModelParams&, const ModelParams&) = default;

private:
    std::size_t classes() const noexcept { return static_cast<std::size_t>(num_classes_); }

    int num_classes_;
    std::size_t dim_;
    double temperature_;
    Vector values_;
};

struct LossGrad {
    double loss = 0.0;
    Vector grad;
};

/// One row of logits per feature row.
Matrix forward(const ModelParams& params, const Matrix& features);

/// Row-wise softmax of the logits at the model's temperature.
Matrix predict_proba(const ModelParams& params, const Matrix& features);

/// Mean cross-entropy at temperature 1 and its gradient.
LossGrad ce_loss_grad(const ModelParams& params, const Matrix& features, std::span<const int> labels);

/// Mean KL(teacher || student) with the student at the model's temperature.
/// The teacher is a constant; no temperature-squared rescaling is applied.
LossGrad kl_distill_loss_grad(const ModelParams& student, const Matrix& teacher_probs,
                              const Matrix& features);

/// SGD with heavy-ball momentum: buf = mu * buf + g; theta -= lr * buf.
class SgdMomentum {
public:
    explicit SgdMomentum(std::size_t size, double momentum = 0.9);

    void step(ModelParams& params, std::span<const double> grad, double lr);
    void reset();

    double momentum() const noexcept { return momentum_; }
    const Vector& buffer() const noexcept { return buffer_; }

private:
    double momentum_;
    Vector buffer_;
};

/// Fraction of rows whose argmax logit equals the label (ties go to the lowest class).
double evaluate(const ModelParams& params, const Matrix& features, std::span<const int> labels);

/// Checkpoint as JSON: {"classes", "dim", "temperature", "values": [...]}.
void save_checkpoint(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace cycle
