#include "cycle/models.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <fmt/format.h>
#include <json.hpp>

#include "cycle/error.hpp"

namespace cycle {

namespace {

constexpr double kSimplexTolerance = 1e-6;

void check_features(const ModelParams& params, const Matrix& features) {
    if (features.cols() != params.dim()) {
        throw ParameterError(fmt::format("feature dimension {} does not match model dimension {}",
                                         features.cols(), params.dim()));
    }
}

// log softmax(z / T) for one row.
Vector log_softmax_t(std::span<const double> logits, double temperature) {
    const double max_logit = *std::max_element(logits.begin(), logits.end());
    double total = 0.0;
    for (double z : logits) {
        total += std::exp((z - max_logit) / temperature);
    }
    const double log_total = std::log(total);
    Vector out(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = (logits[i] - max_logit) / temperature - log_total;
    }
    return out;
}

// Accumulates x (outer) dlogits into the flat gradient layout.
void accumulate_grad(Vector& grad, std::span<const double> x, std::span<const double> dlogits, std::size_t dim) {
    const std::size_t classes = dlogits.size();
    for (std::size_t c = 0; c < classes; ++c) {
        const double g = dlogits[c];
        if (g == 0.0) {
            continue;
        }
        double* w = grad.data() + c * dim;
        for (std::size_t j = 0; j < dim; ++j) {
            w[j] += g * x[j];
        }
        grad[classes * dim + c] += g;
    }
}

}  // namespace

ModelParams::ModelParams(int num_classes, std::size_t dim, double temperature)
    : ModelParams(num_classes, dim, Vector(static_cast<std::size_t>(std::max(num_classes, 0)) * (dim + 1), 0.0),
                  temperature) {}

ModelParams::ModelParams(int num_classes, std::size_t dim, Vector values, double temperature)
    : num_classes_(num_classes), dim_(dim), temperature_(temperature), values_(std::move(values)) {
    if (num_classes_ < 2 || dim_ < 1) {
        throw ParameterError(fmt::format("model needs >= 2 classes and >= 1 feature, got {} and {}",
                                         num_classes_, dim_));
    }
    if (!(temperature_ > 0.0)) {
        throw ParameterError(fmt::format("temperature must be positive, got {}", temperature_));
    }
    if (values_.size() != classes() * (dim_ + 1)) {
        throw ParameterError(fmt::format("model with {} classes and dim {} needs {} parameters, got {}",
                                         num_classes_, dim_, classes() * (dim_ + 1), values_.size()));
    }
    if (!all_finite(values_)) {
        throw ParameterError("model parameters must be finite");
    }
}

Matrix forward(const ModelParams& params, const Matrix& features) {
    check_features(params, features);
    const auto classes = static_cast<std::size_t>(params.num_classes());
    const std::size_t dim = params.dim();
    Matrix logits(features.rows(), classes);
    for (std::size_t r = 0; r < features.rows(); ++r) {
        const auto x = features.row(r);
        for (std::size_t c = 0; c < classes; ++c) {
            double z = params.bias(c);
            for (std::size_t j = 0; j < dim; ++j) {
                z += params.weight(c, j) * x[j];
            }
            logits(r, c) = z;
        }
    }
    return logits;
}

Matrix predict_proba(const ModelParams& params, const Matrix& features) {
    Matrix logits = forward(params, features);
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        const Vector p = softmax_t(logits.row(r), params.temperature());
        std::copy(p.begin(), p.end(), logits.row(r).begin());
    }
    return logits;
}

LossGrad ce_loss_grad(const ModelParams& params, const Matrix& features, std::span<const int> labels) {
    if (features.rows() == 0) {
        throw ParameterError("cross-entropy needs a nonempty batch");
    }
    if (labels.size() != features.rows()) {
        throw ParameterError(fmt::format("{} feature rows but {} labels", features.rows(), labels.size()));
    }
    const Matrix logits = forward(params, features);
    const auto classes = static_cast<std::size_t>(params.num_classes());
    const double inv_batch = 1.0 / static_cast<double>(features.rows());

    LossGrad out{0.0, Vector(params.size(), 0.0)};
    Vector dlogits(classes);
    for (std::size_t r = 0; r < features.rows(); ++r) {
        const auto label = labels[r];
        if (label < 0 || static_cast<std::size_t>(label) >= classes) {
            throw ParameterError(fmt::format("label {} outside [0, {})", label, classes));
        }
        const Vector logp = log_softmax_t(logits.row(r), 1.0);
        out.loss -= logp[static_cast<std::size_t>(label)] * inv_batch;
        for (std::size_t c = 0; c < classes; ++c) {
            dlogits[c] = std::exp(logp[c]) * inv_batch;
        }
        dlogits[static_cast<std::size_t>(label)] -= inv_batch;
        accumulate_grad(out.grad, features.row(r), dlogits, params.dim());
    }
    return out;
}

LossGrad kl_distill_loss_grad(const ModelParams& student, const Matrix& teacher_probs, const Matrix& features) {
    if (features.rows() == 0) {
        throw ParameterError("distillation needs a nonempty batch");
    }
    const auto classes = static_cast<std::size_t>(student.num_classes());
    if (teacher_probs.rows() != features.rows() || teacher_probs.cols() != classes) {
        throw ParameterError(fmt::format("teacher probabilities are {}x{}, expected {}x{}", teacher_probs.rows(),
                                         teacher_probs.cols(), features.rows(), classes));
    }
    for (std::size_t r = 0; r < teacher_probs.rows(); ++r) {
        double total = 0.0;
        for (double q : teacher_probs.row(r)) {
            if (!(q >= 0.0)) {
                throw ParameterError(fmt::format("teacher row {} has a negative or NaN entry", r));
            }
            total += q;
        }
        if (std::abs(total - 1.0) > kSimplexTolerance) {
            throw ParameterError(fmt::format("teacher row {} sums to {}, not 1", r, total));
        }
    }

    const Matrix logits = forward(student, features);
    const double temperature = student.temperature();
    const double inv_batch = 1.0 / static_cast<double>(features.rows());

    LossGrad out{0.0, Vector(student.size(), 0.0)};
    Vector dlogits(classes);
    for (std::size_t r = 0; r < features.rows(); ++r) {
        const Vector logp = log_softmax_t(logits.row(r), temperature);
        const auto q = teacher_probs.row(r);
        for (std::size_t c = 0; c < classes; ++c) {
            if (q[c] > 0.0) {
                out.loss += q[c] * (std::log(q[c]) - logp[c]) * inv_batch;
            }
            dlogits[c] = (std::exp(logp[c]) - q[c]) * inv_batch / temperature;
        }
        accumulate_grad(out.grad, features.row(r), dlogits, student.dim());
    }
    out.loss = std::max(out.loss, 0.0);
    return out;
}

SgdMomentum::SgdMomentum(std::size_t size, double momentum) : momentum_(momentum), buffer_(size, 0.0) {
    if (!(momentum >= 0.0 && momentum < 1.0)) {
        throw ParameterError(fmt::format("momentum must be in [0, 1), got {}", momentum));
    }
}

void SgdMomentum::step(ModelParams& params, std::span<const double> grad, double lr) {
    if (grad.size() != params.size() || grad.size() != buffer_.size()) {
        throw ParameterError(fmt::format("gradient length {} does not match {} parameters", grad.size(),
                                         params.size()));
    }
    auto& theta = params.values();
    for (std::size_t i = 0; i < grad.size(); ++i) {
        buffer_[i] = momentum_ * buffer_[i] + grad[i];
        theta[i] -= lr * buffer_[i];
    }
}

void SgdMomentum::reset() {
    std::fill(buffer_.begin(), buffer_.end(), 0.0);
}

double evaluate(const ModelParams& params, const Matrix& features, std::span<const int> labels) {
    if (features.rows() == 0) {
        throw ParameterError("cannot evaluate on an empty set");
    }
    if (labels.size() != features.rows()) {
        throw ParameterError(fmt::format("{} feature rows but {} labels", features.rows(), labels.size()));
    }
    const Matrix logits = forward(params, features);
    std::size_t correct = 0;
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        const auto row = logits.row(r);
        // max_element returns the first maximum, i.e. the lowest class on ties.
        const auto best = std::max_element(row.begin(), row.end()) - row.begin();
        if (best == labels[r]) {
            ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(features.rows());
}

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
    nlohmann::json doc;
    doc["classes"] = params.num_classes();
    doc["dim"] = params.dim();
    doc["temperature"] = params.temperature();
    doc["values"] = params.values();
    std::ofstream out(path);
    if (!out) {
        throw IoError(fmt::format("cannot write '{}'", path.string()));
    }
    out << doc.dump() << '\n';
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError(fmt::format("cannot open '{}'", path.string()));
    }
    try {
        const auto doc = nlohmann::json::parse(in);
        return ModelParams(doc.at("classes").get<int>(), doc.at("dim").get<std::size_t>(),
                           doc.at("values").get<Vector>(), doc.at("temperature").get<double>());
    } catch (const nlohmann::json::exception& e) {
        throw DataError(fmt::format("{}: bad checkpoint: {}", path.string(), e.what()));
    }
}

}  // namespace cycle
