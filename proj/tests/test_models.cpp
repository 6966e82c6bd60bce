#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "cycle/error.hpp"
#include "cycle/models.hpp"
#include "oracles.hpp"

using namespace cycle;

namespace {

struct Case {
    int m;
    std::size_t d;
    double t;
    ModelParams params;
    Matrix x;
    std::vector<int> y;
    Matrix teacher;
};

Case random_case(Rng& rng) {
    const int m = 2 + static_cast<int>(rng.uniform_index(4));
    const std::size_t d = 2 + rng.uniform_index(5);
    const std::size_t b = 1 + rng.uniform_index(6);
    const double t = 0.5 + 3.0 * rng.uniform();
    Vector w(m * d + m);
    for (double& v : w) v = rng.standard_normal();
    Matrix x(b, d);
    std::vector<int> y(b);
    Matrix teacher(b, m);
    for (std::size_t r = 0; r < b; ++r) {
        for (std::size_t j = 0; j < d; ++j) x(r, j) = rng.standard_normal();
        y[r] = static_cast<int>(rng.uniform_index(m));
        std::vector<double> z(m);
        for (double& v : z) v = 2.0 * rng.standard_normal();
        const auto q = oracle::softmax(z, 1.0);
        for (int c = 0; c < m; ++c) teacher(r, c) = q[c];
    }
    return {m, d, t, ModelParams(m, d, w, t), x, y, teacher};
}

std::vector<std::vector<double>> rows(const Matrix& m) {
    std::vector<std::vector<double>> out;
    for (std::size_t r = 0; r < m.rows(); ++r) out.emplace_back(m.row(r).begin(), m.row(r).end());
    return out;
}

}  // namespace

TEST_CASE("ce gradient matches central differences") {
    Rng rng(11, 0);
    for (int k = 0; k < 25; ++k) {
        const Case c = random_case(rng);
        const LossGrad lg = ce_loss_grad(c.params, c.x, c.y);
        const auto xs = rows(c.x);
        auto f = [&](const std::vector<double>& w) { return oracle::ce_loss(w, c.m, c.d, xs, c.y); };
        CHECK(lg.loss == doctest::Approx(f(c.params.values())).epsilon(1e-12));
        CHECK(oracle::relative_error(lg.grad, oracle::central_difference(f, c.params.values(), 1e-4)) < 1e-5);
    }
}

TEST_CASE("kl gradient matches central differences") {
    Rng rng(12, 0);
    for (int k = 0; k < 25; ++k) {
        const Case c = random_case(rng);
        const LossGrad lg = kl_distill_loss_grad(c.params, c.teacher, c.x);
        const auto xs = rows(c.x);
        const auto q = rows(c.teacher);
        auto f = [&](const std::vector<double>& w) { return oracle::kl_loss(w, c.m, c.d, c.t, xs, q); };
        CHECK(lg.loss == doctest::Approx(f(c.params.values())).epsilon(1e-10));
        CHECK(lg.loss >= 0.0);
        CHECK(oracle::relative_error(lg.grad, oracle::central_difference(f, c.params.values(), 1e-4)) < 1e-5);
    }
}

TEST_CASE("one-hot teacher gives the cross-entropy gradient at T = 1") {
    Rng rng(13, 0);
    Case c = random_case(rng);
    const ModelParams student(c.m, c.d, c.params.values(), 1.0);
    Matrix onehot(c.x.rows(), c.m, 0.0);
    for (std::size_t r = 0; r < c.x.rows(); ++r) onehot(r, c.y[r]) = 1.0;
    const LossGrad ce = ce_loss_grad(student, c.x, c.y);
    const LossGrad kl = kl_distill_loss_grad(student, onehot, c.x);
    for (std::size_t i = 0; i < ce.grad.size(); ++i) CHECK(kl.grad[i] == doctest::Approx(ce.grad[i]).epsilon(1e-12));
    CHECK(kl.loss == doctest::Approx(ce.loss));
}

TEST_CASE("teacher equal to the student has zero distillation loss") {
    Rng rng(14, 0);
    const Case c = random_case(rng);
    const Matrix self = predict_proba(c.params, c.x);
    const LossGrad lg = kl_distill_loss_grad(c.params, self, c.x);
    CHECK(std::abs(lg.loss) < 1e-12);
    for (double g : lg.grad) CHECK(std::abs(g) < 1e-12);
}

TEST_CASE("model input validation") {
    CHECK_THROWS_AS(ModelParams(1, 3), ParameterError);
    CHECK_THROWS_AS(ModelParams(3, 2, 0.0), ParameterError);
    CHECK_THROWS_AS(ModelParams(3, 2, Vector(5, 0.0)), ParameterError);
    const ModelParams p(3, 2);
    CHECK_THROWS(forward(p, Matrix(2, 3)));
    const std::vector<int> bad_label{3};
    CHECK_THROWS(ce_loss_grad(p, Matrix(1, 2), bad_label));
    Matrix not_simplex(1, 3, 0.5);
    CHECK_THROWS(kl_distill_loss_grad(p, not_simplex, Matrix(1, 2)));
}

TEST_CASE("sgd with momentum") {
    ModelParams p(2, 1, Vector{0.0, 0.0, 0.0, 0.0});
    SgdMomentum opt(p.size(), 0.9);
    const Vector g{1.0, 0.0, 0.0, 0.0};
    opt.step(p, g, 0.1);
    CHECK(p.values()[0] == doctest::Approx(-0.1));
    opt.step(p, g, 0.1);
    CHECK(p.values()[0] == doctest::Approx(-0.1 - 0.19));
    opt.reset();
    opt.step(p, g, 0.1);
    CHECK(p.values()[0] == doctest::Approx(-0.39));

    SgdMomentum plain(p.size(), 0.0);
    ModelParams q(2, 1, Vector{1.0, 2.0, 3.0, 4.0});
    plain.step(q, Vector{1.0, 1.0, 1.0, 1.0}, 0.5);
    CHECK(q.values() == Vector{0.5, 1.5, 2.5, 3.5});
    CHECK_THROWS(plain.step(q, Vector{1.0}, 0.5));
}

TEST_CASE("evaluate breaks ties toward the lowest class") {
    const ModelParams zero(3, 2);
    Matrix x(2, 2, 1.0);
    CHECK(evaluate(zero, x, std::vector<int>{0, 0}) == 1.0);
    CHECK(evaluate(zero, x, std::vector<int>{0, 2}) == 0.5);
}

TEST_CASE("checkpoint round trip") {
    Rng rng(15, 0);
    const Case c = random_case(rng);
    const auto path = std::filesystem::temp_directory_path() / "cycle_ckpt.json";
    save_checkpoint(c.params, path);
    CHECK(load_checkpoint(path) == c.params);
}
