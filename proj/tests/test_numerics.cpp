#include <doctest.h>

#include <cmath>
#include <numeric>

#include "cycle/error.hpp"
#include "cycle/numerics.hpp"
#include "oracles.hpp"

using namespace cycle;

TEST_CASE("rng streams are reproducible and distinct") {
    Rng a(42, 7), b(42, 7), c(42, 8), d(43, 7);
    bool differs_stream = false;
    bool differs_seed = false;
    for (int i = 0; i < 64; ++i) {
        const auto x = a.next_u64();
        CHECK(x == b.next_u64());
        differs_stream |= x != c.next_u64();
        differs_seed |= x != d.next_u64();
    }
    CHECK(differs_stream);
    CHECK(differs_seed);
}

TEST_CASE("uniform stays in [0, 1) and has the right mean") {
    Rng rng(1, 0);
    double sum = 0.0;
    for (int i = 0; i < 20000; ++i) {
        const double u = rng.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        sum += u;
    }
    CHECK(sum / 20000.0 == doctest::Approx(0.5).epsilon(0.02));
}

TEST_CASE("uniform_index covers its range") {
    Rng rng(2, 0);
    std::vector<int> hits(5, 0);
    for (int i = 0; i < 5000; ++i) ++hits[rng.uniform_index(5)];
    for (int h : hits) CHECK(h > 850);
    CHECK_THROWS(rng.uniform_index(0));
}

TEST_CASE("standard normal moments") {
    Rng rng(3, 0);
    double s = 0.0, ss = 0.0;
    const int n = 40000;
    for (int i = 0; i < n; ++i) {
        const double z = rng.standard_normal();
        s += z;
        ss += z * z;
    }
    CHECK(std::abs(s / n) < 0.02);
    CHECK(ss / n == doctest::Approx(1.0).epsilon(0.03));
}

TEST_CASE("gamma sampler mean matches shape") {
    Rng rng(4, 0);
    for (double shape : {0.3, 1.0, 4.5}) {
        double s = 0.0;
        for (int i = 0; i < 20000; ++i) s += rng.gamma(shape);
        CHECK(s / 20000.0 == doctest::Approx(shape).epsilon(0.05));
    }
}

TEST_CASE("softmax_t") {
    SUBCASE("equal logits give uniform") {
        const Vector p = softmax_t(std::vector<double>{3.0, 3.0, 3.0, 3.0}, 2.0);
        for (double v : p) CHECK(v == doctest::Approx(0.25));
    }
    SUBCASE("large logits do not overflow") {
        const Vector p = softmax_t(std::vector<double>{1000.0, 0.0}, 1.0);
        CHECK(p[0] == doctest::Approx(1.0));
        CHECK(all_finite(p));
    }
    SUBCASE("matches the reference and sums to one") {
        Rng rng(5, 0);
        for (int k = 0; k < 200; ++k) {
            std::vector<double> z(6);
            for (double& v : z) v = 10.0 * rng.standard_normal();
            const double t = 0.2 + 5.0 * rng.uniform();
            const Vector p = softmax_t(z, t);
            const auto q = oracle::softmax(z, t);
            double total = 0.0;
            for (std::size_t i = 0; i < p.size(); ++i) {
                CHECK(p[i] == doctest::Approx(q[i]).epsilon(1e-12));
                total += p[i];
            }
            CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
    SUBCASE("higher temperature flattens") {
        const std::vector<double> z{2.0, 0.0, -1.0};
        CHECK(softmax_t(z, 4.0)[0] < softmax_t(z, 1.0)[0]);
    }
    CHECK_THROWS_AS(softmax_t(std::vector<double>{1.0, 2.0}, 0.0), ParameterError);
    CHECK_THROWS_AS(softmax_t(std::vector<double>{1.0}, 1.0), ParameterError);
}

TEST_CASE("cosine") {
    const std::vector<double> u{1.0, 2.0, 3.0};
    CHECK(*cosine(u, u) == doctest::Approx(1.0));
    CHECK(*cosine(u, std::vector<double>{-1.0, -2.0, -3.0}) == doctest::Approx(-1.0));
    CHECK(*cosine(std::vector<double>{1.0, 0.0}, std::vector<double>{0.0, 5.0}) == doctest::Approx(0.0));
    CHECK_FALSE(cosine(u, std::vector<double>{0.0, 0.0, 0.0}).has_value());
    CHECK_THROWS(cosine(u, std::vector<double>{1.0}));
}

TEST_CASE("dirichlet samples lie on the simplex") {
    Rng rng(6, 0);
    for (double delta : {0.05, 0.5, 1.0, 10.0}) {
        for (int k = 0; k < 50; ++k) {
            const Vector p = sample_dirichlet(delta, 5, rng);
            REQUIRE(p.size() == 5);
            for (double v : p) CHECK(v >= 0.0);
            CHECK(std::accumulate(p.begin(), p.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
    const Vector two = sample_dirichlet(0.5, 2, rng);
    CHECK(two[0] + two[1] == doctest::Approx(1.0));
    Rng r1(9, 1), r2(9, 1);
    CHECK(sample_dirichlet(0.5, 5, r1) == sample_dirichlet(0.5, 5, r2));
    CHECK_THROWS_AS(sample_dirichlet(0.0, 3, rng), ParameterError);
    CHECK_THROWS_AS(sample_dirichlet(1.0, 1, rng), ParameterError);
}

TEST_CASE("sample_normal") {
    Rng rng(7, 0);
    CHECK(sample_normal(3.5, 0.0, rng) == 3.5);
    double s = 0.0, ss = 0.0;
    const int n = 40000;
    for (int i = 0; i < n; ++i) {
        const double x = sample_normal(2.0, 4.0, rng);
        s += x;
        ss += (x - 2.0) * (x - 2.0);
    }
    CHECK(s / n == doctest::Approx(2.0).epsilon(0.02));
    CHECK(ss / n == doctest::Approx(4.0).epsilon(0.04));
    CHECK_THROWS(sample_normal(0.0, -1.0, rng));
}

TEST_CASE("matrix gather") {
    Matrix m(3, 2, std::vector<double>{1, 2, 3, 4, 5, 6});
    const std::vector<std::size_t> idx{2, 0};
    const Matrix g = m.gather_rows(idx);
    CHECK(g.rows() == 2);
    CHECK(g(0, 0) == 5);
    CHECK(g(1, 1) == 2);
}
