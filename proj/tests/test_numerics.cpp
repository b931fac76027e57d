#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "conner/kernels.hpp"
#include "conner/matrix.hpp"
#include "conner/param_store.hpp"

using namespace conner;

namespace {

RealMatrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng,
                         double scale = 1.0) {
    return RealMatrix::uniform(rows, cols, -scale, scale, rng);
}

RealMatrix random_prob_rows(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    RealMatrix z = random_matrix(rows, cols, rng, 2.0);
    return softmax(z);
}

// central differences on a scalar function of one matrix
template <class F>
RealMatrix finite_diff(RealMatrix& m, F f, double eps = 1e-5) {
    RealMatrix g(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.size(); ++i) {
        const double saved = m.data()[i];
        m.data()[i] = saved + eps;
        const double up = f();
        m.data()[i] = saved - eps;
        const double down = f();
        m.data()[i] = saved;
        g.data()[i] = (up - down) / (2 * eps);
    }
    return g;
}

double max_rel_err(const RealMatrix& analytic, const RealMatrix& numeric) {
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        const double a = analytic.data()[i];
        const double n = numeric.data()[i];
        worst = std::max(worst, std::abs(a - n) / std::max({1.0, std::abs(a), std::abs(n)}));
    }
    return worst;
}

}  // namespace

TEST_CASE("matrix construction checks") {
    CHECK_THROWS_AS(RealMatrix(2, 2, {1.0, 2.0, 3.0}), std::invalid_argument);
    CHECK_THROWS_AS(RealMatrix::checked(1, 2, {1.0, std::nan("")}), std::invalid_argument);
    CHECK_THROWS_AS(RealMatrix::checked(1, 1, {INFINITY}), std::invalid_argument);
    CHECK(RealMatrix::checked(1, 2, {1.0, 2.0})(0, 1) == 2.0);
    CHECK_THROWS_AS(RealMatrix(2, 2).at(2, 0), std::out_of_range);
}

TEST_CASE("affine basics") {
    SECTION("identity weights reproduce the input") {
        auto rng = std::mt19937_64(1);
        const RealMatrix x = random_matrix(3, 4, rng);
        const RealMatrix out = affine(x, RealMatrix::identity(4), RealMatrix::zeros(1, 4));
        CHECK(out == x);
    }
    SECTION("1x1 scalar case") {
        const RealMatrix out = affine(RealMatrix(1, 1, {2.0}), RealMatrix(1, 1, {3.0}),
                                      RealMatrix(1, 1, {1.0}));
        CHECK(out(0, 0) == 7.0);
    }
    SECTION("shape mismatch") {
        CHECK_THROWS_AS(affine(RealMatrix(2, 3), RealMatrix(4, 2), RealMatrix(1, 2)),
                        std::invalid_argument);
    }
}

TEST_CASE("affine gradients match finite differences") {
    auto rng = std::mt19937_64(2);
    RealMatrix x = random_matrix(4, 5, rng);
    RealMatrix w = random_matrix(5, 3, rng);
    RealMatrix b = random_matrix(1, 3, rng);
    const RealMatrix coeff = random_matrix(4, 3, rng);  // random linear functional

    auto loss = [&] {
        const RealMatrix out = affine(x, w, b);
        double s = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) s += coeff.data()[i] * out.data()[i];
        return s;
    };
    RealMatrix d_x(4, 5), d_w(5, 3), d_b(1, 3);
    affine_backward(x, w, coeff, d_x, d_w, d_b);
    CHECK(max_rel_err(d_x, finite_diff(x, loss)) < 1e-6);
    CHECK(max_rel_err(d_w, finite_diff(w, loss)) < 1e-6);
    CHECK(max_rel_err(d_b, finite_diff(b, loss)) < 1e-6);
}

TEST_CASE("softmax") {
    SECTION("uniform logits") {
        const RealMatrix p = softmax(RealMatrix::filled(1, 3, 0.7));
        for (std::size_t j = 0; j < 3; ++j) CHECK(p(0, j) == Catch::Approx(1.0 / 3).margin(1e-15));
    }
    SECTION("extreme logits stay finite") {
        const RealMatrix p = softmax(RealMatrix(1, 2, {1000.0, 0.0}));
        CHECK(p.all_finite());
        CHECK(p(0, 0) == Catch::Approx(1.0).margin(1e-12));
        CHECK(p(0, 1) == Catch::Approx(0.0).margin(1e-12));
    }
    SECTION("rows sum to one") {
        auto rng = std::mt19937_64(3);
        const RealMatrix p = softmax(random_matrix(6, 5, rng, 3.0));
        for (std::size_t i = 0; i < p.rows(); ++i) {
            double sum = 0.0;
            for (std::size_t j = 0; j < p.cols(); ++j) sum += p(i, j);
            CHECK(sum == Catch::Approx(1.0).margin(1e-9));
        }
    }
    SECTION("gradient matches finite differences") {
        auto rng = std::mt19937_64(4);
        RealMatrix z = random_matrix(3, 4, rng);
        const RealMatrix coeff = random_matrix(3, 4, rng);
        auto loss = [&] {
            const RealMatrix p = softmax(z);
            double s = 0.0;
            for (std::size_t i = 0; i < p.size(); ++i) s += coeff.data()[i] * p.data()[i];
            return s;
        };
        RealMatrix d_z(3, 4);
        softmax_backward(softmax(z), coeff, d_z);
        CHECK(max_rel_err(d_z, finite_diff(z, loss)) < 1e-6);
    }
}

TEST_CASE("cross_entropy") {
    SECTION("perfect prediction is (near) zero") {
        const RealMatrix y = one_hot(std::vector<int>{1, 0}, 3);
        CHECK(cross_entropy(y, y) <= 1e-10);
    }
    SECTION("uniform prediction over 3 classes is ln 3") {
        const RealMatrix p = RealMatrix::filled(2, 3, 1.0 / 3);
        const RealMatrix y = one_hot(std::vector<int>{0, 2}, 3);
        CHECK(cross_entropy(p, y) == Catch::Approx(std::log(3.0)).margin(1e-12));
    }
    SECTION("matches a scalar recomputation on random batches") {
        auto rng = std::mt19937_64(5);
        for (int it = 0; it < 10; ++it) {
            const RealMatrix p = random_prob_rows(4, 5, rng);
            std::vector<int> targets(4);
            std::uniform_int_distribution<int> pick(0, 4);
            for (auto& t : targets) t = pick(rng);
            const double got = cross_entropy(p, one_hot(targets, 5));
            double expected = 0.0;
            for (std::size_t i = 0; i < 4; ++i)
                expected -= std::log(p(i, static_cast<std::size_t>(targets[i])));
            expected /= 4.0;
            CHECK(got == Catch::Approx(expected).margin(1e-12));
        }
    }
    SECTION("gradient through softmax matches finite differences") {
        auto rng = std::mt19937_64(6);
        RealMatrix z = random_matrix(4, 5, rng);
        const RealMatrix y = one_hot(std::vector<int>{0, 3, 2, 4}, 5);
        auto loss = [&] { return cross_entropy(softmax(z), y); };
        const RealMatrix p = softmax(z);
        RealMatrix d_p(4, 5), d_z(4, 5);
        cross_entropy_backward(p, y, 1.0, d_p);
        softmax_backward(p, d_p, d_z);
        CHECK(max_rel_err(d_z, finite_diff(z, loss)) < 1e-6);
    }
}

TEST_CASE("entropy") {
    SECTION("one-hot rows have zero entropy") {
        const std::vector<double> p{0.0, 1.0, 0.0};
        CHECK(entropy(p) == 0.0);
    }
    SECTION("uniform rows have maximal entropy ln L") {
        for (std::size_t L : {2u, 3u, 7u}) {
            std::vector<double> p(L, 1.0 / double(L));
            CHECK(entropy(p) == Catch::Approx(std::log(double(L))).margin(1e-12));
            CHECK(entropy(p) <= std::log(double(L)));
        }
    }
    SECTION("hand-evaluated example") {
        const std::vector<double> p{0.7, 0.2, 0.1};
        const double expected =
            -(0.7 * std::log(0.7) + 0.2 * std::log(0.2) + 0.1 * std::log(0.1));
        CHECK(entropy(p) == Catch::Approx(expected).margin(1e-15));
        CHECK(entropy(p) == Catch::Approx(0.8018).margin(5e-5));
    }
    SECTION("entropy stays in [0, ln L] on random rows") {
        auto rng = std::mt19937_64(7);
        for (int it = 0; it < 50; ++it) {
            const RealMatrix p = random_prob_rows(1, 6, rng);
            const double h = entropy(p.row(0));
            CHECK(h >= 0.0);
            CHECK(h <= std::log(6.0));
        }
    }
}

TEST_CASE("sym_kl") {
    SECTION("identical distributions give zero") {
        auto rng = std::mt19937_64(8);
        const RealMatrix p = random_prob_rows(3, 4, rng);
        CHECK(sym_kl(p, p) == Catch::Approx(0.0).margin(1e-15));
    }
    SECTION("symmetry") {
        auto rng = std::mt19937_64(9);
        for (int it = 0; it < 10; ++it) {
            const RealMatrix p = random_prob_rows(3, 4, rng);
            const RealMatrix l = random_prob_rows(3, 4, rng);
            CHECK(sym_kl(p, l) == Catch::Approx(sym_kl(l, p)).margin(1e-14));
            CHECK(sym_kl(p, l) >= 0.0);
        }
    }
    SECTION("hand-evaluated example") {
        const RealMatrix p(1, 2, {0.9, 0.1});
        const RealMatrix l(1, 2, {0.5, 0.5});
        const double kl_pl = 0.9 * std::log(0.9 / 0.5) + 0.1 * std::log(0.1 / 0.5);
        const double kl_lp = 0.5 * std::log(0.5 / 0.9) + 0.5 * std::log(0.5 / 0.1);
        CHECK(sym_kl(p, l) == Catch::Approx((kl_pl + kl_lp) / 2).margin(1e-14));
    }
    SECTION("shape mismatch") {
        CHECK_THROWS_AS(sym_kl(RealMatrix(1, 2), RealMatrix(1, 3)), std::invalid_argument);
    }
    SECTION("gradients through softmax match finite differences") {
        auto rng = std::mt19937_64(10);
        RealMatrix zp = random_matrix(3, 4, rng);
        RealMatrix zl = random_matrix(3, 4, rng);
        auto loss = [&] { return sym_kl(softmax(zp), softmax(zl)); };
        const RealMatrix p = softmax(zp), l = softmax(zl);
        RealMatrix d_p(3, 4), d_l(3, 4), d_zp(3, 4), d_zl(3, 4);
        sym_kl_backward(p, l, 1.0, d_p, d_l);
        softmax_backward(p, d_p, d_zp);
        softmax_backward(l, d_l, d_zl);
        CHECK(max_rel_err(d_zp, finite_diff(zp, loss)) < 1e-6);
        CHECK(max_rel_err(d_zl, finite_diff(zl, loss)) < 1e-6);
    }
}

TEST_CASE("adam") {
    SECTION("zero gradients leave parameters unchanged") {
        ParamStore store;
        auto rng = std::mt19937_64(11);
        store.add("w", random_matrix(2, 3, rng));
        const RealMatrix before = store.value("w");
        AdamState state;
        adam_step(store, state, AdamConfig{});
        CHECK(store.value("w") == before);
    }
    SECTION("first step from rest matches the closed form") {
        ParamStore store;
        store.add("w", RealMatrix(1, 1, {0.5}));
        const double g = -0.37;
        store.grad("w")(0, 0) = g;
        AdamState state;
        const AdamConfig cfg;
        adam_step(store, state, cfg);
        // m-hat = g, v-hat = g^2  =>  delta = -lr * g / (|g| + eps)
        const double expected = 0.5 - cfg.lr * g / (std::abs(g) + cfg.eps);
        CHECK(store.value("w")(0, 0) == expected);
        CHECK(store.grad("w")(0, 0) == 0.0);  // gradients zeroed after the step
    }
    SECTION("bit-identical across reruns") {
        auto run = [] {
            ParamStore store;
            auto rng = std::mt19937_64(12);
            store.add("w", random_matrix(3, 3, rng));
            AdamState state;
            for (int step = 0; step < 5; ++step) {
                auto& g = store.grad("w");
                for (std::size_t i = 0; i < g.size(); ++i)
                    g.data()[i] = 0.1 * double(i) - 0.3 * double(step);
                adam_step(store, state, AdamConfig{});
            }
            return store.value("w");
        };
        CHECK(run() == run());
    }
}

TEST_CASE("grad_check") {
    SECTION("quadratic loss with analytic gradient") {
        ParamStore store;
        auto rng = std::mt19937_64(13);
        store.add("w", random_matrix(3, 4, rng));
        auto loss = [&] {
            store.zero_grads();
            double s = 0.0;
            const auto& w = store.value("w");
            auto& g = store.grad("w");
            for (std::size_t i = 0; i < w.size(); ++i) {
                s += 0.5 * w.data()[i] * w.data()[i];
                g.data()[i] = w.data()[i];
            }
            return s;
        };
        const auto report = grad_check(store, loss, 1e-5, 500, 1e-9, 99);
        CHECK(report.pass);
        CHECK(report.sampled == 12);
        CHECK(report.worst() < 1e-9);
    }
    SECTION("corrupted gradient is caught") {
        ParamStore store;
        store.add("w", RealMatrix(1, 2, {0.3, -0.8}));
        auto loss = [&] {
            store.zero_grads();
            const auto& w = store.value("w");
            auto& g = store.grad("w");
            double s = 0.0;
            for (std::size_t i = 0; i < w.size(); ++i) {
                s += 0.5 * w.data()[i] * w.data()[i];
                g.data()[i] = w.data()[i] + 0.5;  // deliberately wrong
            }
            return s;
        };
        CHECK_FALSE(grad_check(store, loss, 1e-5, 500, 1e-4, 99).pass);
    }
    SECTION("non-finite loss is an error") {
        ParamStore store;
        store.add("w", RealMatrix(1, 1, {1.0}));
        auto loss = [&] {
            store.zero_grads();
            return std::numeric_limits<double>::quiet_NaN();
        };
        CHECK_THROWS_AS(grad_check(store, loss, 1e-5, 10, 1e-4, 99), std::runtime_error);
    }
}
