#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "conner/lstm.hpp"

using namespace conner;

namespace {

// scalar loss = sum of coeff * output, for finite differencing
double weighted_sum(const RealMatrix& out, const RealMatrix& coeff) {
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += coeff.data()[i] * out.data()[i];
    return s;
}

}  // namespace

TEST_CASE("birnn single-step sequence is deterministic") {
    ParamStore store;
    const auto spec = make_birnn_spec("rnn", 3, 4);
    add_birnn_params(store, spec, 42);
    const RealMatrix x(1, 3, {0.3, -0.2, 0.9});
    const RealMatrix out1 = birnn_forward(store, spec, x, nullptr);
    const RealMatrix out2 = birnn_forward(store, spec, x, nullptr);
    CHECK(out1 == out2);
    CHECK(out1.rows() == 1);
    CHECK(out1.cols() == 8);
    CHECK(out1.all_finite());
}

TEST_CASE("empty sequence is rejected") {
    ParamStore store;
    const auto spec = make_birnn_spec("rnn", 3, 4);
    add_birnn_params(store, spec, 42);
    CHECK_THROWS_AS(birnn_forward(store, spec, RealMatrix(0, 3), nullptr),
                    std::invalid_argument);
}

TEST_CASE("reversing the input swaps the direction halves") {
    // run with (A, B) direction parameters on x, and with (B, A) on reversed x;
    // the outputs must be row-reversed, half-swapped copies of each other
    ParamStore store;
    const auto spec = make_birnn_spec("rnn", 3, 4);
    add_birnn_params(store, spec, 7);

    ParamStore swapped;
    const auto swapped_spec = make_birnn_spec("rnn", 3, 4);
    swapped.add(swapped_spec.fw.wx_name(), store.value(spec.bw.wx_name()));
    swapped.add(swapped_spec.fw.wh_name(), store.value(spec.bw.wh_name()));
    swapped.add(swapped_spec.fw.b_name(), store.value(spec.bw.b_name()));
    swapped.add(swapped_spec.bw.wx_name(), store.value(spec.fw.wx_name()));
    swapped.add(swapped_spec.bw.wh_name(), store.value(spec.fw.wh_name()));
    swapped.add(swapped_spec.bw.b_name(), store.value(spec.fw.b_name()));

    auto rng = std::mt19937_64(8);
    const std::size_t n = 5;
    const RealMatrix x = RealMatrix::uniform(n, 3, -1, 1, rng);
    RealMatrix x_rev(n, 3);
    for (std::size_t t = 0; t < n; ++t)
        for (std::size_t j = 0; j < 3; ++j) x_rev(t, j) = x(n - 1 - t, j);

    const RealMatrix out = birnn_forward(store, spec, x, nullptr);
    const RealMatrix out_rev = birnn_forward(swapped, swapped_spec, x_rev, nullptr);
    for (std::size_t t = 0; t < n; ++t)
        for (std::size_t j = 0; j < 4; ++j) {
            CHECK(out(t, j) == Catch::Approx(out_rev(n - 1 - t, 4 + j)).margin(1e-14));
            CHECK(out(t, 4 + j) == Catch::Approx(out_rev(n - 1 - t, j)).margin(1e-14));
        }
}

TEST_CASE("birnn gradients match finite differences") {
    ParamStore store;
    const auto spec = make_birnn_spec("rnn", 3, 4);
    add_birnn_params(store, spec, 21);
    auto rng = std::mt19937_64(22);
    RealMatrix x = RealMatrix::uniform(6, 3, -1, 1, rng);
    const RealMatrix coeff = RealMatrix::uniform(6, 8, -1, 1, rng);

    BiRnnCache cache;
    const RealMatrix out = birnn_forward(store, spec, x, &cache);
    RealMatrix d_x(6, 3);
    store.zero_grads();
    birnn_backward(store, spec, x, cache, coeff, d_x);

    constexpr double eps = 1e-5;
    constexpr double tol = 1e-4;

    // input gradient
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double saved = x.data()[i];
        x.data()[i] = saved + eps;
        const double up = weighted_sum(birnn_forward(store, spec, x, nullptr), coeff);
        x.data()[i] = saved - eps;
        const double down = weighted_sum(birnn_forward(store, spec, x, nullptr), coeff);
        x.data()[i] = saved;
        const double numeric = (up - down) / (2 * eps);
        const double a = d_x.data()[i];
        CHECK(std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)}) < tol);
    }
    // parameter gradients
    for (const auto& name :
         {spec.fw.wx_name(), spec.fw.wh_name(), spec.fw.b_name(), spec.bw.wx_name(),
          spec.bw.wh_name(), spec.bw.b_name()}) {
        RealMatrix& w = store.value(name);
        const RealMatrix& g = store.grad(name);
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double saved = w.data()[i];
            w.data()[i] = saved + eps;
            const double up = weighted_sum(birnn_forward(store, spec, x, nullptr), coeff);
            w.data()[i] = saved - eps;
            const double down = weighted_sum(birnn_forward(store, spec, x, nullptr), coeff);
            w.data()[i] = saved;
            const double numeric = (up - down) / (2 * eps);
            const double a = g.data()[i];
            CHECK(std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)}) < tol);
        }
    }
}
