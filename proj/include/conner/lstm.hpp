#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "conner/matrix.hpp"
#include "conner/param_store.hpp"

namespace conner {

// Full LSTM cell (input/forget/output gates + cell state). Gate blocks are
// packed column-wise into [i | f | o | g] so each direction owns three
// tensors: Wx [in x 4h], Wh [h x 4h], b [1 x 4h].
struct LstmSpec {
    std::string prefix;
    std::size_t input_dim = 0;
    std::size_t hidden = 0;

    std::string wx_name() const { return prefix + ".Wx"; }
    std::string wh_name() const { return prefix + ".Wh"; }
    std::string b_name() const { return prefix + ".b"; }
};

inline void add_lstm_params(ParamStore& store, const LstmSpec& spec, std::uint64_t seed) {
    const double sx = 1.0 / std::sqrt(static_cast<double>(spec.input_dim));
    const double sh = 1.0 / std::sqrt(static_cast<double>(spec.hidden));
    auto rx = make_rng(derive_seed(seed, spec.wx_name()));
    auto rh = make_rng(derive_seed(seed, spec.wh_name()));
    store.add(spec.wx_name(), RealMatrix::uniform(spec.input_dim, 4 * spec.hidden, -sx, sx, rx));
    store.add(spec.wh_name(), RealMatrix::uniform(spec.hidden, 4 * spec.hidden, -sh, sh, rh));
    RealMatrix b(1, 4 * spec.hidden);
    for (std::size_t j = spec.hidden; j < 2 * spec.hidden; ++j) b(0, j) = 1.0;  // forget bias
    store.add(spec.b_name(), std::move(b));
}

struct LstmCache {
    // per processed step, in processing order
    std::vector<std::vector<double>> i, f, o, g, c, h, tanh_c;
    std::vector<std::size_t> order;  // row index of the input at each step
};

namespace detail {
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
}  // namespace detail

// One direction over the rows of x; `reverse` walks rows back to front.
// Output row t holds the hidden state produced when row t was consumed.
inline RealMatrix lstm_forward(const ParamStore& store, const LstmSpec& spec, const RealMatrix& x,
                               bool reverse, LstmCache* cache) {
    const std::size_t n = x.rows();
    const std::size_t h = spec.hidden;
    const RealMatrix& wx = store.value(spec.wx_name());
    const RealMatrix& wh = store.value(spec.wh_name());
    const RealMatrix& b = store.value(spec.b_name());
    require_shape(wx, x.cols(), 4 * h, "lstm Wx");

    RealMatrix out(n, h);
    std::vector<double> hprev(h, 0.0), cprev(h, 0.0), z(4 * h);
    if (cache) {
        cache->i.assign(n, {});
        cache->f.assign(n, {});
        cache->o.assign(n, {});
        cache->g.assign(n, {});
        cache->c.assign(n, {});
        cache->h.assign(n, {});
        cache->tanh_c.assign(n, {});
        cache->order.assign(n, 0);
    }
    for (std::size_t step = 0; step < n; ++step) {
        const std::size_t row = reverse ? n - 1 - step : step;
        for (std::size_t j = 0; j < 4 * h; ++j) z[j] = b(0, j);
        for (std::size_t k = 0; k < x.cols(); ++k) {
            const double xv = x(row, k);
            if (xv == 0.0) continue;
            for (std::size_t j = 0; j < 4 * h; ++j) z[j] += xv * wx(k, j);
        }
        for (std::size_t k = 0; k < h; ++k) {
            const double hv = hprev[k];
            if (hv == 0.0) continue;
            for (std::size_t j = 0; j < 4 * h; ++j) z[j] += hv * wh(k, j);
        }
        std::vector<double> ig(h), fg(h), og(h), gg(h), cnew(h), tc(h);
        for (std::size_t j = 0; j < h; ++j) {
            ig[j] = detail::sigmoid(z[j]);
            fg[j] = detail::sigmoid(z[h + j]);
            og[j] = detail::sigmoid(z[2 * h + j]);
            gg[j] = std::tanh(z[3 * h + j]);
            cnew[j] = fg[j] * cprev[j] + ig[j] * gg[j];
            tc[j] = std::tanh(cnew[j]);
            out(row, j) = og[j] * tc[j];
        }
        if (cache) {
            cache->i[step] = ig;
            cache->f[step] = fg;
            cache->o[step] = og;
            cache->g[step] = gg;
            cache->c[step] = cnew;
            cache->h[step].assign(out.row(row).begin(), out.row(row).end());
            cache->tanh_c[step] = tc;
            cache->order[step] = row;
        }
        hprev.assign(out.row(row).begin(), out.row(row).end());
        cprev = cnew;
    }
    return out;
}

// Backward through time; accumulates parameter gradients into the store and
// input gradients into d_x. `x` must be the forward input, `d_h` the upstream
// gradient laid out like the forward output.
inline void lstm_backward(ParamStore& store, const LstmSpec& spec, const RealMatrix& x,
                          const LstmCache& cache, const RealMatrix& d_h_out, RealMatrix& d_x) {
    const std::size_t n = x.rows();
    const std::size_t h = spec.hidden;
    const RealMatrix& wx = store.value(spec.wx_name());
    const RealMatrix& wh = store.value(spec.wh_name());
    RealMatrix& d_wx = store.grad(spec.wx_name());
    RealMatrix& d_wh = store.grad(spec.wh_name());
    RealMatrix& d_b = store.grad(spec.b_name());

    std::vector<double> d_h_next(h, 0.0), d_c_next(h, 0.0), dz(4 * h);
    for (std::size_t step = n; step-- > 0;) {
        const std::size_t row = cache.order[step];
        const auto& ig = cache.i[step];
        const auto& fg = cache.f[step];
        const auto& og = cache.o[step];
        const auto& gg = cache.g[step];
        const auto& tc = cache.tanh_c[step];
        const std::vector<double>* cprev = step > 0 ? &cache.c[step - 1] : nullptr;
        const std::vector<double>* hprev = step > 0 ? &cache.h[step - 1] : nullptr;

        for (std::size_t j = 0; j < h; ++j) {
            const double dh = d_h_out(row, j) + d_h_next[j];
            const double dc = d_c_next[j] + dh * og[j] * (1.0 - tc[j] * tc[j]);
            const double d_og = dh * tc[j];
            const double d_ig = dc * gg[j];
            const double d_fg = dc * (cprev ? (*cprev)[j] : 0.0);
            const double d_gg = dc * ig[j];
            dz[j] = d_ig * ig[j] * (1.0 - ig[j]);
            dz[h + j] = d_fg * fg[j] * (1.0 - fg[j]);
            dz[2 * h + j] = d_og * og[j] * (1.0 - og[j]);
            dz[3 * h + j] = d_gg * (1.0 - gg[j] * gg[j]);
            d_c_next[j] = dc * fg[j];
        }
        for (std::size_t j = 0; j < 4 * h; ++j) d_b(0, j) += dz[j];
        for (std::size_t k = 0; k < x.cols(); ++k) {
            const double xv = x(row, k);
            double acc = 0.0;
            for (std::size_t j = 0; j < 4 * h; ++j) {
                acc += dz[j] * wx(k, j);
                if (xv != 0.0) d_wx(k, j) += dz[j] * xv;
            }
            d_x(row, k) += acc;
        }
        std::fill(d_h_next.begin(), d_h_next.end(), 0.0);
        for (std::size_t k = 0; k < h; ++k) {
            const double hv = hprev ? (*hprev)[k] : 0.0;
            double acc = 0.0;
            for (std::size_t j = 0; j < 4 * h; ++j) {
                acc += dz[j] * wh(k, j);
                if (hv != 0.0) d_wh(k, j) += dz[j] * hv;
            }
            d_h_next[k] = acc;
        }
    }
}

// ---------------------------------------------------------------------------
// Bidirectional wrapper: output row t = [forward_t | backward_t].
// ---------------------------------------------------------------------------

struct BiRnnSpec {
    LstmSpec fw, bw;
    std::size_t output_dim() const { return fw.hidden + bw.hidden; }
};

inline BiRnnSpec make_birnn_spec(const std::string& prefix, std::size_t input_dim,
                                 std::size_t hidden) {
    return {{prefix + ".fw", input_dim, hidden}, {prefix + ".bw", input_dim, hidden}};
}

inline void add_birnn_params(ParamStore& store, const BiRnnSpec& spec, std::uint64_t seed) {
    add_lstm_params(store, spec.fw, seed);
    add_lstm_params(store, spec.bw, seed);
}

struct BiRnnCache {
    LstmCache fw, bw;
};

inline RealMatrix birnn_forward(const ParamStore& store, const BiRnnSpec& spec,
                                const RealMatrix& x, BiRnnCache* cache) {
    if (x.rows() == 0) throw std::invalid_argument("birnn_forward: empty sequence");
    RealMatrix hf = lstm_forward(store, spec.fw, x, false, cache ? &cache->fw : nullptr);
    RealMatrix hb = lstm_forward(store, spec.bw, x, true, cache ? &cache->bw : nullptr);
    RealMatrix out(x.rows(), spec.output_dim());
    for (std::size_t t = 0; t < x.rows(); ++t) {
        for (std::size_t j = 0; j < spec.fw.hidden; ++j) out(t, j) = hf(t, j);
        for (std::size_t j = 0; j < spec.bw.hidden; ++j) out(t, spec.fw.hidden + j) = hb(t, j);
    }
    return out;
}

inline void birnn_backward(ParamStore& store, const BiRnnSpec& spec, const RealMatrix& x,
                           const BiRnnCache& cache, const RealMatrix& d_out, RealMatrix& d_x) {
    RealMatrix d_hf(x.rows(), spec.fw.hidden), d_hb(x.rows(), spec.bw.hidden);
    for (std::size_t t = 0; t < x.rows(); ++t) {
        for (std::size_t j = 0; j < spec.fw.hidden; ++j) d_hf(t, j) = d_out(t, j);
        for (std::size_t j = 0; j < spec.bw.hidden; ++j) d_hb(t, j) = d_out(t, spec.fw.hidden + j);
    }
    lstm_backward(store, spec.fw, x, cache.fw, d_hf, d_x);
    lstm_backward(store, spec.bw, x, cache.bw, d_hb, d_x);
}

}  // namespace conner
