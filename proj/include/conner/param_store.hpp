#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "conner/matrix.hpp"
#include "conner/rng.hpp"

namespace conner {

// Named parameter collection with a parallel gradient accumulator.
// std::map keeps iteration order deterministic (sorted by name), which the
// optimizer and checkpointing rely on.
class ParamStore {
    template <class Map>
    static auto& locate(Map& m, const std::string& name) {
        auto it = m.find(name);
        if (it == m.end()) throw std::out_of_range("ParamStore: unknown parameter '" + name + "'");
        return it->second;
    }

public:
    RealMatrix& add(const std::string& name, RealMatrix value) {
        if (values_.count(name))
            throw std::invalid_argument("ParamStore: duplicate parameter '" + name + "'");
        grads_.emplace(name, RealMatrix::zeros(value.rows(), value.cols()));
        return values_.emplace(name, std::move(value)).first->second;
    }

    bool has(const std::string& name) const { return values_.count(name) != 0; }

    RealMatrix& value(const std::string& name) { return locate(values_, name); }
    const RealMatrix& value(const std::string& name) const { return locate(values_, name); }
    RealMatrix& grad(const std::string& name) { return locate(grads_, name); }
    const RealMatrix& grad(const std::string& name) const { return locate(grads_, name); }

    void zero_grads() {
        for (auto& [name, g] : grads_) g.fill(0.0);
    }

    std::map<std::string, RealMatrix>& values() { return values_; }
    const std::map<std::string, RealMatrix>& values() const { return values_; }
    const std::map<std::string, RealMatrix>& grads() const { return grads_; }

    friend bool operator==(const ParamStore& a, const ParamStore& b) {
        return a.values_ == b.values_;
    }

private:
    std::map<std::string, RealMatrix> values_;
    std::map<std::string, RealMatrix> grads_;
};

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::map<std::string, RealMatrix> m;
    std::map<std::string, RealMatrix> v;
    std::int64_t step = 0;
};

// Standard Adam update over every parameter; gradients are zeroed afterwards.
inline void adam_step(ParamStore& store, AdamState& state, const AdamConfig& cfg) {
    state.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (auto& [name, value] : store.values()) {
        const RealMatrix& g = store.grad(name);
        auto mi = state.m.find(name);
        if (mi == state.m.end()) {
            mi = state.m.emplace(name, RealMatrix::zeros(value.rows(), value.cols())).first;
            state.v.emplace(name, RealMatrix::zeros(value.rows(), value.cols()));
        }
        RealMatrix& m = mi->second;
        RealMatrix& v = state.v.at(name);
        for (std::size_t i = 0; i < value.size(); ++i) {
            const double gi = g.data()[i];
            m.data()[i] = cfg.beta1 * m.data()[i] + (1.0 - cfg.beta1) * gi;
            v.data()[i] = cfg.beta2 * v.data()[i] + (1.0 - cfg.beta2) * gi * gi;
            const double mhat = m.data()[i] / bc1;
            const double vhat = v.data()[i] / bc2;
            value.data()[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
    store.zero_grads();
}

// ---------------------------------------------------------------------------
// Finite-difference gradient checking
// ---------------------------------------------------------------------------

struct GradCheckReport {
    std::map<std::string, double> max_rel_err;
    int sampled = 0;
    double tolerance = 0.0;
    bool pass = false;

    double worst() const {
        double w = 0.0;
        for (const auto& [name, e] : max_rel_err) w = std::max(w, e);
        return w;
    }
};

// `loss_fn` must recompute the loss for the current store contents and leave
// the analytic gradients accumulated in the store (after zeroing them
// itself). Central differences are taken on up to `samples_per_param` random
// coordinates per parameter; relative error is
//   |analytic - numeric| / max(1, |analytic|, |numeric|).
inline GradCheckReport grad_check(ParamStore& store, const std::function<double()>& loss_fn,
                                  double eps, int samples_per_param, double tolerance,
                                  std::uint64_t seed) {
    GradCheckReport report;
    report.tolerance = tolerance;
    report.pass = true;

    const double base = loss_fn();
    if (!std::isfinite(base)) throw std::runtime_error("grad_check: non-finite loss");
    std::map<std::string, RealMatrix> analytic;
    for (const auto& [name, g] : store.grads()) analytic.emplace(name, g);

    auto rng = make_rng(seed);
    for (auto& [name, value] : store.values()) {
        const RealMatrix& g = analytic.at(name);
        const std::size_t n = value.size();
        std::vector<std::size_t> coords(n);
        for (std::size_t i = 0; i < n; ++i) coords[i] = i;
        if (n > static_cast<std::size_t>(samples_per_param)) {
            std::shuffle(coords.begin(), coords.end(), rng);
            coords.resize(static_cast<std::size_t>(samples_per_param));
        }
        double worst = 0.0;
        for (std::size_t c : coords) {
            const double saved = value.data()[c];
            value.data()[c] = saved + eps;
            const double up = loss_fn();
            value.data()[c] = saved - eps;
            const double down = loss_fn();
            value.data()[c] = saved;
            if (!std::isfinite(up) || !std::isfinite(down))
                throw std::runtime_error("grad_check: non-finite loss at '" + name + "'");
            const double numeric = (up - down) / (2.0 * eps);
            const double a = g.data()[c];
            const double rel =
                std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
            worst = std::max(worst, rel);
            report.sampled += 1;
        }
        report.max_rel_err[name] = worst;
        if (worst >= tolerance) report.pass = false;
    }
    // restore analytic gradients for the caller
    loss_fn();
    return report;
}

}  // namespace conner
