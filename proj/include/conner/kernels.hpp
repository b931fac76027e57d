#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "conner/matrix.hpp"

namespace conner {

// Probabilities are clipped to this floor before any log.
inline constexpr double kProbEps = 1e-12;

// ---------------------------------------------------------------------------
// Affine map: out = x * W + bias (bias broadcast over rows).
// ---------------------------------------------------------------------------

inline RealMatrix affine(const RealMatrix& x, const RealMatrix& w, const RealMatrix& bias) {
    if (x.cols() != w.rows())
        throw std::invalid_argument("affine: inner dimensions disagree");
    require_shape(bias, 1, w.cols(), "affine bias");
    RealMatrix out(x.rows(), w.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        for (std::size_t j = 0; j < w.cols(); ++j) out(i, j) = bias(0, j);
        for (std::size_t k = 0; k < x.cols(); ++k) {
            const double xv = x(i, k);
            if (xv == 0.0) continue;
            for (std::size_t j = 0; j < w.cols(); ++j) out(i, j) += xv * w(k, j);
        }
    }
    return out;
}

// Accumulates into d_x, d_w, d_bias (callers zero them beforehand if needed).
inline void affine_backward(const RealMatrix& x, const RealMatrix& w, const RealMatrix& d_out,
                            RealMatrix& d_x, RealMatrix& d_w, RealMatrix& d_bias) {
    for (std::size_t i = 0; i < x.rows(); ++i) {
        for (std::size_t j = 0; j < w.cols(); ++j) {
            const double g = d_out(i, j);
            if (g == 0.0) continue;
            d_bias(0, j) += g;
            for (std::size_t k = 0; k < x.cols(); ++k) {
                d_x(i, k) += g * w(k, j);
                d_w(k, j) += g * x(i, k);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Row-wise softmax with max subtraction.
// ---------------------------------------------------------------------------

inline RealMatrix softmax(const RealMatrix& z) {
    RealMatrix p(z.rows(), z.cols());
    for (std::size_t i = 0; i < z.rows(); ++i) {
        double mx = z(i, 0);
        for (std::size_t j = 1; j < z.cols(); ++j) mx = std::max(mx, z(i, j));
        double sum = 0.0;
        for (std::size_t j = 0; j < z.cols(); ++j) {
            const double e = std::exp(z(i, j) - mx);
            p(i, j) = e;
            sum += e;
        }
        for (std::size_t j = 0; j < z.cols(); ++j) p(i, j) /= sum;
    }
    return p;
}

// d_z[i,j] += p[i,j] * (d_p[i,j] - sum_k d_p[i,k] p[i,k])
inline void softmax_backward(const RealMatrix& p, const RealMatrix& d_p, RealMatrix& d_z) {
    for (std::size_t i = 0; i < p.rows(); ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < p.cols(); ++j) dot += d_p(i, j) * p(i, j);
        for (std::size_t j = 0; j < p.cols(); ++j) d_z(i, j) += p(i, j) * (d_p(i, j) - dot);
    }
}

// ---------------------------------------------------------------------------
// Cross-entropy of probability rows against one-hot targets.
// ---------------------------------------------------------------------------

inline RealMatrix one_hot(std::span<const int> labels, std::size_t n_classes) {
    RealMatrix y(labels.size(), n_classes);
    for (std::size_t i = 0; i < labels.size(); ++i) y(i, static_cast<std::size_t>(labels[i])) = 1.0;
    return y;
}

inline double cross_entropy(const RealMatrix& p, const RealMatrix& y_onehot) {
    if (!p.same_shape(y_onehot))
        throw std::invalid_argument("cross_entropy: shape mismatch");
    if (p.rows() == 0) return 0.0;
    double loss = 0.0;
    for (std::size_t i = 0; i < p.rows(); ++i)
        for (std::size_t j = 0; j < p.cols(); ++j) {
            const double y = y_onehot(i, j);
            if (y != 0.0) loss -= y * std::log(std::max(p(i, j), kProbEps));
        }
    return loss / static_cast<double>(p.rows());
}

// Gradient on p. Coordinates at the clip floor contribute zero, matching the
// frozen log in the forward value.
inline void cross_entropy_backward(const RealMatrix& p, const RealMatrix& y_onehot, double d_loss,
                                   RealMatrix& d_p) {
    if (p.rows() == 0) return;
    const double inv_n = 1.0 / static_cast<double>(p.rows());
    for (std::size_t i = 0; i < p.rows(); ++i)
        for (std::size_t j = 0; j < p.cols(); ++j) {
            const double y = y_onehot(i, j);
            if (y == 0.0 || p(i, j) <= kProbEps) continue;
            d_p(i, j) -= d_loss * inv_n * y / p(i, j);
        }
}

// ---------------------------------------------------------------------------
// Entropy of a probability row, natural log, clamped to [0, ln n].
// ---------------------------------------------------------------------------

inline double entropy(std::span<const double> p) {
    double h = 0.0;
    for (double v : p) h -= v * std::log(std::max(v, kProbEps));
    const double hmax = std::log(static_cast<double>(p.size()));
    return std::clamp(h, 0.0, hmax);
}

inline std::vector<double> row_entropies(const RealMatrix& p) {
    std::vector<double> out(p.rows());
    for (std::size_t i = 0; i < p.rows(); ++i) out[i] = entropy(p.row(i));
    return out;
}

// ---------------------------------------------------------------------------
// Symmetric KL divergence, averaged over rows:
//   mean_i (KL(p_i || l_i) + KL(l_i || p_i)) / 2
// ---------------------------------------------------------------------------

inline double sym_kl(const RealMatrix& p, const RealMatrix& l) {
    if (!p.same_shape(l))
        throw std::invalid_argument("sym_kl: shape mismatch");
    if (p.rows() == 0) return 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < p.rows(); ++i)
        for (std::size_t j = 0; j < p.cols(); ++j) {
            const double pv = std::max(p(i, j), kProbEps);
            const double lv = std::max(l(i, j), kProbEps);
            const double diff = std::log(pv) - std::log(lv);
            total += 0.5 * (pv * diff - lv * diff);
        }
    return total / static_cast<double>(p.rows());
}

inline void sym_kl_backward(const RealMatrix& p, const RealMatrix& l, double d_loss,
                            RealMatrix& d_p, RealMatrix& d_l) {
    if (p.rows() == 0) return;
    const double scale = d_loss * 0.5 / static_cast<double>(p.rows());
    for (std::size_t i = 0; i < p.rows(); ++i)
        for (std::size_t j = 0; j < p.cols(); ++j) {
            const double praw = p(i, j);
            const double lraw = l(i, j);
            const double pv = std::max(praw, kProbEps);
            const double lv = std::max(lraw, kProbEps);
            const double diff = std::log(pv) - std::log(lv);
            // d/dp [p*diff - l*diff] = diff + 1 - l/p ; mirrored for l.
            if (praw > kProbEps) d_p(i, j) += scale * (diff + 1.0 - lv / pv);
            if (lraw > kProbEps) d_l(i, j) += scale * (-diff + 1.0 - pv / lv);
        }
}

// tanh applied elementwise, with backward helper.
inline RealMatrix tanh_map(const RealMatrix& x) {
    RealMatrix out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) out.data()[i] = std::tanh(x.data()[i]);
    return out;
}

inline void tanh_backward(const RealMatrix& y, const RealMatrix& d_y, RealMatrix& d_x) {
    for (std::size_t i = 0; i < y.size(); ++i)
        d_x.data()[i] += d_y.data()[i] * (1.0 - y.data()[i] * y.data()[i]);
}

}  // namespace conner
