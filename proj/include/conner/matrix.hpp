#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace conner {

// Dense row-major matrix of 64-bit reals. The only tensor type in the
// library; row vectors are 1xN matrices.
class RealMatrix {
public:
    RealMatrix() = default;

    RealMatrix(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

    RealMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_)
            throw std::invalid_argument("RealMatrix: data size " + std::to_string(data_.size()) +
                                        " does not match " + std::to_string(rows_) + "x" +
                                        std::to_string(cols_));
    }

    // Checked construction: rejects NaN/Inf entries.
    static RealMatrix checked(std::size_t rows, std::size_t cols, std::vector<double> data) {
        RealMatrix m(rows, cols, std::move(data));
        if (!m.all_finite())
            throw std::invalid_argument("RealMatrix: non-finite entry");
        return m;
    }

    static RealMatrix zeros(std::size_t rows, std::size_t cols) { return {rows, cols}; }

    static RealMatrix filled(std::size_t rows, std::size_t cols, double v) {
        RealMatrix m(rows, cols);
        for (double& x : m.data_) x = v;
        return m;
    }

    static RealMatrix identity(std::size_t n) {
        RealMatrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    template <class Rng>
    static RealMatrix uniform(std::size_t rows, std::size_t cols, double lo, double hi, Rng& rng) {
        RealMatrix m(rows, cols);
        std::uniform_real_distribution<double> dist(lo, hi);
        for (double& x : m.data_) x = dist(rng);
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    double& at(std::size_t i, std::size_t j) {
        check_index(i, j);
        return data_[i * cols_ + j];
    }
    double at(std::size_t i, std::size_t j) const {
        check_index(i, j);
        return data_[i * cols_ + j];
    }

    std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
    std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    void fill(double v) {
        for (double& x : data_) x = v;
    }

    bool all_finite() const {
        for (double x : data_)
            if (!std::isfinite(x)) return false;
        return true;
    }

    bool same_shape(const RealMatrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    friend bool operator==(const RealMatrix& a, const RealMatrix& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
    }

private:
    void check_index(std::size_t i, std::size_t j) const {
        if (i >= rows_ || j >= cols_)
            throw std::out_of_range("RealMatrix: index (" + std::to_string(i) + "," +
                                    std::to_string(j) + ") out of " + std::to_string(rows_) + "x" +
                                    std::to_string(cols_));
    }

    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline void require_shape(const RealMatrix& m, std::size_t rows, std::size_t cols,
                          const char* what) {
    if (m.rows() != rows || m.cols() != cols)
        throw std::invalid_argument(std::string(what) + ": expected " + std::to_string(rows) + "x" +
                                    std::to_string(cols) + ", got " + std::to_string(m.rows()) +
                                    "x" + std::to_string(m.cols()));
}

}  // namespace conner
