#ifndef CTXRS_MATRIX_HPP
#define CTXRS_MATRIX_HPP

#include <cassert>
#include <cstddef>
#include <vector>

namespace ctxrs {

/// Dense row-major matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    double& operator()(std::size_t r, std::size_t c) {
        assert(r < rows_ && c < cols_);
        return data_[r * cols_ + c];
    }
    double operator()(std::size_t r, std::size_t c) const {
        assert(r < rows_ && c < cols_);
        return data_[r * cols_ + c];
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    const std::vector<double>& data() const { return data_; }
    std::vector<double>& data() { return data_; }

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// Rank-4 tensor indexed (i, j, k, l), used for per-cell per-cluster-pair
/// posterior statistics.
class Tensor4 {
public:
    Tensor4() = default;
    Tensor4(std::size_t n, std::size_t m, std::size_t K, std::size_t L, double fill = 0.0)
        : n_(n), m_(m), K_(K), L_(L), data_(n * m * K * L, fill) {}

    double& operator()(std::size_t i, std::size_t j, std::size_t k, std::size_t l) {
        return data_[((i * m_ + j) * K_ + k) * L_ + l];
    }
    double operator()(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const {
        return data_[((i * m_ + j) * K_ + k) * L_ + l];
    }

    std::size_t n() const { return n_; }
    std::size_t m() const { return m_; }
    std::size_t K() const { return K_; }
    std::size_t L() const { return L_; }

    bool operator==(const Tensor4&) const = default;

private:
    std::size_t n_ = 0, m_ = 0, K_ = 0, L_ = 0;
    std::vector<double> data_;
};

} // namespace ctxrs

#endif
