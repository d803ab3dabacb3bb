#pragma once

// Dense row-major matrix of doubles. Every other module builds on this type.

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace polargrad {

/// Raised when a numerical routine cannot produce a valid result
/// (non-convergence, singular pivot, indefinite matrix, ...).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class Matrix {
public:
    Matrix() = default;

    /// Zero matrix. Both dimensions must be positive.
    Matrix(std::size_t rows, std::size_t cols);

    /// Takes ownership of row-major `data`; rejects wrong length or non-finite entries.
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
    static Matrix identity(std::size_t n);
    static Matrix diagonal(std::span<const double> values);
    static Matrix diagonal(std::initializer_list<double> values);
    static Matrix constant(std::size_t rows, std::size_t cols, double value);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }
    bool is_tall() const noexcept { return rows_ >= cols_; }

    double& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * cols_ + j]; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    std::span<double> row(std::size_t i) noexcept { return {data_.data() + i * cols_, cols_}; }
    std::span<const double> row(std::size_t i) const noexcept {
        return {data_.data() + i * cols_, cols_};
    }

    Matrix transpose() const;
    bool all_finite() const noexcept;
    bool same_shape(const Matrix& other) const noexcept {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

    Matrix& operator+=(const Matrix& other);
    Matrix& operator-=(const Matrix& other);
    Matrix& operator*=(double s) noexcept;

    /// this += s * other
    Matrix& add_scaled(const Matrix& other, double s);

    bool operator==(const Matrix& other) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(Matrix a, double s);
Matrix operator*(double s, Matrix a);

/// a · b
Matrix matmul(const Matrix& a, const Matrix& b);
/// aᵀ · b
Matrix matmul_tn(const Matrix& a, const Matrix& b);
/// a · bᵀ
Matrix matmul_nt(const Matrix& a, const Matrix& b);

Matrix hadamard(const Matrix& a, const Matrix& b);

/// Frobenius inner product ⟨a, b⟩ = tr(aᵀb).
double frobenius_dot(const Matrix& a, const Matrix& b);

double trace(const Matrix& a);

/// Symmetric part (a + aᵀ)/2 of a square matrix.
Matrix symmetrize(const Matrix& a);

/// Stack `top` over `bottom` (equal column counts).
Matrix vstack(const Matrix& top, const Matrix& bottom);

/// Rows [begin, end) as a new matrix.
Matrix row_block(const Matrix& a, std::size_t begin, std::size_t end);

std::string shape_string(const Matrix& a);

void require_same_shape(const Matrix& a, const Matrix& b, const char* what);

}  // namespace polargrad
