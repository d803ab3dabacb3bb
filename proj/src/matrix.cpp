#include "polargrad/matrix.hpp"

#include <algorithm>
#include <cmath>

namespace polargrad {

namespace {

void require_positive_dims(std::size_t rows, std::size_t cols) {
    if (rows == 0 || cols == 0) {
        throw std::invalid_argument("matrix dimensions must be positive, got " +
                                    std::to_string(rows) + "x" + std::to_string(cols));
    }
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols) {
    require_positive_dims(rows, cols);
    data_.assign(rows * cols, 0.0);
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    require_positive_dims(rows, cols);
    if (data_.size() != rows * cols) {
        throw std::invalid_argument("matrix data length " + std::to_string(data_.size()) +
                                    " does not match " + std::to_string(rows) + "x" +
                                    std::to_string(cols));
    }
    if (!all_finite()) {
        throw std::invalid_argument("matrix entries must be finite");
    }
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) {
            throw std::invalid_argument("ragged row list");
        }
        data.insert(data.end(), row.begin(), row.end());
    }
    return Matrix(r, c, std::move(data));
}

Matrix Matrix::identity(std::size_t n) {
    Matrix out(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        out(i, i) = 1.0;
    }
    return out;
}

Matrix Matrix::diagonal(std::span<const double> values) {
    Matrix out(values.size(), values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i])) {
            throw std::invalid_argument("matrix entries must be finite");
        }
        out(i, i) = values[i];
    }
    return out;
}

Matrix Matrix::diagonal(std::initializer_list<double> values) {
    return diagonal(std::span<const double>(values.begin(), values.size()));
}

Matrix Matrix::constant(std::size_t rows, std::size_t cols, double value) {
    return Matrix(rows, cols, std::vector<double>(rows * cols, value));
}

Matrix Matrix::transpose() const {
    Matrix out(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i) {
        for (std::size_t j = 0; j < cols_; ++j) {
            out(j, i) = (*this)(i, j);
        }
    }
    return out;
}

bool Matrix::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Matrix& Matrix::operator+=(const Matrix& other) {
    require_same_shape(*this, other, "operator+=");
    for (std::size_t i = 0; i < data_.size(); ++i) {
        data_[i] += other.data_[i];
    }
    return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
    require_same_shape(*this, other, "operator-=");
    for (std::size_t i = 0; i < data_.size(); ++i) {
        data_[i] -= other.data_[i];
    }
    return *this;
}

Matrix& Matrix::operator*=(double s) noexcept {
    for (double& v : data_) {
        v *= s;
    }
    return *this;
}

Matrix& Matrix::add_scaled(const Matrix& other, double s) {
    require_same_shape(*this, other, "add_scaled");
    for (std::size_t i = 0; i < data_.size(); ++i) {
        data_[i] += s * other.data_[i];
    }
    return *this;
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(Matrix a, double s) { return a *= s; }
Matrix operator*(double s, Matrix a) { return a *= s; }

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw std::invalid_argument("matmul shape mismatch " + shape_string(a) + " * " +
                                    shape_string(b));
    }
    Matrix out(a.rows(), b.cols());
    const std::size_t inner = a.cols();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto out_row = out.row(i);
        for (std::size_t k = 0; k < inner; ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            auto b_row = b.row(k);
            for (std::size_t j = 0; j < out_row.size(); ++j) {
                out_row[j] += aik * b_row[j];
            }
        }
    }
    return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) {
        throw std::invalid_argument("matmul_tn shape mismatch " + shape_string(a) + "^T * " +
                                    shape_string(b));
    }
    Matrix out(a.cols(), b.cols());
    for (std::size_t k = 0; k < a.rows(); ++k) {
        auto a_row = a.row(k);
        auto b_row = b.row(k);
        for (std::size_t i = 0; i < a_row.size(); ++i) {
            const double aki = a_row[i];
            if (aki == 0.0) continue;
            auto out_row = out.row(i);
            for (std::size_t j = 0; j < b_row.size(); ++j) {
                out_row[j] += aki * b_row[j];
            }
        }
    }
    return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) {
        throw std::invalid_argument("matmul_nt shape mismatch " + shape_string(a) + " * " +
                                    shape_string(b) + "^T");
    }
    Matrix out(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto a_row = a.row(i);
        for (std::size_t j = 0; j < b.rows(); ++j) {
            auto b_row = b.row(j);
            double s = 0.0;
            for (std::size_t k = 0; k < a_row.size(); ++k) {
                s += a_row[k] * b_row[k];
            }
            out(i, j) = s;
        }
    }
    return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "hadamard");
    Matrix out(a.rows(), a.cols());
    auto o = out.data();
    auto x = a.data();
    auto y = b.data();
    for (std::size_t i = 0; i < o.size(); ++i) {
        o[i] = x[i] * y[i];
    }
    return out;
}

double frobenius_dot(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "frobenius_dot");
    auto x = a.data();
    auto y = b.data();
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        s += x[i] * y[i];
    }
    return s;
}

double trace(const Matrix& a) {
    const std::size_t n = std::min(a.rows(), a.cols());
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        s += a(i, i);
    }
    return s;
}

Matrix symmetrize(const Matrix& a) {
    if (a.rows() != a.cols()) {
        throw std::invalid_argument("symmetrize needs a square matrix, got " + shape_string(a));
    }
    Matrix out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) {
            out(i, j) = 0.5 * (a(i, j) + a(j, i));
        }
    }
    return out;
}

Matrix vstack(const Matrix& top, const Matrix& bottom) {
    if (top.cols() != bottom.cols()) {
        throw std::invalid_argument("vstack column mismatch");
    }
    Matrix out(top.rows() + bottom.rows(), top.cols());
    auto o = out.data();
    std::copy(top.data().begin(), top.data().end(), o.begin());
    std::copy(bottom.data().begin(), bottom.data().end(), o.begin() + top.size());
    return out;
}

Matrix row_block(const Matrix& a, std::size_t begin, std::size_t end) {
    if (begin >= end || end > a.rows()) {
        throw std::invalid_argument("row_block range out of bounds");
    }
    Matrix out(end - begin, a.cols());
    std::copy(a.data().begin() + begin * a.cols(), a.data().begin() + end * a.cols(),
              out.data().begin());
    return out;
}

std::string shape_string(const Matrix& a) {
    return std::to_string(a.rows()) + "x" + std::to_string(a.cols());
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument(std::string(what) + ": shape mismatch " + shape_string(a) +
                                    " vs " + shape_string(b));
    }
}

}  // namespace polargrad
