#pragma once

// Norms, factorizations and spectral estimates on dense matrices.

#include "polargrad/matrix.hpp"

#include <vector>

namespace polargrad {

/// Relative threshold below which a singular value counts as zero.
inline constexpr double kDefaultRankTol = 1e-12;

struct SvdResult {
    Matrix u;                   // m x k, orthonormal columns
    std::vector<double> sigma;  // k values, non-increasing, >= 0
    Matrix v;                   // n x k, orthonormal columns
};

struct QrResult {
    Matrix q;  // m x n, orthonormal columns
    Matrix r;  // n x n, upper triangular with non-negative diagonal
};

enum class BoundsMode { Exact, Heuristic };

struct SigmaBounds {
    double alpha = 1.0;  // >= sigma_max
    double beta = 1.0;   // <= sigma_min
    BoundsMode mode = BoundsMode::Exact;
};

double frobenius_norm(const Matrix& a);

/// Thin SVD by one-sided (Hestenes) Jacobi rotations, k = min(m, n).
/// Throws NumericalError if the sweeps do not converge.
SvdResult svd(const Matrix& a);

std::vector<double> singular_values(const Matrix& a);

double nuclear_norm(const Matrix& a);
double spectral_norm(const Matrix& a);

/// Number of singular values above rank_tol * sigma_max.
std::size_t numerical_rank(const Matrix& a, double rank_tol = kDefaultRankTol);
std::size_t numerical_rank(const std::vector<double>& sigma, double rank_tol = kDefaultRankTol);

/// sigma_max / sigma_r with sigma_r the smallest singular value above rank_tol * sigma_max.
/// Throws std::domain_error for the zero matrix.
double cond2(const Matrix& a, double rank_tol = kDefaultRankTol);
double cond2(const std::vector<double>& sigma, double rank_tol = kDefaultRankTol);

/// Thin Householder QR of a tall (rows >= cols) matrix.
QrResult qr_householder(const Matrix& a);

/// Lower-triangular L with L Lᵀ = s. Throws NumericalError on a non-positive pivot.
Matrix cholesky(const Matrix& s);

SigmaBounds sigma_bounds(const Matrix& a, BoundsMode mode, double rank_tol = kDefaultRankTol);

/// Inverse of a square matrix via LU with partial pivoting. Throws NumericalError if singular.
Matrix inverse(const Matrix& a);

/// Inverse of an upper-triangular matrix. Throws NumericalError on a zero diagonal.
Matrix upper_triangular_inverse(const Matrix& r);

/// Right-solve b · s^{-1} for symmetric positive definite s given its Cholesky factor L (s = L Lᵀ).
Matrix solve_right_spd(const Matrix& b, const Matrix& chol_lower);

/// Left-solve s^{-1} · b for symmetric positive definite s given its Cholesky factor.
Matrix solve_left_spd(const Matrix& chol_lower, const Matrix& b);

/// Inverse of a symmetric positive definite matrix.
Matrix spd_inverse(const Matrix& s);

/// ‖aᵀa − I‖_F / √n for the tall orientation of a (uses a aᵀ for wide a).
double orthogonality_residual(const Matrix& a);

}  // namespace polargrad
