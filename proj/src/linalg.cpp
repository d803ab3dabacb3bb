#include "polargrad/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace polargrad {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();
constexpr int kMaxJacobiSweeps = 80;

double dot(std::span<const double> x, std::span<const double> y) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        s += x[i] * y[i];
    }
    return s;
}

void rotate(std::span<double> x, std::span<double> y, double c, double s) {
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double xi = x[i];
        const double yi = y[i];
        x[i] = c * xi - s * yi;
        y[i] = s * xi + c * yi;
    }
}

// Extends the rows of `basis` flagged as missing to an orthonormal set, using
// canonical basis vectors orthogonalized against the rows already present.
void complete_orthonormal_rows(Matrix& basis, const std::vector<bool>& present) {
    const std::size_t k = basis.rows();
    const std::size_t dim = basis.cols();
    std::vector<bool> have = present;
    std::size_t candidate = 0;
    for (std::size_t j = 0; j < k; ++j) {
        if (have[j]) continue;
        bool placed = false;
        while (!placed && candidate < dim) {
            std::vector<double> w(dim, 0.0);
            w[candidate++] = 1.0;
            for (int pass = 0; pass < 2; ++pass) {
                for (std::size_t i = 0; i < k; ++i) {
                    if (!have[i]) continue;
                    auto b = basis.row(i);
                    const double proj = dot(b, w);
                    for (std::size_t t = 0; t < dim; ++t) {
                        w[t] -= proj * b[t];
                    }
                }
            }
            const double norm = std::sqrt(dot(w, w));
            if (norm > 0.5) {
                auto b = basis.row(j);
                for (std::size_t t = 0; t < dim; ++t) {
                    b[t] = w[t] / norm;
                }
                have[j] = true;
                placed = true;
            }
        }
        if (!placed) {
            throw NumericalError("svd: could not complete orthonormal basis");
        }
    }
}

SvdResult svd_tall(const Matrix& a) {
    const std::size_t m = a.rows();
    const std::size_t n = a.cols();
    Matrix w = a.transpose();               // row j = column j of A
    Matrix vt = Matrix::identity(n);        // row j = column j of V
    const double tol = kEps * std::max(1.0, std::sqrt(static_cast<double>(m)));

    bool converged = false;
    for (int sweep = 0; sweep < kMaxJacobiSweeps && !converged; ++sweep) {
        converged = true;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                auto ap = w.row(p);
                auto aq = w.row(q);
                const double alpha = dot(ap, ap);
                const double beta = dot(aq, aq);
                const double gamma = dot(ap, aq);
                if (alpha == 0.0 || beta == 0.0) continue;
                if (std::abs(gamma) <= tol * std::sqrt(alpha) * std::sqrt(beta)) continue;
                converged = false;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::hypot(1.0, zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                rotate(ap, aq, c, s);
                rotate(vt.row(p), vt.row(q), c, s);
            }
        }
    }
    if (!converged) {
        throw NumericalError("svd: one-sided Jacobi did not converge in " +
                             std::to_string(kMaxJacobiSweeps) + " sweeps");
    }

    std::vector<double> norms(n);
    for (std::size_t j = 0; j < n; ++j) {
        norms[j] = std::sqrt(dot(w.row(j), w.row(j)));
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return norms[x] > norms[y]; });

    Matrix ut(n, m);
    Matrix vt_sorted(n, n);
    std::vector<double> sigma(n);
    std::vector<bool> present(n, false);
    for (std::size_t idx = 0; idx < n; ++idx) {
        const std::size_t j = order[idx];
        sigma[idx] = norms[j];
        auto src_v = vt.row(j);
        std::copy(src_v.begin(), src_v.end(), vt_sorted.row(idx).begin());
        if (std::isnormal(norms[j])) {
            auto src = w.row(j);
            auto dst = ut.row(idx);
            for (std::size_t t = 0; t < m; ++t) {
                dst[t] = src[t] / norms[j];
            }
            present[idx] = true;
        } else {
            sigma[idx] = 0.0;
        }
    }
    if (std::find(present.begin(), present.end(), false) != present.end()) {
        complete_orthonormal_rows(ut, present);
    }
    return SvdResult{ut.transpose(), std::move(sigma), vt_sorted.transpose()};
}

}  // namespace

double frobenius_norm(const Matrix& a) {
    // Scaled accumulation avoids overflow for large entries.
    double scale = 0.0;
    for (double v : a.data()) {
        scale = std::max(scale, std::abs(v));
    }
    if (scale == 0.0 || !std::isfinite(scale)) {
        return scale;
    }
    double s = 0.0;
    for (double v : a.data()) {
        const double r = v / scale;
        s += r * r;
    }
    return scale * std::sqrt(s);
}

SvdResult svd(const Matrix& a) {
    if (a.empty()) {
        throw std::invalid_argument("svd of an empty matrix");
    }
    if (!a.all_finite()) {
        throw std::invalid_argument("svd input must be finite");
    }
    if (a.is_tall()) {
        return svd_tall(a);
    }
    SvdResult t = svd_tall(a.transpose());
    return SvdResult{std::move(t.v), std::move(t.sigma), std::move(t.u)};
}

std::vector<double> singular_values(const Matrix& a) { return svd(a).sigma; }

double nuclear_norm(const Matrix& a) {
    const auto sigma = singular_values(a);
    return std::accumulate(sigma.begin(), sigma.end(), 0.0);
}

double spectral_norm(const Matrix& a) { return singular_values(a).front(); }

std::size_t numerical_rank(const std::vector<double>& sigma, double rank_tol) {
    if (sigma.empty() || sigma.front() == 0.0) {
        return 0;
    }
    const double threshold = rank_tol * sigma.front();
    return static_cast<std::size_t>(
        std::count_if(sigma.begin(), sigma.end(), [&](double s) { return s > threshold; }));
}

std::size_t numerical_rank(const Matrix& a, double rank_tol) {
    return numerical_rank(singular_values(a), rank_tol);
}

double cond2(const std::vector<double>& sigma, double rank_tol) {
    if (rank_tol < 0.0) {
        throw std::invalid_argument("cond2: rank_tol must be non-negative");
    }
    const std::size_t r = numerical_rank(sigma, rank_tol);
    if (r == 0) {
        throw std::domain_error("cond2: condition number of the zero matrix is undefined");
    }
    return sigma.front() / sigma[r - 1];
}

double cond2(const Matrix& a, double rank_tol) { return cond2(singular_values(a), rank_tol); }

QrResult qr_householder(const Matrix& a) {
    const std::size_t m = a.rows();
    const std::size_t n = a.cols();
    if (m < n) {
        throw std::invalid_argument("qr_householder needs rows >= cols, got " + shape_string(a));
    }
    Matrix w = a.transpose();  // row j = column j
    std::vector<std::vector<double>> reflectors(n);
    std::vector<double> betas(n, 0.0);

    for (std::size_t k = 0; k < n; ++k) {
        auto col = w.row(k);
        double norm = 0.0;
        for (std::size_t i = k; i < m; ++i) {
            norm += col[i] * col[i];
        }
        norm = std::sqrt(norm);
        if (norm == 0.0) {
            continue;
        }
        std::vector<double> v(col.begin() + static_cast<std::ptrdiff_t>(k), col.end());
        const double alpha = -std::copysign(norm, v[0]);
        v[0] -= alpha;
        const double vnorm2 = dot(v, v);
        if (vnorm2 == 0.0) {
            continue;
        }
        const double beta = 2.0 / vnorm2;
        for (std::size_t j = k; j < n; ++j) {
            auto cj = w.row(j);
            double proj = 0.0;
            for (std::size_t i = 0; i < v.size(); ++i) {
                proj += v[i] * cj[k + i];
            }
            proj *= beta;
            for (std::size_t i = 0; i < v.size(); ++i) {
                cj[k + i] -= proj * v[i];
            }
        }
        reflectors[k] = std::move(v);
        betas[k] = beta;
    }

    Matrix r(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t i = 0; i <= j; ++i) {
            r(i, j) = w(j, i);
        }
    }

    Matrix qt(n, m);  // row j = column j of Q
    for (std::size_t j = 0; j < n; ++j) {
        qt(j, j) = 1.0;
    }
    for (std::size_t kk = n; kk-- > 0;) {
        const auto& v = reflectors[kk];
        if (v.empty()) continue;
        for (std::size_t j = kk; j < n; ++j) {
            auto qj = qt.row(j);
            double proj = 0.0;
            for (std::size_t i = 0; i < v.size(); ++i) {
                proj += v[i] * qj[kk + i];
            }
            proj *= betas[kk];
            for (std::size_t i = 0; i < v.size(); ++i) {
                qj[kk + i] -= proj * v[i];
            }
        }
    }

    for (std::size_t k = 0; k < n; ++k) {
        if (r(k, k) < 0.0) {
            for (std::size_t j = k; j < n; ++j) {
                r(k, j) = -r(k, j);
            }
            for (double& x : qt.row(k)) {
                x = -x;
            }
        }
    }
    return QrResult{qt.transpose(), std::move(r)};
}

Matrix cholesky(const Matrix& s) {
    const std::size_t n = s.rows();
    if (s.cols() != n) {
        throw std::invalid_argument("cholesky needs a square matrix, got " + shape_string(s));
    }
    double scale = 0.0;
    for (double v : s.data()) {
        scale = std::max(scale, std::abs(v));
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (std::abs(s(i, j) - s(j, i)) > 1e-12 * std::max(scale, 1e-300)) {
                throw std::invalid_argument("cholesky input is not symmetric");
            }
        }
    }
    Matrix l(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        double d = s(j, j);
        auto lj = l.row(j);
        for (std::size_t k = 0; k < j; ++k) {
            d -= lj[k] * lj[k];
        }
        if (!(d > 0.0)) {
            throw NumericalError("cholesky: non-positive pivot at index " + std::to_string(j));
        }
        const double ljj = std::sqrt(d);
        lj[j] = ljj;
        for (std::size_t i = j + 1; i < n; ++i) {
            auto li = l.row(i);
            double v = s(i, j);
            for (std::size_t k = 0; k < j; ++k) {
                v -= li[k] * lj[k];
            }
            li[j] = v / ljj;
        }
    }
    return l;
}

SigmaBounds sigma_bounds(const Matrix& a, BoundsMode mode, double rank_tol) {
    if (mode == BoundsMode::Exact) {
        const auto sigma = singular_values(a);
        const std::size_t r = numerical_rank(sigma, rank_tol);
        if (r == 0) {
            throw std::domain_error("sigma_bounds: zero matrix has no positive singular values");
        }
        return SigmaBounds{sigma.front(), sigma[r - 1], BoundsMode::Exact};
    }

    const double alpha = frobenius_norm(a);
    if (alpha == 0.0) {
        throw std::domain_error("sigma_bounds: zero matrix has no positive singular values");
    }
    // sigma_min(R) = 1/‖R^{-1}‖_2 >= 1/‖R^{-1}‖_F, so this never overestimates.
    const QrResult qr = qr_householder(a.is_tall() ? a : a.transpose());
    double beta = alpha * kEps;
    bool invertible = true;
    for (std::size_t i = 0; i < qr.r.rows(); ++i) {
        if (!(qr.r(i, i) > alpha * kEps)) {
            invertible = false;
        }
    }
    if (invertible) {
        const double inv_norm = frobenius_norm(upper_triangular_inverse(qr.r));
        if (std::isfinite(inv_norm) && inv_norm > 0.0) {
            beta = std::max(beta, 1.0 / inv_norm);
        }
    }
    return SigmaBounds{alpha, std::min(beta, alpha), BoundsMode::Heuristic};
}

Matrix inverse(const Matrix& a) {
    const std::size_t n = a.rows();
    if (a.cols() != n) {
        throw std::invalid_argument("inverse needs a square matrix, got " + shape_string(a));
    }
    Matrix lu = a;
    Matrix inv = Matrix::identity(n);
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t pivot = k;
        double best = std::abs(lu(k, k));
        for (std::size_t i = k + 1; i < n; ++i) {
            if (std::abs(lu(i, k)) > best) {
                best = std::abs(lu(i, k));
                pivot = i;
            }
        }
        if (best == 0.0) {
            throw NumericalError("inverse: matrix is singular");
        }
        if (pivot != k) {
            std::swap_ranges(lu.row(k).begin(), lu.row(k).end(), lu.row(pivot).begin());
            std::swap_ranges(inv.row(k).begin(), inv.row(k).end(), inv.row(pivot).begin());
        }
        const double d = lu(k, k);
        for (std::size_t i = 0; i < n; ++i) {
            if (i == k) continue;
            const double f = lu(i, k) / d;
            if (f == 0.0) continue;
            auto li = lu.row(i);
            auto lk = lu.row(k);
            for (std::size_t j = k; j < n; ++j) {
                li[j] -= f * lk[j];
            }
            auto ii = inv.row(i);
            auto ik = inv.row(k);
            for (std::size_t j = 0; j < n; ++j) {
                ii[j] -= f * ik[j];
            }
        }
        for (double& x : lu.row(k)) x /= d;
        for (double& x : inv.row(k)) x /= d;
    }
    if (!inv.all_finite()) {
        throw NumericalError("inverse: result is not finite");
    }
    return inv;
}

Matrix upper_triangular_inverse(const Matrix& r) {
    const std::size_t n = r.rows();
    if (r.cols() != n) {
        throw std::invalid_argument("upper_triangular_inverse needs a square matrix");
    }
    Matrix inv(n, n);
    for (std::size_t j = n; j-- > 0;) {
        if (r(j, j) == 0.0) {
            throw NumericalError("upper_triangular_inverse: zero diagonal entry");
        }
        inv(j, j) = 1.0 / r(j, j);
        for (std::size_t i = j; i-- > 0;) {
            double s = 0.0;
            for (std::size_t k = i + 1; k <= j; ++k) {
                s += r(i, k) * inv(k, j);
            }
            inv(i, j) = -s / r(i, i);
        }
    }
    return inv;
}

Matrix solve_left_spd(const Matrix& chol_lower, const Matrix& b) {
    const std::size_t n = chol_lower.rows();
    if (b.rows() != n) {
        throw std::invalid_argument("solve_left_spd shape mismatch");
    }
    Matrix y = b;
    // L y = b
    for (std::size_t i = 0; i < n; ++i) {
        auto yi = y.row(i);
        for (std::size_t k = 0; k < i; ++k) {
            const double lik = chol_lower(i, k);
            if (lik == 0.0) continue;
            auto yk = y.row(k);
            for (std::size_t j = 0; j < yi.size(); ++j) {
                yi[j] -= lik * yk[j];
            }
        }
        const double d = chol_lower(i, i);
        for (double& v : yi) v /= d;
    }
    // Lᵀ x = y
    for (std::size_t i = n; i-- > 0;) {
        auto xi = y.row(i);
        for (std::size_t k = i + 1; k < n; ++k) {
            const double lki = chol_lower(k, i);
            if (lki == 0.0) continue;
            auto xk = y.row(k);
            for (std::size_t j = 0; j < xi.size(); ++j) {
                xi[j] -= lki * xk[j];
            }
        }
        const double d = chol_lower(i, i);
        for (double& v : xi) v /= d;
    }
    return y;
}

Matrix solve_right_spd(const Matrix& b, const Matrix& chol_lower) {
    return solve_left_spd(chol_lower, b.transpose()).transpose();
}

Matrix spd_inverse(const Matrix& s) {
    return symmetrize(solve_left_spd(cholesky(s), Matrix::identity(s.rows())));
}

double orthogonality_residual(const Matrix& a) {
    const Matrix gram = a.is_tall() ? matmul_tn(a, a) : matmul_nt(a, a);
    const std::size_t k = gram.rows();
    return frobenius_norm(gram - Matrix::identity(k)) / std::sqrt(static_cast<double>(k));
}

}  // namespace polargrad
