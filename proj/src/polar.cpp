#include "polargrad/polar.hpp"

#include "polargrad/elliptic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace polargrad {

namespace {

// Required iteration counts for the degree-(2r+1) Zolotarev map, rows r = 1..8.
constexpr std::array<double, 12> kTableKappa = {1.001, 1.01, 1.1, 1.2, 1.5, 2.0,
                                                10.0,  1e2,  1e3, 1e5, 1e7, 1e16};
constexpr std::array<std::array<int, 12>, 8> kTableIterations = {{
    {2, 2, 2, 3, 3, 3, 4, 4, 4, 5, 5, 6},
    {1, 2, 2, 2, 2, 2, 3, 3, 3, 3, 4, 4},
    {1, 1, 2, 2, 2, 2, 2, 2, 3, 3, 3, 3},
    {1, 1, 1, 2, 2, 2, 2, 2, 2, 3, 3, 3},
    {1, 1, 1, 1, 2, 2, 2, 2, 2, 2, 3, 3},
    {1, 1, 1, 1, 1, 2, 2, 2, 2, 2, 2, 3},
    {1, 1, 1, 1, 1, 1, 2, 2, 2, 2, 2, 3},
    {1, 1, 1, 1, 1, 1, 2, 2, 2, 2, 2, 2},
}};

struct Oriented {
    Matrix tall;
    bool transposed = false;
};

Oriented orient(const Matrix& a) {
    if (a.is_tall()) {
        return {a, false};
    }
    return {a.transpose(), true};
}

PolarFactors finish(const Matrix& a, Matrix u_tall, bool transposed, PolarAlgorithm algorithm) {
    PolarFactors out;
    out.u = transposed ? u_tall.transpose() : std::move(u_tall);
    out.h = hermitian_factor(a, out.u);
    out.algorithm = algorithm;
    return out;
}

double relative_change(const Matrix& next, const Matrix& prev) {
    const double denom = frobenius_norm(next);
    const double diff = frobenius_norm(next - prev);
    return denom > 0.0 ? diff / denom : diff;
}

void validate_bounds(const SigmaBounds& bounds) {
    if (!(bounds.beta > 0.0 && bounds.beta <= bounds.alpha && std::isfinite(bounds.alpha))) {
        throw std::invalid_argument("sigma bounds must satisfy 0 < beta <= alpha");
    }
}

// X (XᵀX + cI)^{-1} via the QR factorization of [X; sqrt(c) I]: equals Q1 Q2ᵀ / sqrt(c).
Matrix qr_resolvent(const Matrix& x, double c) {
    const std::size_t m = x.rows();
    const std::size_t n = x.cols();
    const Matrix stacked = vstack(x, std::sqrt(c) * Matrix::identity(n));
    const QrResult qr = qr_householder(stacked);
    return matmul_nt(row_block(qr.q, 0, m), row_block(qr.q, m, m + n)) * (1.0 / std::sqrt(c));
}

Matrix zolo_qr_step(const Matrix& x, const ZolotarevCoefficients& z) {
    Matrix next = x;
    for (int j = 0; j < z.r; ++j) {
        next.add_scaled(qr_resolvent(x, z.odd(j)), z.a[static_cast<std::size_t>(j)]);
    }
    next *= z.m_hat;
    return next;
}

Matrix zolo_cholesky_step(const Matrix& x, const ZolotarevCoefficients& z) {
    const Matrix gram = symmetrize(matmul_tn(x, x));
    Matrix next = x;
    for (int j = 0; j < z.r; ++j) {
        Matrix shifted = gram;
        for (std::size_t i = 0; i < shifted.rows(); ++i) {
            shifted(i, i) += z.odd(j);
        }
        const Matrix chol = cholesky(shifted);
        next.add_scaled(solve_right_spd(x, chol), z.a[static_cast<std::size_t>(j)]);
    }
    next *= z.m_hat;
    return next;
}

}  // namespace

std::string_view to_string(PolarAlgorithm algorithm) {
    switch (algorithm) {
        case PolarAlgorithm::SvdReference: return "svd";
        case PolarAlgorithm::NewtonSchulz: return "ns";
        case PolarAlgorithm::ScaledNewton: return "newton";
        case PolarAlgorithm::Qdwh: return "qdwh";
        case PolarAlgorithm::ZoloPd: return "zolo";
    }
    return "unknown";
}

PolarAlgorithm parse_polar_algorithm(std::string_view name) {
    if (name == "svd") return PolarAlgorithm::SvdReference;
    if (name == "ns") return PolarAlgorithm::NewtonSchulz;
    if (name == "newton") return PolarAlgorithm::ScaledNewton;
    if (name == "qdwh") return PolarAlgorithm::Qdwh;
    if (name == "zolo") return PolarAlgorithm::ZoloPd;
    throw std::invalid_argument("unknown polar algorithm '" + std::string(name) + "'");
}

NsCoefficients NsCoefficients::classic(double delta) {
    return NsCoefficients{1.5, -0.5, 0.0, std::sqrt(3.0) - delta};
}

NsCoefficients NsCoefficients::muon() { return NsCoefficients{3.4445, -4.7750, 2.0315, 1.0}; }

Matrix hermitian_factor(const Matrix& a, const Matrix& u) {
    require_same_shape(a, u, "hermitian_factor");
    return symmetrize(a.is_tall() ? matmul_tn(u, a) : matmul_nt(a, u));
}

PolarFactors polar_reference(const Matrix& a, double rank_tol) {
    const SvdResult s = svd(a);
    const std::size_t rank = numerical_rank(s.sigma, rank_tol);
    const std::size_t k = s.sigma.size();

    Matrix u(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) {
            double v = 0.0;
            for (std::size_t t = 0; t < rank; ++t) {
                v += s.u(i, t) * s.v(j, t);
            }
            u(i, j) = v;
        }
    }
    // H = V Σ Vᵀ (tall) or U Σ Uᵀ (wide); both are k x k.
    const Matrix& basis = a.is_tall() ? s.v : s.u;
    Matrix h(k, k);
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            double v = 0.0;
            for (std::size_t t = 0; t < k; ++t) {
                v += basis(i, t) * s.sigma[t] * basis(j, t);
            }
            h(i, j) = v;
        }
    }

    PolarFactors out;
    out.u = std::move(u);
    out.h = symmetrize(h);
    out.converged = true;
    out.algorithm = PolarAlgorithm::SvdReference;
    return out;
}

PolarFactors newton_schulz(const Matrix& a, int steps, const NsCoefficients& coeffs, double tol) {
    if (steps < 0) {
        throw std::invalid_argument("newton_schulz: steps must be non-negative");
    }
    const double norm = frobenius_norm(a);
    if (norm == 0.0) {
        PolarFactors out = finish(a, Matrix(a.rows(), a.cols()), false, PolarAlgorithm::NewtonSchulz);
        out.converged = false;
        out.diagnostics = "zero input";
        return out;
    }
    auto [x, transposed] = orient(a);
    x *= coeffs.initial_scale / norm;
    double change = 0.0;
    for (int k = 0; k < steps; ++k) {
        const Matrix s = matmul_tn(x, x);
        Matrix poly = coeffs.b * s;
        if (coeffs.c != 0.0) {
            poly.add_scaled(matmul(s, s), coeffs.c);
        }
        Matrix next = coeffs.a * x;
        next += matmul(x, poly);
        change = relative_change(next, x);
        x = std::move(next);
    }
    const double ortho = orthogonality_residual(x);
    PolarFactors out = finish(a, std::move(x), transposed, PolarAlgorithm::NewtonSchulz);
    out.iterations = steps;
    out.last_change = change;
    out.converged = std::isfinite(ortho) && ortho <= tol;
    if (!out.u.all_finite()) {
        out.converged = false;
        out.diagnostics = "iterate diverged";
    }
    return out;
}

PolarFactors scaled_newton(const Matrix& a, int max_steps, NewtonScaling scaling, double tol) {
    if (a.rows() != a.cols()) {
        throw std::invalid_argument("scaled_newton needs a square matrix, got " + shape_string(a));
    }
    Matrix x = a;
    int iterations = 0;
    double change = std::numeric_limits<double>::infinity();
    bool converged = false;
    bool scale_active = scaling == NewtonScaling::Frobenius;
    while (iterations < max_steps) {
        const Matrix inv = inverse(x);
        double mu = 1.0;
        if (scale_active) {
            mu = std::sqrt(frobenius_norm(inv) / frobenius_norm(x));
        }
        Matrix next = (0.5 * mu) * x;
        next.add_scaled(inv.transpose(), 0.5 / mu);
        change = relative_change(next, x);
        x = std::move(next);
        ++iterations;
        if (change <= tol) {
            converged = true;
            break;
        }
        // Near convergence the optimal scale is 1; keep it from perturbing the quadratic phase.
        if (change < 1e-2) {
            scale_active = false;
        }
    }
    PolarFactors out = finish(a, std::move(x), false, PolarAlgorithm::ScaledNewton);
    out.iterations = iterations;
    out.converged = converged;
    out.last_change = change;
    return out;
}

HalleyWeights dwh_weights(double ell) {
    ell = std::clamp(ell, 0.0, 1.0);
    const double l2 = ell * ell;
    const double gamma = std::cbrt(4.0 * (1.0 - l2) / (l2 * l2));
    const double root = std::sqrt(1.0 + gamma);
    const double a = root + 0.5 * std::sqrt(8.0 - 4.0 * gamma + 8.0 * (2.0 - l2) / (l2 * root));
    const double b = (a - 1.0) * (a - 1.0) / 4.0;
    return HalleyWeights{a, b, a + b - 1.0};
}

PolarFactors qdwh(const Matrix& a, const SigmaBounds& bounds, double tol, int max_steps) {
    validate_bounds(bounds);
    auto [x, transposed] = orient(a);
    x *= 1.0 / bounds.alpha;
    double ell = std::min(1.0, bounds.beta / bounds.alpha);

    int iterations = 0;
    bool converged = false;
    double change = 0.0;
    while (iterations < max_steps) {
        const HalleyWeights w = dwh_weights(ell);
        const std::size_t m = x.rows();
        const std::size_t n = x.cols();
        const double root_c = std::sqrt(w.c);
        const QrResult qr = qr_householder(vstack(root_c * x, Matrix::identity(n)));
        Matrix next = (w.b / w.c) * x;
        next.add_scaled(matmul_nt(row_block(qr.q, 0, m), row_block(qr.q, m, m + n)),
                        (w.a - w.b / w.c) / root_c);
        ell = std::min(1.0, w.apply(ell));
        change = relative_change(next, x);
        x = std::move(next);
        ++iterations;
        if (change <= tol || std::abs(1.0 - ell) <= tol) {
            converged = true;
            break;
        }
    }
    PolarFactors out = finish(a, std::move(x), transposed, PolarAlgorithm::Qdwh);
    out.iterations = iterations;
    out.converged = converged && out.u.all_finite();
    out.last_change = change;
    out.final_ell = ell;
    if (!converged) {
        out.diagnostics = "qdwh: no convergence within " + std::to_string(max_steps) +
                          " steps (ell=" + std::to_string(ell) +
                          ", change=" + std::to_string(change) + ")";
    }
    return out;
}

int zolotarev_iteration_budget(int r, double kappa) {
    if (r < 1 || r > 8) {
        throw std::invalid_argument("zolotarev_iteration_budget: r must lie in [1, 8]");
    }
    std::size_t col = kTableKappa.size() - 1;
    for (std::size_t i = 0; i < kTableKappa.size(); ++i) {
        if (kTableKappa[i] >= kappa) {
            col = i;
            break;
        }
    }
    return kTableIterations[static_cast<std::size_t>(r - 1)][col];
}

int zolo_auto_r(double kappa) {
    for (int r = 1; r <= 8; ++r) {
        if (zolotarev_iteration_budget(r, kappa) <= 2) {
            return r;
        }
    }
    return 8;
}

PolarFactors zolo_pd(const Matrix& a, const SigmaBounds& bounds, int r, double tol,
                     int max_iterations) {
    validate_bounds(bounds);
    if (r < 0 || r > 8) {
        throw std::invalid_argument("zolo_pd: r must lie in [1, 8] (0 for automatic)");
    }
    const bool auto_r = r == 0;
    auto [x, transposed] = orient(a);
    x *= 1.0 / bounds.alpha;
    double ell = std::min(1.0, bounds.beta / bounds.alpha);

    int iterations = 0;
    bool converged = false;
    bool fallback = false;
    double change = 0.0;
    const int degree = auto_r ? zolo_auto_r(1.0 / ell) : r;
    while (iterations < max_iterations) {
        const ZolotarevCoefficients z = zolotarev_coefficients(ell, degree);
        Matrix next;
        // Well-conditioned iterates (κ < 2) take the Cholesky form; otherwise r QR factorizations.
        if (1.0 / ell >= 2.0) {
            next = zolo_qr_step(x, z);
        } else {
            try {
                next = zolo_cholesky_step(x, z);
            } catch (const NumericalError&) {
                next = zolo_qr_step(x, z);
                fallback = true;
            }
        }
        ell = std::min(1.0, z.apply(ell));
        ++iterations;
        change = relative_change(next, x);
        x = std::move(next);
        // 1 − ell certifies every singular value of the iterate lies in [ell, 1].
        if (1.0 - ell <= tol) {
            converged = true;
            break;
        }
    }

    PolarFactors out = finish(a, std::move(x), transposed, PolarAlgorithm::ZoloPd);
    out.iterations = iterations;
    out.converged = converged && out.u.all_finite();
    out.last_change = change;
    out.final_ell = ell;
    out.cholesky_fallback = fallback;
    if (fallback) {
        out.diagnostics = "zolo_pd: cholesky form failed, used QR form";
    }
    if (!converged) {
        out.diagnostics += (out.diagnostics.empty() ? "" : "; ");
        out.diagnostics += "zolo_pd: no convergence within " + std::to_string(max_iterations) +
                           " iterations";
    }
    return out;
}

StabilityReport stability_check(const Matrix& a, const PolarFactors& factors) {
    StabilityReport report;
    const Matrix product = a.is_tall() ? matmul(factors.u, factors.h) : matmul(factors.h, factors.u);
    const double anorm = frobenius_norm(a);
    const double resid = frobenius_norm(a - product);
    report.reconstruction_residual = anorm > 0.0 ? resid / anorm : resid;
    report.orthogonality_residual = orthogonality_residual(factors.u);
    const double hnorm = frobenius_norm(factors.h);
    const double asym = frobenius_norm(factors.h - factors.h.transpose());
    report.h_asymmetry = hnorm > 0.0 ? asym / hnorm : asym;
    return report;
}

PolarFactors compute_polar(const Matrix& a, const PolarSettings& s) {
    if (frobenius_norm(a) == 0.0) {
        PolarFactors out;
        out.u = Matrix(a.rows(), a.cols());
        const std::size_t k = std::min(a.rows(), a.cols());
        out.h = Matrix(k, k);
        out.converged = true;
        out.algorithm = s.algorithm;
        out.diagnostics = "zero input";
        return out;
    }
    switch (s.algorithm) {
        case PolarAlgorithm::SvdReference:
            return polar_reference(a, s.rank_tol);
        case PolarAlgorithm::NewtonSchulz:
            return newton_schulz(a, s.inner_steps > 0 ? s.inner_steps : 5, s.ns,
                                 s.tol > 1e-8 ? s.tol : 1e-8);
        case PolarAlgorithm::ScaledNewton:
            return scaled_newton(a, s.inner_steps > 0 ? s.inner_steps : 20, s.newton_scaling,
                                 s.tol);
        case PolarAlgorithm::Qdwh:
            return qdwh(a, sigma_bounds(a, s.bounds, s.rank_tol), s.tol,
                        s.inner_steps > 0 ? s.inner_steps : 8);
        case PolarAlgorithm::ZoloPd:
            return zolo_pd(a, sigma_bounds(a, s.bounds, s.rank_tol), s.zolo_r, s.tol,
                           s.inner_steps > 0 ? s.inner_steps : 6);
    }
    throw std::invalid_argument("unknown polar algorithm");
}

}  // namespace polargrad
