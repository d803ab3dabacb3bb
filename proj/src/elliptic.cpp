#include "polargrad/elliptic.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace polargrad {

namespace {

using cplx = std::complex<double>;

struct ComplexJacobi {
    cplx sn;
    cplx cn;
    cplx dn;
};

// Descending Landen transformation for a small-ish modulus k (complement kc),
// valid for complex arguments away from the poles. The recursion stops once the
// O(k^2) expansion about k = 0 is accurate to well below double rounding at the
// current argument; near-imaginary arguments need a smaller k because the
// expansion parameter is k * |sin z|.
ComplexJacobi landen(cplx z, double k, double kc) {
    std::vector<double> steps;
    for (int guard = 0; guard < 40 && k > 0.0; ++guard) {
        const double growth = std::max(1.0, std::cosh(z.imag()));
        const double expansion = k * growth;
        if (expansion * expansion * (1.0 + std::abs(z)) < 1e-18) {
            break;
        }
        const double k_next = (k / (1.0 + kc)) * (k / (1.0 + kc));
        const double kc_next = 2.0 * std::sqrt(kc) / (1.0 + kc);
        steps.push_back(k_next);
        z /= (1.0 + k_next);
        k = k_next;
        kc = kc_next;
    }

    const cplx s = std::sin(z);
    const cplx c = std::cos(z);
    const double k2 = k * k;
    const cplx t = 0.25 * k2 * (z - s * c);
    ComplexJacobi v{s - t * c, c + t * s, 1.0 - 0.5 * k2 * s * s};

    for (auto it = steps.rbegin(); it != steps.rend(); ++it) {
        const double k1 = *it;
        const cplx sn2 = v.sn * v.sn;
        const cplx denom = 1.0 + k1 * sn2;
        const cplx sn = (1.0 + k1) * v.sn / denom;
        const cplx cn = v.cn * v.dn / denom;
        const cplx dn = (1.0 - k1 * sn2) / denom;
        v = {sn, cn, dn};
    }
    return v;
}

}  // namespace

JacobiValues jacobi_elliptic(double u, double modulus_complement) {
    const double kc = modulus_complement;
    if (!(kc >= 0.0 && kc <= 1.0)) {
        throw std::invalid_argument("jacobi_elliptic: complementary modulus must lie in [0, 1]");
    }
    const double k = std::sqrt((1.0 - kc) * (1.0 + kc));
    if (kc > 0.0 && kc < 1.0) {
        // Reflect about the quarter period: sn(K−t) = cd(t), cn(K−t) = k' sd(t), dn(K−t) = k' nd(t).
        const double quarter = complete_elliptic_k(kc);
        if (std::abs(u) > 0.5 * quarter && std::abs(u) <= 1.5 * quarter) {
            const double sign = u < 0.0 ? -1.0 : 1.0;
            const JacobiValues t = jacobi_elliptic(quarter - std::abs(u), kc);
            return {sign * t.cn / t.dn, kc * t.sn / t.dn, kc / t.dn};
        }
    }
    if (kc >= std::numbers::sqrt2 / 2.0) {
        const ComplexJacobi v = landen(cplx(u, 0.0), k, kc);
        return {v.sn.real(), v.cn.real(), v.dn.real()};
    }
    // sn(u,k) = -i sn(iu,k')/cn(iu,k'), cn(u,k) = 1/cn(iu,k'), dn(u,k) = dn(iu,k')/cn(iu,k')
    const ComplexJacobi w = landen(cplx(0.0, u), kc, k);
    const cplx i(0.0, 1.0);
    return {(-i * w.sn / w.cn).real(), (1.0 / w.cn).real(), (w.dn / w.cn).real()};
}

double complete_elliptic_k(double modulus_complement) {
    const double kc = modulus_complement;
    if (!(kc >= 0.0 && kc <= 1.0)) {
        throw std::invalid_argument("complete_elliptic_k: complementary modulus must lie in [0, 1]");
    }
    if (kc == 0.0) {
        return std::numeric_limits<double>::infinity();
    }
    double a = 1.0;
    double b = kc;
    for (int i = 0; i < 64 && std::abs(a - b) > 1e-16 * a; ++i) {
        const double next_a = 0.5 * (a + b);
        b = std::sqrt(a * b);
        a = next_a;
    }
    return std::numbers::pi / (a + b);
}

double ZolotarevCoefficients::apply(double x) const {
    const double x2 = x * x;
    double value = m_hat * x;
    for (int j = 0; j < r; ++j) {
        value *= (x2 + even(j)) / (x2 + odd(j));
    }
    return value;
}

ZolotarevCoefficients zolotarev_coefficients(double ell, int r) {
    if (!(ell > 0.0 && ell <= 1.0)) {
        throw std::invalid_argument("zolotarev_coefficients: ell must lie in (0, 1]");
    }
    if (r < 1) {
        throw std::invalid_argument("zolotarev_coefficients: r must be positive");
    }
    ZolotarevCoefficients z;
    z.r = r;
    z.c.resize(static_cast<std::size_t>(2 * r));
    z.a.resize(static_cast<std::size_t>(r));

    // Modulus ell' = sqrt(1 - ell^2) has complement ell.
    const double quarter_period = complete_elliptic_k(ell);
    const double denom = 2.0 * r + 1.0;
    for (int j = 1; j <= 2 * r; ++j) {
        const JacobiValues v = jacobi_elliptic(j * quarter_period / denom, ell);
        const double ratio = ell * v.sn / v.cn;
        z.c[static_cast<std::size_t>(j - 1)] = ratio * ratio;
    }

    for (int j = 0; j < r; ++j) {
        double num = 1.0;
        double den = 1.0;
        for (int k = 0; k < r; ++k) {
            num *= z.even(k) - z.odd(j);
            if (k != j) {
                den *= z.odd(k) - z.odd(j);
            }
        }
        z.a[static_cast<std::size_t>(j)] = num / den;
    }

    double m_hat = 1.0;
    for (int j = 0; j < r; ++j) {
        m_hat *= (1.0 + z.odd(j)) / (1.0 + z.even(j));
    }
    z.m_hat = m_hat;
    return z;
}

}  // namespace polargrad
