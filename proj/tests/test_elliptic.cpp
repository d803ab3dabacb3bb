#include <doctest.h>

#include "polargrad/elliptic.hpp"
#include "polargrad/polar.hpp"

#include <cmath>
#include <numbers>

using namespace polargrad;

namespace {

// Integrates sn' = cn dn, cn' = -sn dn, dn' = -k^2 sn cn from 0 by classical RK4.
JacobiValues rk4_oracle(double u, double k, int steps) {
    double s = 0.0;
    double c = 1.0;
    double d = 1.0;
    const double h = u / steps;
    const double k2 = k * k;
    auto f = [k2](double s_, double c_, double d_, double out[3]) {
        out[0] = c_ * d_;
        out[1] = -s_ * d_;
        out[2] = -k2 * s_ * c_;
    };
    for (int i = 0; i < steps; ++i) {
        double k1[3], k2v[3], k3[3], k4[3];
        f(s, c, d, k1);
        f(s + 0.5 * h * k1[0], c + 0.5 * h * k1[1], d + 0.5 * h * k1[2], k2v);
        f(s + 0.5 * h * k2v[0], c + 0.5 * h * k2v[1], d + 0.5 * h * k2v[2], k3);
        f(s + h * k3[0], c + h * k3[1], d + h * k3[2], k4);
        s += h / 6.0 * (k1[0] + 2 * k2v[0] + 2 * k3[0] + k4[0]);
        c += h / 6.0 * (k1[1] + 2 * k2v[1] + 2 * k3[1] + k4[1]);
        d += h / 6.0 * (k1[2] + 2 * k2v[2] + 2 * k3[2] + k4[2]);
    }
    return {s, c, d};
}

// K(k) = ∫_0^{π/2} dθ / sqrt(1 - k^2 sin^2 θ) by composite Simpson.
double quadrature_k(double k, int n) {
    const double h = std::numbers::pi / 2.0 / n;
    auto f = [k](double t) { return 1.0 / std::sqrt(1.0 - k * k * std::sin(t) * std::sin(t)); };
    double sum = f(0.0) + f(std::numbers::pi / 2.0);
    for (int i = 1; i < n; ++i) {
        sum += (i % 2 == 1 ? 4.0 : 2.0) * f(i * h);
    }
    return sum * h / 3.0;
}

}  // namespace

TEST_CASE("jacobi functions at trivial points") {
    const JacobiValues zero = jacobi_elliptic(0.0, 0.3);
    CHECK(zero.sn == 0.0);
    CHECK(zero.cn == 1.0);
    CHECK(zero.dn == 1.0);
    for (double u : {0.1, 1.0, 2.5, -0.7}) {
        const JacobiValues v = jacobi_elliptic(u, 1.0);
        CHECK(v.sn == std::sin(u));
        CHECK(v.cn == std::cos(u));
        CHECK(v.dn == 1.0);
    }
    CHECK_THROWS_AS(jacobi_elliptic(1.0, 1.5), std::invalid_argument);
    CHECK_THROWS_AS(jacobi_elliptic(1.0, -0.1), std::invalid_argument);
}

TEST_CASE("jacobi functions match an ODE integration oracle") {
    for (double k : {0.5, 0.2, 0.9, 0.999}) {
        const double kc = std::sqrt(1.0 - k * k);
        for (double u : {0.3, 1.0, 1.7}) {
            const JacobiValues v = jacobi_elliptic(u, kc);
            const JacobiValues o = rk4_oracle(u, k, 20000);
            CHECK(v.sn == doctest::Approx(o.sn).epsilon(1e-12).scale(1.0));
            CHECK(v.cn == doctest::Approx(o.cn).epsilon(1e-12).scale(1.0));
            CHECK(v.dn == doctest::Approx(o.dn).epsilon(1e-12).scale(1.0));
        }
    }
}

TEST_CASE("jacobi identities hold across the modulus range") {
    for (double kc : {1.0, 0.9, 0.71, 0.7, 0.3, 1e-3, 1e-8, 1e-16}) {
        const double k2 = (1.0 - kc) * (1.0 + kc);
        const double quarter = complete_elliptic_k(kc);
        for (double frac : {0.05, 0.3, 0.5, 0.8, 0.99}) {
            const JacobiValues v = jacobi_elliptic(frac * quarter, kc);
            CHECK(v.sn * v.sn + v.cn * v.cn == doctest::Approx(1.0).epsilon(1e-13));
            CHECK(v.dn * v.dn + k2 * v.sn * v.sn == doctest::Approx(1.0).epsilon(1e-13));
            CHECK(v.cn > 0.0);
        }
        const JacobiValues end = jacobi_elliptic(quarter, kc);
        CHECK(end.sn == doctest::Approx(1.0).epsilon(1e-13));
    }
}

TEST_CASE("cn keeps relative accuracy near the quarter period for modulus near one") {
    // For k' -> 0, cn(K - t) = k' sn(t)/dn(t) = k' sinh(t) + O(k'^3).
    for (double kc : {1e-8, 1e-12, 1e-16}) {
        const double quarter = complete_elliptic_k(kc);
        for (double t : {0.25, 0.5, 1.0, 2.0}) {
            const JacobiValues v = jacobi_elliptic(quarter - t, kc);
            CHECK(v.cn == doctest::Approx(kc * std::sinh(t)).epsilon(1e-12));
        }
    }
}

TEST_CASE("complete elliptic integral matches quadrature") {
    CHECK(complete_elliptic_k(1.0) == doctest::Approx(std::numbers::pi / 2.0).epsilon(1e-15));
    for (double k : {0.1, 0.5, 0.9, 0.99}) {
        const double kc = std::sqrt(1.0 - k * k);
        CHECK(complete_elliptic_k(kc) == doctest::Approx(quadrature_k(k, 20000)).epsilon(1e-12));
    }
    // Asymptotic K ~ log(4/k') for k' -> 0.
    CHECK(complete_elliptic_k(1e-16) == doctest::Approx(std::log(4e16)).epsilon(1e-14));
}

TEST_CASE("zolotarev coefficients of degree three coincide with dynamic halley weights") {
    for (double ell : {0.9, 0.5, 1e-2, 1e-5, 1e-10}) {
        const ZolotarevCoefficients z = zolotarev_coefficients(ell, 1);
        const HalleyWeights w = dwh_weights(ell);
        CHECK(z.odd(0) == doctest::Approx(1.0 / w.c).epsilon(1e-9));
        CHECK(z.even(0) == doctest::Approx(w.a / w.b).epsilon(1e-9));
        CHECK(z.m_hat == doctest::Approx(w.b / w.c).epsilon(1e-9));
        for (double x : {ell, 0.5 * (1.0 + ell), 1.0}) {
            CHECK(z.apply(x) == doctest::Approx(w.apply(x)).epsilon(1e-9));
        }
    }
}

TEST_CASE("scaled zolotarev functions map the interval into [Z(ell), 1]") {
    for (int r : {1, 2, 3, 5, 8}) {
        for (double ell : {0.5, 1e-3, 1e-8, 1e-16}) {
            const ZolotarevCoefficients z = zolotarev_coefficients(ell, r);
            CHECK(z.apply(1.0) == doctest::Approx(1.0).epsilon(1e-13));
            const double low = z.apply(ell);
            CHECK(low > ell);
            CHECK(low <= 1.0 + 1e-15);
            // Equioscillation: the partial-fraction form agrees with the product form.
            for (int i = 0; i <= 400; ++i) {
                const double x = ell * std::pow(1.0 / ell, i / 400.0);
                const double value = z.apply(x);
                CHECK(value <= 1.0 + 1e-12);
                CHECK(value >= low * (1.0 - 1e-12));
                double pf = x;
                for (int j = 0; j < r; ++j) {
                    pf += z.a[static_cast<std::size_t>(j)] * x / (x * x + z.odd(j));
                }
                CHECK(z.m_hat * pf == doctest::Approx(value).epsilon(1e-10));
            }
        }
    }
}

TEST_CASE("zolotarev coefficients are positive and interlaced") {
    const ZolotarevCoefficients z = zolotarev_coefficients(1e-6, 6);
    for (std::size_t j = 1; j < z.c.size(); ++j) {
        CHECK(z.c[j] > z.c[j - 1]);
    }
    for (double a : z.a) {
        CHECK(a > 0.0);
    }
    CHECK_THROWS_AS(zolotarev_coefficients(0.0, 2), std::invalid_argument);
    CHECK_THROWS_AS(zolotarev_coefficients(0.5, 0), std::invalid_argument);
}
