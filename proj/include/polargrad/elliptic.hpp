#pragma once

// Jacobi elliptic functions and Zolotarev coefficients for ZOLO-PD.
//
// Functions are parameterized by the complementary modulus k' = sqrt(1 - k^2)
// so that moduli extremely close to 1 (k' ~ 1e-16, the ill-conditioned end of
// ZOLO-PD) keep full relative accuracy.

#include <vector>

namespace polargrad {

struct JacobiValues {
    double sn = 0.0;
    double cn = 1.0;
    double dn = 1.0;
};

/// sn, cn, dn of real argument u for the modulus whose complement is `modulus_complement`.
/// Descending Landen transformation; moduli above 1/sqrt(2) go through Jacobi's
/// imaginary transformation so cn keeps relative accuracy near the quarter period.
JacobiValues jacobi_elliptic(double u, double modulus_complement);

/// Complete elliptic integral of the first kind K(k) given k' = sqrt(1 - k^2), via the AGM.
double complete_elliptic_k(double modulus_complement);

/// Coefficients of the scaled Zolotarev rational function of type (2r+1, 2r)
///   Z(x) = m_hat * x * prod_j (x^2 + c_{2j}) / (x^2 + c_{2j-1})
///        = m_hat * (x + sum_j a_j x / (x^2 + c_{2j-1}))
/// for the interval [ell, 1], normalized so that Z(1) = 1.
struct ZolotarevCoefficients {
    int r = 1;
    std::vector<double> c;  // c_1 .. c_{2r}, stored 0-based
    std::vector<double> a;  // a_1 .. a_r, stored 0-based
    double m_hat = 1.0;

    double odd(int j) const { return c[2 * j]; }       // c_{2j+1} for 0-based j
    double even(int j) const { return c[2 * j + 1]; }  // c_{2j+2} for 0-based j

    /// Scalar evaluation of Z(x).
    double apply(double x) const;
};

ZolotarevCoefficients zolotarev_coefficients(double ell, int r);

}  // namespace polargrad
