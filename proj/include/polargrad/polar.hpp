#pragma once

// Polar decomposition A = U_p H (m >= n) or A = H U_p (m < n) by five algorithms.
//
// Iterative algorithms work on the tall orientation: a wide input is transposed
// on the way in and the orthogonal factor transposed on the way out, so H is
// always min(m,n) x min(m,n).

#include "polargrad/linalg.hpp"
#include "polargrad/matrix.hpp"

#include <string>
#include <string_view>

namespace polargrad {

enum class PolarAlgorithm { SvdReference, NewtonSchulz, ScaledNewton, Qdwh, ZoloPd };

std::string_view to_string(PolarAlgorithm algorithm);
PolarAlgorithm parse_polar_algorithm(std::string_view name);

/// Quintic iteration X <- aX + bX(XᵀX) + cX(XᵀX)^2 started from X_0 = initial_scale * A / ‖A‖_F.
struct NsCoefficients {
    double a = 1.5;
    double b = -0.5;
    double c = 0.0;
    double initial_scale = 1.7220508075688772;  // sqrt(3) - 0.01

    /// Classic cubic Newton–Schulz map X(3I − XᵀX)/2 with the sqrt(3) - delta start.
    static NsCoefficients classic(double delta = 0.01);
    /// Tuned quintic used by Muon; starts from A/‖A‖_F because the quintic
    /// diverges for singular values much above 1.3.
    static NsCoefficients muon();
};

struct PolarFactors {
    Matrix u;
    Matrix h;
    int iterations = 0;
    bool converged = false;
    PolarAlgorithm algorithm = PolarAlgorithm::SvdReference;
    /// Relative change of the last iterate, ‖X_k − X_{k−1}‖_F / ‖X_k‖_F (0 for direct methods).
    double last_change = 0.0;
    /// Final lower bound on the smallest singular value of the iterate (QDWH/ZOLO-PD).
    double final_ell = 1.0;
    /// ZOLO-PD fell back from the Cholesky form to the QR form at least once.
    bool cholesky_fallback = false;
    std::string diagnostics;
};

struct StabilityReport {
    double reconstruction_residual = 0.0;
    double orthogonality_residual = 0.0;
    double h_asymmetry = 0.0;
};

enum class NewtonScaling { None, Frobenius };

PolarFactors polar_reference(const Matrix& a, double rank_tol = kDefaultRankTol);

/// Runs exactly `steps` iterations. `converged` reports whether the orthogonality
/// residual ended at or below `tol`. The zero matrix yields U = 0, converged = false.
PolarFactors newton_schulz(const Matrix& a, int steps, const NsCoefficients& coeffs,
                           double tol = 1e-8);

/// Square nonsingular input only. Throws NumericalError on a singular iterate.
PolarFactors scaled_newton(const Matrix& a, int max_steps = 20,
                           NewtonScaling scaling = NewtonScaling::Frobenius, double tol = 1e-12);

/// Stops once ‖X_{k+1} − X_k‖_F <= tol ‖X_{k+1}‖_F or |1 − ell_k| <= tol.
PolarFactors qdwh(const Matrix& a, const SigmaBounds& bounds, double tol = 1e-12,
                  int max_steps = 8);

/// Scalar weights of one dynamically weighted Halley step for the interval [ell, 1].
struct HalleyWeights {
    double a = 3.0;
    double b = 1.0;
    double c = 3.0;
    double apply(double x) const { return x * (a + b * x * x) / (1.0 + c * x * x); }
};
HalleyWeights dwh_weights(double ell);

/// `r = 0` selects r from the bound ratio. First step uses r QR factorizations,
/// later steps the Cholesky form (falling back to QR if a factorization fails).
PolarFactors zolo_pd(const Matrix& a, const SigmaBounds& bounds, int r = 0, double tol = 1e-12,
                     int max_iterations = 6);

/// Iteration counts needed for the Zolotarev map of degree 2r+1 (r = 1 is QDWH) to reach
/// [1 − O(u), 1] from κ, using the smallest tabulated κ that is >= the requested one.
int zolotarev_iteration_budget(int r, double kappa);

/// Smallest r in [1, 8] whose budget at κ is at most two iterations.
int zolo_auto_r(double kappa);

/// H = (UᵀA + (UᵀA)ᵀ)/2 for tall A; (AUᵀ + (AUᵀ)ᵀ)/2 for wide A.
Matrix hermitian_factor(const Matrix& a, const Matrix& u);

StabilityReport stability_check(const Matrix& a, const PolarFactors& factors);

/// Backend selection used by the optimizers.
struct PolarSettings {
    PolarAlgorithm algorithm = PolarAlgorithm::Qdwh;
    int inner_steps = 0;  // 0 selects the algorithm default
    double tol = 1e-12;
    int zolo_r = 0;
    BoundsMode bounds = BoundsMode::Exact;
    NsCoefficients ns = NsCoefficients::muon();
    NewtonScaling newton_scaling = NewtonScaling::Frobenius;
    double rank_tol = kDefaultRankTol;
    /// When set, an unconverged decomposition is reported as a failure.
    bool require_convergence = true;
};

/// Dispatches to the configured algorithm. The zero matrix maps to U = 0, H = 0.
PolarFactors compute_polar(const Matrix& a, const PolarSettings& settings);

}  // namespace polargrad
