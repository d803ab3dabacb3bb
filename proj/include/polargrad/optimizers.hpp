#pragma once

// Matrix-gradient step rules: PolarGrad and its momentum variants, Muon, matrix signSGD,
// Adam, plus the problem-specific Newton and alternating gradient baselines.
//
// Every step reads the learning rate γ_k from the config at state.step_count, applies
// decoupled weight decay X <- (1 − λγ_k)X, and increments step_count by one. A step that
// throws leaves both the parameter and the state untouched.

#include "polargrad/matrix.hpp"
#include "polargrad/polar.hpp"
#include "polargrad/problems.hpp"
#include "polargrad/schedule.hpp"

#include <cstdint>
#include <string>
#include <string_view>

namespace polargrad {

enum class OptimizerKind { PolarGrad, Muon, MatrixSignSgd, Adam, Newton, AltGd };
enum class MomentumMode { None, MomentumFirst, PolarFirst, HeavyBall };
/// Muon's shape factor s: 1, √max(1, m/n) or √max(m, n).
enum class MuonScale { One, SqrtAspect, SqrtMax };
/// Schedule, or γ_k = 1/(L r_k) with r_k the numerical rank of the gradient, or 1/(L r_max).
enum class LrRule { Schedule, InverseLipschitzRank, InverseLipschitzMaxRank };

std::string_view to_string(OptimizerKind kind);
std::string_view to_string(MomentumMode mode);
std::string_view to_string(MuonScale scale);
std::string_view to_string(LrRule rule);
OptimizerKind parse_optimizer_kind(std::string_view name);
MomentumMode parse_momentum_mode(std::string_view name);
MuonScale parse_muon_scale(std::string_view name);
LrRule parse_lr_rule(std::string_view name);

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::PolarGrad;
    Schedule schedule = Schedule::constant(1e-3);
    double weight_decay = 0.0;
    double beta = 0.0;
    MomentumMode momentum = MomentumMode::None;
    PolarSettings polar;
    MuonScale muon_scale = MuonScale::One;
    /// Muon only: multiply the update by ν = ⟨M, msgn(M)⟩ (turns Muon into momentum-first PolarGradM).
    bool nuclear_scaling = false;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    LrRule lr_rule = LrRule::Schedule;
    double lipschitz = 0.0;

    /// Throws std::invalid_argument for β ∉ [0, 1), λ < 0, ε <= 0 and similar.
    void validate() const;
};

struct OptimizerState {
    Matrix momentum;       // zero until the first step that needs it
    Matrix second_moment;  // Adam only
    std::int64_t step_count = 0;
};

struct StepInfo {
    double lr = 0.0;
    double nu = 0.0;  // nuclear-norm scale actually applied (0 for unscaled rules)
    double update_norm = 0.0;
    std::size_t rank = 0;  // gradient rank, computed for the rank-based learning rates only
    int polar_iterations = 0;
    bool polar_converged = true;
};

/// Raised when a polar decomposition required by a step fails to converge.
class PolarStepError : public NumericalError {
public:
    explicit PolarStepError(const std::string& what) : NumericalError(what) {}
};

/// γ_k for the next step.
double step_learning_rate(const OptimizerConfig& cfg, const OptimizerState& state,
                          const Matrix& grad, std::size_t* rank_out = nullptr);

/// X <- (1 − λγ)X − γ ν U with U H = polar(G) and ν = ⟨G, U⟩.
StepInfo polar_grad_step(Matrix& x, const Matrix& grad, const OptimizerConfig& cfg,
                         OptimizerState& state);
/// M <- βM + (1 − β)G, U H = polar(M), X <- (1 − λγ)X − γ ⟨M, U⟩ U.
StepInfo polar_gradm_momentum_first_step(Matrix& x, const Matrix& grad,
                                         const OptimizerConfig& cfg, OptimizerState& state);
/// U H = polar(G), M <- βM + (1 − β)U, X <- (1 − λγ)X − γ tr(H) M.
StepInfo polar_gradm_polar_first_step(Matrix& x, const Matrix& grad, const OptimizerConfig& cfg,
                                      OptimizerState& state);
/// M <- βM + G, U H = polar(M), X <- (1 − λγ)X − γ ⟨M, U⟩ U.
StepInfo polar_hb_step(Matrix& x, const Matrix& grad, const OptimizerConfig& cfg,
                       OptimizerState& state);
/// M <- βM + (1 − β)G, X <- (1 − λγ)X − γ s msgn(M).
StepInfo muon_step(Matrix& x, const Matrix& grad, const OptimizerConfig& cfg,
                   OptimizerState& state);
/// X <- (1 − λγ)X − γ msgn(G).
StepInfo matrix_signsgd_step(Matrix& x, const Matrix& grad, const OptimizerConfig& cfg,
                             OptimizerState& state);
/// Bias-corrected Adam on the flattened matrix, decoupled weight decay.
StepInfo adam_step(Matrix& x, const Matrix& grad, const OptimizerConfig& cfg,
                   OptimizerState& state);

/// Dispatches on cfg.kind (and cfg.momentum for PolarGrad). Newton and AltGD need a problem
/// and are rejected here.
StepInfo optimizer_step(Matrix& x, const Matrix& grad, const OptimizerConfig& cfg,
                        OptimizerState& state);

/// X <- X − γ (AᵀA)⁻¹ ∇f(X) (BBᵀ)⁻¹.
StepInfo newton_step_quadratic(Matrix& x, const Matrix& grad, const QuadRegProblem& problem,
                               const OptimizerConfig& cfg, OptimizerState& state);

/// X <- X − γ∇_X f(X, Y), then Y <- Y − γ∇_Y f(X_new, Y).
StepInfo altgd_step(Matrix& x, Matrix& y, const CompletionProblem& problem,
                    const OptimizerConfig& cfg, OptimizerState& state);

/// msgn(A) via the configured backend; the zero matrix maps to zero. Throws PolarStepError if the
/// backend reports non-convergence and settings.require_convergence is set.
PolarFactors checked_polar(const Matrix& a, const PolarSettings& settings);

}  // namespace polargrad
