#include "polargrad/optimizers.hpp"

#include "polargrad/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace polargrad {

namespace {

Matrix ensure_buffer(const Matrix& buffer, const Matrix& like, const char* what) {
    if (buffer.empty()) {
        return Matrix(like.rows(), like.cols());
    }
    if (!buffer.same_shape(like)) {
        throw std::invalid_argument(std::string(what) + " buffer is " + shape_string(buffer) +
                                    " but the parameter is " + shape_string(like));
    }
    return buffer;
}

void check_shapes(const Matrix& x, const Matrix& grad) { require_same_shape(x, grad, "optimizer step"); }

double muon_scale_factor(MuonScale scale, const Matrix& x) {
    const auto m = static_cast<double>(x.rows());
    const auto n = static_cast<double>(x.cols());
    switch (scale) {
        case MuonScale::One: return 1.0;
        case MuonScale::SqrtAspect: return std::sqrt(std::max(1.0, m / n));
        case MuonScale::SqrtMax: return std::sqrt(std::max(m, n));
    }
    return 1.0;
}

// (1 − λγ)x − γ·scale·direction
Matrix apply_update(const Matrix& x, const Matrix& direction, double lr, double scale,
                    double weight_decay) {
    Matrix next = (1.0 - weight_decay * lr) * x;
    next.add_scaled(direction, -lr * scale);
    return next;
}

StepInfo commit(Matrix& x, Matrix next, OptimizerState& state, StepInfo info) {
    info.update_norm = frobenius_norm(next - x);
    x = std::move(next);
    ++state.step_count;
    return info;
}

}  // namespace

std::string_view to_string(OptimizerKind kind) {
    switch (kind) {
        case OptimizerKind::PolarGrad: return "polargrad";
        case OptimizerKind::Muon: return "muon";
        case OptimizerKind::MatrixSignSgd: return "signsgd";
        case OptimizerKind::Adam: return "adam";
        case OptimizerKind::Newton: return "newton";
        case OptimizerKind::AltGd: return "altgd";
    }
    return "unknown";
}

std::string_view to_string(MomentumMode mode) {
    switch (mode) {
        case MomentumMode::None: return "none";
        case MomentumMode::MomentumFirst: return "momentum_first";
        case MomentumMode::PolarFirst: return "polar_first";
        case MomentumMode::HeavyBall: return "heavy_ball";
    }
    return "unknown";
}

std::string_view to_string(MuonScale scale) {
    switch (scale) {
        case MuonScale::One: return "one";
        case MuonScale::SqrtAspect: return "sqrt_aspect";
        case MuonScale::SqrtMax: return "sqrt_max";
    }
    return "unknown";
}

std::string_view to_string(LrRule rule) {
    switch (rule) {
        case LrRule::Schedule: return "schedule";
        case LrRule::InverseLipschitzRank: return "inverse_lipschitz_rank";
        case LrRule::InverseLipschitzMaxRank: return "inverse_lipschitz_max_rank";
    }
    return "unknown";
}

OptimizerKind parse_optimizer_kind(std::string_view name) {
    for (auto k : {OptimizerKind::PolarGrad, OptimizerKind::Muon, OptimizerKind::MatrixSignSgd,
                   OptimizerKind::Adam, OptimizerKind::Newton, OptimizerKind::AltGd}) {
        if (to_string(k) == name) return k;
    }
    throw std::invalid_argument("unknown optimizer '" + std::string(name) + "'");
}

MomentumMode parse_momentum_mode(std::string_view name) {
    for (auto m : {MomentumMode::None, MomentumMode::MomentumFirst, MomentumMode::PolarFirst,
                   MomentumMode::HeavyBall}) {
        if (to_string(m) == name) return m;
    }
    throw std::invalid_argument("unknown momentum mode '" + std::string(name) + "'");
}

MuonScale parse_muon_scale(std::string_view name) {
    for (auto s : {MuonScale::One, MuonScale::SqrtAspect, MuonScale::SqrtMax}) {
        if (to_string(s) == name) return s;
    }
    throw std::invalid_argument("unknown muon scale '" + std::string(name) + "'");
}

LrRule parse_lr_rule(std::string_view name) {
    for (auto r : {LrRule::Schedule, LrRule::InverseLipschitzRank, LrRule::InverseLipschitzMaxRank}) {
        if (to_string(r) == name) return r;
    }
    throw std::invalid_argument("unknown learning-rate rule '" + std::string(name) + "'");
}

void OptimizerConfig::validate() const {
    schedule.validate();
    if (!(beta >= 0.0 && beta < 1.0)) {
        throw std::invalid_argument("momentum beta must lie in [0, 1)");
    }
    if (!(weight_decay >= 0.0)) {
        throw std::invalid_argument("weight decay must be non-negative");
    }
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
        throw std::invalid_argument("Adam betas must lie in [0, 1)");
    }
    if (!(eps > 0.0)) {
        throw std::invalid_argument("Adam epsilon must be positive");
    }
    if (lr_rule != LrRule::Schedule && !(lipschitz > 0.0)) {
        throw std::invalid_argument("rank-based learning rates need a positive Lipschitz constant");
    }
}

double step_learning_rate(const OptimizerConfig& cfg, const OptimizerState& state,
                          const Matrix& grad, std::size_t* rank_out) {
    switch (cfg.lr_rule) {
        case LrRule::Schedule:
            return cfg.schedule.value(state.step_count);
        case LrRule::InverseLipschitzRank: {
            const std::size_t r = std::max<std::size_t>(1, numerical_rank(grad, cfg.polar.rank_tol));
            if (rank_out != nullptr) {
                *rank_out = r;
            }
            return 1.0 / (cfg.lipschitz * static_cast<double>(r));
        }
        case LrRule::InverseLipschitzMaxRank: {
            const std::size_t r = std::min(grad.rows(), grad.cols());
            if (rank_out != nullptr) {
                *rank_out = r;
            }
            return 1.0 / (cfg.lipschitz * static_cast<double>(r));
        }
    }
    return cfg.schedule.value(state.step_count);
}

PolarFactors checked_polar(const Matrix& a, const PolarSettings& settings) {
    PolarFactors p = compute_polar(a, settings);
    if (!p.u.all_finite()) {
        throw PolarStepError("polar decomposition produced non-finite entries (" +
                             std::string(to_string(settings.algorithm)) + ")");
    }
    if (settings.require_convergence && !p.converged && frobenius_norm(a) > 0.0) {
        std::string msg = "polar decomposition did not converge (" +
                          std::string(to_string(settings.algorithm)) + ")";
        if (!p.diagnostics.empty()) msg += ": " + p.diagnostics;
        throw PolarStepError(msg);
    }
    return p;
}

StepInfo polar_grad_step(Matrix& x, const Matrix& grad, const OptimizerConfig& cfg,
                         OptimizerState& state) {
    check_shapes(x, grad);
    StepInfo info;
    info.lr = step_learning_rate(cfg, state, grad, &info.rank);
    const PolarFactors p = checked_polar(grad, cfg.polar);
    info.nu = frobenius_dot(grad, p.u);
    info.polar_iterations = p.iterations;
    info.polar_converged = p.converged;
    return commit(x, apply_update(x, p.u, info.lr, info.nu, cfg.weight_decay), state, info);
}

StepInfo polar_gradm_momentum_first_step(Matrix& x, const Matrix& grad,
                                         const OptimizerConfig& cfg, OptimizerState& state) {
    check_shapes(x, grad);
    Matrix m = ensure_buffer(state.momentum, x, "momentum");
    m *= cfg.beta;
    m.add_scaled(grad, 1.0 - cfg.beta);
    StepInfo info;
    info.lr = step_learning_rate(cfg, state, grad, &info.rank);
    const PolarFactors p = checked_polar(m, cfg.polar);
    info.nu = frobenius_dot(m, p.u);
    info.polar_iterations = p.iterations;
    info.polar_converged = p.converged;
    Matrix next = apply_update(x, p.u, info.lr, info.nu, cfg.weight_decay);
    state.momentum = std::move(m);
    return commit(x, std::move(next), state, info);
}

StepInfo polar_gradm_polar_first_step(Matrix& x, const Matrix& grad, const OptimizerConfig& cfg,
                                      OptimizerState& state) {
    check_shapes(x, grad);
    Matrix m = ensure_buffer(state.momentum, x, "momentum");
    StepInfo info;
    info.lr = step_learning_rate(cfg, state, grad, &info.rank);
    const PolarFactors p = checked_polar(grad, cfg.polar);
    info.nu = frobenius_dot(grad, p.u);
    info.polar_iterations = p.iterations;
    info.polar_converged = p.converged;
    m *= cfg.beta;
    m.add_scaled(p.u, 1.0 - cfg.beta);
    Matrix next = apply_update(x, m, info.lr, info.nu, cfg.weight_decay);
    state.momentum = std::move(m);
    return commit(x, std::move(next), state, info);
}

StepInfo polar_hb_step(Matrix& x, const Matrix& grad, const OptimizerConfig& cfg,
                       OptimizerState& state) {
    check_shapes(x, grad);
    Matrix m = ensure_buffer(state.momentum, x, "momentum");
    m *= cfg.beta;
    m += grad;
    StepInfo info;
    info.lr = step_learning_rate(cfg, state, grad, &info.rank);
    const PolarFactors p = checked_polar(m, cfg.polar);
    info.nu = frobenius_dot(m, p.u);
    info.polar_iterations = p.iterations;
    info.polar_converged = p.converged;
    Matrix next = apply_update(x, p.u, info.lr, info.nu, cfg.weight_decay);
    state.momentum = std::move(m);
    return commit(x, std::move(next), state, info);
}

StepInfo muon_step(Matrix& x, const Matrix& grad, const OptimizerConfig& cfg,
                   OptimizerState& state) {
    check_shapes(x, grad);
    Matrix m = ensure_buffer(state.momentum, x, "momentum");
    m *= cfg.beta;
    m.add_scaled(grad, 1.0 - cfg.beta);
    StepInfo info;
    info.lr = step_learning_rate(cfg, state, grad, &info.rank);
    const PolarFactors p = checked_polar(m, cfg.polar);
    double scale = muon_scale_factor(cfg.muon_scale, x);
    if (cfg.nuclear_scaling) {
        info.nu = frobenius_dot(m, p.u);
        scale *= info.nu;
    }
    info.polar_iterations = p.iterations;
    info.polar_converged = p.converged;
    Matrix next = apply_update(x, p.u, info.lr, scale, cfg.weight_decay);
    state.momentum = std::move(m);
    return commit(x, std::move(next), state, info);
}

StepInfo matrix_signsgd_step(Matrix& x, const Matrix& grad, const OptimizerConfig& cfg,
                             OptimizerState& state) {
    check_shapes(x, grad);
    StepInfo info;
    info.lr = step_learning_rate(cfg, state, grad, &info.rank);
    const PolarFactors p = checked_polar(grad, cfg.polar);
    info.polar_iterations = p.iterations;
    info.polar_converged = p.converged;
    return commit(x, apply_update(x, p.u, info.lr, 1.0, cfg.weight_decay), state, info);
}

StepInfo adam_step(Matrix& x, const Matrix& grad, const OptimizerConfig& cfg,
                   OptimizerState& state) {
    check_shapes(x, grad);
    Matrix m = ensure_buffer(state.momentum, x, "first moment");
    Matrix v = ensure_buffer(state.second_moment, x, "second moment");
    StepInfo info;
    info.lr = step_learning_rate(cfg, state, grad, &info.rank);
    const double t = static_cast<double>(state.step_count + 1);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    Matrix next = (1.0 - cfg.weight_decay * info.lr) * x;
    const auto g = grad.data();
    auto md = m.data();
    auto vd = v.data();
    auto nd = next.data();
    for (std::size_t i = 0; i < g.size(); ++i) {
        md[i] = cfg.beta1 * md[i] + (1.0 - cfg.beta1) * g[i];
        vd[i] = cfg.beta2 * vd[i] + (1.0 - cfg.beta2) * g[i] * g[i];
        const double m_hat = md[i] / bc1;
        const double v_hat = vd[i] / bc2;
        nd[i] -= info.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
    state.momentum = std::move(m);
    state.second_moment = std::move(v);
    return commit(x, std::move(next), state, info);
}

StepInfo optimizer_step(Matrix& x, const Matrix& grad, const OptimizerConfig& cfg,
                        OptimizerState& state) {
    switch (cfg.kind) {
        case OptimizerKind::PolarGrad:
            switch (cfg.momentum) {
                case MomentumMode::None: return polar_grad_step(x, grad, cfg, state);
                case MomentumMode::MomentumFirst:
                    return polar_gradm_momentum_first_step(x, grad, cfg, state);
                case MomentumMode::PolarFirst:
                    return polar_gradm_polar_first_step(x, grad, cfg, state);
                case MomentumMode::HeavyBall: return polar_hb_step(x, grad, cfg, state);
            }
            break;
        case OptimizerKind::Muon: return muon_step(x, grad, cfg, state);
        case OptimizerKind::MatrixSignSgd: return matrix_signsgd_step(x, grad, cfg, state);
        case OptimizerKind::Adam: return adam_step(x, grad, cfg, state);
        case OptimizerKind::Newton:
        case OptimizerKind::AltGd: break;
    }
    throw std::invalid_argument("optimizer_step: '" + std::string(to_string(cfg.kind)) +
                                "' needs its problem-specific step");
}

StepInfo newton_step_quadratic(Matrix& x, const Matrix& grad, const QuadRegProblem& problem,
                               const OptimizerConfig& cfg, OptimizerState& state) {
    check_shapes(x, grad);
    StepInfo info;
    info.lr = step_learning_rate(cfg, state, grad, &info.rank);
    const Matrix direction =
        matmul(matmul(problem.gram_a_inverse(), grad), problem.gram_b_inverse());
    return commit(x, apply_update(x, direction, info.lr, 1.0, cfg.weight_decay), state, info);
}

StepInfo altgd_step(Matrix& x, Matrix& y, const CompletionProblem& problem,
                    const OptimizerConfig& cfg, OptimizerState& state) {
    StepInfo info;
    info.lr = cfg.schedule.value(state.step_count);
    Matrix x_next = apply_update(x, problem.grad_x(x, y), info.lr, 1.0, cfg.weight_decay);
    Matrix y_next = apply_update(y, problem.grad_y(x_next, y), info.lr, 1.0, cfg.weight_decay);
    const double dx = frobenius_norm(x_next - x);
    const double dy = frobenius_norm(y_next - y);
    info.update_norm = std::sqrt(dx * dx + dy * dy);
    x = std::move(x_next);
    y = std::move(y_next);
    ++state.step_count;
    return info;
}

}  // namespace polargrad
