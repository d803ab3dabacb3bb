#include "polargrad/linalg.hpp"
#include "polargrad/optimizers.hpp"

#include <doctest.h>

#include <cmath>
#include <stdexcept>

using namespace polargrad;

namespace {

OptimizerConfig config(OptimizerKind kind, double lr, MomentumMode mode = MomentumMode::None,
                       double beta = 0.0) {
    OptimizerConfig cfg;
    cfg.kind = kind;
    cfg.schedule = Schedule::constant(lr);
    cfg.momentum = mode;
    cfg.beta = beta;
    return cfg;
}

// Parameter change produced by one fresh step from x.
Matrix update_of(const OptimizerConfig& cfg, const Matrix& x, const Matrix& grad) {
    Matrix next = x;
    OptimizerState state;
    optimizer_step(next, grad, cfg, state);
    return next - x;
}

double rel_diff(const Matrix& a, const Matrix& b) {
    return frobenius_norm(a - b) / std::max(frobenius_norm(b), 1e-300);
}

const MomentumMode kAllModes[] = {MomentumMode::None, MomentumMode::MomentumFirst,
                                  MomentumMode::PolarFirst, MomentumMode::HeavyBall};

}  // namespace

TEST_CASE("PolarGrad on a positive diagonal gradient steps by the nuclear norm") {
    Matrix x(2, 2);
    OptimizerState state;
    const StepInfo info =
        polar_grad_step(x, Matrix::diagonal({2.0, 0.5}), config(OptimizerKind::PolarGrad, 1.0), state);
    CHECK(info.nu == doctest::Approx(2.5).epsilon(1e-14));
    CHECK(frobenius_norm(x - Matrix::diagonal({-2.5, -2.5})) <= 1e-13);
    CHECK(state.step_count == 1);
}

TEST_CASE("zero gradients never move parameters") {
    Rng rng(1);
    const Matrix x0 = gaussian_matrix(5, 3, rng);
    const Matrix zero(5, 3);
    for (MomentumMode mode : kAllModes) {
        CHECK(update_of(config(OptimizerKind::PolarGrad, 0.7, mode, 0.9), x0, zero) == Matrix(5, 3));
    }
    CHECK(update_of(config(OptimizerKind::Muon, 0.7, MomentumMode::None, 0.9), x0, zero) == Matrix(5, 3));
    CHECK(update_of(config(OptimizerKind::MatrixSignSgd, 0.7), x0, zero) == Matrix(5, 3));
    CHECK(update_of(config(OptimizerKind::Adam, 0.7), x0, zero) == Matrix(5, 3));
}

TEST_CASE("PolarGrad update is positively homogeneous in the gradient") {
    Rng rng(2);
    const Matrix x0 = gaussian_matrix(6, 4, rng);
    const Matrix g0 = gaussian_matrix(6, 4, rng);
    const auto cfg = config(OptimizerKind::PolarGrad, 0.3);
    const Matrix base = update_of(cfg, x0, g0);
    for (double c : {0.1, 1.0, 10.0}) {
        CHECK(rel_diff(update_of(cfg, x0, c * g0), c * base) <= 1e-12);
    }
}

TEST_CASE("null-gradient consistency splits PolarGrad from Muon and sign descent") {
    Rng rng(3);
    const Matrix x0 = gaussian_matrix(8, 5, rng);
    const Matrix g0 = gaussian_matrix(8, 5, rng);
    const double gamma = 0.2;
    const auto polar = config(OptimizerKind::PolarGrad, gamma);
    const auto muon = config(OptimizerKind::Muon, gamma);
    const auto sign = config(OptimizerKind::MatrixSignSgd, gamma);
    const double polar_ref = frobenius_norm(update_of(polar, x0, g0));
    const double muon_ref = frobenius_norm(update_of(muon, x0, g0));
    const double floor = 0.9 * std::sqrt(static_cast<double>(numerical_rank(g0))) * gamma;
    for (double c : {1e-2, 1e-4, 1e-6}) {
        CAPTURE(c);
        CHECK(std::abs(frobenius_norm(update_of(polar, x0, c * g0)) / (c * polar_ref) - 1.0) <= 1e-8);
        const double muon_norm = frobenius_norm(update_of(muon, x0, c * g0));
        CHECK(std::abs(muon_norm / muon_ref - 1.0) <= 1e-8);
        CHECK(muon_norm >= floor);
        CHECK(frobenius_norm(update_of(sign, x0, c * g0)) >= floor);
    }
}

TEST_CASE("zero momentum collapses every mode onto vanilla PolarGrad") {
    Rng rng(4);
    const Matrix x0 = gaussian_matrix(7, 4, rng);
    Matrix reference = x0;
    OptimizerState ref_state;
    std::vector<Matrix> grads;
    for (int k = 0; k < 5; ++k) {
        grads.push_back(gaussian_matrix(7, 4, rng));
        polar_grad_step(reference, grads.back(), config(OptimizerKind::PolarGrad, 0.05), ref_state);
    }
    for (MomentumMode mode : kAllModes) {
        CAPTURE(to_string(mode));
        Matrix x = x0;
        OptimizerState state;
        for (const Matrix& g : grads) {
            optimizer_step(x, g, config(OptimizerKind::PolarGrad, 0.05, mode, 0.0), state);
        }
        CHECK(x == reference);
    }
}

TEST_CASE("momentum-first first step uses a tenth of the gradient") {
    Rng rng(5);
    const Matrix g = gaussian_matrix(6, 3, rng);
    Matrix x(6, 3);
    OptimizerState state;
    const double gamma = 0.5;
    const StepInfo info = polar_gradm_momentum_first_step(
        x, g, config(OptimizerKind::PolarGrad, gamma, MomentumMode::MomentumFirst, 0.9), state);
    CHECK(rel_diff(state.momentum, 0.1 * g) <= 1e-15);
    const Matrix expected = (-gamma * 0.1 * nuclear_norm(g)) * polar_reference(g).u;
    CHECK(rel_diff(x, expected) <= 1e-10);
    CHECK(info.nu == doctest::Approx(0.1 * nuclear_norm(g)).epsilon(1e-10));
}

TEST_CASE("constant gradient streams drive the momentum buffers to their fixed points") {
    Rng rng(6);
    const Matrix g = gaussian_matrix(6, 4, rng);
    const double gamma = 0.1;
    const double nuc = nuclear_norm(g);

    SUBCASE("momentum-first EMA") {
        const auto cfg = config(OptimizerKind::PolarGrad, gamma, MomentumMode::MomentumFirst, 0.9);
        Matrix x(6, 4);
        OptimizerState state;
        for (int k = 0; k < 200; ++k) {
            optimizer_step(x, g, cfg, state);
        }
        CHECK(rel_diff(state.momentum, g) <= 1e-8);
        const Matrix before = x;
        optimizer_step(x, g, cfg, state);
        CHECK(rel_diff(x - before, (-gamma * nuc) * polar_reference(g).u) <= 1e-6);
    }
    SUBCASE("polar-first with an orthogonal gradient") {
        const Matrix q = random_orthonormal(6, 4, rng);
        const auto cfg = config(OptimizerKind::PolarGrad, gamma, MomentumMode::PolarFirst, 0.9);
        Matrix x(6, 4);
        OptimizerState state;
        for (int k = 0; k < 200; ++k) {
            optimizer_step(x, q, cfg, state);
        }
        CHECK(rel_diff(state.momentum, q) <= 1e-8);
        const Matrix before = x;
        const StepInfo info = optimizer_step(x, q, cfg, state);
        CHECK(info.nu == doctest::Approx(4.0).epsilon(1e-12));
        CHECK(rel_diff(x - before, (-gamma * 4.0) * q) <= 1e-8);
    }
    SUBCASE("heavy ball with beta one half") {
        const auto cfg = config(OptimizerKind::PolarGrad, gamma, MomentumMode::HeavyBall, 0.5);
        Matrix x(6, 4);
        OptimizerState state;
        StepInfo info;
        for (int k = 0; k < 80; ++k) {
            info = optimizer_step(x, g, cfg, state);
        }
        CHECK(rel_diff(state.momentum, 2.0 * g) <= 1e-14);
        CHECK(info.nu == doctest::Approx(2.0 * nuc).epsilon(1e-10));
    }
}

TEST_CASE("polar-first ignores a nonzero buffer when the gradient vanishes") {
    Rng rng(7);
    const auto cfg = config(OptimizerKind::PolarGrad, 0.3, MomentumMode::PolarFirst, 0.9);
    Matrix x = gaussian_matrix(5, 3, rng);
    OptimizerState state;
    optimizer_step(x, gaussian_matrix(5, 3, rng), cfg, state);
    REQUIRE(frobenius_norm(state.momentum) > 0.0);
    const Matrix before = x;
    const StepInfo info = optimizer_step(x, Matrix(5, 3), cfg, state);
    CHECK(info.nu == 0.0);
    CHECK(x == before);
}

TEST_CASE("heavy ball first step from an empty buffer equals PolarGrad") {
    Rng rng(8);
    const Matrix x0 = gaussian_matrix(5, 5, rng);
    const Matrix g = gaussian_matrix(5, 5, rng);
    CHECK(update_of(config(OptimizerKind::PolarGrad, 0.2, MomentumMode::HeavyBall, 0.7), x0, g) ==
          update_of(config(OptimizerKind::PolarGrad, 0.2), x0, g));
}

TEST_CASE("Muon drops the nuclear-norm factor") {
    Matrix x = Matrix::diagonal({1.0, 1.0});
    OptimizerState state;
    muon_step(x, Matrix::diagonal({2.0, 0.5}), config(OptimizerKind::Muon, 1.0), state);
    CHECK(frobenius_norm(x) <= 1e-13);
}

TEST_CASE("Muon shape factor") {
    Rng rng(9);
    const Matrix g = gaussian_matrix(4, 2, rng);
    auto cfg = config(OptimizerKind::Muon, 0.1);
    const Matrix plain = update_of(cfg, Matrix(4, 2), g);
    cfg.muon_scale = MuonScale::SqrtAspect;
    CHECK(rel_diff(update_of(cfg, Matrix(4, 2), g), std::sqrt(2.0) * plain) <= 1e-14);
    cfg.muon_scale = MuonScale::SqrtMax;
    CHECK(rel_diff(update_of(cfg, Matrix(4, 2), g), 2.0 * plain) <= 1e-14);
    cfg.muon_scale = MuonScale::SqrtAspect;
    CHECK(rel_diff(update_of(cfg, Matrix(2, 4), g.transpose()), plain.transpose()) <= 1e-12);
}

TEST_CASE("Muon with nuclear scaling reproduces momentum-first PolarGrad") {
    Rng rng(10);
    auto muon = config(OptimizerKind::Muon, 0.05, MomentumMode::None, 0.9);
    muon.nuclear_scaling = true;
    const auto polar = config(OptimizerKind::PolarGrad, 0.05, MomentumMode::MomentumFirst, 0.9);
    Matrix xm = gaussian_matrix(6, 4, rng);
    Matrix xp = xm;
    OptimizerState sm;
    OptimizerState sp;
    for (int k = 0; k < 20; ++k) {
        const Matrix g = gaussian_matrix(6, 4, rng);
        optimizer_step(xm, g, muon, sm);
        optimizer_step(xp, g, polar, sp);
        CHECK(xm == xp);
    }
}

TEST_CASE("matrix sign descent") {
    Rng rng(11);
    Matrix x = Matrix::diagonal({3.0, -1.0});
    OptimizerState state;
    matrix_signsgd_step(x, Matrix::diagonal({2.0, 0.5}), config(OptimizerKind::MatrixSignSgd, 1.0),
                        state);
    CHECK(frobenius_norm(x - Matrix::diagonal({2.0, -2.0})) <= 1e-13);
    const Matrix g0 = gaussian_matrix(5, 3, rng);
    const auto cfg = config(OptimizerKind::MatrixSignSgd, 0.4);
    const Matrix base = update_of(cfg, Matrix(5, 3), g0);
    for (double c : {1e-3, 7.0}) {
        CHECK(rel_diff(update_of(cfg, Matrix(5, 3), c * g0), base) <= 1e-12);
    }
}

TEST_CASE("Adam first step is a sign step") {
    const Matrix g = Matrix::from_rows({{3.0, -1e-3}, {0.5, -20.0}});
    auto cfg = config(OptimizerKind::Adam, 0.01);
    cfg.eps = 1e-14;
    const Matrix update = update_of(cfg, Matrix(2, 2), g);
    const Matrix expected = Matrix::from_rows({{-0.01, 0.01}, {-0.01, 0.01}});
    CHECK(rel_diff(update, expected) <= 1e-9);
}

TEST_CASE("Adam without moment averaging is elementwise signSGD") {
    Rng rng(12);
    auto cfg = config(OptimizerKind::Adam, 0.02);
    cfg.beta1 = 0.0;
    cfg.beta2 = 0.0;
    cfg.eps = 1e-15;
    Matrix x(3, 4);
    OptimizerState state;
    for (int k = 0; k < 4; ++k) {
        const Matrix g = gaussian_matrix(3, 4, rng);
        const Matrix before = x;
        adam_step(x, g, cfg, state);
        for (std::size_t i = 0; i < g.size(); ++i) {
            CHECK((x.data()[i] - before.data()[i]) ==
                  doctest::Approx(-0.02 * std::copysign(1.0, g.data()[i])).epsilon(1e-12));
        }
    }
}

TEST_CASE("Adam matches a scalar reference recursion") {
    const Matrix g1 = Matrix::from_rows({{1.0, -2.0}, {0.5, 0.0}});
    const Matrix g2 = Matrix::from_rows({{-0.3, 4.0}, {0.5, 1e-3}});
    auto cfg = config(OptimizerKind::Adam, 0.1);
    cfg.weight_decay = 0.01;
    Matrix x = Matrix::from_rows({{0.2, 0.4}, {-1.0, 3.0}});
    const Matrix x0 = x;
    OptimizerState state;
    adam_step(x, g1, cfg, state);
    adam_step(x, g2, cfg, state);
    for (std::size_t i = 0; i < 4; ++i) {
        double xi = x0.data()[i];
        double m = 0.0;
        double v = 0.0;
        const double gs[2] = {g1.data()[i], g2.data()[i]};
        for (int t = 1; t <= 2; ++t) {
            const double gi = gs[t - 1];
            m = 0.9 * m + 0.1 * gi;
            v = 0.999 * v + 0.001 * gi * gi;
            const double mh = m / (1.0 - std::pow(0.9, t));
            const double vh = v / (1.0 - std::pow(0.999, t));
            xi = (1.0 - 0.01 * 0.1) * xi - 0.1 * mh / (std::sqrt(vh) + 1e-8);
        }
        CHECK(std::abs(x.data()[i] - xi) <= 1e-14);
    }
}

TEST_CASE("exact Newton solves the quadratic in one step") {
    const QuadRegProblem p = QuadRegProblem::make(20, 10, 40, 15, 0);
    const auto cfg = config(OptimizerKind::Newton, 1.0);
    for (std::uint64_t seed : {0, 1, 2}) {
        Matrix x = p.initial_point(seed);
        const double gap0 = p.gap(x);
        OptimizerState state;
        newton_step_quadratic(x, p.grad(x), p, cfg, state);
        CHECK(p.gap(x) <= 1e-18 * gap0);
    }
    Matrix x = p.x_star();
    OptimizerState state;
    newton_step_quadratic(x, Matrix(20, 10), p, cfg, state);
    CHECK(x == p.x_star());
}

TEST_CASE("damped Newton decreases the gap monotonically") {
    const QuadRegProblem p = QuadRegProblem::make(20, 10, 40, 15, 1);
    const auto cfg = config(OptimizerKind::Newton, 0.25);
    Matrix x = p.initial_point(0);
    OptimizerState state;
    double gap = p.gap(x);
    for (int k = 0; k < 30; ++k) {
        const double before = gap;
        newton_step_quadratic(x, p.grad(x), p, cfg, state);
        gap = p.gap(x);
        CHECK(gap < before);
        CHECK(gap == doctest::Approx(0.5625 * before).epsilon(1e-6));
    }
}

TEST_CASE("alternating gradient descent") {
    const CompletionProblem p = CompletionProblem::make(12, 9, 2, 3);
    const auto cfg = config(OptimizerKind::AltGd, 2.0);

    SUBCASE("ground truth is a fixed point") {
        Matrix x = p.u_star();
        Matrix y = p.v_star();
        OptimizerState state;
        altgd_step(x, y, p, cfg, state);
        CHECK(x == p.u_star());
        CHECK(y == p.v_star());
    }
    SUBCASE("Y is updated with the new X") {
        auto [x, y] = p.initial_point(0);
        const Matrix x1 = x - 2.0 * p.grad_x(x, y);
        const Matrix y1 = y - 2.0 * p.grad_y(x1, y);
        OptimizerState state;
        altgd_step(x, y, p, cfg, state);
        CHECK(rel_diff(x, x1) <= 1e-15);
        CHECK(rel_diff(y, y1) <= 1e-15);
        CHECK(state.step_count == 1);
    }
    SUBCASE("transposed data swaps the roles of the factors") {
        const CompletionProblem t(p.mask().transpose(), p.v_star(), p.u_star());
        auto [x, y] = p.initial_point(1);
        Matrix ty = y;
        Matrix tx = x;
        OptimizerState state;
        altgd_step(ty, tx, t, cfg, state);
        const Matrix y1 = y - 2.0 * p.grad_y(x, y);
        const Matrix x1 = x - 2.0 * p.grad_x(x, y1);
        CHECK(rel_diff(ty, y1) <= 1e-14);
        CHECK(rel_diff(tx, x1) <= 1e-14);
    }
}

TEST_CASE("the nuclear factor equals the trace of H and the duality pairing") {
    Rng rng(13);
    for (int i = 0; i < 100; ++i) {
        const std::size_t m = 3 + rng.below(10);
        const std::size_t n = 3 + rng.below(10);
        const Matrix g = gaussian_matrix(m, n, rng);
        const PolarFactors p = compute_polar(g, PolarSettings{});
        const double nu = frobenius_dot(g, p.u);
        const double nuc = nuclear_norm(g);
        CHECK(std::abs(nu - nuc) <= 1e-10 * nuc);
        CHECK(std::abs(trace(p.h) - nuc) <= 1e-10 * nuc);
    }
}

TEST_CASE("scaled orthogonal factor equals the trace-scaled explicit preconditioner") {
    Rng rng(14);
    for (int i = 0; i < 20; ++i) {
        const std::size_t n = 2 + rng.below(8);
        const std::size_t m = n + rng.below(6);
        const Matrix g = gaussian_matrix(m, n, rng);
        const PolarFactors p = compute_polar(g, PolarSettings{});
        const Matrix lhs = trace(p.h) * p.u;
        const Matrix rhs = trace(p.h) * matmul(g, inverse(p.h));
        CHECK(rel_diff(rhs, lhs) <= 1e-8);
    }
}

TEST_CASE("rank-based learning rate gives the per-step descent guarantee") {
    const QuadRegProblem p = QuadRegProblem::make(20, 10, 40, 15, 0);
    auto cfg = config(OptimizerKind::PolarGrad, 0.0);
    cfg.lr_rule = LrRule::InverseLipschitzRank;
    cfg.lipschitz = p.lipschitz();
    Matrix x = p.initial_point(0);
    OptimizerState state;
    for (int k = 0; k < 100; ++k) {
        const double f = p.loss(x);
        const StepInfo info = polar_grad_step(x, p.grad(x), cfg, state);
        REQUIRE(info.rank >= 1);
        CHECK(info.lr == doctest::Approx(1.0 / (p.lipschitz() * info.rank)));
        const double bound = f - info.nu * info.nu / (2.0 * p.lipschitz() * info.rank);
        CHECK(p.loss(x) <= bound + 1e-10 * std::abs(f));
    }
}

TEST_CASE("maximum-rank learning rate uses min(m, n)") {
    Rng rng(15);
    OptimizerConfig cfg;
    cfg.lr_rule = LrRule::InverseLipschitzMaxRank;
    cfg.lipschitz = 4.0;
    std::size_t rank = 0;
    const double lr = step_learning_rate(cfg, OptimizerState{}, gaussian_matrix(7, 3, rng), &rank);
    CHECK(rank == 3);
    CHECK(lr == doctest::Approx(1.0 / 12.0));
}

TEST_CASE("decoupled weight decay shrinks by exactly one minus lambda gamma") {
    Rng rng(16);
    const Matrix x0 = gaussian_matrix(4, 3, rng);
    for (OptimizerKind kind : {OptimizerKind::PolarGrad, OptimizerKind::Muon,
                               OptimizerKind::MatrixSignSgd, OptimizerKind::Adam}) {
        CAPTURE(to_string(kind));
        auto cfg = config(kind, 0.5);
        cfg.weight_decay = 0.1;
        Matrix x = x0;
        OptimizerState state;
        for (int k = 1; k <= 3; ++k) {
            optimizer_step(x, Matrix(4, 3), cfg, state);
            CHECK(rel_diff(x, std::pow(0.95, k) * x0) <= 1e-15);
        }
    }
}

TEST_CASE("learning rate follows the schedule through the step counter") {
    auto cfg = config(OptimizerKind::MatrixSignSgd, 0.0);
    cfg.schedule = Schedule::step_decay(1.0, 0.5, 2);
    Matrix x(2, 2);
    OptimizerState state;
    const double expected[] = {1.0, 1.0, 0.5, 0.5, 0.25};
    for (double lr : expected) {
        CHECK(optimizer_step(x, Matrix::identity(2), cfg, state).lr == lr);
    }
    CHECK(state.step_count == 5);
}

TEST_CASE("a failed polar step leaves parameters and state untouched") {
    Rng rng(17);
    auto cfg = config(OptimizerKind::PolarGrad, 0.1, MomentumMode::MomentumFirst, 0.9);
    cfg.polar.inner_steps = 1;
    Matrix x = gaussian_matrix(6, 4, rng);
    OptimizerState state;
    state.momentum = gaussian_matrix(6, 4, rng);
    state.step_count = 3;
    const Matrix x_before = x;
    const Matrix m_before = state.momentum;
    const Matrix g = matrix_with_spectrum(6, 4, geometric_spectrum(4, 1e8), rng);
    CHECK_THROWS_AS(optimizer_step(x, g, cfg, state), PolarStepError);
    CHECK(x == x_before);
    CHECK(state.momentum == m_before);
    CHECK(state.step_count == 3);

    cfg.polar.require_convergence = false;
    CHECK_NOTHROW(optimizer_step(x, g, cfg, state));
    CHECK(state.step_count == 4);
}

TEST_CASE("buffers must match the parameter shape") {
    Matrix x(3, 2);
    OptimizerState state;
    state.momentum = Matrix(2, 3);
    CHECK_THROWS_AS(optimizer_step(x, Matrix(3, 2), config(OptimizerKind::Muon, 0.1), state),
                    std::invalid_argument);
    CHECK_THROWS_AS(optimizer_step(x, Matrix(2, 2), config(OptimizerKind::PolarGrad, 0.1), state),
                    std::invalid_argument);
    CHECK_THROWS_AS(optimizer_step(x, Matrix(3, 2), config(OptimizerKind::Newton, 0.1), state),
                    std::invalid_argument);
}

TEST_CASE("configuration validation and names") {
    OptimizerConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.beta = 1.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg.beta = 0.5;
    cfg.weight_decay = -1.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg.weight_decay = 0.0;
    cfg.lr_rule = LrRule::InverseLipschitzRank;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg.lipschitz = 2.0;
    CHECK_NOTHROW(cfg.validate());
    cfg.eps = 0.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

    for (auto k : {OptimizerKind::PolarGrad, OptimizerKind::Muon, OptimizerKind::MatrixSignSgd,
                   OptimizerKind::Adam, OptimizerKind::Newton, OptimizerKind::AltGd}) {
        CHECK(parse_optimizer_kind(to_string(k)) == k);
    }
    for (MomentumMode m : kAllModes) {
        CHECK(parse_momentum_mode(to_string(m)) == m);
    }
    CHECK(parse_muon_scale("sqrt_aspect") == MuonScale::SqrtAspect);
    CHECK(parse_lr_rule("inverse_lipschitz_rank") == LrRule::InverseLipschitzRank);
    CHECK_THROWS_AS(parse_optimizer_kind("sgd"), std::invalid_argument);
}
