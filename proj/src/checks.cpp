#include "polargrad/checks.hpp"

#include "polargrad/harness.hpp"
#include "polargrad/linalg.hpp"
#include "polargrad/optimizers.hpp"
#include "polargrad/polar.hpp"
#include "polargrad/problems.hpp"
#include "polargrad/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <utility>

namespace polargrad {

namespace {

std::string sci(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

double rel_diff(const Matrix& a, const Matrix& b) {
    return frobenius_norm(a - b) / std::max(frobenius_norm(b), 1e-300);
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

struct Outcome {
    bool passed;
    std::string detail;
};

// ---------------------------------------------------------------- polar

Outcome polar_oracle() {
    const auto start = std::chrono::steady_clock::now();
    const std::pair<std::size_t, std::size_t> shapes[] = {{40, 25}, {100, 60}, {64, 64}};
    const double kappas[] = {1e2, 1e6, 1e12};
    constexpr int kPerShape = 50;
    constexpr double kTol = 1e-8;

    Rng rng(2024, 11);
    std::string detail;
    bool ok = true;
    for (double kappa : kappas) {
        double worst_qdwh = 0.0;
        double worst_zolo = 0.0;
        for (auto [m, n] : shapes) {
            const std::size_t k = std::min(m, n);
            for (int t = 0; t < kPerShape; ++t) {
                const Matrix a = matrix_with_spectrum(m, n, geometric_spectrum(k, kappa), rng);
                const Matrix ref = polar_reference(a, 0.0).u;
                const SigmaBounds bounds = sigma_bounds(a, BoundsMode::Exact, 0.0);
                const double scale = std::sqrt(static_cast<double>(k));
                worst_qdwh = std::max(worst_qdwh, frobenius_norm(qdwh(a, bounds).u - ref) / scale);
                worst_zolo =
                    std::max(worst_zolo, frobenius_norm(zolo_pd(a, bounds).u - ref) / scale);
            }
        }
        ok = ok && worst_qdwh <= kTol && worst_zolo <= kTol;
        detail += "kappa=" + sci(kappa) + " max dU qdwh=" + sci(worst_qdwh) +
                  " zolo=" + sci(worst_zolo) + "; ";
    }
    const double secs = seconds_since(start);
    ok = ok && secs < 30.0;
    return {ok, detail + "time " + sci(secs) + " s (limit 30)"};
}

Outcome iteration_budget() {
    Rng rng(2024, 12);
    const std::pair<std::size_t, std::size_t> shapes[] = {{40, 25}, {100, 60}, {64, 64}};
    const std::pair<double, int> qdwh_budget[] = {{1e3, 4}, {1e5, 5}, {1e16, 6}};
    const double zolo_kappas[] = {1e1, 1e3, 1e5, 1e8, 1e12, 1e16};
    constexpr int kPerShape = 5;

    bool ok = true;
    std::string detail = "qdwh max its:";
    for (auto [kappa, budget] : qdwh_budget) {
        int worst = 0;
        for (auto [m, n] : shapes) {
            for (int t = 0; t < kPerShape; ++t) {
                const Matrix a =
                    matrix_with_spectrum(m, n, geometric_spectrum(std::min(m, n), kappa), rng);
                const PolarFactors f = qdwh(a, sigma_bounds(a, BoundsMode::Exact, 0.0));
                worst = std::max(worst, f.converged ? f.iterations : 1000);
            }
        }
        ok = ok && worst <= budget;
        detail += " kappa=" + sci(kappa) + ":" + std::to_string(worst) + "/" + std::to_string(budget);
    }
    detail += "; zolo r=8 max its:";
    for (double kappa : zolo_kappas) {
        int worst = 0;
        for (auto [m, n] : shapes) {
            for (int t = 0; t < kPerShape; ++t) {
                const Matrix a =
                    matrix_with_spectrum(m, n, geometric_spectrum(std::min(m, n), kappa), rng);
                const PolarFactors f = zolo_pd(a, sigma_bounds(a, BoundsMode::Exact, 0.0), 8);
                worst = std::max(worst, f.converged ? f.iterations : 1000);
            }
        }
        ok = ok && worst <= 2;
        detail += " kappa=" + sci(kappa) + ":" + std::to_string(worst);
    }
    return {ok, detail};
}

Matrix random_full_rank(Rng& rng, bool tall_only) {
    std::size_t m = 5 + rng.below(40);
    std::size_t n = 5 + rng.below(40);
    if (tall_only && m < n) std::swap(m, n);
    return gaussian_matrix(m, n, rng);
}

Outcome duality_identity() {
    Rng rng(2024, 13);
    PolarSettings settings;
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) {
        const Matrix g = random_full_rank(rng, false);
        const PolarFactors f = compute_polar(g, settings);
        const double nuc = nuclear_norm(g);
        double trace_h = 0.0;
        for (std::size_t i = 0; i < f.h.rows(); ++i) trace_h += f.h(i, i);
        const double inner = frobenius_dot(g, f.u);
        worst = std::max({worst, std::abs(inner - nuc) / nuc, std::abs(trace_h - nuc) / nuc});
    }
    return {worst <= 1e-10, "max rel deviation " + sci(worst) + " over 100 matrices (tol 1e-10)"};
}

Outcome preconditioner_identity() {
    Rng rng(2024, 14);
    PolarSettings settings;
    double worst = 0.0;
    for (int t = 0; t < 20; ++t) {
        const Matrix g = random_full_rank(rng, true);
        const PolarFactors f = compute_polar(g, settings);
        double trace_h = 0.0;
        for (std::size_t i = 0; i < f.h.rows(); ++i) trace_h += f.h(i, i);
        const Matrix lhs = trace_h * f.u;
        const Matrix rhs = trace_h * matmul(g, spd_inverse(f.h));
        worst = std::max(worst, rel_diff(lhs, rhs));
    }
    return {worst <= 1e-8, "max rel deviation " + sci(worst) + " over 20 matrices (tol 1e-8)"};
}

// ---------------------------------------------------------------- theorems

Outcome rank_lr_descent() {
    bool ok = true;
    std::string detail;
    for (std::uint64_t seed : {0u, 1u, 2u}) {
        RunConfig cfg;
        cfg.problem.kind = ProblemKind::Quad;
        cfg.problem.m = 20;
        cfg.problem.n = 10;
        cfg.problem.p = 40;
        cfg.problem.q = 15;
        cfg.problem.seed = seed;
        cfg.optimizer.kind = OptimizerKind::PolarGrad;
        cfg.optimizer.lr_rule = LrRule::InverseLipschitzRank;
        cfg.optimizer.lipschitz = 0.0;
        cfg.optimizer.schedule = Schedule::constant(0.0);
        cfg.total_steps = 500;
        cfg.cond_cadence = 500;
        cfg.check_descent = true;
        const RunResult r = run_experiment(cfg);

        const QuadRegProblem p = QuadRegProblem::make(20, 10, 40, 15, seed);
        const double r_max = 10.0;
        const double bound_slope = std::log(1.0 - 1.0 / (r_max * r_max * p.kappa_hessian()));

        // Slope up to the last step whose gap is still above roundoff.
        const double gap0 = *r.trace.front().gap;
        std::size_t last = 0;
        for (std::size_t i = 1; i < r.trace.size(); ++i) {
            if (*r.trace[i].gap > 1e-12 * gap0) last = i;
        }
        const double observed_slope =
            last == 0 ? 0.0
                      : std::log(*r.trace[last].gap / gap0) / static_cast<double>(r.trace[last].step);
        const bool seed_ok = r.status == RunStatus::Completed && r.steps_completed == 500 &&
                             r.descent_violations == 0 && r.rate_violations == 0 &&
                             last > 0 && observed_slope <= bound_slope;
        ok = ok && seed_ok;
        detail += "seed" + std::to_string(seed) + ": violations " +
                  std::to_string(r.descent_violations) + "/" + std::to_string(r.rate_violations) +
                  " slope " + sci(observed_slope) + " <= " + sci(bound_slope) + "; ";
    }
    return {ok, detail};
}

Outcome sign_descent_floor() {
    const auto start = std::chrono::steady_clock::now();
    bool ok = true;
    std::string detail;
    for (std::uint64_t seed : {0u, 1u, 2u}) {
        auto run = [&](const char* name, std::int64_t cadence) {
            RunConfig cfg = preset(name, Scale::Desk, seed);
            cfg.total_steps = 1000;
            cfg.cadence = cadence;
            cfg.cond_cadence = 1000;
            return run_experiment(cfg);
        };
        const RunResult sign = run("quad/MatrixSign(QDWH)", 1);
        const RunResult pg = run("quad/PolarGrad(QDWH)", 1000);
        if (sign.status != RunStatus::Completed || pg.status != RunStatus::Completed) {
            ok = false;
            detail += "seed" + std::to_string(seed) + ": run did not complete; ";
            continue;
        }
        // Plateau: the two halves of the last quarter have mean gaps within 1%, and the
        // smallest gap there stays 1e3 times above PolarGrad's final gap.
        double first = 0.0;
        double second = 0.0;
        double sum_sq = 0.0;
        double low = INFINITY;
        int n_first = 0;
        int n_second = 0;
        for (const TraceRecord& t : sign.trace) {
            if (t.step < 750) continue;
            const double g = *t.gap;
            (t.step < 875 ? first : second) += g;
            ++(t.step < 875 ? n_first : n_second);
            sum_sq += g * g;
            low = std::min(low, g);
        }
        first /= n_first;
        second /= n_second;
        const double mean = (first * n_first + second * n_second) / (n_first + n_second);
        const double var = std::max(0.0, sum_sq / (n_first + n_second) - mean * mean);
        const double drift = std::abs(second - first) / mean;
        const double pg_end = *pg.final_gap;
        const bool seed_ok =
            drift < 0.01 && low >= 1e3 * pg_end && pg_end <= 1e-6 * pg.initial_loss;
        ok = ok && seed_ok;
        detail += "seed" + std::to_string(seed) + ": sign gap min " + sci(low) + " mean " +
                  sci(mean) + " drift " + sci(drift) + " var/mean " + sci(var / mean) +
                  ", polargrad gap " + sci(pg_end) + " (f0 " + sci(pg.initial_loss) + "); ";
    }
    const double secs = seconds_since(start);
    ok = ok && secs < 60.0;
    return {ok, detail + "time " + sci(secs) + " s (limit 60)"};
}

Outcome null_gradient_split() {
    Rng rng(2024, 15);
    const Matrix g0 = gaussian_matrix(30, 20, rng);
    const Matrix x0 = gaussian_matrix(30, 20, rng);

    auto update_norm = [&](OptimizerKind kind, double c) {
        OptimizerConfig cfg;
        cfg.kind = kind;
        cfg.schedule = Schedule::constant(0.01);
        if (kind == OptimizerKind::Muon) cfg.beta = 0.95;
        Matrix x = x0;
        OptimizerState state;
        optimizer_step(x, c * g0, cfg, state);
        return frobenius_norm(x - x0);
    };

    const double pg_ref = update_norm(OptimizerKind::PolarGrad, 1.0);
    const double mu_ref = update_norm(OptimizerKind::Muon, 1.0);
    double pg_worst = 0.0;
    double mu_worst = 0.0;
    for (double c : {1e-2, 1e-4, 1e-6}) {
        pg_worst = std::max(pg_worst, std::abs(update_norm(OptimizerKind::PolarGrad, c) / (c * pg_ref) - 1.0));
        mu_worst = std::max(mu_worst, std::abs(update_norm(OptimizerKind::Muon, c) / mu_ref - 1.0));
    }
    return {pg_worst <= 1e-8 && mu_worst <= 1e-8,
            "polargrad linearity dev " + sci(pg_worst) + ", muon invariance dev " + sci(mu_worst) +
                " (tol 1e-8)"};
}

Outcome newton_one_step() {
    bool ok = true;
    std::string detail;
    for (std::uint64_t seed : {0u, 1u, 2u}) {
        RunConfig cfg = preset("quad/Newton", Scale::Desk, seed);
        cfg.optimizer.schedule = Schedule::constant(1.0);
        cfg.total_steps = 1;
        const RunResult r = run_experiment(cfg);
        const double ratio = r.final_gap ? *r.final_gap / r.initial_loss : 1.0;
        ok = ok && r.status == RunStatus::Completed && ratio <= 1e-18;
        detail += "seed" + std::to_string(seed) + ": gap/f0 " + sci(ratio) + "; ";
    }
    return {ok, detail + "tol 1e-18"};
}

// ---------------------------------------------------------------- gradients

Outcome gradient_fd() {
    double worst_quad = 0.0;
    double worst_logistic = 0.0;
    double worst_completion = 0.0;
    for (std::uint64_t seed : {0u, 1u, 2u}) {
        const QuadRegProblem quad = QuadRegProblem::make(20, 10, 40, 15, seed);
        const LogisticProblem logistic = LogisticProblem::make(30, 8, 200, 12, 200, seed);
        const CompletionProblem completion = CompletionProblem::make(24, 16, 3, seed);
        Rng rng(seed, 0xfd);
        for (int point = 0; point < 3; ++point) {
            const Matrix xq = uniform_matrix(20, 10, -1.0, 1.0, rng);
            worst_quad = std::max(worst_quad, gradient_check_error(
                                                  [&](const Matrix& z) { return quad.loss(z); },
                                                  xq, quad.grad(xq)));
            const Matrix xl = uniform_matrix(30, 8, -0.3, 0.3, rng);
            worst_logistic = std::max(
                worst_logistic,
                gradient_check_error([&](const Matrix& z) { return logistic.loss(z); }, xl,
                                     logistic.grad(xl)));
            const Matrix x = gaussian_matrix(24, 3, rng);
            const Matrix y = gaussian_matrix(16, 3, rng);
            const CompletionGrads g = completion.grads(x, y);
            worst_completion = std::max(
                {worst_completion,
                 gradient_check_error([&](const Matrix& z) { return completion.loss(z, y); }, x,
                                      g.gx),
                 gradient_check_error([&](const Matrix& z) { return completion.loss(x, z); }, y,
                                      g.gy)});
        }
    }
    const bool ok = worst_quad <= 1e-6 && worst_logistic <= 1e-6 && worst_completion <= 1e-6;
    return {ok, "max rel error quad " + sci(worst_quad) + ", logistic " + sci(worst_logistic) +
                    ", completion " + sci(worst_completion) + " (tol 1e-6)"};
}

Outcome minibatch_unbiased() {
    const LogisticProblem p = LogisticProblem::make(30, 8, 200, 12, 20, 0);
    Rng init(0, 1);
    const Matrix x = uniform_matrix(30, 8, -0.3, 0.3, init);
    const Matrix full = p.grad(x);
    const double scale = static_cast<double>(p.samples()) / static_cast<double>(p.batch_size());

    constexpr int kDraws = 2000;
    Matrix sum(full.rows(), full.cols());
    Matrix sum_sq(full.rows(), full.cols());
    // Entries of the gradient are correlated; the projection onto the full gradient
    // gives one scalar with an exact z-test.
    const double full_norm = frobenius_norm(full);
    double proj_sum = 0.0;
    double proj_sq = 0.0;
    Rng batch_rng(0, static_cast<std::uint64_t>(Stream::Batch));
    for (int t = 0; t < kDraws; ++t) {
        const Matrix g = scale * p.grad(x, p.sample_batch(batch_rng));
        sum += g;
        sum_sq += hadamard(g, g);
        const double proj = frobenius_dot(g, full) / full_norm;
        proj_sum += proj;
        proj_sq += proj * proj;
    }
    auto z_score = [](double s, double sq, double target) {
        const double mean = s / kDraws;
        const double var = (sq / kDraws - mean * mean) * kDraws / (kDraws - 1.0);
        return (mean - target) / std::sqrt(var / kDraws);
    };
    int within = 0;
    for (std::size_t i = 0; i < full.size(); ++i) {
        within += std::abs(z_score(sum.data()[i], sum_sq.data()[i], full.data()[i])) <= 3.0 ? 1 : 0;
    }
    const double proj_z = z_score(proj_sum, proj_sq, full_norm);
    const bool ok = within >= 0.99 * static_cast<double>(full.size()) && std::abs(proj_z) <= 3.0;
    return {ok, std::to_string(within) + "/" + std::to_string(full.size()) +
                    " entries within 3 SE (need 99%), projection z " + sci(proj_z)};
}

// ---------------------------------------------------------------- orderings

RunResult run_preset(const char* name, std::uint64_t seed, std::int64_t steps) {
    RunConfig cfg = preset(name, Scale::Desk, seed);
    cfg.total_steps = steps;
    cfg.cadence = steps;
    cfg.cond_cadence = steps;
    return run_experiment(cfg);
}

double final_gap_or_inf(const RunResult& r) {
    return r.status == RunStatus::Completed && r.final_gap ? *r.final_gap : INFINITY;
}

double final_loss_or_inf(const RunResult& r) {
    return r.status == RunStatus::Completed ? r.final_loss : INFINITY;
}

Outcome orderings() {
    const auto start = std::chrono::steady_clock::now();
    const std::uint64_t seeds[] = {0, 1, 2};

    int quad_wins = 0;
    std::string quad_detail;
    for (std::uint64_t seed : seeds) {
        const double pg = final_gap_or_inf(run_preset("quad/PolarGrad(QDWH)", seed, 200));
        const double mu = final_gap_or_inf(run_preset("quad/Muon(QDWH)", seed, 200));
        const double ad = final_gap_or_inf(run_preset("quad/Adam", seed, 200));
        quad_wins += pg < mu && pg < ad ? 1 : 0;
        quad_detail += " " + sci(pg) + "/" + sci(mu) + "/" + sci(ad);
    }

    int completion_wins = 0;
    std::string completion_detail;
    for (std::uint64_t seed : seeds) {
        const double pg = final_loss_or_inf(run_preset("completion/PolarGrad(QDWH)", seed, 500));
        const double mu = final_loss_or_inf(run_preset("completion/Muon(QDWH)", seed, 500));
        completion_wins += mu > pg ? 1 : 0;
        completion_detail += " " + sci(mu) + ">" + sci(pg);
    }

    const char* logistic_pairs[] = {"logistic/PolarSGD(QDWH)", "logistic/Muon(QDWH)",
                                    "logistic/Adam", "logistic/PolarSGDM(polar-first)",
                                    "logistic/PolarSGDM(momentum-first)"};
    int logistic_wins = 0;
    int logistic_total = 0;
    for (const char* base : logistic_pairs) {
        const std::string decayed = std::string(base) + "+decay";
        for (std::uint64_t seed : seeds) {
            const double constant = final_loss_or_inf(run_preset(base, seed, 500));
            const double decay = final_loss_or_inf(run_preset(decayed.c_str(), seed, 500));
            logistic_wins += decay < constant ? 1 : 0;
            ++logistic_total;
        }
    }

    const double secs = seconds_since(start);
    const bool ok = quad_wins == 3 && completion_wins == 3 && logistic_wins == logistic_total &&
                    secs < 600.0;
    return {ok, "(a) quad gap@200 polargrad/muon/adam" + quad_detail + " [" +
                    std::to_string(quad_wins) + "/3]; (b) completion final muon>polargrad" +
                    completion_detail + " [" + std::to_string(completion_wins) +
                    "/3]; (c) logistic decay below constant " + std::to_string(logistic_wins) +
                    "/" + std::to_string(logistic_total) + "; time " + sci(secs) +
                    " s (limit 600)"};
}

struct Entry {
    const char* name;
    CheckSuite suite;
    const char* summary;
    Outcome (*fn)();
};

const Entry kChecks[] = {
    {"polar-oracle", CheckSuite::Polar,
     "QDWH and ZOLO-PD orthogonal factors match the SVD reference for kappa up to 1e12",
     polar_oracle},
    {"iteration-budget", CheckSuite::Polar,
     "QDWH and ZOLO-PD (r = 8) converge within the tabulated iteration counts", iteration_budget},
    {"duality-identity", CheckSuite::Polar, "<G, msgn(G)> = ||G||_* = tr(H)", duality_identity},
    {"preconditioner-identity", CheckSuite::Polar, "tr(H) U = tr(H) G H^-1",
     preconditioner_identity},
    {"rank-lr-descent", CheckSuite::Theorems,
     "gamma = 1/(L r_k) satisfies the per-step linear rate bound for 500 steps", rank_lr_descent},
    {"sign-descent-floor", CheckSuite::Theorems,
     "constant-step matrix sign descent stalls far above PolarGrad", sign_descent_floor},
    {"null-gradient-split", CheckSuite::Theorems,
     "PolarGrad steps scale with the gradient, Muon steps do not", null_gradient_split},
    {"newton-one-step", CheckSuite::Theorems, "exact Newton solves the quadratic in one step",
     newton_one_step},
    {"gradient-fd", CheckSuite::Gradients,
     "analytic gradients match central finite differences for all problems", gradient_fd},
    {"minibatch-unbiased", CheckSuite::Gradients,
     "rescaled minibatch gradients average to the full gradient", minibatch_unbiased},
    {"orderings", CheckSuite::Orderings,
     "desk-scale optimizer orderings on the quadratic, completion and logistic presets",
     orderings},
};

CheckResult execute(const Entry& e) {
    CheckResult r;
    r.name = e.name;
    r.suite = e.suite;
    const auto start = std::chrono::steady_clock::now();
    try {
        const Outcome o = e.fn();
        r.passed = o.passed;
        r.detail = o.detail;
    } catch (const std::exception& ex) {
        r.passed = false;
        r.detail = std::string("exception: ") + ex.what();
    }
    r.seconds = seconds_since(start);
    return r;
}

}  // namespace

std::string_view to_string(CheckSuite suite) {
    switch (suite) {
        case CheckSuite::Polar: return "polar";
        case CheckSuite::Theorems: return "theorems";
        case CheckSuite::Gradients: return "gradients";
        case CheckSuite::Orderings: return "orderings";
    }
    return "unknown";
}

CheckSuite parse_check_suite(std::string_view name) {
    for (CheckSuite s : {CheckSuite::Polar, CheckSuite::Theorems, CheckSuite::Gradients,
                         CheckSuite::Orderings}) {
        if (name == to_string(s)) return s;
    }
    throw std::invalid_argument("unknown check suite '" + std::string(name) + "'");
}

std::vector<CheckInfo> check_catalog() {
    std::vector<CheckInfo> out;
    for (const Entry& e : kChecks) out.push_back({e.name, e.suite, e.summary});
    return out;
}

CheckResult run_check(std::string_view name) {
    for (const Entry& e : kChecks) {
        if (name == e.name) return execute(e);
    }
    throw std::invalid_argument("unknown check '" + std::string(name) + "'");
}

std::vector<CheckResult> run_suite(CheckSuite suite,
                                   const std::function<void(const CheckResult&)>& on_result) {
    std::vector<CheckResult> out;
    for (const Entry& e : kChecks) {
        if (e.suite != suite) continue;
        out.push_back(execute(e));
        if (on_result) on_result(out.back());
    }
    return out;
}

std::vector<CheckResult> run_all_checks(const std::function<void(const CheckResult&)>& on_result) {
    std::vector<CheckResult> out;
    for (const Entry& e : kChecks) {
        out.push_back(execute(e));
        if (on_result) on_result(out.back());
    }
    return out;
}

}  // namespace polargrad
