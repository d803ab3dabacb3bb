#include "polargrad/harness.hpp"

#include "polargrad/linalg.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <thread>

#ifndef POLARGRAD_VERSION
#define POLARGRAD_VERSION "0.0.0"
#endif
#ifndef POLARGRAD_REVISION
#define POLARGRAD_REVISION "unknown"
#endif

namespace polargrad {

namespace {

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string format_optional(const std::optional<double>& v) {
    return v ? format_double(*v) : std::string();
}

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double parse_double(std::string_view s) {
    s = trim(s);
    if (s == "nan") return std::nan("");
    if (s == "inf") return INFINITY;
    if (s == "-inf") return -INFINITY;
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw std::invalid_argument("not a number: '" + std::string(s) + "'");
    }
    return v;
}

std::int64_t parse_int(std::string_view s) {
    s = trim(s);
    std::int64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw std::invalid_argument("not an integer: '" + std::string(s) + "'");
    }
    return v;
}

std::uint64_t parse_uint(std::string_view s) {
    s = trim(s);
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw std::invalid_argument("not a non-negative integer: '" + std::string(s) + "'");
    }
    return v;
}

std::size_t parse_size(std::string_view s) { return static_cast<std::size_t>(parse_uint(s)); }

bool parse_bool(std::string_view s) {
    s = trim(s);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw std::invalid_argument("not a boolean: '" + std::string(s) + "'");
}

std::string_view to_string(BoundsMode mode) {
    return mode == BoundsMode::Exact ? "exact" : "heuristic";
}

BoundsMode parse_bounds_mode(std::string_view s) {
    if (s == "exact") return BoundsMode::Exact;
    if (s == "heuristic") return BoundsMode::Heuristic;
    throw std::invalid_argument("unknown bounds mode '" + std::string(s) + "'");
}

std::string_view to_string(NewtonScaling s) {
    return s == NewtonScaling::None ? "none" : "frobenius";
}

NewtonScaling parse_newton_scaling(std::string_view s) {
    if (s == "none") return NewtonScaling::None;
    if (s == "frobenius") return NewtonScaling::Frobenius;
    throw std::invalid_argument("unknown Newton scaling '" + std::string(s) + "'");
}

using Entries = std::vector<std::pair<std::string, std::string>>;

Entries config_entries(const RunConfig& cfg) {
    const ProblemSpec& p = cfg.problem;
    const OptimizerConfig& o = cfg.optimizer;
    const PolarSettings& ps = o.polar;
    const Schedule& s = o.schedule;
    Entries e;
    auto put = [&](std::string key, std::string value) { e.emplace_back(std::move(key), std::move(value)); };
    put("name", cfg.name);
    put("problem", std::string(to_string(p.kind)));
    put("problem.m", std::to_string(p.m));
    put("problem.n", std::to_string(p.n));
    switch (p.kind) {
        case ProblemKind::Quad:
            put("problem.p", std::to_string(p.p));
            put("problem.q", std::to_string(p.q));
            break;
        case ProblemKind::Logistic:
            put("problem.samples", std::to_string(p.samples));
            put("problem.q", std::to_string(p.q));
            put("problem.batch_size", std::to_string(p.batch_size));
            put("problem.plus_minus_labels", p.plus_minus_labels ? "true" : "false");
            break;
        case ProblemKind::Completion:
            put("problem.rank", std::to_string(p.rank));
            put("problem.observed_fraction", format_double(p.observed_fraction));
            break;
    }
    put("problem.seed", std::to_string(p.seed));
    put("optimizer", std::string(to_string(o.kind)));
    put("optimizer.momentum", std::string(to_string(o.momentum)));
    put("optimizer.beta", format_double(o.beta));
    put("optimizer.weight_decay", format_double(o.weight_decay));
    put("optimizer.muon_scale", std::string(to_string(o.muon_scale)));
    put("optimizer.nuclear_scaling", o.nuclear_scaling ? "true" : "false");
    put("optimizer.beta1", format_double(o.beta1));
    put("optimizer.beta2", format_double(o.beta2));
    put("optimizer.eps", format_double(o.eps));
    put("optimizer.lr_rule", std::string(to_string(o.lr_rule)));
    put("optimizer.lipschitz", format_double(o.lipschitz));
    put("polar.algorithm", std::string(to_string(ps.algorithm)));
    put("polar.inner_steps", std::to_string(ps.inner_steps));
    put("polar.tol", format_double(ps.tol));
    put("polar.zolo_r", std::to_string(ps.zolo_r));
    put("polar.bounds", std::string(to_string(ps.bounds)));
    put("polar.ns_a", format_double(ps.ns.a));
    put("polar.ns_b", format_double(ps.ns.b));
    put("polar.ns_c", format_double(ps.ns.c));
    put("polar.ns_initial_scale", format_double(ps.ns.initial_scale));
    put("polar.newton_scaling", std::string(to_string(ps.newton_scaling)));
    put("polar.rank_tol", format_double(ps.rank_tol));
    put("polar.require_convergence", ps.require_convergence ? "true" : "false");
    put("schedule", std::string(to_string(s.kind)));
    put("schedule.lr", format_double(s.base_lr));
    switch (s.kind) {
        case ScheduleKind::Constant:
            break;
        case ScheduleKind::StepDecay:
            put("schedule.factor", format_double(s.factor));
            put("schedule.every", std::to_string(s.every));
            break;
        case ScheduleKind::LinearToZero:
            put("schedule.total_steps", std::to_string(s.total_steps));
            put("schedule.decay_ratio", format_double(s.decay_ratio));
            break;
        case ScheduleKind::WarmupCosine:
            put("schedule.total_steps", std::to_string(s.total_steps));
            put("schedule.warmup_steps", std::to_string(s.warmup_steps));
            break;
    }
    put("steps", std::to_string(cfg.total_steps));
    put("cadence", std::to_string(cfg.cadence));
    put("cond_cadence", std::to_string(cfg.cond_cadence));
    put("check_descent", cfg.check_descent ? "true" : "false");
    return e;
}

void apply_entry(RunConfig& cfg, const std::string& key, std::string_view v) {
    ProblemSpec& p = cfg.problem;
    OptimizerConfig& o = cfg.optimizer;
    PolarSettings& ps = o.polar;
    Schedule& s = o.schedule;
    static const std::map<std::string, std::function<void(RunConfig&, std::string_view)>> setters = {
        {"name", [](RunConfig& c, std::string_view x) { c.name = std::string(x); }},
        {"problem", [](RunConfig& c, std::string_view x) { c.problem.kind = parse_problem_kind(x); }},
        {"steps", [](RunConfig& c, std::string_view x) { c.total_steps = parse_int(x); }},
        {"cadence", [](RunConfig& c, std::string_view x) { c.cadence = parse_int(x); }},
        {"cond_cadence", [](RunConfig& c, std::string_view x) { c.cond_cadence = parse_int(x); }},
        {"check_descent", [](RunConfig& c, std::string_view x) { c.check_descent = parse_bool(x); }},
    };
    if (const auto it = setters.find(key); it != setters.end()) {
        it->second(cfg, v);
    } else if (key == "problem.m") p.m = parse_size(v);
    else if (key == "problem.n") p.n = parse_size(v);
    else if (key == "problem.p") p.p = parse_size(v);
    else if (key == "problem.q") p.q = parse_size(v);
    else if (key == "problem.samples") p.samples = parse_size(v);
    else if (key == "problem.batch_size") p.batch_size = parse_size(v);
    else if (key == "problem.rank") p.rank = parse_size(v);
    else if (key == "problem.seed") p.seed = parse_uint(v);
    else if (key == "problem.plus_minus_labels") p.plus_minus_labels = parse_bool(v);
    else if (key == "problem.observed_fraction") p.observed_fraction = parse_double(v);
    else if (key == "optimizer") o.kind = parse_optimizer_kind(v);
    else if (key == "optimizer.momentum") o.momentum = parse_momentum_mode(v);
    else if (key == "optimizer.beta") o.beta = parse_double(v);
    else if (key == "optimizer.weight_decay") o.weight_decay = parse_double(v);
    else if (key == "optimizer.muon_scale") o.muon_scale = parse_muon_scale(v);
    else if (key == "optimizer.nuclear_scaling") o.nuclear_scaling = parse_bool(v);
    else if (key == "optimizer.beta1") o.beta1 = parse_double(v);
    else if (key == "optimizer.beta2") o.beta2 = parse_double(v);
    else if (key == "optimizer.eps") o.eps = parse_double(v);
    else if (key == "optimizer.lr_rule") o.lr_rule = parse_lr_rule(v);
    else if (key == "optimizer.lipschitz") o.lipschitz = parse_double(v);
    else if (key == "polar.algorithm") ps.algorithm = parse_polar_algorithm(v);
    else if (key == "polar.inner_steps") ps.inner_steps = static_cast<int>(parse_int(v));
    else if (key == "polar.tol") ps.tol = parse_double(v);
    else if (key == "polar.zolo_r") ps.zolo_r = static_cast<int>(parse_int(v));
    else if (key == "polar.bounds") ps.bounds = parse_bounds_mode(v);
    else if (key == "polar.ns") {
        if (v == "muon") ps.ns = NsCoefficients::muon();
        else if (v == "classic") ps.ns = NsCoefficients::classic();
        else throw std::invalid_argument("unknown coefficient set '" + std::string(v) + "'");
    }
    else if (key == "polar.ns_a") ps.ns.a = parse_double(v);
    else if (key == "polar.ns_b") ps.ns.b = parse_double(v);
    else if (key == "polar.ns_c") ps.ns.c = parse_double(v);
    else if (key == "polar.ns_initial_scale") ps.ns.initial_scale = parse_double(v);
    else if (key == "polar.newton_scaling") ps.newton_scaling = parse_newton_scaling(v);
    else if (key == "polar.rank_tol") ps.rank_tol = parse_double(v);
    else if (key == "polar.require_convergence") ps.require_convergence = parse_bool(v);
    else if (key == "schedule") s.kind = parse_schedule_kind(v);
    else if (key == "schedule.lr") s.base_lr = parse_double(v);
    else if (key == "schedule.factor") s.factor = parse_double(v);
    else if (key == "schedule.every") s.every = parse_int(v);
    else if (key == "schedule.total_steps") s.total_steps = parse_int(v);
    else if (key == "schedule.decay_ratio") s.decay_ratio = parse_double(v);
    else if (key == "schedule.warmup_steps") s.warmup_steps = parse_int(v);
    else throw std::invalid_argument("unknown key '" + key + "'");
}

// ---------------------------------------------------------------- presets

struct PresetRow {
    const char* name;
    ProblemKind problem;
    OptimizerKind optimizer;
    MomentumMode momentum;
    PolarAlgorithm polar;
    int inner_steps;  // 0: run the backend to convergence
    double lr;
    double beta;
    bool decay;
};

constexpr auto Q = ProblemKind::Quad;
constexpr auto L = ProblemKind::Logistic;
constexpr auto C = ProblemKind::Completion;
constexpr auto PG = OptimizerKind::PolarGrad;
constexpr auto MU = OptimizerKind::Muon;
constexpr auto AD = OptimizerKind::Adam;
constexpr auto NONE = MomentumMode::None;
constexpr auto MF = MomentumMode::MomentumFirst;
constexpr auto PF = MomentumMode::PolarFirst;
constexpr auto QD = PolarAlgorithm::Qdwh;
constexpr auto ZO = PolarAlgorithm::ZoloPd;
constexpr auto NS = PolarAlgorithm::NewtonSchulz;
constexpr auto SV = PolarAlgorithm::SvdReference;

// Full-scale hyperparameters. Adam's betas are the defaults (0.9, 0.999).
constexpr PresetRow kPresets[] = {
    {"quad/PolarGrad(QDWH)", Q, PG, NONE, QD, 2, 4e-8, 0.0, false},
    {"quad/PolarGrad(ZOLO-PD)", Q, PG, NONE, ZO, 0, 3e-8, 0.0, false},
    {"quad/PolarGrad(QDWH)+decay", Q, PG, NONE, QD, 2, 4.75e-8, 0.0, true},
    {"quad/Muon(NS)", Q, MU, NONE, NS, 5, 0.1, 0.95, false},
    {"quad/Muon(QDWH)", Q, MU, NONE, QD, 2, 0.1, 0.95, false},
    {"quad/Muon(ZOLO-PD)", Q, MU, NONE, ZO, 0, 0.1, 0.95, false},
    {"quad/Muon(QDWH)+decay", Q, MU, NONE, QD, 2, 0.05, 0.95, true},
    {"quad/Newton", Q, OptimizerKind::Newton, NONE, SV, 0, 0.25, 0.0, false},
    {"quad/Adam", Q, AD, NONE, SV, 0, 0.05, 0.0, false},
    {"quad/Adam+decay", Q, AD, NONE, SV, 0, 0.05, 0.0, true},
    {"quad/PolarGradM(polar-first)", Q, PG, PF, QD, 2, 4e-7, 0.95, false},
    {"quad/PolarGradM(polar-first)+decay", Q, PG, PF, QD, 2, 5e-7, 0.95, true},
    {"quad/PolarGradM(momentum-first)", Q, PG, MF, QD, 2, 2e-7, 0.9, false},
    {"quad/PolarGradM(momentum-first)+decay", Q, PG, MF, QD, 2, 2.5e-7, 0.9, true},
    {"quad/MatrixSign(QDWH)", Q, OptimizerKind::MatrixSignSgd, NONE, QD, 0, 0.1, 0.0, false},
    {"logistic/PolarSGD(QDWH)", L, PG, NONE, QD, 2, 2.5e-7, 0.0, false},
    {"logistic/PolarSGD(QDWH)+decay", L, PG, NONE, QD, 2, 5e-7, 0.0, true},
    {"logistic/Muon(NS)", L, MU, NONE, NS, 5, 0.075, 0.95, false},
    {"logistic/Muon(QDWH)", L, MU, NONE, QD, 2, 0.075, 0.95, false},
    {"logistic/Muon(QDWH)+decay", L, MU, NONE, QD, 2, 0.15, 0.95, true},
    {"logistic/Adam", L, AD, NONE, SV, 0, 0.005, 0.0, false},
    {"logistic/Adam+decay", L, AD, NONE, SV, 0, 0.01, 0.0, true},
    {"logistic/PolarSGDM(polar-first)", L, PG, PF, QD, 2, 5e-7, 0.95, false},
    {"logistic/PolarSGDM(polar-first)+decay", L, PG, PF, QD, 2, 5e-7, 0.95, true},
    {"logistic/PolarSGDM(momentum-first)", L, PG, MF, QD, 2, 5e-7, 0.9, false},
    {"logistic/PolarSGDM(momentum-first)+decay", L, PG, MF, QD, 2, 5e-7, 0.9, true},
    {"completion/PolarGrad(QDWH)", C, PG, NONE, QD, 2, 15.0, 0.0, false},
    {"completion/PolarGrad(QDWH)+decay", C, PG, NONE, QD, 2, 15.0, 0.0, true},
    {"completion/Muon(NS)", C, MU, NONE, NS, 5, 0.25, 0.95, false},
    {"completion/Muon(QDWH)", C, MU, NONE, QD, 2, 0.25, 0.95, false},
    {"completion/Muon(QDWH)+decay", C, MU, NONE, QD, 2, 0.25, 0.95, true},
    {"completion/Adam", C, AD, NONE, SV, 0, 0.05, 0.0, false},
    {"completion/Adam+decay", C, AD, NONE, SV, 0, 0.05, 0.0, true},
    {"completion/AltGD", C, OptimizerKind::AltGd, NONE, SV, 0, 50.0, 0.0, false},
    {"completion/PolarGradM(polar-first)", C, PG, PF, QD, 2, 15.0, 0.5, false},
    {"completion/PolarGradM(polar-first)+decay", C, PG, PF, QD, 2, 15.0, 0.5, true},
    {"completion/PolarGradM(momentum-first)", C, PG, MF, QD, 2, 7.5, 0.5, false},
    {"completion/PolarGradM(momentum-first)+decay", C, PG, MF, QD, 2, 7.5, 0.5, true},
};

constexpr const char* kRankLrPreset = "quad/PolarGrad(rank-lr)";

ProblemSpec problem_dims(ProblemKind kind, Scale scale) {
    ProblemSpec p;
    p.kind = kind;
    const bool full = scale == Scale::Full;
    switch (kind) {
        case ProblemKind::Quad:
            p.m = full ? 500 : 100;
            p.n = full ? 100 : 20;
            p.p = full ? 1000 : 200;
            p.q = full ? 250 : 50;
            break;
        case ProblemKind::Logistic:
            p.m = full ? 1000 : 200;
            p.n = full ? 100 : 20;
            p.samples = full ? 10000 : 2000;
            p.q = full ? 400 : 80;
            p.batch_size = full ? 1000 : 200;
            break;
        case ProblemKind::Completion:
            p.m = full ? 500 : 100;
            p.n = full ? 250 : 50;
            p.rank = 5;
            break;
    }
    return p;
}

double sq(double x) { return x * x; }

// Expected Lipschitz constant of the gradient for Gaussian data, from
// σ_max(G) ≈ √rows + √cols for a Gaussian matrix G.
double lipschitz_estimate(const ProblemSpec& p) {
    auto smax = [](double r, double c) { return std::sqrt(r) + std::sqrt(c); };
    const auto d = [](std::size_t v) { return static_cast<double>(v); };
    switch (p.kind) {
        case ProblemKind::Quad:
            return sq(smax(d(p.p), d(p.m))) * sq(smax(d(p.n), d(p.q)));
        case ProblemKind::Logistic:
            return 0.25 * sq(smax(d(p.batch_size), d(p.m))) * sq(smax(d(p.n), d(p.q)));
        case ProblemKind::Completion:
            return 2.0 / static_cast<double>(std::min(p.m, p.n));
    }
    return 1.0;
}

std::size_t parameter_rank(const ProblemSpec& p) {
    return p.kind == ProblemKind::Completion ? p.rank : std::min(p.m, p.n);
}

// Desk-only multiplier on every quadratic PolarGrad row.
constexpr double kQuadPolarDeskFactor = 0.75;

// Desk learning rate: rules whose step length follows the gradient keep γL fixed, and
// nuclear-norm-scaled rules additionally keep γ·L·r_max fixed. Muon, sign descent, Adam and
// Newton take steps whose size does not depend on the data scale and keep γ.
double desk_lr(const PresetRow& row, const ProblemSpec& full, const ProblemSpec& desk) {
    const double l_ratio = lipschitz_estimate(full) / lipschitz_estimate(desk);
    const double r_ratio = static_cast<double>(parameter_rank(full)) /
                           static_cast<double>(parameter_rank(desk));
    switch (row.optimizer) {
        case OptimizerKind::PolarGrad: {
            const double factor = row.problem == ProblemKind::Quad ? kQuadPolarDeskFactor : 1.0;
            return factor * row.lr * l_ratio * r_ratio;
        }
        case OptimizerKind::AltGd: return row.lr * l_ratio;
        default: return row.lr;
    }
}

std::int64_t default_steps(ProblemKind kind) {
    switch (kind) {
        case ProblemKind::Quad: return 1000;
        case ProblemKind::Logistic: return 500;
        case ProblemKind::Completion: return 500;
    }
    return 1000;
}

Schedule decay_schedule(ProblemKind kind, double lr) {
    return Schedule::step_decay(lr, kind == ProblemKind::Quad ? 0.99 : 0.95, 25);
}

std::string sanitize(std::string_view name) {
    std::string out;
    for (char ch : name) {
        const bool keep = std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '.';
        if (keep) {
            out.push_back(ch);
        } else if (!out.empty() && out.back() != '_') {
            out.push_back('_');
        }
    }
    while (!out.empty() && out.back() == '_') out.pop_back();
    return out.empty() ? "run" : out;
}

// ---------------------------------------------------------------- run loop

struct GradMetrics {
    std::optional<double> cond;
    std::optional<double> nuclear;
};

GradMetrics grad_metrics(const Matrix& g, double rank_tol) {
    const std::vector<double> sigma = singular_values(g);
    double nuc = 0.0;
    for (double s : sigma) nuc += s;
    GradMetrics m;
    m.nuclear = nuc;
    if (!sigma.empty() && sigma.front() > 0.0) {
        m.cond = cond2(sigma, rank_tol);
    }
    return m;
}

bool all_finite(const std::vector<Matrix>& params) {
    return std::all_of(params.begin(), params.end(), [](const Matrix& x) { return x.all_finite(); });
}

// Problem-specific pieces of the loop.
struct Driver {
    std::vector<Matrix> params;
    std::function<double()> loss;
    std::function<std::optional<double>()> gap;
    std::function<Matrix()> full_grad;
    std::function<std::optional<double>()> residual_cond;
    std::function<StepInfo()> step;
    std::function<double()> next_lr;
};

}  // namespace

std::string_view to_string(ProblemKind kind) {
    switch (kind) {
        case ProblemKind::Quad: return "quad";
        case ProblemKind::Logistic: return "logistic";
        case ProblemKind::Completion: return "completion";
    }
    return "unknown";
}

ProblemKind parse_problem_kind(std::string_view name) {
    for (auto k : {ProblemKind::Quad, ProblemKind::Logistic, ProblemKind::Completion}) {
        if (to_string(k) == name) return k;
    }
    throw std::invalid_argument("unknown problem '" + std::string(name) + "'");
}

void ProblemSpec::validate() const {
    if (m == 0 || n == 0) throw ConfigError("problem dimensions must be positive");
    switch (kind) {
        case ProblemKind::Quad:
            if (p < m || q < n) {
                throw ConfigError("quad needs p >= m and q >= n for nonsingular Gram matrices");
            }
            break;
        case ProblemKind::Logistic:
            if (samples == 0 || q == 0 || batch_size == 0 || batch_size > samples) {
                throw ConfigError("logistic needs 0 < batch_size <= samples and q > 0");
            }
            break;
        case ProblemKind::Completion:
            if (rank == 0 || !(observed_fraction > 0.0 && observed_fraction <= 1.0)) {
                throw ConfigError("completion needs rank > 0 and observed_fraction in (0, 1]");
            }
            break;
    }
}

void RunConfig::validate() const {
    problem.validate();
    if (total_steps < 1) throw ConfigError("steps must be >= 1");
    if (cadence < 1 || cond_cadence < 1) throw ConfigError("cadences must be >= 1");
    try {
        OptimizerConfig o = optimizer;
        if (o.lr_rule != LrRule::Schedule && o.lipschitz == 0.0) {
            o.lipschitz = 1.0;  // resolved from the problem at run time
        }
        o.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    const OptimizerKind k = optimizer.kind;
    if (k == OptimizerKind::Newton && problem.kind != ProblemKind::Quad) {
        throw ConfigError("the Newton baseline needs the quadratic problem");
    }
    if (k == OptimizerKind::AltGd && problem.kind != ProblemKind::Completion) {
        throw ConfigError("alternating gradient descent needs the completion problem");
    }
    if (optimizer.lr_rule != LrRule::Schedule && optimizer.lipschitz == 0.0 &&
        problem.kind != ProblemKind::Quad) {
        throw ConfigError("an automatic Lipschitz constant is only known for the quadratic problem");
    }
    if (check_descent &&
        (problem.kind != ProblemKind::Quad || k != OptimizerKind::PolarGrad ||
         optimizer.momentum != MomentumMode::None || optimizer.lr_rule == LrRule::Schedule)) {
        throw ConfigError("check_descent needs vanilla PolarGrad with a rank-based rate on quad");
    }
}

void write_config(std::ostream& out, const RunConfig& cfg) {
    for (const auto& [k, v] : config_entries(cfg)) {
        out << k << " = " << v << '\n';
    }
}

std::string export_config(const RunConfig& cfg) {
    std::ostringstream ss;
    write_config(ss, cfg);
    return ss.str();
}

RunConfig parse_config(std::istream& in) {
    RunConfig cfg;
    std::vector<std::pair<std::string, std::string>> entries;
    std::string line;
    int lineno = 0;
    std::map<std::string, int> seen;
    while (std::getline(in, line)) {
        ++lineno;
        std::string_view v = line;
        if (const auto hash = v.find('#'); hash != std::string_view::npos) v = v.substr(0, hash);
        v = trim(v);
        if (v.empty()) continue;
        const auto eq = v.find('=');
        if (eq == std::string_view::npos) {
            throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
        }
        const std::string key(trim(v.substr(0, eq)));
        const std::string value(trim(v.substr(eq + 1)));
        if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
        if (const auto [it, fresh] = seen.emplace(key, lineno); !fresh) {
            throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" + key +
                              "' (first on line " + std::to_string(it->second) + ")");
        }
        entries.emplace_back(key, value);
    }
    // Kinds first so that kind-specific defaults never override explicit values.
    std::stable_partition(entries.begin(), entries.end(), [](const auto& e) {
        return e.first == "problem" || e.first == "optimizer" || e.first == "schedule";
    });
    for (const auto& [key, value] : entries) {
        try {
            apply_entry(cfg, key, value);
        } catch (const std::invalid_argument& e) {
            throw ConfigError("line " + std::to_string(seen.at(key)) + ": " + e.what());
        }
    }
    cfg.validate();
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    try {
        return parse_config(in);
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

std::string config_hash(const RunConfig& cfg) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : export_config(cfg)) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string_view to_string(Scale scale) { return scale == Scale::Desk ? "desk" : "full"; }

Scale parse_scale(std::string_view name) {
    if (name == "desk") return Scale::Desk;
    if (name == "full") return Scale::Full;
    throw std::invalid_argument("unknown scale '" + std::string(name) + "'");
}

std::vector<std::string> preset_names() {
    std::vector<std::string> names;
    for (const PresetRow& row : kPresets) names.emplace_back(row.name);
    names.emplace_back(kRankLrPreset);
    return names;
}

RunConfig preset(std::string_view name, Scale scale, std::uint64_t seed) {
    RunConfig cfg;
    if (name == kRankLrPreset) {
        cfg.problem = problem_dims(ProblemKind::Quad, scale);
        cfg.optimizer.kind = OptimizerKind::PolarGrad;
        cfg.optimizer.lr_rule = LrRule::InverseLipschitzRank;
        cfg.optimizer.lipschitz = 0.0;
        cfg.optimizer.schedule = Schedule::constant(0.0);
        cfg.check_descent = true;
    } else {
        const PresetRow* row = nullptr;
        for (const PresetRow& r : kPresets) {
            if (name == r.name) row = &r;
        }
        if (row == nullptr) {
            throw ConfigError("unknown preset '" + std::string(name) + "' (see list-presets)");
        }
        const ProblemSpec full = problem_dims(row->problem, Scale::Full);
        cfg.problem = problem_dims(row->problem, scale);
        const double lr = scale == Scale::Full ? row->lr : desk_lr(*row, full, cfg.problem);
        OptimizerConfig& o = cfg.optimizer;
        o.kind = row->optimizer;
        o.momentum = row->momentum;
        o.beta = row->beta;
        o.schedule = row->decay ? decay_schedule(row->problem, lr) : Schedule::constant(lr);
        o.polar.algorithm = row->polar;
        o.polar.inner_steps = row->inner_steps;
        o.polar.bounds = BoundsMode::Heuristic;
        o.polar.require_convergence = row->inner_steps == 0;
    }
    cfg.problem.seed = seed;
    cfg.total_steps = default_steps(cfg.problem.kind);
    cfg.name = std::string(name) + "/" + std::string(to_string(scale)) + "/seed" + std::to_string(seed);
    cfg.validate();
    return cfg;
}

std::string_view to_string(RunStatus status) {
    switch (status) {
        case RunStatus::Completed: return "completed";
        case RunStatus::Diverged: return "diverged";
        case RunStatus::NumericalFailure: return "numerical_failure";
    }
    return "unknown";
}

RunResult run_experiment(const RunConfig& cfg) {
    cfg.validate();
    const ProblemSpec& ps = cfg.problem;
    OptimizerConfig opt = cfg.optimizer;
    const auto start = std::chrono::steady_clock::now();
    auto elapsed_ms = [&] {
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    };

    // Problem instances live in optionals so the driver lambdas can capture them by reference.
    std::optional<QuadRegProblem> quad;
    std::optional<LogisticProblem> logistic;
    std::optional<CompletionProblem> completion;
    std::vector<OptimizerState> states;
    Driver d;
    std::optional<Rng> batch_rng;

    switch (ps.kind) {
        case ProblemKind::Quad: {
            quad.emplace(QuadRegProblem::make(ps.m, ps.n, ps.p, ps.q, ps.seed));
            const QuadRegProblem& p = *quad;
            if (opt.lr_rule != LrRule::Schedule && opt.lipschitz == 0.0) {
                opt.lipschitz = p.lipschitz();
            }
            d.params = {p.initial_point(ps.seed)};
            states.resize(1);
            d.loss = [&] { return p.loss(d.params[0]); };
            d.gap = [&] { return std::optional<double>(p.gap(d.params[0])); };
            d.full_grad = [&] { return p.grad(d.params[0]); };
            d.residual_cond = [&]() -> std::optional<double> {
                const Matrix e = p.residual(d.params[0]);
                if (frobenius_norm(e) == 0.0) return std::nullopt;
                return cond2(e, opt.polar.rank_tol);
            };
            d.step = [&] {
                const Matrix g = p.grad(d.params[0]);
                if (opt.kind == OptimizerKind::Newton) {
                    return newton_step_quadratic(d.params[0], g, p, opt, states[0]);
                }
                return optimizer_step(d.params[0], g, opt, states[0]);
            };
            d.next_lr = [&] {
                if (opt.lr_rule == LrRule::Schedule) return opt.schedule.value(states[0].step_count);
                return step_learning_rate(opt, states[0], p.grad(d.params[0]), nullptr);
            };
            break;
        }
        case ProblemKind::Logistic: {
            logistic.emplace(LogisticProblem::make(ps.m, ps.n, ps.samples, ps.q, ps.batch_size,
                                                   ps.seed, ps.plus_minus_labels));
            const LogisticProblem& p = *logistic;
            batch_rng.emplace(ps.seed, static_cast<std::uint64_t>(Stream::Batch));
            d.params = {p.initial_point(ps.seed)};
            states.resize(1);
            d.loss = [&] { return p.loss(d.params[0]); };
            d.gap = [] { return std::optional<double>(); };
            d.full_grad = [&] { return p.grad(d.params[0]); };
            d.residual_cond = [] { return std::optional<double>(); };
            d.step = [&] {
                const Matrix g = p.grad(d.params[0], p.sample_batch(*batch_rng));
                return optimizer_step(d.params[0], g, opt, states[0]);
            };
            d.next_lr = [&] { return opt.schedule.value(states[0].step_count); };
            break;
        }
        case ProblemKind::Completion: {
            completion.emplace(CompletionProblem::make(ps.m, ps.n, ps.rank, ps.seed, ps.observed_fraction));
            const CompletionProblem& p = *completion;
            auto [x0, y0] = p.initial_point(ps.seed);
            d.params = {std::move(x0), std::move(y0)};
            states.resize(2);
            d.loss = [&] { return p.loss(d.params[0], d.params[1]); };
            d.gap = [] { return std::optional<double>(); };
            d.full_grad = [&] {
                const CompletionGrads g = p.grads(d.params[0], d.params[1]);
                return vstack(g.gx, g.gy);
            };
            d.residual_cond = [] { return std::optional<double>(); };
            d.step = [&] {
                if (opt.kind == OptimizerKind::AltGd) {
                    return altgd_step(d.params[0], d.params[1], p, opt, states[0]);
                }
                const CompletionGrads g = p.grads(d.params[0], d.params[1]);
                // Step both factors or neither.
                Matrix x = d.params[0];
                Matrix y = d.params[1];
                OptimizerState sx = states[0];
                OptimizerState sy = states[1];
                const StepInfo info = optimizer_step(x, g.gx, opt, sx);
                optimizer_step(y, g.gy, opt, sy);
                d.params[0] = std::move(x);
                d.params[1] = std::move(y);
                states[0] = std::move(sx);
                states[1] = std::move(sy);
                return info;
            };
            d.next_lr = [&] { return opt.schedule.value(states[0].step_count); };
            break;
        }
    }
    try {
        opt.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }

    RunResult result;
    const double kappa_h = quad ? quad->kappa_hessian() : 0.0;

    auto make_record = [&](std::int64_t k, double loss) {
        TraceRecord r;
        r.step = k;
        r.loss = loss;
        r.gap = d.gap();
        if (k % cfg.cond_cadence == 0 || k == cfg.total_steps) {
            const GradMetrics gm = grad_metrics(d.full_grad(), opt.polar.rank_tol);
            r.grad_cond = gm.cond;
            r.grad_nuclear = gm.nuclear;
            r.residual_cond = d.residual_cond();
        }
        return r;
    };

    double loss = d.loss();
    result.initial_loss = loss;
    result.best_loss = loss;
    std::int64_t k = 0;
    for (;; ++k) {
        const bool log_now = k % cfg.cadence == 0 || k == cfg.total_steps;
        if (!std::isfinite(loss)) {
            TraceRecord r;
            r.step = k;
            r.loss = loss;
            r.lr = d.next_lr();
            r.wall_ms = elapsed_ms();
            result.trace.push_back(r);
            result.status = RunStatus::Diverged;
            result.message = "non-finite loss at step " + std::to_string(k);
            break;
        }
        std::optional<TraceRecord> record;
        if (log_now) record = make_record(k, loss);
        if (k == cfg.total_steps) {
            record->lr = d.next_lr();
            record->wall_ms = elapsed_ms();
            result.trace.push_back(*record);
            break;
        }

        const std::optional<double> gap_before = cfg.check_descent ? d.gap() : std::nullopt;
        StepInfo info;
        try {
            info = d.step();
        } catch (const NumericalError& e) {
            if (record) {
                record->lr = d.next_lr();
                record->wall_ms = elapsed_ms();
                result.trace.push_back(*record);
            }
            result.status = RunStatus::NumericalFailure;
            result.message = "step " + std::to_string(k) + ": " + e.what();
            break;
        }
        const double next_loss = all_finite(d.params) ? d.loss() : std::nan("");
        if (cfg.check_descent && std::isfinite(next_loss)) {
            const double r = static_cast<double>(std::max<std::size_t>(info.rank, 1));
            const double slack = 1e-10 * std::abs(loss);
            if (next_loss > loss - info.nu * info.nu / (2.0 * opt.lipschitz * r) + slack) {
                ++result.descent_violations;
            }
            const double contraction = 1.0 - 1.0 / (r * r * kappa_h);
            if (*d.gap() > contraction * *gap_before + slack) {
                ++result.rate_violations;
            }
        }
        if (record) {
            record->lr = info.lr;
            record->wall_ms = elapsed_ms();
            result.trace.push_back(*record);
        }
        loss = next_loss;
        if (std::isfinite(loss)) result.best_loss = std::min(result.best_loss, loss);
        result.steps_completed = k + 1;
    }
    result.final_loss = result.trace.empty() ? loss : result.trace.back().loss;
    result.final_gap = result.trace.empty() ? std::nullopt : result.trace.back().gap;
    result.wall_ms = elapsed_ms();
    return result;
}

void write_trace_csv(std::ostream& out, const std::vector<TraceRecord>& trace) {
    out << "# " << kTraceFormat << '\n' << kTraceColumns << '\n';
    for (const TraceRecord& r : trace) {
        out << r.step << ',' << format_double(r.loss) << ',' << format_optional(r.gap) << ','
            << format_optional(r.grad_cond) << ',' << format_optional(r.residual_cond) << ','
            << format_optional(r.grad_nuclear) << ',' << format_double(r.lr) << ','
            << format_double(r.wall_ms) << '\n';
    }
}

std::vector<TraceRecord> read_trace_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != std::string("# ") + kTraceFormat) {
        throw std::runtime_error("trace: expected header '# " + std::string(kTraceFormat) + "'");
    }
    if (!std::getline(in, line) || line != kTraceColumns) {
        throw std::runtime_error("trace: expected columns '" + std::string(kTraceColumns) + "'");
    }
    std::vector<TraceRecord> trace;
    int lineno = 2;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string_view> f;
        std::string_view rest = line;
        for (;;) {
            const auto comma = rest.find(',');
            f.push_back(rest.substr(0, comma));
            if (comma == std::string_view::npos) break;
            rest = rest.substr(comma + 1);
        }
        if (f.size() != 8) {
            throw std::runtime_error("trace line " + std::to_string(lineno) + ": expected 8 fields");
        }
        auto opt = [](std::string_view s) {
            return s.empty() ? std::nullopt : std::optional<double>(parse_double(s));
        };
        try {
            TraceRecord r;
            r.step = parse_int(f[0]);
            r.loss = parse_double(f[1]);
            r.gap = opt(f[2]);
            r.grad_cond = opt(f[3]);
            r.residual_cond = opt(f[4]);
            r.grad_nuclear = opt(f[5]);
            r.lr = parse_double(f[6]);
            r.wall_ms = parse_double(f[7]);
            if (!trace.empty() && r.step <= trace.back().step) {
                throw std::invalid_argument("steps must increase");
            }
            trace.push_back(r);
        } catch (const std::invalid_argument& e) {
            throw std::runtime_error("trace line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return trace;
}

void write_manifest(std::ostream& out, const RunConfig& cfg, const RunResult& result,
                    std::string_view trace_file) {
    auto line = [&](std::string_view k, const std::string& v) { out << k << " = " << v << '\n'; };
    line("format", kManifestFormat);
    line("artifact_version", std::string("polargrad ") + POLARGRAD_VERSION + "+" + POLARGRAD_REVISION);
    line("name", cfg.name);
    line("config_hash", config_hash(cfg));
    line("problem", std::string(to_string(cfg.problem.kind)));
    line("seed", std::to_string(cfg.problem.seed));
    line("generator", kGeneratorName);
    line("optimizer", std::string(to_string(cfg.optimizer.kind)));
    line("polar_algorithm", std::string(to_string(cfg.optimizer.polar.algorithm)));
    line("trace_file", std::string(trace_file));
    line("status", std::string(to_string(result.status)));
    line("diverged", result.status == RunStatus::Diverged ? "true" : "false");
    line("message", result.message);
    line("total_steps", std::to_string(cfg.total_steps));
    line("steps_completed", std::to_string(result.steps_completed));
    line("initial_loss", format_double(result.initial_loss));
    line("final_loss", format_double(result.final_loss));
    line("final_gap", format_optional(result.final_gap));
    line("best_loss", format_double(result.best_loss));
    if (cfg.check_descent) {
        line("descent_violations", std::to_string(result.descent_violations));
        line("rate_violations", std::to_string(result.rate_violations));
    }
    line("wall_ms", format_double(result.wall_ms));
    for (const auto& [k, v] : config_entries(cfg)) {
        line("config." + k, v);
    }
}

RunFiles run_file_paths(const std::filesystem::path& dir, std::string_view name) {
    const std::string base = sanitize(name);
    return {dir / (base + ".csv"), dir / (base + ".manifest")};
}

RunResult run_to_files(const RunConfig& cfg, const std::filesystem::path& dir) {
    const RunResult result = run_experiment(cfg);
    std::filesystem::create_directories(dir);
    const RunFiles files = run_file_paths(dir, cfg.name);
    std::ofstream trace(files.trace);
    write_trace_csv(trace, result.trace);
    std::ofstream manifest(files.manifest);
    write_manifest(manifest, cfg, result, files.trace.filename().string());
    if (!trace || !manifest) {
        throw std::runtime_error("cannot write run outputs to " + dir.string());
    }
    return result;
}

std::vector<RunResult> run_sweep(const std::vector<RunConfig>& configs,
                                 const std::filesystem::path& dir, unsigned threads) {
    std::vector<RunResult> results(configs.size());
    std::vector<std::exception_ptr> errors(configs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < configs.size(); i = next++) {
            try {
                results[i] = run_to_files(configs[i], dir);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const unsigned n = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(configs.size())));
    std::vector<std::thread> pool;
    for (unsigned t = 1; t < n; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    return results;
}

std::string_view to_string(TraceMetric metric) {
    switch (metric) {
        case TraceMetric::Loss: return "loss";
        case TraceMetric::Gap: return "gap";
        case TraceMetric::GradCond: return "grad_cond";
        case TraceMetric::GradNuclear: return "grad_nuclear";
    }
    return "unknown";
}

TraceMetric parse_trace_metric(std::string_view name) {
    for (auto m : {TraceMetric::Loss, TraceMetric::Gap, TraceMetric::GradCond, TraceMetric::GradNuclear}) {
        if (to_string(m) == name) return m;
    }
    throw std::invalid_argument("unknown metric '" + std::string(name) + "'");
}

namespace {

std::optional<double> metric_of(const TraceRecord& r, TraceMetric metric) {
    switch (metric) {
        case TraceMetric::Loss: return r.loss;
        case TraceMetric::Gap: return r.gap;
        case TraceMetric::GradCond: return r.grad_cond;
        case TraceMetric::GradNuclear: return r.grad_nuclear;
    }
    return std::nullopt;
}

double value_at(const std::vector<TraceRecord>& t, TraceMetric metric, std::int64_t horizon,
                const char* which) {
    for (const TraceRecord& r : t) {
        if (r.step == horizon) {
            if (const auto v = metric_of(r, metric)) return *v;
            break;
        }
    }
    throw std::invalid_argument(std::string("trace ") + which + " has no " +
                                std::string(to_string(metric)) + " at step " + std::to_string(horizon));
}

double log_area(const std::vector<TraceRecord>& t, const std::map<std::int64_t, bool>& shared,
                TraceMetric metric, std::int64_t horizon) {
    double area = 0.0;
    std::optional<std::pair<double, double>> prev;
    for (const TraceRecord& r : t) {
        if (r.step > horizon || !shared.count(r.step)) continue;
        const auto v = metric_of(r, metric);
        if (!v || !(*v > 0.0)) continue;
        const double x = static_cast<double>(r.step);
        const double y = std::log10(*v);
        if (prev) area += 0.5 * (x - prev->first) * (y + prev->second);
        prev = {x, y};
    }
    return area;
}

std::map<std::string, std::string> read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open manifest " + path.string());
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find(" = ");
        if (eq == std::string::npos) continue;
        kv[line.substr(0, eq)] = line.substr(eq + 3);
    }
    if (kv["format"] != kManifestFormat) {
        throw std::runtime_error(path.string() + " is not a " + kManifestFormat + " file");
    }
    return kv;
}

}  // namespace

CompareReport compare_traces(const std::vector<TraceRecord>& a, const std::vector<TraceRecord>& b,
                             TraceMetric metric, std::int64_t horizon) {
    CompareReport rep;
    rep.horizon = horizon;
    rep.value_a = value_at(a, metric, horizon, "a");
    rep.value_b = value_at(b, metric, horizon, "b");
    const double scale = std::max(std::abs(rep.value_a), std::abs(rep.value_b));
    if (std::abs(rep.value_a - rep.value_b) <= 1e-12 * scale) {
        rep.winner = 0;
    } else {
        rep.winner = rep.value_a < rep.value_b ? -1 : 1;
    }
    std::map<std::int64_t, bool> in_b;
    for (const TraceRecord& r : b) in_b[r.step] = true;
    std::map<std::int64_t, bool> shared;
    for (const TraceRecord& r : a) {
        if (in_b.count(r.step)) shared[r.step] = true;
    }
    const double area_a = log_area(a, shared, metric, horizon);
    const double area_b = log_area(b, shared, metric, horizon);
    rep.area_ratio = area_b != 0.0 ? area_a / area_b : (area_a == 0.0 ? 1.0 : INFINITY);
    return rep;
}

CompareReport compare_runs(const std::filesystem::path& manifest_a,
                           const std::filesystem::path& manifest_b, TraceMetric metric,
                           std::int64_t horizon) {
    const auto ma = read_manifest(manifest_a);
    const auto mb = read_manifest(manifest_b);
    for (const auto& [key, value] : ma) {
        if (key.rfind("config.problem", 0) == 0) {
            const auto it = mb.find(key);
            if (it == mb.end() || it->second != value) {
                throw std::invalid_argument("runs use different problem instances (" + key + ")");
            }
        }
    }
    auto load = [](const std::filesystem::path& manifest, const std::map<std::string, std::string>& kv) {
        const std::filesystem::path trace = manifest.parent_path() / kv.at("trace_file");
        std::ifstream in(trace);
        if (!in) throw std::runtime_error("cannot open trace " + trace.string());
        return read_trace_csv(in);
    };
    return compare_traces(load(manifest_a, ma), load(manifest_b, mb), metric, horizon);
}

}  // namespace polargrad
