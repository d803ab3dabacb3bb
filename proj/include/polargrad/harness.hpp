#pragma once

// Experiment runner: run configuration, named presets, the training loop with its
// metric trace, and the CSV / manifest outputs.

#include "polargrad/optimizers.hpp"
#include "polargrad/problems.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace polargrad {

inline constexpr const char* kTraceFormat = "polargrad-trace v1";
inline constexpr const char* kManifestFormat = "polargrad-manifest v1";
inline constexpr const char* kTraceColumns =
    "step,loss,gap,grad_cond,residual_cond,grad_nuclear,lr,wall_ms";

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class ProblemKind { Quad, Logistic, Completion };
std::string_view to_string(ProblemKind kind);
ProblemKind parse_problem_kind(std::string_view name);

/// Dimensions by problem: quad uses (m, n, p, q); logistic (m, n, samples, q, batch_size);
/// completion (m, n, rank).
struct ProblemSpec {
    ProblemKind kind = ProblemKind::Quad;
    std::size_t m = 100;
    std::size_t n = 20;
    std::size_t p = 200;
    std::size_t q = 50;
    std::size_t samples = 2000;
    std::size_t batch_size = 200;
    std::size_t rank = 5;
    std::uint64_t seed = 0;
    bool plus_minus_labels = false;
    double observed_fraction = 0.3;

    void validate() const;
};

struct RunConfig {
    std::string name = "run";
    ProblemSpec problem;
    OptimizerConfig optimizer;
    std::int64_t total_steps = 1000;
    /// Loss, gap and lr are logged every `cadence` steps.
    std::int64_t cadence = 1;
    /// Condition numbers and nuclear norms (one SVD each) every `cond_cadence` steps.
    std::int64_t cond_cadence = 10;
    /// Quadratic problem with a rank-based learning rate: check the per-step descent and
    /// rate inequalities at every step and count violations.
    bool check_descent = false;

    void validate() const;
};

/// Flat `key = value` text, one entry per line; `#` starts a comment.
void write_config(std::ostream& out, const RunConfig& cfg);
std::string export_config(const RunConfig& cfg);
/// Unspecified keys keep their defaults. Throws ConfigError naming the line on any problem.
RunConfig parse_config(std::istream& in);
RunConfig load_config(const std::filesystem::path& path);

/// FNV-1a 64 of the exported config, as 16 hex digits.
std::string config_hash(const RunConfig& cfg);

enum class Scale { Desk, Full };
std::string_view to_string(Scale scale);
Scale parse_scale(std::string_view name);

std::vector<std::string> preset_names();
/// Throws ConfigError for an unknown name.
RunConfig preset(std::string_view name, Scale scale = Scale::Desk, std::uint64_t seed = 0);

struct TraceRecord {
    std::int64_t step = 0;
    double loss = 0.0;
    std::optional<double> gap;
    std::optional<double> grad_cond;
    std::optional<double> residual_cond;
    std::optional<double> grad_nuclear;
    double lr = 0.0;
    double wall_ms = 0.0;
};

enum class RunStatus { Completed, Diverged, NumericalFailure };
std::string_view to_string(RunStatus status);

struct RunResult {
    RunStatus status = RunStatus::Completed;
    std::string message;
    std::vector<TraceRecord> trace;
    std::int64_t steps_completed = 0;
    double initial_loss = 0.0;
    double final_loss = 0.0;
    std::optional<double> final_gap;
    double best_loss = 0.0;
    /// Only meaningful with check_descent.
    std::int64_t descent_violations = 0;
    std::int64_t rate_violations = 0;
    double wall_ms = 0.0;
};

/// Runs the training loop in memory. Config errors throw ConfigError; divergence and
/// polar failures end the run early and are reported in the result.
RunResult run_experiment(const RunConfig& cfg);

void write_trace_csv(std::ostream& out, const std::vector<TraceRecord>& trace);
/// Throws std::runtime_error on a schema mismatch.
std::vector<TraceRecord> read_trace_csv(std::istream& in);
void write_manifest(std::ostream& out, const RunConfig& cfg, const RunResult& result,
                    std::string_view trace_file);

struct RunFiles {
    std::filesystem::path trace;
    std::filesystem::path manifest;
};

/// `<dir>/<name>.csv` and `<dir>/<name>.manifest`; slashes and parentheses in the name are
/// replaced so presets map to flat file names.
RunFiles run_file_paths(const std::filesystem::path& dir, std::string_view name);
RunResult run_to_files(const RunConfig& cfg, const std::filesystem::path& dir);

/// Runs every config, up to `threads` at a time. Results are returned in input order.
std::vector<RunResult> run_sweep(const std::vector<RunConfig>& configs,
                                 const std::filesystem::path& dir, unsigned threads);

enum class TraceMetric { Loss, Gap, GradCond, GradNuclear };
std::string_view to_string(TraceMetric metric);
TraceMetric parse_trace_metric(std::string_view name);

struct CompareReport {
    std::int64_t horizon = 0;
    double value_a = 0.0;
    double value_b = 0.0;
    /// -1 if a is lower, 1 if b is lower, 0 for a tie within 1e-12 relative.
    int winner = 0;
    /// ∫ log10(metric_a) / ∫ log10(metric_b) over the shared steps up to the horizon,
    /// trapezoidal rule.
    double area_ratio = 0.0;
};

/// Both traces must contain a record at `horizon` with the metric present.
/// Throws std::invalid_argument otherwise.
CompareReport compare_traces(const std::vector<TraceRecord>& a, const std::vector<TraceRecord>& b,
                             TraceMetric metric, std::int64_t horizon);
/// Reads two manifests and their traces; rejects runs on different problem instances.
CompareReport compare_runs(const std::filesystem::path& manifest_a,
                           const std::filesystem::path& manifest_b, TraceMetric metric,
                           std::int64_t horizon);

}  // namespace polargrad
