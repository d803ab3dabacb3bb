// polargrad: run experiments, sweeps and numerical checks from the command line.
//
// Exit codes: 0 success, 2 usage or config error, 3 diverged run, 4 numerical failure,
// 5 failed verification, 6 I/O or trace-format error.

#include "polargrad/checks.hpp"
#include "polargrad/harness.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace fs = std::filesystem;
using namespace polargrad;

namespace {

enum Exit : int {
    kOk = 0,
    kConfigError = 2,
    kDiverged = 3,
    kNumericalFailure = 4,
    kVerifyFailed = 5,
    kIoError = 6,
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

int exit_code(RunStatus status) {
    switch (status) {
        case RunStatus::Completed: return kOk;
        case RunStatus::Diverged: return kDiverged;
        case RunStatus::NumericalFailure: return kNumericalFailure;
    }
    return kNumericalFailure;
}

void print_result(const RunConfig& cfg, const RunResult& r, const fs::path& dir) {
    std::printf("%s: %s after %lld steps, final loss %.6g", cfg.name.c_str(),
                std::string(to_string(r.status)).c_str(), static_cast<long long>(r.steps_completed),
                r.final_loss);
    if (r.final_gap) std::printf(", gap %.6g", *r.final_gap);
    std::printf(" (%.0f ms)\n", r.wall_ms);
    if (!r.message.empty()) std::printf("  %s\n", r.message.c_str());
    if (cfg.check_descent) {
        std::printf("  descent violations %lld, rate violations %lld\n",
                    static_cast<long long>(r.descent_violations),
                    static_cast<long long>(r.rate_violations));
    }
    const RunFiles files = run_file_paths(dir, cfg.name);
    std::printf("  %s\n  %s\n", files.trace.string().c_str(), files.manifest.string().c_str());
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

struct RunArgs {
    std::string preset_name;
    std::string config_file;
    std::string scale = "desk";
    std::uint64_t seed = 0;
    std::optional<std::int64_t> steps;
    std::string out = "runs";
};

RunConfig resolve(const RunArgs& a) {
    RunConfig cfg = a.config_file.empty() ? preset(a.preset_name, parse_scale(a.scale), a.seed)
                                          : load_config(a.config_file);
    if (a.steps) cfg.total_steps = *a.steps;
    cfg.validate();
    return cfg;
}

int cmd_run(const RunArgs& a) {
    const RunConfig cfg = resolve(a);
    ensure_dir(a.out);
    const RunResult r = run_to_files(cfg, a.out);
    print_result(cfg, r, a.out);
    return exit_code(r.status);
}

int cmd_sweep(const std::string& dir, const std::string& out, unsigned threads) {
    if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir);
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".cfg") {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw ConfigError("no .cfg files in " + dir);
    std::vector<RunConfig> configs;
    for (const fs::path& f : files) configs.push_back(load_config(f));
    ensure_dir(out);
    const auto results = run_sweep(configs, out, threads);
    int worst = kOk;
    for (std::size_t i = 0; i < configs.size(); ++i) {
        print_result(configs[i], results[i], out);
        worst = std::max(worst, exit_code(results[i].status));
    }
    return worst;
}

int cmd_verify(const std::string& suite) {
    int failed = 0;
    auto show = [&](const CheckResult& r) {
        std::printf("%s %s: %s [%.1f s]\n", r.passed ? "PASS" : "FAIL", r.name.c_str(),
                    r.detail.c_str(), r.seconds);
        std::fflush(stdout);
        failed += r.passed ? 0 : 1;
    };
    if (suite == "all") {
        run_all_checks(show);
    } else {
        CheckSuite s;
        try {
            s = parse_check_suite(suite);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
        run_suite(s, show);
    }
    return failed == 0 ? kOk : kVerifyFailed;
}

int cmd_list_presets() {
    for (const std::string& name : preset_names()) {
        const RunConfig cfg = preset(name);
        std::printf("%-44s %-10s %s\n", name.c_str(), std::string(to_string(cfg.problem.kind)).c_str(),
                    std::string(to_string(cfg.optimizer.kind)).c_str());
    }
    return kOk;
}

int cmd_export(const RunArgs& a, bool all, const std::vector<std::uint64_t>& seeds,
               const std::string& dir) {
    if (!all) {
        const RunConfig cfg = resolve(a);
        if (dir.empty()) {
            write_config(std::cout, cfg);
            return kOk;
        }
        ensure_dir(dir);
        const fs::path path = run_file_paths(dir, cfg.name).trace.replace_extension(".cfg");
        std::ofstream out(path);
        write_config(out, cfg);
        if (!out) throw IoError("cannot write " + path.string());
        std::printf("%s\n", path.string().c_str());
        return kOk;
    }
    if (dir.empty()) throw ConfigError("export --all needs --dir");
    ensure_dir(dir);
    const Scale scale = parse_scale(a.scale);
    int written = 0;
    for (const std::string& name : preset_names()) {
        for (std::uint64_t seed : seeds) {
            RunConfig cfg = preset(name, scale, seed);
            if (a.steps) cfg.total_steps = *a.steps;
            const fs::path path = run_file_paths(dir, cfg.name).trace.replace_extension(".cfg");
            std::ofstream out(path);
            write_config(out, cfg);
            if (!out) throw IoError("cannot write " + path.string());
            ++written;
        }
    }
    std::printf("wrote %d configs to %s\n", written, dir.c_str());
    return kOk;
}

int cmd_compare(const std::string& a, const std::string& b, const std::string& metric,
                std::int64_t horizon) {
    TraceMetric m;
    try {
        m = parse_trace_metric(metric);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    const CompareReport rep = compare_runs(a, b, m, horizon);
    const char* verdict = rep.winner < 0 ? "a" : rep.winner > 0 ? "b" : "tie";
    std::printf("metric %s at step %lld: a = %.17g, b = %.17g, lower: %s\n", metric.c_str(),
                static_cast<long long>(rep.horizon), rep.value_a, rep.value_b, verdict);
    std::printf("log-area ratio a/b: %.6g\n", rep.area_ratio);
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Polar-decomposition optimizers on matrix problems"};
    app.require_subcommand(1);

    RunArgs run_args;
    CLI::App* run = app.add_subcommand("run", "Run one preset or config file");
    auto* run_preset = run->add_option("--preset", run_args.preset_name, "Preset name");
    auto* run_config = run->add_option("--config", run_args.config_file, "Config file");
    run_preset->excludes(run_config);
    run->add_option("--scale", run_args.scale, "Preset scale")
        ->check(CLI::IsMember({"desk", "full"}));
    run->add_option("--seed", run_args.seed, "Preset seed");
    run->add_option("--steps", run_args.steps, "Override total steps")->check(CLI::PositiveNumber);
    run->add_option("--out", run_args.out, "Output directory");

    std::string sweep_dir;
    std::string sweep_out = "runs";
    unsigned sweep_threads = std::max(1u, std::thread::hardware_concurrency());
    CLI::App* sweep = app.add_subcommand("sweep", "Run every .cfg file in a directory");
    sweep->add_option("--dir", sweep_dir, "Directory of config files")->required();
    sweep->add_option("--out", sweep_out, "Output directory");
    sweep->add_option("--threads", sweep_threads, "Concurrent runs")->check(CLI::PositiveNumber);

    std::string suite = "all";
    CLI::App* verify = app.add_subcommand("verify", "Run numerical acceptance checks");
    verify->add_option("--suite", suite, "theorems, polar, gradients, orderings or all");

    CLI::App* list = app.add_subcommand("list-presets", "List preset names");

    RunArgs export_args;
    bool export_all = false;
    std::vector<std::uint64_t> export_seeds{0, 1, 2};
    std::string export_dir;
    CLI::App* exp = app.add_subcommand("export", "Write presets as config files");
    auto* exp_preset = exp->add_option("--preset", export_args.preset_name, "Preset name");
    auto* exp_all = exp->add_flag("--all", export_all, "Every preset for each of --seeds");
    exp_preset->excludes(exp_all);
    exp->add_option("--scale", export_args.scale, "Preset scale")
        ->check(CLI::IsMember({"desk", "full"}));
    exp->add_option("--seed", export_args.seed, "Seed for a single preset");
    exp->add_option("--seeds", export_seeds, "Seeds for --all");
    exp->add_option("--steps", export_args.steps, "Override total steps")->check(CLI::PositiveNumber);
    exp->add_option("--dir", export_dir, "Output directory (stdout for a single preset if omitted)");

    std::string cmp_a;
    std::string cmp_b;
    std::string cmp_metric = "gap";
    std::int64_t cmp_horizon = 0;
    CLI::App* cmp = app.add_subcommand("compare", "Compare two runs at a horizon");
    cmp->add_option("a", cmp_a, "First manifest")->required();
    cmp->add_option("b", cmp_b, "Second manifest")->required();
    cmp->add_option("--metric", cmp_metric, "loss, gap, grad_cond or grad_nuclear");
    cmp->add_option("--horizon", cmp_horizon, "Step to compare at")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfigError;
    }

    try {
        if (*run) {
            if (run_args.preset_name.empty() && run_args.config_file.empty()) {
                throw ConfigError("run needs --preset or --config");
            }
            return cmd_run(run_args);
        }
        if (*sweep) return cmd_sweep(sweep_dir, sweep_out, sweep_threads);
        if (*verify) return cmd_verify(suite);
        if (*list) return cmd_list_presets();
        if (*exp) {
            if (!export_all && export_args.preset_name.empty()) {
                throw ConfigError("export needs --preset or --all");
            }
            return cmd_export(export_args, export_all, export_seeds, export_dir);
        }
        if (*cmp) return cmd_compare(cmp_a, cmp_b, cmp_metric, cmp_horizon);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kConfigError;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kConfigError;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kIoError;
    }
    return kOk;
}
