#pragma once

// Numerical acceptance checks shared by `polargrad verify` and the acceptance binary.

#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace polargrad {

enum class CheckSuite { Polar, Theorems, Gradients, Orderings };
std::string_view to_string(CheckSuite suite);
CheckSuite parse_check_suite(std::string_view name);

struct CheckResult {
    std::string name;
    CheckSuite suite = CheckSuite::Polar;
    bool passed = false;
    std::string detail;
    double seconds = 0.0;
};

struct CheckInfo {
    std::string name;
    CheckSuite suite;
    std::string summary;
};

std::vector<CheckInfo> check_catalog();

/// Throws std::invalid_argument for an unknown name. Exceptions inside a check become a failure.
CheckResult run_check(std::string_view name);

/// Runs the checks of one suite in catalog order; `on_result` sees each result as it finishes.
std::vector<CheckResult> run_suite(CheckSuite suite,
                                   const std::function<void(const CheckResult&)>& on_result = {});
std::vector<CheckResult> run_all_checks(
    const std::function<void(const CheckResult&)>& on_result = {});

}  // namespace polargrad
