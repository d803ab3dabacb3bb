#include "polargrad/checks.hpp"

#include <cstdio>

int main() {
    int failed = 0;
    polargrad::run_all_checks([&](const polargrad::CheckResult& r) {
        std::printf("%s %s: %s [%.1f s]\n", r.passed ? "PASS" : "FAIL", r.name.c_str(),
                    r.detail.c_str(), r.seconds);
        std::fflush(stdout);
        failed += r.passed ? 0 : 1;
    });
    std::printf("%d of %zu criteria failed\n", failed, polargrad::check_catalog().size());
    return failed == 0 ? 0 : 1;
}
