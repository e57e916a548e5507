// Runs acceptance criteria 1-9 and prints one line per criterion.
#include <cstdio>

#include "analogia/continual.hpp"
#include "analogia/verify.hpp"

int main() {
    analogia::VerifyOptions opts;
    opts.workers = analogia::default_workers();
    opts.on_result = [](const analogia::CriterionResult& r) {
        std::printf("%s\n", analogia::format_result(r).c_str());
        std::fflush(stdout);
    };
    bool ok = true;
    for (const auto& r : analogia::run_acceptance(opts)) ok = ok && (r.passed || r.skipped);
    std::printf("acceptance: %s\n", ok ? "all criteria passed" : "FAILED");
    return ok ? 0 : 1;
}
