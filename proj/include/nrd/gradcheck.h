#pragma once

#include <string>
#include <vector>

namespace nrd {

// Central finite-difference verification at real64: step 1e-5, 20 random
// trials per op, relative tolerance 1e-4 (1e-6 for ReLU probed off the kink).
// Deterministically seeded, so a passing build stays passing.
struct GradCheckResult {
    std::string op;
    int trials = 0;
    double max_rel_err = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

std::vector<std::string> gradcheck_op_names();

// which = "all" or one op name.
std::vector<GradCheckResult> run_gradcheck(const std::string& which);

bool gradcheck_passed(const std::vector<GradCheckResult>& results);

} // namespace nrd
