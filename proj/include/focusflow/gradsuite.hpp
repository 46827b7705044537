#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "focusflow/model.hpp"

namespace focusflow {

struct GradCase {
    std::string name;
    std::uint64_t seed = 0;
    double error = 0.0;
};

struct GradSuiteReport {
    std::vector<GradCase> cases;

    // Case with the largest relative error.
    const GradCase& worst() const;
};

// Small network used by the model case: 2 stages on 8x8 inputs.
ModelSpec grad_suite_model();

/// Finite-difference check of every differentiable op and of the full
/// model + mix loss, for seeds first_seed .. first_seed+seeds-1.
GradSuiteReport run_grad_suite(std::uint64_t first_seed, int seeds, double eps = 1e-3);

}  // namespace focusflow
