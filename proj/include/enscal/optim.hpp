#pragma once

#include <functional>
#include <vector>

namespace enscal {

// Objective: fills `grad` (same size as x) and returns the value.
using Objective = std::function<double(const std::vector<double>&, std::vector<double>&)>;

struct OptimResult {
    std::vector<double> x;
    double value = 0.0;
    int iterations = 0;
    bool converged = false;
};

// Quasi-Newton (BFGS, dense inverse-Hessian) with Armijo backtracking.
// Deterministic; suitable for the low-dimensional fits used here.
OptimResult minimize_bfgs(const Objective& f, std::vector<double> x0, int max_iterations = 300,
                          double grad_tol = 1e-8);

}  // namespace enscal
