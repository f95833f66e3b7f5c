#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lhfglp/grad_check.hpp"

namespace lhfglp {

struct GradientCheck {
    std::string name;
    GradCheckReport report;
};

/// Finite-difference checks of every differentiable op, the sparse coding
/// layers, the losses, and the full forward-plus-loss of a micro model
/// (d_in = 5, C = 4, n_atoms = 2, L = 3, two bags of two instances).
/// Inputs are drawn from `seed` and kept away from kinks.
std::vector<GradientCheck> run_gradient_suite(std::uint64_t seed = 1, double eps = 1e-5,
                                              double tol = 1e-4);

}  // namespace lhfglp
