#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "lhfglp/tensor.hpp"

namespace lhfglp {

struct GradCheckReport {
    double max_rel_err = 0.0;
    bool pass = true;
    std::size_t checked = 0;
    // Coordinates skipped because the one-sided differences disagree,
    // i.e. a kink lies within eps of the point.
    std::size_t excluded = 0;
    // Parameter and coordinate holding max_rel_err.
    std::size_t worst_param = 0;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;

    std::string summary() const;
};

/// Compares reverse-mode gradients of the scalar `f()` with respect to each
/// tensor in `params` against central differences. The parameters are
/// perturbed in place and restored. Relative error is used where
/// |analytic| >= 1e-8, absolute error otherwise.
///
/// Throws NumericalError if any evaluation of f is non-finite.
GradCheckReport grad_check(const std::function<Tensor()>& f, std::span<Tensor> params,
                           double eps = 1e-5, double tol = 1e-4);

/// Single-input form: `f` receives a leaf copy of `x` with requires_grad.
GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                           double eps = 1e-5, double tol = 1e-4);

}  // namespace lhfglp
