#pragma once

#include <span>
#include <stdexcept>
#include <vector>

#include "lhfglp/tensor.hpp"

namespace lhfglp {

class InfiniteLossError : public NumericalError {
 public:
    using NumericalError::NumericalError;
};

/// Row mean of a C x |B| matrix of per-instance probabilities. Throws
/// std::invalid_argument if a column does not sum to 1 within 1e-6.
Tensor bag_estimate(const Tensor& instance_probs);

/// -sum_c p_c log(phat_c), skipping p_c = 0 terms. `estimate` is C x 1.
/// Throws InfiniteLossError if phat_c = 0 where p_c > 0.
Tensor proportion_loss(std::span<const double> target, const Tensor& estimate);

/// Sum over levels of proportion_loss. `weights` defaults to all ones.
/// Throws std::invalid_argument on a missing/undefined level estimate.
Tensor hierarchical_proportion_loss(const std::vector<std::vector<double>>& targets,
                                    const std::vector<Tensor>& estimates,
                                    std::span<const double> weights = {});

double entropy(std::span<const double> p);

}  // namespace lhfglp
