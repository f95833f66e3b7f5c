#include "lhfglp/losses.hpp"

#include <cmath>
#include <string>

namespace lhfglp {

Tensor bag_estimate(const Tensor& probs) {
    const std::size_t r = probs.rows(), c = probs.cols();
    auto v = probs.data();
    for (std::size_t j = 0; j < c; ++j) {
        double total = 0.0;
        for (std::size_t i = 0; i < r; ++i) total += v[i * c + j];
        if (std::abs(total - 1.0) > 1e-6)
            throw std::invalid_argument("bag_estimate: column " + std::to_string(j) + " sums to " +
                                        std::to_string(total));
    }
    return mean_cols(probs);
}

Tensor proportion_loss(std::span<const double> target, const Tensor& estimate) {
    if (estimate.size() != target.size())
        throw ShapeError("proportion_loss: target of length " + std::to_string(target.size()) +
                         " vs estimate " + estimate.shape().str());
    std::vector<double> p(target.begin(), target.end());
    auto q = estimate.data();
    double loss = 0.0;
    for (std::size_t c = 0; c < p.size(); ++c) {
        if (p[c] == 0.0) continue;
        if (!(q[c] > 0.0))
            throw InfiniteLossError("proportion_loss: estimate for class " + std::to_string(c) +
                                    " is zero where the target is " + std::to_string(p[c]));
        loss -= p[c] * std::log(q[c]);
    }
    return Tensor::make_result({1, 1}, {loss}, {estimate}, [p](const Tensor& o) {
        const Tensor& est = o.parent(0);
        const double g = o.grad()[0];
        auto q = est.data();
        std::vector<double> gq(p.size(), 0.0);
        for (std::size_t c = 0; c < p.size(); ++c)
            if (p[c] != 0.0) gq[c] = -g * p[c] / q[c];
        est.accumulate_grad(gq);
    });
}

Tensor hierarchical_proportion_loss(const std::vector<std::vector<double>>& targets,
                                    const std::vector<Tensor>& estimates,
                                    std::span<const double> weights) {
    if (targets.empty()) throw std::invalid_argument("hierarchical_proportion_loss: no levels");
    if (estimates.size() != targets.size())
        throw std::invalid_argument("hierarchical_proportion_loss: " + std::to_string(targets.size()) +
                                    " target levels but " + std::to_string(estimates.size()) +
                                    " estimates");
    if (!weights.empty() && weights.size() != targets.size())
        throw std::invalid_argument("hierarchical_proportion_loss: weight count mismatch");
    Tensor total;
    for (std::size_t l = 0; l < targets.size(); ++l) {
        if (!estimates[l].defined())
            throw std::invalid_argument("hierarchical_proportion_loss: missing estimate for level " +
                                        std::to_string(l));
        Tensor term = proportion_loss(targets[l], estimates[l]);
        if (!weights.empty() && weights[l] != 1.0) term = scale(term, weights[l]);
        total = total.defined() ? add(total, term) : term;
    }
    return total;
}

double entropy(std::span<const double> p) {
    double h = 0.0;
    for (double v : p)
        if (v > 0.0) h -= v * std::log(v);
    return h;
}

}  // namespace lhfglp
