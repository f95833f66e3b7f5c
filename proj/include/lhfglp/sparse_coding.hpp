#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "lhfglp/hierarchy.hpp"
#include "lhfglp/tensor.hpp"

namespace lhfglp {

class DivergenceError : public NumericalError {
 public:
    DivergenceError(const std::string& what, std::size_t layer)
        : NumericalError(what), layer_(layer) {}
    /// 1-based unrolled layer (or iteration) where values stopped being finite.
    std::size_t layer() const { return layer_; }

 private:
    std::size_t layer_;
};

class StepsizeError : public NumericalError {
 public:
    using NumericalError::NumericalError;
};

/// sign(x) * max(|x| - lambda, 0), elementwise. `lambda` is 1 x 1 and
/// receives -sum(g * sign(x)) over the active set. Throws
/// std::invalid_argument for negative lambda.
Tensor soft_threshold(const Tensor& x, const Tensor& lambda);
Tensor soft_threshold(const Tensor& x, double lambda);

/// Euclidean projection onto the probability simplex. Entries outside the
/// support are exact zeros. Throws DomainError on non-finite input.
std::vector<double> sparsemax(std::span<const double> logits);

/// Column-wise sparsemax with the support-restricted Jacobian
/// diag(s) - s s^T / |S|.
Tensor sparsemax_cols(const Tensor& logits);

/// 0/1 mask over the C * n_atoms dictionary columns: 1 for every atom of a
/// fine category whose level-`level` ancestor has positive probability.
std::vector<double> build_mask(std::span<const double> level_probs, const Hierarchy& h,
                               std::size_t level, std::size_t n_atoms);

/// D = [D_1 ... D_C] with n_atoms unit-norm columns per fine category, and
/// the learnable stepsize mu (1 x 1).
struct CategoryDictionary {
    Tensor atoms;
    Tensor mu;
    std::size_t categories = 0;
    std::size_t n_atoms = 0;

    /// Unit-normalized Gaussian columns; mu starts at the spectral norm of
    /// D^T D (100 power iterations).
    static CategoryDictionary random(std::size_t feature_dim, std::size_t categories,
                                     std::size_t n_atoms, std::mt19937_64& rng);
    static CategoryDictionary from(Tensor atoms, double mu, std::size_t categories,
                                   std::size_t n_atoms);

    std::size_t columns() const { return categories * n_atoms; }
    std::size_t feature_dim() const { return atoms.rows(); }
    /// Half-open column range [first, last) of category c's block.
    std::pair<std::size_t, std::size_t> block(std::size_t c) const {
        return {c * n_atoms, (c + 1) * n_atoms};
    }
    void renormalize_columns();
};

/// Largest eigenvalue of D^T D by power iteration.
double gram_spectral_norm(const Tensor& atoms, std::size_t iterations = 100);

/// Per unrolled layer, the hierarchy level whose mask is active from that
/// layer on (nullopt: unmasked). Levels must be nondecreasing.
class MaskSchedule {
 public:
    MaskSchedule() = default;
    explicit MaskSchedule(std::vector<std::optional<std::size_t>> per_layer);

    /// `layers` layers with no masking.
    static MaskSchedule unmasked(std::size_t layers);
    /// Layers split into equal consecutive groups: the first group is
    /// unmasked and each later group is assigned the next of `mask_levels`.
    /// With 9 layers and levels {0, 1}: 1-3 unmasked, 4-6 level 0, 7-9 level 1.
    /// An empty `mask_levels` gives an unmasked schedule.
    static MaskSchedule progressive(std::size_t layers, const std::vector<std::size_t>& mask_levels);
    /// Like progressive() over `all_levels`, but only levels in `enabled`
    /// switch on; a disabled level's layers keep the previous mask.
    static MaskSchedule progressive_subset(std::size_t layers,
                                           const std::vector<std::size_t>& all_levels,
                                           const std::vector<std::size_t>& enabled);

    std::size_t layers() const { return per_layer_.size(); }
    std::optional<std::size_t> level_at(std::size_t layer) const { return per_layer_.at(layer); }
    /// Layers (0-based) where the active level changes to a new level.
    std::vector<std::size_t> transitions() const;
    std::vector<std::size_t> masked_levels() const;
    const std::vector<std::optional<std::size_t>>& per_layer() const { return per_layer_; }

    bool operator==(const MaskSchedule&) const = default;

 private:
    std::vector<std::optional<std::size_t>> per_layer_;
};

struct EncodeStage {
    std::size_t layer = 0;  // 0-based layer at which the level's mask engages
    std::size_t level = 0;
    Tensor code;            // code entering that layer
    std::vector<double> mask;
};

struct EncodeResult {
    Tensor code;
    std::vector<EncodeStage> stages;
};

/// Returns the mask for `level` given the stage code entering the
/// transition layer: either C * n_atoms entries shared by the whole bag, or
/// one entry per code element (row-major atoms x instances).
using MaskProvider = std::function<std::vector<double>(std::size_t level, const Tensor& stage_code)>;

/// Unrolled proximal layers. For each layer t the dictionary is masked by the
/// schedule's active level (D_t = D M with M = diag(mask), M = I when
/// unmasked), then
///   W_t = M - D_t^T D_t / mu,  W_e = D_t^T / mu,
///   Z <- S_{lambda / mu}(W_t Z + W_e F),
/// starting from Z = 0. A per-instance mask applies its own M to each column.
/// Differentiable in features, D, mu and lambda.
/// Throws DivergenceError naming the layer on non-finite codes.
EncodeResult unrolled_encode(const Tensor& features, const CategoryDictionary& dict,
                             const Tensor& lambda, const MaskSchedule& schedule,
                             const MaskProvider& masks);

/// Same, with masks fixed in advance per level.
EncodeResult unrolled_encode(const Tensor& features, const CategoryDictionary& dict,
                             const Tensor& lambda, const MaskSchedule& schedule,
                             const std::map<std::size_t, std::vector<double>>& masks = {});

struct IstaResult {
    std::vector<double> code;        // row-major atoms x instances
    std::vector<double> objective;   // after each iteration
};

/// Reference ISTA on 0.5 ||F - D Z||^2 + lambda ||Z||_1 with D fixed, on plain
/// arrays (gradient form Z - D^T (D Z - F) / mu). Matrices are row-major:
/// F is d x n, D is d x k. Throws StepsizeError when the objective rises by
/// more than 1e-10 relative, which signals mu below the Lipschitz constant.
IstaResult ista_oracle(std::span<const double> features, std::size_t dim, std::size_t instances,
                       std::span<const double> dictionary, std::size_t atoms, double lambda,
                       double mu, std::size_t iterations);

double lasso_objective(std::span<const double> features, std::size_t dim, std::size_t instances,
                       std::span<const double> dictionary, std::size_t atoms,
                       std::span<const double> code, double lambda);

/// Per-bag sparsity strength: softplus(w2 . tanh(W1 mean(F) + b1) + b2).
struct LambdaLearner {
    Tensor w1;
    Tensor b1;
    Tensor w2;
    Tensor b2;

    static LambdaLearner random(std::size_t feature_dim, std::size_t hidden, double initial_lambda,
                                std::mt19937_64& rng);
    static LambdaLearner zeros(std::size_t feature_dim, std::size_t hidden);

    /// Returns a 1 x 1 tensor, strictly positive.
    Tensor operator()(const Tensor& features) const;
};

}  // namespace lhfglp
