#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "lhfglp/hierarchy.hpp"
#include "lhfglp/sparse_coding.hpp"
#include "lhfglp/tensor.hpp"

namespace lhfglp {

enum class MaskActivation { kSparsemax, kSoftmax };

/// kBag: one mask per bag, from the level classifier applied to the mean
/// stage code. kInstance: each instance is masked by its own prediction.
enum class MaskPooling { kBag, kInstance };

std::string to_string(MaskActivation a);
MaskActivation parse_mask_activation(const std::string& s);
std::string to_string(MaskPooling p);
MaskPooling parse_mask_pooling(const std::string& s);

struct ModelConfig {
    std::size_t input_dim = 16;
    std::size_t hidden_dim = 128;
    std::size_t feature_dim = 64;
    std::size_t n_atoms = 4;
    std::size_t layers = 9;
    std::size_t lambda_hidden = 16;
    double initial_lambda = 0.1;
    bool dictionary = true;
    MaskActivation activation = MaskActivation::kSparsemax;
    MaskPooling pooling = MaskPooling::kInstance;
    /// Coarse-to-medium levels whose masks engage (and whose proportion loss
    /// is trained). Must be proper levels, i.e. below the fine level.
    std::vector<std::size_t> mask_levels = {0, 1};

    void validate(const Hierarchy& h) const;
};

/// tanh(W1 x + b1) followed by a linear map to the feature space.
struct FeatureExtractor {
    Tensor w1, b1, w2, b2;

    static FeatureExtractor random(std::size_t input_dim, std::size_t hidden, std::size_t out,
                                   std::mt19937_64& rng);
    Tensor operator()(const Tensor& x) const;
};

struct LevelClassifier {
    Tensor weight;  // sizes[l] x input
    Tensor bias;    // sizes[l] x 1

    static LevelClassifier random(std::size_t input, std::size_t classes, std::mt19937_64& rng);
    Tensor operator()(const Tensor& codes) const { return add_column(matmul(weight, codes), bias); }
};

struct NamedParameter {
    std::string name;
    Tensor tensor;
    bool decay;  // weight decay applies (matrices only)
};

struct ForwardResult {
    Tensor features;
    Tensor lambda;
    Tensor code;  // final code (or the features when the dictionary is off)
    std::vector<EncodeStage> stages;
    /// Per level, instance logits (sizes[l] x |B|). Undefined for levels that
    /// take no part in this configuration; the fine level is always defined.
    std::vector<Tensor> level_logits;
    /// Per level, the activation of the pooled-code classifier that built the
    /// mask. Empty for levels without a mask.
    std::vector<std::vector<double>> level_bag_probs;
};

class Model {
 public:
    static Model create(const ModelConfig& config, const Hierarchy& h, std::uint64_t seed);

    /// `bag` is input_dim x |B|, one instance per column.
    ForwardResult forward_bag(const Tensor& bag) const;
    /// Fine logits of a singleton bag.
    std::vector<double> instance_logits(std::span<const double> x) const;

    const ModelConfig& config() const { return config_; }
    const Hierarchy& hierarchy() const { return hierarchy_; }
    const MaskSchedule& schedule() const { return schedule_; }
    /// Levels that receive a proportion loss, ascending; always ends with the fine level.
    std::vector<std::size_t> supervised_levels() const;

    /// Stable order; handles share storage with the model.
    std::vector<NamedParameter> parameters() const;
    /// Restores dictionary invariants after a parameter update.
    void project(double min_mu = 1e-3);

    FeatureExtractor extractor;
    LambdaLearner lambda_learner;
    CategoryDictionary dictionary;
    std::vector<LevelClassifier> classifiers;  // one per level

 private:
    ModelConfig config_;
    Hierarchy hierarchy_;
    MaskSchedule schedule_;
};

/// Argmax of the fine logits on a singleton bag; ties go to the lower index.
std::size_t predict_instance(const Model& m, std::span<const double> x);

std::size_t argmax(std::span<const double> v);

}  // namespace lhfglp
