#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lhfglp/bagging.hpp"
#include "lhfglp/dataset.hpp"
#include "lhfglp/losses.hpp"
#include "lhfglp/model.hpp"

namespace lhfglp {

class TrainingDivergence : public NumericalError {
 public:
    TrainingDivergence(const std::string& what, std::size_t epoch, std::size_t batch)
        : NumericalError(what), epoch_(epoch), batch_(batch) {}
    std::size_t epoch() const { return epoch_; }
    std::size_t batch() const { return batch_; }

 private:
    std::size_t epoch_, batch_;
};

class CheckpointError : public std::runtime_error {
 public:
    using std::runtime_error::runtime_error;
};

struct TrainConfig {
    ModelConfig model;
    double lr0 = 0.005;
    std::size_t epochs = 100;
    double weight_decay = 5e-4;
    double momentum = 0.9;
    std::size_t bags_per_batch = 4;
    std::uint64_t seed = 1;
    /// Per-level weights of the hierarchical loss; empty means all ones.
    std::vector<double> level_weights;

    void validate() const;
    /// Canonical `key = value` text; the config hash is computed over it.
    std::string to_text() const;
    std::uint64_t hash() const;
    /// Applies one setting; throws std::invalid_argument on an unknown key
    /// or a malformed value.
    void set(const std::string& key, const std::string& value);
    static std::vector<std::string> keys();
};

/// 0.5 * lr0 * (1 + cos(pi * t / epochs)), for 0 <= t <= epochs.
double cosine_lr(std::size_t t, std::size_t epochs, double lr0 = 0.005);
double cosine_lr(std::size_t t, const TrainConfig& config);

/// Hierarchical proportion loss of one bag over the model's supervised levels.
Tensor bag_loss(const Model& model, const TrainingBag& bag, std::span<const double> level_weights = {});

/// Heavy-ball SGD: v <- momentum * v + (g + wd * p), p <- p - lr * v, where
/// wd applies only to parameters flagged for decay.
class MomentumSgd {
 public:
    MomentumSgd(std::vector<NamedParameter> params, double momentum, double weight_decay);
    void step(double lr);
    void zero_grad();
    std::vector<std::vector<double>>& velocities() { return velocity_; }
    const std::vector<std::vector<double>>& velocities() const { return velocity_; }

 private:
    std::vector<NamedParameter> params_;
    std::vector<std::vector<double>> velocity_;
    double momentum_, weight_decay_;
};

struct EpochMetrics {
    std::size_t epoch = 0;  // 1-based: metrics after this many epochs
    double lr = 0.0;
    double train_loss = 0.0;
    std::vector<double> level_accuracy;  // test accuracy per level, coarse to fine

    bool operator==(const EpochMetrics&) const = default;
};

struct EvalReport {
    std::size_t total = 0;
    double fine_accuracy = 0.0;
    std::vector<double> level_accuracy;
    std::vector<std::vector<std::size_t>> confusion;  // [true][predicted], fine level
};

/// Accuracy table for given fine predictions against true fine labels.
EvalReport score_predictions(std::span<const std::size_t> predicted, std::span<const std::size_t> truth,
                             const Hierarchy& h);

/// Scores every instance of `split` with predict_instance. Per-level accuracy
/// compares the ancestor of the fine prediction with the true ancestor.
EvalReport evaluate(const Model& model, const InstanceDataset& ds, Split split = Split::kTest);

struct Checkpoint {
    std::string config_text;
    std::uint64_t config_hash = 0;
    std::uint64_t manifest_hash = 0;
    std::size_t epoch = 0;
    std::vector<std::string> names;
    std::vector<std::vector<double>> values;
    std::vector<std::vector<double>> velocities;
    std::vector<EpochMetrics> history;

    bool operator==(const Checkpoint&) const = default;
};

std::string serialize_checkpoint(const Checkpoint& c);
Checkpoint parse_checkpoint(const std::string& bytes);
void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Rebuilds a model from a checkpoint; the hierarchy and input size come from
/// the dataset it was trained on.
Model restore_model(const Checkpoint& c, const InstanceDataset& ds);

struct TrainResult {
    Model model;
    Checkpoint checkpoint;
};

/// Trains for config.epochs epochs, or continues `resume` up to that count.
/// `stop_after` ends the run early at that epoch; the checkpoint can be
/// resumed later and the result is identical to an uninterrupted run.
/// Throws CheckpointError when resuming under a different config hash.
TrainResult train(const InstanceDataset& ds, const BagManifest& manifest, const TrainConfig& config,
                  const Checkpoint* resume = nullptr,
                  std::optional<std::size_t> stop_after = std::nullopt);

std::string metrics_csv(const std::vector<EpochMetrics>& history, std::size_t levels);

struct AblationArm {
    std::string name;
    bool dictionary = true;
    std::vector<std::size_t> mask_levels;
    MaskActivation activation = MaskActivation::kSparsemax;
};

/// no-dict, dict-no-mask, dict+coarse, dict+medium, dict+both and the
/// softmax-masking variant, for a three-level hierarchy.
std::vector<AblationArm> standard_arms();

struct AblationRow {
    std::string name;
    std::vector<double> accuracy;  // fine test accuracy per seed
    double mean = 0.0;
    double stddev = 0.0;  // sample standard deviation
};

struct AblationTable {
    std::uint64_t manifest_hash = 0;
    std::vector<std::uint64_t> seeds;
    std::vector<AblationRow> rows;

    const AblationRow& row(const std::string& name) const;
    std::string to_text() const;
};

AblationTable run_ablation(const InstanceDataset& ds, const BagManifest& manifest,
                           const TrainConfig& base, const std::vector<AblationArm>& arms,
                           const std::vector<std::uint64_t>& seeds = {1, 2, 3});

}  // namespace lhfglp
