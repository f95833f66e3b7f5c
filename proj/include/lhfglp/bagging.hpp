#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "lhfglp/dataset.hpp"
#include "lhfglp/tensor.hpp"

namespace lhfglp {

class StaleManifestError : public std::runtime_error {
 public:
    using std::runtime_error::runtime_error;
};

class BaggingError : public std::invalid_argument {
 public:
    using std::invalid_argument::invalid_argument;
};

struct Bag {
    std::vector<std::size_t> instance_ids;
    /// proportions[level] is a probability vector over hierarchy.size(level).
    std::vector<std::vector<double>> proportions;

    bool operator==(const Bag&) const = default;
};

struct BagManifest {
    std::string dataset_path;
    std::uint64_t dataset_hash = 0;
    std::size_t bag_size = 10;
    std::size_t dropped = 0;
    std::vector<Bag> bags;

    bool operator==(const BagManifest&) const = default;
};

inline constexpr std::size_t kDefaultBagSize = 10;

/// Shuffles the train split with a seeded uniform permutation and chunks it
/// into disjoint bags of exactly bag_size; the N mod bag_size leftovers are
/// dropped and counted. Proportions are stored for every hierarchy level.
BagManifest make_bags(const InstanceDataset& ds, std::size_t bag_size, std::uint64_t seed);

struct ManifestViolation {
    enum class Kind {
        kBagSize,
        kInstanceRange,
        kTestInstance,
        kDisjointness,
        kLevelCount,
        kSimplex,
        kGranularity,
        kCoarsening,
        kLabelMismatch,
        kDroppedCount,
    };
    Kind kind;
    std::size_t bag = 0;
    std::size_t other_bag = 0;
    std::string message;
};

struct ManifestReport {
    std::vector<ManifestViolation> violations;
    bool ok() const { return violations.empty(); }
    std::size_t count(ManifestViolation::Kind kind) const;
};

/// Checks every Bag / BagManifest invariant against `ds`. Throws
/// StaleManifestError when the dataset hash does not match.
ManifestReport validate_manifest(const BagManifest& manifest, const InstanceDataset& ds);

std::string serialize_manifest(const BagManifest& manifest);
BagManifest parse_manifest(const std::string& text);
void save_manifest(const BagManifest& manifest, const std::filesystem::path& path);
BagManifest load_manifest(const std::filesystem::path& path);
std::uint64_t manifest_hash(const BagManifest& manifest);

/// What the trainer sees for a bag: a d_in x |B| feature matrix (one column
/// per instance) and the per-level proportions. Labels are not reachable
/// from this type.
struct TrainingBag {
    Tensor features;
    std::vector<std::vector<double>> proportions;
};

std::vector<TrainingBag> training_bags(const BagManifest& manifest, const InstanceDataset& ds);

/// Stacks dataset rows into a d_in x ids.size() column matrix.
Tensor feature_columns(const InstanceDataset& ds, std::span<const std::size_t> ids);

}  // namespace lhfglp
