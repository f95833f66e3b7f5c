#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "lhfglp/hierarchy.hpp"

namespace lhfglp {

class ParseError : public std::runtime_error {
 public:
    ParseError(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}
    std::size_t offset() const { return offset_; }

 private:
    std::size_t offset_;
};

class DatasetError : public std::invalid_argument {
 public:
    using std::invalid_argument::invalid_argument;
};

enum class Split : std::uint8_t { kTrain = 0, kTest = 1 };

/// Instances with hidden fine labels. Features are row-major N x d_in;
/// labels are 0-based fine categories (1-based in files).
struct InstanceDataset {
    std::size_t dim = 0;
    std::vector<double> features;
    std::vector<std::size_t> labels;
    std::vector<Split> split;
    Hierarchy hierarchy;

    std::size_t size() const { return labels.size(); }
    std::span<const double> row(std::size_t i) const {
        return std::span<const double>(features).subspan(i * dim, dim);
    }
    std::vector<std::size_t> indices(Split which) const;

    /// Throws DatasetError if labels, rows or split break the invariants
    /// (finite features, every fine category in both splits).
    void validate() const;

    bool operator==(const InstanceDataset&) const = default;
};

struct SyntheticConfig {
    std::uint64_t seed = 7;
    /// Category counts coarse to fine; the last entry is C.
    std::vector<std::size_t> level_sizes{2, 4, 12};
    std::size_t n_per_class = 60;
    std::size_t dim = 16;
    double coarse_sep = 6.0;
    double fine_sep = 1.0;
    double noise_sigma = 0.5;
    double test_fraction = 0.3;
};

/// Hierarchical Gaussian clusters over a balanced tree. Coarse centroids
/// form a regular simplex with pairwise distance coarse_sep. Every finer
/// category sits at its parent's centroid plus an offset; sibling offsets
/// are the vertices of a randomly rotated regular simplex with norm
/// sep(level). sep is geometric between coarse_sep and fine_sep, so the
/// fine level uses exactly fine_sep. Instances add N(0, noise_sigma^2 I).
/// Stratified split: round(test_fraction * n_per_class) test instances
/// per class, clamped to [1, n_per_class - 1].
InstanceDataset generate_synthetic(const SyntheticConfig& config);

/// Offset norm used at `level`; level 0 returns coarse_sep, the pairwise
/// distance between coarse centroids.
double synthetic_level_separation(const SyntheticConfig& config, std::size_t level);

std::string serialize_dataset(const InstanceDataset& ds);
InstanceDataset parse_dataset(const std::string& text);
void save_dataset(const InstanceDataset& ds, const std::filesystem::path& path);
InstanceDataset load_dataset(const std::filesystem::path& path);

/// 64-bit FNV-1a of the serialized dataset.
std::uint64_t dataset_hash(const InstanceDataset& ds);
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed = 1469598103934665603ULL);
std::string hex64(std::uint64_t value);

/// Fine accuracy of a nearest-class-mean rule fit to the train split and
/// scored on the test split. Uses labels, so it is an evaluation oracle only.
double nearest_centroid_accuracy(const InstanceDataset& ds);

}  // namespace lhfglp
