#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace lhfglp {

class HierarchyError : public std::invalid_argument {
 public:
    using std::invalid_argument::invalid_argument;
};

/// Category tree ordered coarse to fine. Levels are 0-based: level 0 is the
/// coarsest, level levels()-1 holds the C fine categories.
class Hierarchy {
 public:
    Hierarchy() = default;

    /// `parent_maps[l - 1][c]` is the level-(l-1) parent of level-l category
    /// c, for l = 1 .. sizes.size()-1. Each map must be surjective.
    Hierarchy(std::vector<std::size_t> sizes, std::vector<std::vector<std::size_t>> parent_maps);

    /// Balanced contiguous tree: category c at level l has parent
    /// floor(c * sizes[l-1] / sizes[l]).
    static Hierarchy balanced(std::vector<std::size_t> sizes);

    /// Single-level tree over C categories.
    static Hierarchy flat(std::size_t categories);

    std::size_t levels() const { return sizes_.size(); }
    std::size_t fine_level() const { return sizes_.size() - 1; }
    std::size_t size(std::size_t level) const;
    std::size_t fine_count() const { return sizes_.back(); }
    const std::vector<std::size_t>& sizes() const { return sizes_; }
    /// Map from level `level` (>= 1) categories to level `level - 1`.
    const std::vector<std::size_t>& parent_map(std::size_t level) const;
    const std::vector<std::vector<std::size_t>>& parent_maps() const { return parent_maps_; }

    std::size_t ancestor(std::size_t fine_category, std::size_t level) const;

    /// Sums fine-level mass into level `level`. Works for any nonnegative
    /// vector; mass is conserved.
    std::vector<double> coarsen(std::span<const double> fine_values, std::size_t level) const;

    /// coarsen() with validation that the input is a probability vector
    /// (entries >= 0, sum within 1e-9 of 1).
    std::vector<double> coarsen_proportions(std::span<const double> p_fine,
                                            std::size_t level) const;

    bool operator==(const Hierarchy&) const = default;

 private:
    std::vector<std::size_t> sizes_;
    std::vector<std::vector<std::size_t>> parent_maps_;
    // ancestors_[level][fine]
    std::vector<std::vector<std::size_t>> ancestors_;
};

}  // namespace lhfglp
