#include "lhfglp/hierarchy.hpp"

#include <cmath>
#include <string>

namespace lhfglp {

Hierarchy::Hierarchy(std::vector<std::size_t> sizes,
                     std::vector<std::vector<std::size_t>> parent_maps)
    : sizes_(std::move(sizes)), parent_maps_(std::move(parent_maps)) {
    if (sizes_.empty()) throw HierarchyError("hierarchy needs at least one level");
    if (parent_maps_.size() + 1 != sizes_.size())
        throw HierarchyError("hierarchy with " + std::to_string(sizes_.size()) + " levels needs " +
                             std::to_string(sizes_.size() - 1) + " parent maps, got " +
                             std::to_string(parent_maps_.size()));
    for (std::size_t l = 0; l < sizes_.size(); ++l) {
        if (sizes_[l] == 0) throw HierarchyError("level " + std::to_string(l) + " is empty");
        if (l > 0 && sizes_[l - 1] > sizes_[l])
            throw HierarchyError("level " + std::to_string(l - 1) + " has more categories than level " +
                                 std::to_string(l));
    }
    for (std::size_t l = 1; l < sizes_.size(); ++l) {
        const auto& map = parent_maps_[l - 1];
        if (map.size() != sizes_[l])
            throw HierarchyError("parent map for level " + std::to_string(l) + " has " +
                                 std::to_string(map.size()) + " entries, expected " +
                                 std::to_string(sizes_[l]));
        std::vector<bool> hit(sizes_[l - 1], false);
        for (std::size_t parent : map) {
            if (parent >= sizes_[l - 1])
                throw HierarchyError("parent index " + std::to_string(parent) +
                                     " out of range at level " + std::to_string(l));
            hit[parent] = true;
        }
        for (std::size_t p = 0; p < hit.size(); ++p)
            if (!hit[p])
                throw HierarchyError("category " + std::to_string(p) + " at level " +
                                     std::to_string(l - 1) + " has no children");
    }

    const std::size_t fine = sizes_.size() - 1;
    ancestors_.assign(sizes_.size(), {});
    ancestors_[fine].resize(sizes_[fine]);
    for (std::size_t c = 0; c < sizes_[fine]; ++c) ancestors_[fine][c] = c;
    for (std::size_t l = fine; l > 0; --l) {
        ancestors_[l - 1].resize(sizes_[fine]);
        for (std::size_t c = 0; c < sizes_[fine]; ++c)
            ancestors_[l - 1][c] = parent_maps_[l - 1][ancestors_[l][c]];
    }
}

Hierarchy Hierarchy::balanced(std::vector<std::size_t> sizes) {
    std::vector<std::vector<std::size_t>> maps;
    for (std::size_t l = 1; l < sizes.size(); ++l) {
        std::vector<std::size_t> map(sizes[l]);
        for (std::size_t c = 0; c < sizes[l]; ++c) map[c] = c * sizes[l - 1] / sizes[l];
        maps.push_back(std::move(map));
    }
    return Hierarchy(std::move(sizes), std::move(maps));
}

Hierarchy Hierarchy::flat(std::size_t categories) { return Hierarchy({categories}, {}); }

std::size_t Hierarchy::size(std::size_t level) const {
    if (level >= sizes_.size())
        throw HierarchyError("level " + std::to_string(level) + " out of range (" +
                             std::to_string(sizes_.size()) + " levels)");
    return sizes_[level];
}

const std::vector<std::size_t>& Hierarchy::parent_map(std::size_t level) const {
    if (level == 0 || level >= sizes_.size())
        throw HierarchyError("no parent map for level " + std::to_string(level));
    return parent_maps_[level - 1];
}

std::size_t Hierarchy::ancestor(std::size_t fine_category, std::size_t level) const {
    if (level >= sizes_.size())
        throw HierarchyError("level " + std::to_string(level) + " out of range");
    if (fine_category >= fine_count())
        throw HierarchyError("fine category " + std::to_string(fine_category) + " out of range");
    return ancestors_[level][fine_category];
}

std::vector<double> Hierarchy::coarsen(std::span<const double> fine_values,
                                       std::size_t level) const {
    if (level >= sizes_.size())
        throw HierarchyError("level " + std::to_string(level) + " out of range");
    if (fine_values.size() != fine_count())
        throw HierarchyError("vector of length " + std::to_string(fine_values.size()) +
                             " does not match " + std::to_string(fine_count()) +
                             " fine categories");
    std::vector<double> out(sizes_[level], 0.0);
    for (std::size_t c = 0; c < fine_values.size(); ++c) out[ancestors_[level][c]] += fine_values[c];
    return out;
}

std::vector<double> Hierarchy::coarsen_proportions(std::span<const double> p_fine,
                                                   std::size_t level) const {
    double total = 0.0;
    for (double v : p_fine) {
        if (!(v >= 0.0)) throw HierarchyError("proportion vector has a negative or NaN entry");
        total += v;
    }
    if (std::abs(total - 1.0) > 1e-9)
        throw HierarchyError("proportion vector sums to " + std::to_string(total));
    return coarsen(p_fine, level);
}

}  // namespace lhfglp
