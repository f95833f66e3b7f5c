#include <gtest/gtest.h>

#include <numeric>
#include <random>

#include "lhfglp/hierarchy.hpp"

using namespace lhfglp;

namespace {

// {1,2} -> A, {3,4} -> B
Hierarchy two_level() { return Hierarchy({2, 4}, {{0, 0, 1, 1}}); }

std::vector<double> random_simplex(std::size_t n, std::mt19937_64& rng) {
    std::exponential_distribution<double> e(1.0);
    std::vector<double> p(n);
    for (double& v : p) v = e(rng);
    const double total = std::accumulate(p.begin(), p.end(), 0.0);
    for (double& v : p) v /= total;
    return p;
}

}  // namespace

TEST(Hierarchy, CoarsenAdditivity) {
    auto h = two_level();
    auto out = h.coarsen_proportions(std::vector<double>{0.1, 0.2, 0.3, 0.4}, 0);
    ASSERT_EQ(out.size(), 2u);
    EXPECT_NEAR(out[0], 0.3, 1e-15);
    EXPECT_NEAR(out[1], 0.7, 1e-15);
}

TEST(Hierarchy, FineLevelIsIdentity) {
    auto h = two_level();
    std::vector<double> p{0.1, 0.2, 0.3, 0.4};
    EXPECT_EQ(h.coarsen_proportions(p, 1), p);
    for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(h.ancestor(c, 1), c);
}

TEST(Hierarchy, AncestorTwoLevel) {
    auto h = two_level();
    EXPECT_EQ(h.ancestor(2, 0), 1u);  // fine 3 -> B
}

TEST(Hierarchy, AncestorBalancedThreeLevel) {
    auto h = Hierarchy::balanced({2, 4, 12});
    // 1-based maps c -> ceil(c/3), m -> ceil(m/2): fine 7 -> medium 3 -> coarse 2.
    auto ceil_div = [](std::size_t a, std::size_t b) { return (a + b - 1) / b; };
    for (std::size_t c1 = 1; c1 <= 12; ++c1) {
        const std::size_t m1 = ceil_div(c1, 3);
        const std::size_t k1 = ceil_div(m1, 2);
        EXPECT_EQ(h.ancestor(c1 - 1, 1) + 1, m1);
        EXPECT_EQ(h.ancestor(c1 - 1, 0) + 1, k1);
    }
    EXPECT_EQ(h.ancestor(6, 1), 2u);
    EXPECT_EQ(h.ancestor(6, 0), 1u);
}

TEST(Hierarchy, PathIndependence) {
    // 20 fine -> 6 medium -> 3 coarse with an irregular map.
    std::vector<std::size_t> fine_to_medium{0, 0, 0, 1, 1, 2, 2, 2, 2, 3, 3, 3, 4, 4, 5, 5, 5, 5, 5, 1};
    std::vector<std::size_t> medium_to_coarse{0, 1, 0, 2, 2, 1};
    Hierarchy h({3, 6, 20}, {medium_to_coarse, fine_to_medium});
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        auto p = random_simplex(20, rng);
        auto medium = h.coarsen_proportions(p, 1);
        std::vector<double> via_medium(3, 0.0);
        for (std::size_t m = 0; m < 6; ++m) via_medium[medium_to_coarse[m]] += medium[m];
        auto direct = h.coarsen_proportions(p, 0);
        std::vector<double> brute(3, 0.0);
        for (std::size_t c = 0; c < 20; ++c) brute[medium_to_coarse[fine_to_medium[c]]] += p[c];
        for (std::size_t k = 0; k < 3; ++k) {
            EXPECT_NEAR(via_medium[k], direct[k], 1e-12);
            EXPECT_NEAR(brute[k], direct[k], 1e-12);
        }
    }
}

TEST(Hierarchy, LinearityAndMassConservation) {
    auto h = Hierarchy::balanced({2, 4, 12});
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        auto p = random_simplex(12, rng);
        auto q = random_simplex(12, rng);
        const double alpha = u(rng);
        std::vector<double> mix(12);
        for (std::size_t i = 0; i < 12; ++i) mix[i] = alpha * p[i] + (1 - alpha) * q[i];
        for (std::size_t l = 0; l < 3; ++l) {
            auto cm = h.coarsen(mix, l), cp = h.coarsen(p, l), cq = h.coarsen(q, l);
            for (std::size_t k = 0; k < cm.size(); ++k)
                EXPECT_NEAR(cm[k], alpha * cp[k] + (1 - alpha) * cq[k], 1e-12);
        }
        std::vector<double> raw(12);
        for (double& v : raw) v = 10.0 * u(rng);
        const double total = std::accumulate(raw.begin(), raw.end(), 0.0);
        for (std::size_t l = 0; l < 3; ++l) {
            auto c = h.coarsen(raw, l);
            EXPECT_NEAR(std::accumulate(c.begin(), c.end(), 0.0), total, 1e-12);
        }
    }
}

TEST(Hierarchy, Errors) {
    auto h = two_level();
    EXPECT_THROW(h.coarsen_proportions(std::vector<double>{0.5, 0.5, 0.5, 0.0}, 0), HierarchyError);
    EXPECT_THROW(h.coarsen_proportions(std::vector<double>{-0.1, 0.6, 0.5, 0.0}, 0), HierarchyError);
    EXPECT_THROW(h.coarsen_proportions(std::vector<double>{0.25, 0.25, 0.25, 0.25}, 2), HierarchyError);
    EXPECT_THROW(h.ancestor(4, 0), HierarchyError);
    EXPECT_THROW(h.ancestor(0, 5), HierarchyError);
    // Non-surjective map.
    EXPECT_THROW(Hierarchy({2, 4}, {{0, 0, 0, 0}}), HierarchyError);
    // Coarser level larger than finer.
    EXPECT_THROW(Hierarchy({4, 2}, {{0, 1}}), HierarchyError);
    EXPECT_THROW(Hierarchy({2, 4}, {}), HierarchyError);
}
