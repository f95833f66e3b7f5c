#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "lhfglp/dataset.hpp"

using namespace lhfglp;

namespace {

SyntheticConfig small_config() {
    SyntheticConfig cfg;
    cfg.level_sizes = {2, 4, 12};
    cfg.n_per_class = 20;
    cfg.dim = 8;
    return cfg;
}

// Independent nearest-centroid scorer used as the oracle here: class means
// from the train split, squared Euclidean distance, lowest index on ties.
double oracle_accuracy(const InstanceDataset& ds) {
    const std::size_t c = ds.hierarchy.fine_count();
    std::vector<std::vector<double>> sum(c, std::vector<double>(ds.dim, 0.0));
    std::vector<double> n(c, 0.0);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (ds.split[i] != Split::kTrain) continue;
        for (std::size_t j = 0; j < ds.dim; ++j) sum[ds.labels[i]][j] += ds.features[i * ds.dim + j];
        n[ds.labels[i]] += 1.0;
    }
    double correct = 0.0, total = 0.0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (ds.split[i] != Split::kTest) continue;
        std::size_t best = 0;
        double best_d = 1e300;
        for (std::size_t k = 0; k < c; ++k) {
            double d = 0.0;
            for (std::size_t j = 0; j < ds.dim; ++j) {
                const double diff = ds.features[i * ds.dim + j] - sum[k][j] / n[k];
                d += diff * diff;
            }
            if (d < best_d) best_d = d, best = k;
        }
        correct += best == ds.labels[i];
        total += 1.0;
    }
    return correct / total;
}

}  // namespace

TEST(Generate, NoiseFreeInstancesSitOnCentroids) {
    auto cfg = small_config();
    cfg.noise_sigma = 0.0;
    auto ds = generate_synthetic(cfg);
    for (std::size_t i = 1; i < ds.size(); ++i)
        if (ds.labels[i] == ds.labels[i - 1])
            for (std::size_t j = 0; j < ds.dim; ++j) EXPECT_EQ(ds.row(i)[j], ds.row(i - 1)[j]);
    EXPECT_EQ(oracle_accuracy(ds), 1.0);
    EXPECT_EQ(nearest_centroid_accuracy(ds), 1.0);
}

TEST(Generate, Deterministic) {
    auto a = generate_synthetic(small_config());
    auto b = generate_synthetic(small_config());
    EXPECT_EQ(serialize_dataset(a), serialize_dataset(b));
    auto cfg = small_config();
    cfg.seed = 99;
    EXPECT_NE(serialize_dataset(generate_synthetic(cfg)), serialize_dataset(a));
}

TEST(Generate, DefaultDifficultyNearestCentroid) {
    // Every instance is scored against the generating centroids, recovered
    // from a noise-free run with the same seed (noise draws do not affect
    // centroid placement).
    SyntheticConfig cfg;
    cfg.level_sizes = {2, 4, 12};
    cfg.fine_sep = 1.0;
    cfg.coarse_sep = 6.0;
    cfg.noise_sigma = 0.5;
    cfg.n_per_class = 60;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        cfg.seed = seed;
        const auto ds = generate_synthetic(cfg);
        auto clean_cfg = cfg;
        clean_cfg.noise_sigma = 0.0;
        const auto clean = generate_synthetic(clean_cfg);
        std::size_t correct = 0;
        for (std::size_t i = 0; i < ds.size(); ++i) {
            std::size_t best = 0;
            double best_d = 1e300;
            for (std::size_t k = 0; k < 12; ++k) {
                auto c = clean.row(k * cfg.n_per_class);
                double d = 0.0;
                for (std::size_t j = 0; j < ds.dim; ++j) d += (ds.row(i)[j] - c[j]) * (ds.row(i)[j] - c[j]);
                if (d < best_d) best_d = d, best = k;
            }
            correct += best == ds.labels[i];
        }
        const double acc = static_cast<double>(correct) / static_cast<double>(ds.size());
        EXPECT_GE(acc, 0.90) << "seed " << seed;
        // The fitted train/test variant agrees within sampling error.
        EXPECT_NEAR(oracle_accuracy(ds), acc, 0.06) << "seed " << seed;
    }
}

TEST(Generate, CentroidGeometry) {
    auto cfg = small_config();
    cfg.noise_sigma = 0.0;
    auto ds = generate_synthetic(cfg);
    const auto& h = ds.hierarchy;
    auto centroid = [&](std::size_t k) { return ds.row(k * cfg.n_per_class); };
    auto dist = [&](std::span<const double> a, std::span<const double> b) {
        double d = 0.0;
        for (std::size_t j = 0; j < a.size(); ++j) d += (a[j] - b[j]) * (a[j] - b[j]);
        return std::sqrt(d);
    };
    // Siblings under one medium parent: regular simplex of norm fine_sep,
    // so pairwise distance fine_sep * sqrt(2k/(k-1)) with k = 3.
    const double expected = cfg.fine_sep * std::sqrt(3.0);
    for (std::size_t a = 0; a < 12; ++a)
        for (std::size_t b = a + 1; b < 12; ++b)
            if (h.ancestor(a, 1) == h.ancestor(b, 1))
                EXPECT_NEAR(dist(centroid(a), centroid(b)), expected, 1e-9);
}

TEST(Generate, StratifiedSplit) {
    auto cfg = small_config();
    cfg.test_fraction = 0.3;
    auto ds = generate_synthetic(cfg);
    std::vector<int> test(12, 0), train(12, 0);
    for (std::size_t i = 0; i < ds.size(); ++i) (ds.split[i] == Split::kTest ? test : train)[ds.labels[i]]++;
    for (std::size_t k = 0; k < 12; ++k) {
        EXPECT_LE(std::abs(test[k] - 0.3 * cfg.n_per_class), 1.0);
        EXPECT_GT(train[k], 0);
    }
}

TEST(Generate, RejectsBadConfig) {
    auto cfg = small_config();
    cfg.fine_sep = 7.0;
    EXPECT_THROW(generate_synthetic(cfg), DatasetError);
    cfg = small_config();
    cfg.n_per_class = 3;
    EXPECT_THROW(generate_synthetic(cfg), DatasetError);
    cfg = small_config();
    cfg.level_sizes = {4, 2, 12};
    EXPECT_THROW(generate_synthetic(cfg), DatasetError);
    cfg = small_config();
    cfg.dim = 2;  // siblings of 3 need 3 dimensions
    EXPECT_THROW(generate_synthetic(cfg), DatasetError);
}

TEST(DatasetFile, RoundTrip) {
    auto ds = generate_synthetic(small_config());
    auto path = std::filesystem::temp_directory_path() / "lhfglp_roundtrip.llpds";
    save_dataset(ds, path);
    auto back = load_dataset(path);
    EXPECT_EQ(back, ds);
    EXPECT_EQ(dataset_hash(back), dataset_hash(ds));
    std::filesystem::remove(path);
}

TEST(DatasetFile, HandWrittenFixture) {
    const std::string text =
        "LLPDS v1\n"
        "4 3 2\n"
        "1 2\n"
        "1 1\n"
        "0 0 1 1\n"
        "1 0.5 -1 2\n"
        "2 1e-3 4 -0.25\n"
        "1 7 8 9\n"
        "2 0 0 1.5\n";
    auto ds = parse_dataset(text);
    ASSERT_EQ(ds.size(), 4u);
    EXPECT_EQ(ds.dim, 3u);
    EXPECT_EQ(ds.labels, (std::vector<std::size_t>{0, 1, 0, 1}));
    EXPECT_EQ(ds.features, (std::vector<double>{0.5, -1, 2, 1e-3, 4, -0.25, 7, 8, 9, 0, 0, 1.5}));
    EXPECT_EQ(ds.hierarchy.ancestor(1, 0), 0u);
    EXPECT_EQ(ds.split[1], Split::kTrain);
    EXPECT_EQ(ds.split[2], Split::kTest);
}

TEST(DatasetFile, ParseErrors) {
    const auto full = serialize_dataset(generate_synthetic(small_config()));
    // Truncated file.
    try {
        parse_dataset(full.substr(0, full.size() / 2));
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_GT(e.offset(), 0u);
    }
    EXPECT_THROW(parse_dataset("LLPDS v2\n"), ParseError);
    EXPECT_THROW(parse_dataset("LLPXX v1\n"), ParseError);
    EXPECT_THROW(parse_dataset("LLPDS v1\n2 x 1\n"), ParseError);
    // Label outside the hierarchy.
    EXPECT_THROW(parse_dataset("LLPDS v1\n2 1 1\n2\n0 1\n1 0.5\n3 0.5\n"), ParseError);
    // Trailing garbage.
    EXPECT_THROW(parse_dataset(full + "1 2 3\n"), ParseError);
    try {
        parse_dataset("LLPDS v1\n2 1 1\n2\n0 1\n1 0.5\n2 abc\n");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.offset(), std::string("LLPDS v1\n2 1 1\n2\n0 1\n1 0.5\n2 ").size());
    }
}
