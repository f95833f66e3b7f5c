#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "lhfglp/grad_check.hpp"
#include "lhfglp/model.hpp"
#include "lhfglp/training.hpp"

using namespace lhfglp;

namespace {

Tensor random_bag(std::size_t dim, std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> v(dim * n);
    for (double& x : v) x = normal(rng);
    return Tensor::from(dim, n, std::move(v));
}

ModelConfig small_config(std::size_t input_dim = 6) {
    ModelConfig c;
    c.input_dim = input_dim;
    c.hidden_dim = 8;
    c.feature_dim = 6;
    c.n_atoms = 2;
    c.layers = 6;
    c.lambda_hidden = 4;
    return c;
}

Tensor permute_columns(const Tensor& t, const std::vector<std::size_t>& perm) {
    Tensor out = Tensor::zeros(t.rows(), t.cols());
    for (std::size_t i = 0; i < t.rows(); ++i)
        for (std::size_t j = 0; j < t.cols(); ++j) out.at(i, j) = t(i, perm[j]);
    return out;
}

}  // namespace

TEST(Model, SingletonBagPoolsToItsOwnCode) {
    const Hierarchy h = Hierarchy::balanced({2, 4, 8});
    const Model m = Model::create(small_config(), h, 3);
    const ForwardResult r = m.forward_bag(random_bag(6, 1, 1));
    ASSERT_EQ(r.stages.size(), 2u);
    for (const EncodeStage& s : r.stages) {
        const Tensor logits = m.classifiers[s.level](s.code);
        EXPECT_EQ(r.level_bag_probs[s.level], sparsemax(logits.data()));
        EXPECT_EQ(s.mask, build_mask(r.level_bag_probs[s.level], h, s.level, 2));
    }
}

TEST(Model, PermutingInstancesPermutesLogitsOnly) {
    const Hierarchy h = Hierarchy::balanced({2, 4, 8});
    for (MaskPooling pooling : {MaskPooling::kBag, MaskPooling::kInstance}) {
        ModelConfig cfg = small_config();
        cfg.pooling = pooling;
        const Model m = Model::create(cfg, h, 5);
        const Tensor bag = random_bag(6, 7, 2);
        const std::vector<std::size_t> perm{3, 0, 6, 1, 5, 2, 4};
        const ForwardResult a = m.forward_bag(bag);
        const ForwardResult b = m.forward_bag(permute_columns(bag, perm));
        EXPECT_NEAR(a.lambda.item(), b.lambda.item(), 1e-12);
        for (std::size_t l = 0; l < h.levels(); ++l) {
            ASSERT_EQ(a.level_logits[l].defined(), b.level_logits[l].defined());
            if (!a.level_logits[l].defined()) continue;
            const Tensor expected = permute_columns(a.level_logits[l], perm);
            for (std::size_t i = 0; i < expected.size(); ++i)
                EXPECT_NEAR(expected.data()[i], b.level_logits[l].data()[i], 1e-10);
            for (std::size_t c = 0; c < a.level_bag_probs[l].size(); ++c)
                EXPECT_NEAR(a.level_bag_probs[l][c], b.level_bag_probs[l][c], 1e-12);
        }
        if (pooling == MaskPooling::kBag)
            for (std::size_t s = 0; s < a.stages.size(); ++s) EXPECT_EQ(a.stages[s].mask, b.stages[s].mask);
    }
}

TEST(Model, MaskedAtomBlocksAreZeroInTheFinalCode) {
    const Hierarchy h = Hierarchy::balanced({2, 4, 8});
    for (MaskPooling pooling : {MaskPooling::kBag, MaskPooling::kInstance}) {
        ModelConfig cfg = small_config();
        cfg.pooling = pooling;
        const Model m = Model::create(cfg, h, 9);
        const ForwardResult r = m.forward_bag(random_bag(6, 5, 4));
        const EncodeStage& last = r.stages.back();
        const std::size_t n = r.code.cols(), k = r.code.rows();
        for (std::size_t a = 0; a < k; ++a)
            for (std::size_t j = 0; j < n; ++j) {
                const double keep = last.mask.size() == k ? last.mask[a] : last.mask[a * n + j];
                if (keep == 0.0) EXPECT_EQ(r.code(a, j), 0.0);
            }
    }
}

TEST(Model, DictionaryOffUsesTheFeaturesDirectly) {
    const Hierarchy h = Hierarchy::balanced({2, 4, 8});
    ModelConfig cfg = small_config();
    cfg.dictionary = false;
    const Model m = Model::create(cfg, h, 3);
    const ForwardResult r = m.forward_bag(random_bag(6, 3, 1));
    EXPECT_TRUE(r.code.same_node(r.features));
    EXPECT_TRUE(r.stages.empty());
    EXPECT_FALSE(r.level_logits[0].defined());
    EXPECT_FALSE(r.level_logits[1].defined());
    EXPECT_EQ(r.level_logits[2].shape(), (Shape{8, 3}));
    EXPECT_EQ(m.supervised_levels(), (std::vector<std::size_t>{2}));
}

TEST(Model, FlatHierarchyRunsUnmasked) {
    ModelConfig cfg = small_config();
    cfg.mask_levels.clear();
    const Model m = Model::create(cfg, Hierarchy::flat(5), 3);
    EXPECT_TRUE(m.schedule().masked_levels().empty());
    const ForwardResult r = m.forward_bag(random_bag(6, 4, 7));
    EXPECT_TRUE(r.stages.empty());
    EXPECT_EQ(r.code.rows(), 10u);
    EXPECT_EQ(m.supervised_levels(), (std::vector<std::size_t>{0}));
}

TEST(Model, DefaultScheduleUsesThirds) {
    const Hierarchy h = Hierarchy::balanced({2, 4, 12});
    ModelConfig cfg = small_config();
    cfg.layers = 9;
    const Model m = Model::create(cfg, h, 1);
    EXPECT_EQ(m.schedule(), MaskSchedule::progressive(9, {0, 1}));
    EXPECT_EQ(m.supervised_levels(), (std::vector<std::size_t>{0, 1, 2}));
}

TEST(Model, EndToEndGradientOnTwoInstanceBag) {
    const Hierarchy h = Hierarchy::balanced({2, 4});
    ModelConfig cfg;
    cfg.input_dim = 5;
    cfg.hidden_dim = 6;
    cfg.feature_dim = 4;
    cfg.n_atoms = 2;
    cfg.layers = 3;
    cfg.lambda_hidden = 3;
    cfg.mask_levels = {0};
    const Model m = Model::create(cfg, h, 11);
    const TrainingBag bag{random_bag(5, 2, 3), {{0.5, 0.5}, {0.5, 0.0, 0.5, 0.0}}};
    std::vector<Tensor> params;
    for (const NamedParameter& p : m.parameters()) params.push_back(p.tensor);
    const GradCheckReport report = grad_check([&] { return bag_loss(m, bag); }, params);
    EXPECT_TRUE(report.pass) << report.summary();
    EXPECT_GT(report.checked, 100u);
}

TEST(Model, SameSeedSameParameters) {
    const Hierarchy h = Hierarchy::balanced({2, 4, 8});
    const Model a = Model::create(small_config(), h, 42);
    const Model b = Model::create(small_config(), h, 42);
    const Model c = Model::create(small_config(), h, 43);
    const auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
    ASSERT_EQ(pa.size(), pb.size());
    bool any_difference = false;
    for (std::size_t i = 0; i < pa.size(); ++i) {
        EXPECT_EQ(pa[i].tensor.to_vector(), pb[i].tensor.to_vector()) << pa[i].name;
        any_difference |= pa[i].tensor.to_vector() != pc[i].tensor.to_vector();
    }
    EXPECT_TRUE(any_difference);
}

TEST(Model, ParameterTableIsConsistent) {
    const Hierarchy h = Hierarchy::balanced({2, 4, 8});
    const Model m = Model::create(small_config(), h, 1);
    std::set<std::string> names;
    for (const NamedParameter& p : m.parameters()) {
        EXPECT_TRUE(names.insert(p.name).second) << p.name;
        EXPECT_TRUE(p.tensor.requires_grad()) << p.name;
        const bool is_matrix = p.name.find("bias") == std::string::npos &&
                               p.name.find(".b") == std::string::npos && p.name != "dictionary.mu";
        EXPECT_EQ(p.decay, is_matrix) << p.name;
    }
    EXPECT_TRUE(names.count("dictionary.mu"));
    EXPECT_TRUE(names.count("classifier2.weight"));
}

TEST(Model, ProjectRestoresUnitColumnsAndPositiveMu) {
    const Hierarchy h = Hierarchy::balanced({2, 4, 8});
    Model m = Model::create(small_config(), h, 1);
    for (double& v : m.dictionary.atoms.mutable_data()) v *= 3.0;
    m.dictionary.mu.mutable_data()[0] = -1.0;
    m.project();
    const Tensor& d = m.dictionary.atoms;
    for (std::size_t j = 0; j < d.cols(); ++j) {
        double norm = 0.0;
        for (std::size_t i = 0; i < d.rows(); ++i) norm += d(i, j) * d(i, j);
        EXPECT_NEAR(norm, 1.0, 1e-12);
    }
    EXPECT_GT(m.dictionary.mu.item(), 0.0);
}

TEST(Predict, ArgmaxPrefersLowerIndexOnTies) {
    EXPECT_EQ(argmax(std::vector<double>{1, 3, 3, 2}), 1u);
    EXPECT_EQ(argmax(std::vector<double>{5}), 0u);
    EXPECT_THROW(argmax(std::vector<double>{}), std::invalid_argument);
}

TEST(Predict, ShiftingLogitsKeepsTheArgmax) {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> v(12);
        for (double& x : v) x = normal(rng);
        const std::size_t base = argmax(v);
        for (double& x : v) x += 7.25;
        EXPECT_EQ(argmax(v), base);
    }
}

TEST(Predict, IsDeterministicAndMatchesSingletonForward) {
    const Hierarchy h = Hierarchy::balanced({2, 4, 8});
    const Model m = Model::create(small_config(), h, 8);
    const Tensor x = random_bag(6, 1, 12);
    const std::size_t first = predict_instance(m, x.data());
    for (int i = 0; i < 5; ++i) EXPECT_EQ(predict_instance(m, x.data()), first);
    EXPECT_EQ(first, argmax(m.forward_bag(x).level_logits[2].data()));
}

TEST(Model, RejectsBadInputs) {
    const Hierarchy h = Hierarchy::balanced({2, 4, 8});
    const Model m = Model::create(small_config(), h, 1);
    EXPECT_THROW(m.forward_bag(random_bag(5, 2, 1)), ShapeError);
    EXPECT_THROW(m.forward_bag(Tensor::zeros(6, 0)), std::invalid_argument);
    ModelConfig bad = small_config();
    bad.mask_levels = {2};
    EXPECT_THROW(Model::create(bad, h, 1), std::invalid_argument);
    bad.mask_levels = {1, 0};
    EXPECT_THROW(Model::create(bad, h, 1), std::invalid_argument);
}
