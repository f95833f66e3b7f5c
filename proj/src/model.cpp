#include "lhfglp/model.hpp"

#include <algorithm>
#include <cmath>

namespace lhfglp {

namespace {

Tensor gaussian(std::size_t rows, std::size_t cols, double stddev, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, stddev);
    std::vector<double> v(rows * cols);
    for (double& x : v) x = normal(rng);
    return Tensor::from(rows, cols, std::move(v), true);
}

}  // namespace

std::string to_string(MaskActivation a) {
    return a == MaskActivation::kSparsemax ? "sparsemax" : "softmax";
}

MaskActivation parse_mask_activation(const std::string& s) {
    if (s == "sparsemax") return MaskActivation::kSparsemax;
    if (s == "softmax") return MaskActivation::kSoftmax;
    throw std::invalid_argument("unknown mask activation '" + s + "' (expected sparsemax or softmax)");
}

std::string to_string(MaskPooling p) {
    return p == MaskPooling::kBag ? "bag" : "instance";
}

MaskPooling parse_mask_pooling(const std::string& s) {
    if (s == "bag") return MaskPooling::kBag;
    if (s == "instance") return MaskPooling::kInstance;
    throw std::invalid_argument("unknown mask pooling '" + s + "' (expected bag or instance)");
}

void ModelConfig::validate(const Hierarchy& h) const {
    if (input_dim == 0 || hidden_dim == 0 || feature_dim == 0 || lambda_hidden == 0)
        throw std::invalid_argument("model dimensions must be positive");
    if (n_atoms == 0) throw std::invalid_argument("n_atoms must be positive");
    if (layers == 0) throw std::invalid_argument("the encoder needs at least one layer");
    if (!(initial_lambda > 0.0)) throw std::invalid_argument("initial_lambda must be positive");
    for (std::size_t i = 0; i < mask_levels.size(); ++i) {
        if (mask_levels[i] >= h.fine_level())
            throw std::invalid_argument("mask level " + std::to_string(mask_levels[i]) +
                                        " is not a coarse level of a " +
                                        std::to_string(h.levels()) + "-level hierarchy");
        if (i > 0 && mask_levels[i] <= mask_levels[i - 1])
            throw std::invalid_argument("mask levels must be strictly increasing");
    }
    if (dictionary && layers < h.levels())
        throw std::invalid_argument(std::to_string(layers) + " layers cannot host " +
                                    std::to_string(h.levels() - 1) + " mask stages");
}

FeatureExtractor FeatureExtractor::random(std::size_t input_dim, std::size_t hidden,
                                          std::size_t out, std::mt19937_64& rng) {
    FeatureExtractor e;
    e.w1 = gaussian(hidden, input_dim, 1.0 / std::sqrt(static_cast<double>(input_dim)), rng);
    e.b1 = Tensor::zeros(hidden, 1, true);
    e.w2 = gaussian(out, hidden, 1.0 / std::sqrt(static_cast<double>(hidden)), rng);
    e.b2 = Tensor::zeros(out, 1, true);
    return e;
}

Tensor FeatureExtractor::operator()(const Tensor& x) const {
    return add_column(matmul(w2, tanh(add_column(matmul(w1, x), b1))), b2);
}

LevelClassifier LevelClassifier::random(std::size_t input, std::size_t classes,
                                        std::mt19937_64& rng) {
    return {gaussian(classes, input, 1.0 / std::sqrt(static_cast<double>(input)), rng),
            Tensor::zeros(classes, 1, true)};
}

Model Model::create(const ModelConfig& config, const Hierarchy& h, std::uint64_t seed) {
    config.validate(h);
    std::mt19937_64 rng(seed);
    Model m;
    m.config_ = config;
    m.hierarchy_ = h;
    const std::size_t c = h.fine_count();
    m.extractor = FeatureExtractor::random(config.input_dim, config.hidden_dim, config.feature_dim, rng);
    m.lambda_learner =
        LambdaLearner::random(config.feature_dim, config.lambda_hidden, config.initial_lambda, rng);

    std::size_t code_dim = config.feature_dim;
    if (config.dictionary) {
        m.dictionary = CategoryDictionary::random(config.feature_dim, c, config.n_atoms, rng);
        code_dim = m.dictionary.columns();
        std::vector<std::size_t> coarse(h.fine_level());
        for (std::size_t l = 0; l < coarse.size(); ++l) coarse[l] = l;
        m.schedule_ = MaskSchedule::progressive_subset(config.layers, coarse, config.mask_levels);
    }
    for (std::size_t l = 0; l < h.levels(); ++l)
        m.classifiers.push_back(LevelClassifier::random(code_dim, h.size(l), rng));
    return m;
}

std::vector<std::size_t> Model::supervised_levels() const {
    std::vector<std::size_t> out;
    if (config_.dictionary) out = schedule_.masked_levels();
    out.push_back(hierarchy_.fine_level());
    return out;
}

ForwardResult Model::forward_bag(const Tensor& bag) const {
    if (bag.rows() != config_.input_dim)
        throw ShapeError("forward_bag: bag " + bag.shape().str() + " does not have " +
                         std::to_string(config_.input_dim) + " feature rows");
    if (bag.cols() == 0) throw std::invalid_argument("forward_bag: empty bag");

    ForwardResult r;
    const std::size_t levels = hierarchy_.levels();
    r.level_logits.resize(levels);
    r.level_bag_probs.resize(levels);
    r.features = extractor(bag);
    r.lambda = lambda_learner(r.features);

    if (!config_.dictionary) {
        r.code = r.features;
        r.level_logits[hierarchy_.fine_level()] = classifiers.back()(r.code);
        return r;
    }

    // Masks are built from detached values: they act as constants in the
    // backward pass and gradients reach the classifiers through the loss.
    auto provider = [&](std::size_t level, const Tensor& stage_code) {
        NoGradGuard no_grad;
        const bool per_instance = config_.pooling == MaskPooling::kInstance;
        const Tensor logits =
            classifiers[level](per_instance ? stage_code.detach() : mean_cols(stage_code.detach()));
        const Tensor act = config_.activation == MaskActivation::kSparsemax ? sparsemax_cols(logits)
                                                                            : softmax_cols(logits);
        r.level_bag_probs[level] = mean_cols(act).to_vector();
        if (!per_instance) return build_mask(r.level_bag_probs[level], hierarchy_, level, config_.n_atoms);

        const std::size_t n = act.cols(), k = dictionary.columns();
        std::vector<double> mask(k * n);
        std::vector<double> column(act.rows());
        for (std::size_t j = 0; j < n; ++j) {
            for (std::size_t i = 0; i < column.size(); ++i) column[i] = act(i, j);
            const std::vector<double> m = build_mask(column, hierarchy_, level, config_.n_atoms);
            for (std::size_t a = 0; a < k; ++a) mask[a * n + j] = m[a];
        }
        return mask;
    };
    EncodeResult enc = unrolled_encode(r.features, dictionary, r.lambda, schedule_, provider);
    r.code = enc.code;
    for (const EncodeStage& s : enc.stages) r.level_logits[s.level] = classifiers[s.level](s.code);
    r.level_logits[hierarchy_.fine_level()] = classifiers.back()(r.code);
    r.stages = std::move(enc.stages);
    return r;
}

std::vector<double> Model::instance_logits(std::span<const double> x) const {
    if (x.size() != config_.input_dim)
        throw ShapeError("instance has " + std::to_string(x.size()) + " features, expected " +
                         std::to_string(config_.input_dim));
    NoGradGuard no_grad;
    const Tensor bag = Tensor::from(x.size(), 1, std::vector<double>(x.begin(), x.end()));
    return forward_bag(bag).level_logits[hierarchy_.fine_level()].to_vector();
}

std::vector<NamedParameter> Model::parameters() const {
    std::vector<NamedParameter> p = {
        {"extractor.w1", extractor.w1, true},     {"extractor.b1", extractor.b1, false},
        {"extractor.w2", extractor.w2, true},     {"extractor.b2", extractor.b2, false},
        {"lambda.w1", lambda_learner.w1, true},   {"lambda.b1", lambda_learner.b1, false},
        {"lambda.w2", lambda_learner.w2, true},   {"lambda.b2", lambda_learner.b2, false},
    };
    if (config_.dictionary) {
        p.push_back({"dictionary.atoms", dictionary.atoms, true});
        p.push_back({"dictionary.mu", dictionary.mu, false});
    }
    for (std::size_t l = 0; l < classifiers.size(); ++l) {
        p.push_back({"classifier" + std::to_string(l) + ".weight", classifiers[l].weight, true});
        p.push_back({"classifier" + std::to_string(l) + ".bias", classifiers[l].bias, false});
    }
    return p;
}

void Model::project(double min_mu) {
    if (!config_.dictionary) return;
    dictionary.renormalize_columns();
    double& mu = dictionary.mu.mutable_data()[0];
    mu = std::max(mu, min_mu);
}

std::size_t argmax(std::span<const double> v) {
    if (v.empty()) throw std::invalid_argument("argmax of an empty vector");
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

std::size_t predict_instance(const Model& m, std::span<const double> x) {
    return argmax(m.instance_logits(x));
}

}  // namespace lhfglp
