#include "lhfglp/gradient_suite.hpp"

#include <cmath>
#include <random>

#include "lhfglp/losses.hpp"
#include "lhfglp/sparse_coding.hpp"
#include "lhfglp/training.hpp"

namespace lhfglp {

namespace {

class Inputs {
 public:
    explicit Inputs(std::uint64_t seed) : rng_(seed) {}

    Tensor normal(std::size_t r, std::size_t c, double scale = 1.0) {
        std::normal_distribution<double> n(0.0, scale);
        std::vector<double> v(r * c);
        for (double& x : v) x = n(rng_);
        return Tensor::from(r, c, std::move(v), true);
    }
    Tensor uniform(std::size_t r, std::size_t c, double lo, double hi) {
        std::uniform_real_distribution<double> u(lo, hi);
        std::vector<double> v(r * c);
        for (double& x : v) x = u(rng_);
        return Tensor::from(r, c, std::move(v), true);
    }
    /// Normal entries with |x| - lambda at least `margin` away from zero.
    Tensor away_from(double lambda, std::size_t r, std::size_t c, double margin) {
        Tensor t = normal(r, c);
        for (double& x : t.mutable_data())
            while (std::abs(std::abs(x) - lambda) < margin) x = std::normal_distribution<double>()(rng_);
        return t;
    }
    /// Logit columns whose sparsemax support is stable under small moves.
    Tensor sparsemax_logits(std::size_t k, std::size_t n, double margin) {
        for (;;) {
            Tensor z = normal(k, n);
            bool ok = true;
            for (std::size_t j = 0; j < n && ok; ++j) {
                std::vector<double> col(k);
                for (std::size_t i = 0; i < k; ++i) col[i] = z(i, j);
                const std::vector<double> p = sparsemax(col);
                double tau = 0.0;
                for (std::size_t i = 0; i < k; ++i)
                    if (p[i] > 0) tau = col[i] - p[i];
                for (std::size_t i = 0; i < k; ++i)
                    if (std::abs(col[i] - tau) < margin) ok = false;
            }
            if (ok) return z;
        }
    }
    std::mt19937_64& rng() { return rng_; }

 private:
    std::mt19937_64 rng_;
};

}  // namespace

std::vector<GradientCheck> run_gradient_suite(std::uint64_t seed, double eps, double tol) {
    Inputs in(seed);
    std::vector<GradientCheck> out;
    auto check = [&](const std::string& name, const std::function<Tensor()>& f, std::vector<Tensor> params) {
        out.push_back({name, grad_check(f, params, eps, tol)});
    };

    {
        Tensor a = in.normal(3, 4), b = in.normal(4, 2);
        check("matmul", [&] { return sum(matmul(a, b)); }, {a, b});
        check("transpose", [&] { return sum(mul(transpose(a), transpose(a))); }, {a});
    }
    {
        Tensor a = in.normal(3, 3), b = in.uniform(3, 3, 0.5, 2.0);
        check("add-sub-mul-div", [&] { return sum(div(mul(add(a, b), sub(a, b)), b)); }, {a, b});
        Tensor s = in.normal(1, 1);
        check("scalar broadcast", [&] { return sum(mul(s, add(a, s))); }, {a, s});
    }
    {
        Tensor x = in.normal(4, 3), p = in.uniform(4, 3, 0.2, 3.0);
        check("exp-tanh-softplus", [&] { return sum(add(exp(scale(x, 0.5)), mul(tanh(x), softplus(x)))); },
              {x});
        check("log", [&] { return sum(log(p)); }, {p});
        Tensor r = in.away_from(0.0, 4, 3, 1e-2);
        check("relu", [&] { return sum(mul(relu(r), r)); }, {r});
    }
    {
        Tensor a = in.normal(4, 5), col = in.normal(4, 1);
        const std::vector<double> factors{1.0, 0.0, 2.0, -1.0, 0.5};
        check("mean_cols", [&] { return sum(mul(mean_cols(a), col)); }, {a, col});
        check("add_column", [&] { return sum(mul(add_column(a, col), add_column(a, col))); }, {a, col});
        check("scale_columns", [&] { return sum(mul(scale_columns(a, factors), a)); }, {a});
        Tensor w = in.normal(4, 5);
        check("softmax_cols", [&] { return sum(mul(softmax_cols(a), w.detach())); }, {a});
    }
    {
        const double lambda = 0.3;
        Tensor x = in.away_from(lambda, 4, 3, 1e-3);
        Tensor lam = Tensor::scalar(lambda, true);
        Tensor w = in.normal(4, 3).detach();
        check("soft_threshold", [&] { return sum(mul(soft_threshold(x, lam), w)); }, {x, lam});
    }
    {
        Tensor z = in.sparsemax_logits(6, 4, 1e-3);
        Tensor w = in.normal(6, 4).detach();
        check("sparsemax", [&] { return sum(mul(sparsemax_cols(z), w)); }, {z});
    }
    {
        LambdaLearner l = LambdaLearner::random(5, 4, 0.2, in.rng());
        for (double& v : l.w2.mutable_data()) v *= 10.0;
        Tensor f = in.normal(5, 3);
        check("lambda_learner", [&] { return l(f); }, {l.w1, l.b1, l.w2, l.b2, f});
    }
    {
        const std::vector<double> p{0.1, 0.0, 0.6, 0.3};
        Tensor q = in.uniform(4, 1, 0.1, 0.9);
        check("proportion_loss", [&] { return proportion_loss(p, q); }, {q});
        Tensor l0 = in.normal(2, 3), l1 = in.normal(4, 3);
        const std::vector<std::vector<double>> targets{{2.0 / 3.0, 1.0 / 3.0}, {1.0 / 3.0, 1.0 / 3.0, 0.0, 1.0 / 3.0}};
        check("hierarchical_proportion_loss", [&] {
            return hierarchical_proportion_loss(
                targets, {bag_estimate(softmax_cols(l0)), bag_estimate(softmax_cols(l1))});
        }, {l0, l1});
    }
    {
        CategoryDictionary d = CategoryDictionary::random(5, 3, 2, in.rng());
        Tensor f = in.normal(5, 3);
        Tensor lam = Tensor::scalar(0.05, true);
        const MaskSchedule schedule = MaskSchedule::unmasked(5);
        Tensor w = in.normal(6, 3).detach();
        check("unrolled_encode", [&] { return sum(mul(unrolled_encode(f, d, lam, schedule).code, w)); },
              {d.atoms, d.mu, lam, f});
    }
    {
        ModelConfig cfg;
        cfg.input_dim = 5;
        cfg.hidden_dim = 6;
        cfg.feature_dim = 4;
        cfg.n_atoms = 2;
        cfg.layers = 3;
        cfg.lambda_hidden = 3;
        cfg.mask_levels = {0};
        const Hierarchy h = Hierarchy::balanced({2, 4});
        const Model m = Model::create(cfg, h, seed);
        const std::vector<TrainingBag> bags{
            {in.normal(5, 2).detach(), {{0.5, 0.5}, {0.5, 0.0, 0.5, 0.0}}},
            {in.normal(5, 2).detach(), {{1.0, 0.0}, {0.5, 0.5, 0.0, 0.0}}},
        };
        std::vector<Tensor> params;
        for (const NamedParameter& p : m.parameters()) params.push_back(p.tensor);
        check("model forward + hierarchical loss",
              [&] { return add(bag_loss(m, bags[0]), bag_loss(m, bags[1])); }, params);
    }
    return out;
}

}  // namespace lhfglp
