#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "lhfglp/grad_check.hpp"
#include "lhfglp/tensor.hpp"

using namespace lhfglp;

namespace {

Tensor random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, bool grad = false) {
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> v(r * c);
    for (double& x : v) x = n(rng);
    return Tensor::from(r, c, std::move(v), grad);
}

}  // namespace

TEST(Matmul, IdentityAndProjector) {
    Tensor a = Tensor::from(2, 2, {1, 2, 3, 4});
    EXPECT_EQ(matmul(Tensor::identity(2), a).to_vector(), a.to_vector());

    Tensor p = Tensor::from(2, 2, {1, 0, 0, 0});
    Tensor v = Tensor::from(2, 1, {5, 7});
    EXPECT_EQ(matmul(p, v).to_vector(), (std::vector<double>{5, 0}));
}

TEST(Matmul, ShapeErrorNamesBothShapes) {
    try {
        matmul(Tensor::zeros(2, 3), Tensor::zeros(4, 5));
        FAIL() << "expected ShapeError";
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("[2x3]"), std::string::npos) << msg;
        EXPECT_NE(msg.find("[4x5]"), std::string::npos) << msg;
    }
}

TEST(Matmul, GradientsMatchFiniteDifferences) {
    std::mt19937_64 rng(1);
    std::vector<Tensor> params{random_matrix(3, 4, rng), random_matrix(4, 2, rng)};
    Tensor w = random_matrix(3, 2, rng);
    auto f = [&] { return sum(mul(matmul(params[0], params[1]), w)); };
    auto report = grad_check(f, params, 1e-5, 1e-6);
    EXPECT_TRUE(report.pass) << report.summary();
    EXPECT_EQ(report.checked, 20u);
}

TEST(Matmul, BackwardFormulas) {
    std::mt19937_64 rng(2);
    Tensor a = random_matrix(3, 4, rng, true);
    Tensor b = random_matrix(4, 2, rng, true);
    sum(matmul(a, b)).backward();
    // d/da sum(ab) = 1 * b^T: every row of grad_a equals the row sums of b.
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t k = 0; k < 4; ++k)
            EXPECT_DOUBLE_EQ(a.grad()[i * 4 + k], b(k, 0) + b(k, 1));
    for (std::size_t k = 0; k < 4; ++k)
        for (std::size_t j = 0; j < 2; ++j)
            EXPECT_DOUBLE_EQ(b.grad()[k * 2 + j], a(0, k) + a(1, k) + a(2, k));
}

TEST(Matmul, AssociativityOnValues) {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        Tensor a = random_matrix(5, 5, rng), b = random_matrix(5, 5, rng), c = random_matrix(5, 5, rng);
        auto left = matmul(matmul(a, b), c).to_vector();
        auto right = matmul(a, matmul(b, c)).to_vector();
        for (std::size_t i = 0; i < left.size(); ++i) EXPECT_NEAR(left[i], right[i], 1e-10);
    }
}

TEST(Elementwise, Values) {
    EXPECT_EQ(relu(Tensor::column({-1, 2})).to_vector(), (std::vector<double>{0, 2}));
    EXPECT_EQ(add(Tensor::column({1, 2}), Tensor::column({3, 4})).to_vector(),
              (std::vector<double>{4, 6}));
    EXPECT_EQ(max_scalar(Tensor::column({-1, 0.5, 3}), 1.0).to_vector(),
              (std::vector<double>{1, 1, 3}));
    EXPECT_EQ(mul(Tensor::scalar(2.0), Tensor::column({1, 2})).to_vector(),
              (std::vector<double>{2, 4}));
}

TEST(Elementwise, ProductRule) {
    Tensor x = Tensor::scalar(2.0, true);
    Tensor y = Tensor::scalar(5.0, true);
    mul(x, y).backward();
    EXPECT_DOUBLE_EQ(x.grad()[0], 5.0);
    EXPECT_DOUBLE_EQ(y.grad()[0], 2.0);
}

TEST(Elementwise, Errors) {
    EXPECT_THROW(add(Tensor::zeros(2, 1), Tensor::zeros(3, 1)), ShapeError);
    EXPECT_THROW(log(Tensor::column({1.0, 0.0})), DomainError);
    EXPECT_THROW(log(Tensor::column({-2.0})), DomainError);
}

TEST(Autograd, SumOfUsesAccumulates) {
    Tensor x = Tensor::scalar(1.5, true);
    add(x, x).backward();
    EXPECT_EQ(x.grad()[0], 2.0);
}

TEST(Autograd, ScalarBroadcastGradientSums) {
    Tensor s = Tensor::scalar(3.0, true);
    Tensor v = Tensor::column({1, 2, 3}, true);
    sum(mul(s, v)).backward();
    EXPECT_DOUBLE_EQ(s.grad()[0], 6.0);
    EXPECT_EQ(v.grad()[0], 3.0);
}

TEST(Autograd, NoGradGuardSkipsGraph) {
    Tensor x = Tensor::scalar(1.0, true);
    NoGradGuard guard;
    Tensor y = mul(x, x);
    EXPECT_FALSE(y.requires_grad());
}

TEST(Autograd, EveryOpPassesGradCheck) {
    std::mt19937_64 rng(4);
    Tensor a = random_matrix(3, 4, rng);
    Tensor pos = Tensor::from(3, 4, {0.5, 1.2, 2.0, 0.9, 1.1, 0.3, 0.7, 1.8, 2.2, 0.6, 1.4, 0.8});
    Tensor col = random_matrix(3, 1, rng);
    Tensor w = random_matrix(3, 4, rng);
    std::vector<std::pair<const char*, std::function<Tensor(const Tensor&)>>> ops = {
        {"exp", [](const Tensor& x) { return exp(x); }},
        {"tanh", [](const Tensor& x) { return tanh(x); }},
        {"softplus", [](const Tensor& x) { return softplus(x); }},
        {"softmax", [](const Tensor& x) { return softmax_cols(x); }},
        {"transpose", [](const Tensor& x) { return transpose(x); }},
        {"mean_cols", [](const Tensor& x) { return mean_cols(x); }},
        {"add_column", [&](const Tensor& x) { return add_column(x, col); }},
        {"scale", [](const Tensor& x) { return scale(x, -2.5); }},
    };
    for (auto& [name, op] : ops) {
        auto f = [&, op = op](const Tensor& x) {
            Tensor y = op(x);
            Tensor weights = Tensor::from(y.rows(), y.cols(),
                                          std::vector<double>(w.data().begin(), w.data().begin() + y.size()));
            return sum(mul(y, weights));
        };
        auto report = grad_check(f, a, 1e-5, 1e-4);
        EXPECT_TRUE(report.pass) << name << ": " << report.summary();
    }
    auto report = grad_check([&](const Tensor& x) { return sum(mul(log(x), w)); }, pos, 1e-5, 1e-4);
    EXPECT_TRUE(report.pass) << report.summary();
    report = grad_check([&](const Tensor& x) { return sum(div(w, x)); }, pos, 1e-5, 1e-4);
    EXPECT_TRUE(report.pass) << report.summary();
    // Bias gradient of add_column.
    std::vector<Tensor> params{col.clone()};
    report = grad_check([&] { return sum(mul(add_column(a, params[0]), w)); }, params, 1e-5, 1e-4);
    EXPECT_TRUE(report.pass) << report.summary();
}

TEST(GradCheck, Square) {
    auto report = grad_check([](const Tensor& x) { return mul(x, x); }, Tensor::scalar(3.0));
    EXPECT_TRUE(report.pass);
    EXPECT_EQ(report.checked, 1u);
    EXPECT_LT(report.max_rel_err, 1e-8);
}

TEST(GradCheck, ReluKinkIsExcluded) {
    auto report = grad_check([](const Tensor& x) { return sum(relu(x)); },
                             Tensor::column({0.0, 1.0, -2.0}));
    EXPECT_TRUE(report.pass) << report.summary();
    EXPECT_EQ(report.excluded, 1u);
    EXPECT_EQ(report.checked, 2u);
}

TEST(GradCheck, DetectsWrongGradient) {
    // Hand-built op whose backward is off by a factor of two.
    auto bad = [](const Tensor& x) {
        std::vector<double> v{x.item() * x.item()};
        return Tensor::make_result({1, 1}, v, {x}, [](const Tensor& o) {
            o.parent(0).accumulate_grad(0, o.grad()[0] * 4.0 * o.parent(0).item());
        });
    };
    auto report = grad_check(bad, Tensor::scalar(1.5));
    EXPECT_FALSE(report.pass);
}

TEST(GradCheck, NonFiniteValueIsAnError) {
    EXPECT_THROW(grad_check([](const Tensor& x) { return exp(scale(x, 1000.0)); }, Tensor::scalar(1.0)),
                 NumericalError);
}
