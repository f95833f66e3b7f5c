#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lhfglp {

class ShapeError : public std::invalid_argument {
 public:
    using std::invalid_argument::invalid_argument;
};

class DomainError : public std::domain_error {
 public:
    using std::domain_error::domain_error;
};

class NumericalError : public std::runtime_error {
 public:
    using std::runtime_error::runtime_error;
};

struct Shape {
    std::size_t rows = 0;
    std::size_t cols = 0;

    std::size_t size() const { return rows * cols; }
    bool operator==(const Shape&) const = default;
    std::string str() const;
};

namespace detail {
struct Node;
}

/// Dense row-major matrix of doubles with reverse-mode gradient tracking.
///
/// A Tensor is a handle onto a graph node: copies share the node, so a
/// parameter can be referenced from several places and receive one
/// accumulated gradient. Vectors are stored as n x 1 columns and scalars
/// as 1 x 1. Use clone() for an independent deep copy.
class Tensor {
 public:
    using BackwardFn = std::function<void(const Tensor& out)>;

    Tensor();

    static Tensor zeros(std::size_t rows, std::size_t cols, bool requires_grad = false);
    static Tensor ones(std::size_t rows, std::size_t cols, bool requires_grad = false);
    static Tensor full(std::size_t rows, std::size_t cols, double value, bool requires_grad = false);
    static Tensor from(std::size_t rows, std::size_t cols, std::vector<double> values,
                       bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);
    static Tensor column(std::vector<double> values, bool requires_grad = false);
    static Tensor identity(std::size_t n);

    bool defined() const { return node_ != nullptr; }
    Shape shape() const;
    std::size_t rows() const;
    std::size_t cols() const;
    std::size_t size() const;

    std::span<const double> data() const;
    /// Writable view of the values. Mutating a tensor that already feeds a
    /// graph invalidates that graph's gradients.
    std::span<double> mutable_data();
    double operator()(std::size_t r, std::size_t c) const;
    double& at(std::size_t r, std::size_t c);
    double item() const;

    bool requires_grad() const;
    void set_requires_grad(bool value);

    /// Gradient buffer; empty until a backward pass reaches this tensor.
    std::span<const double> grad() const;
    bool has_grad() const;
    void zero_grad();

    /// Seeds d(this)/d(this) = 1 and accumulates into every reachable
    /// tensor with requires_grad. Only valid on 1 x 1 tensors.
    void backward() const;

    /// Value copy detached from the graph.
    Tensor detach() const;
    Tensor clone() const;
    std::vector<double> to_vector() const;

    /// Builds an op result. `backward` receives the output tensor and must
    /// accumulate into the parents' gradients via accumulate_grad(). When no
    /// parent requires grad (or grad mode is off) the graph is not recorded.
    static Tensor make_result(Shape shape, std::vector<double> values,
                              std::vector<Tensor> parents, BackwardFn backward);

    /// Parents of an op result, in the order given to make_result.
    const Tensor& parent(std::size_t i) const;
    void accumulate_grad(std::span<const double> g) const;
    void accumulate_grad(std::size_t index, double g) const;

    bool same_node(const Tensor& other) const { return node_ == other.node_; }

 private:
    explicit Tensor(std::shared_ptr<detail::Node> node);
    std::shared_ptr<detail::Node> node_;
};

/// Disables graph recording on this thread while alive.
class NoGradGuard {
 public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
    bool previous_;
};

bool grad_enabled();

// Matrix product; throws ShapeError naming both shapes on mismatch.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Elementwise binary ops. Operands must have equal shapes, or one of them
// may be 1 x 1 (scalar broadcast).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(const Tensor& a, const Tensor& b);
Tensor operator/(const Tensor& a, const Tensor& b);

Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);
Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
// Throws DomainError if any entry is <= 0.
Tensor log(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor max_scalar(const Tensor& a, double floor);

/// Sum of all entries as a 1 x 1 tensor.
Tensor sum(const Tensor& a);
/// Mean across columns: r x c -> r x 1.
Tensor mean_cols(const Tensor& a);
/// Adds an r x 1 column to every column of an r x c matrix.
Tensor add_column(const Tensor& a, const Tensor& column);
/// Multiplies every row of `a` by a constant per-column factor (e.g. a 0/1
/// column mask). The factors carry no gradient.
Tensor scale_columns(const Tensor& a, std::span<const double> factors);
/// Column-wise softmax.
Tensor softmax_cols(const Tensor& a);

}  // namespace lhfglp
