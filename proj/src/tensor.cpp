#include "lhfglp/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace lhfglp {

namespace detail {
struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
    std::vector<Tensor> parents;
    Tensor::BackwardFn backward;
};
}  // namespace detail

namespace {

thread_local bool g_grad_enabled = true;

void require_same_or_scalar(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() == b.shape() || a.size() == 1 || b.size() == 1) return;
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape().str() + " vs " +
                     b.shape().str());
}

Shape broadcast_shape(const Tensor& a, const Tensor& b) {
    if (a.size() == 1 && b.size() != 1) return b.shape();
    return a.shape();
}

// Unary elementwise op with derivative expressed from (input, output).
template <class F, class DF>
Tensor unary(const Tensor& a, F f, DF df) {
    std::vector<double> out(a.size());
    auto x = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x[i]);
    return Tensor::make_result(a.shape(), std::move(out), {a}, [df](const Tensor& o) {
        const Tensor& in = o.parent(0);
        if (!in.requires_grad()) return;
        auto g = o.grad();
        auto xv = in.data();
        auto yv = o.data();
        std::vector<double> gi(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) gi[i] = g[i] * df(xv[i], yv[i]);
        in.accumulate_grad(gi);
    });
}

// Reduces a broadcast gradient back onto an operand's shape.
void accumulate_broadcast(const Tensor& operand, std::vector<double>&& g) {
    if (!operand.requires_grad()) return;
    if (operand.size() == g.size()) {
        operand.accumulate_grad(g);
        return;
    }
    double total = 0.0;
    for (double v : g) total += v;
    operand.accumulate_grad(0, total);
}

template <class F, class DA, class DB>
Tensor binary(const Tensor& a, const Tensor& b, const char* name, F f, DA da, DB db) {
    require_same_or_scalar(a, b, name);
    Shape shape = broadcast_shape(a, b);
    const std::size_t n = shape.size();
    const bool a_scalar = a.size() == 1;
    const bool b_scalar = b.size() == 1;
    std::vector<double> out(n);
    auto av = a.data();
    auto bv = b.data();
    for (std::size_t i = 0; i < n; ++i) out[i] = f(av[a_scalar ? 0 : i], bv[b_scalar ? 0 : i]);
    return Tensor::make_result(shape, std::move(out), {a, b}, [=](const Tensor& o) {
        const Tensor& pa = o.parent(0);
        const Tensor& pb = o.parent(1);
        auto g = o.grad();
        auto x = pa.data();
        auto y = pb.data();
        if (pa.requires_grad()) {
            std::vector<double> ga(g.size());
            for (std::size_t i = 0; i < g.size(); ++i)
                ga[i] = g[i] * da(x[a_scalar ? 0 : i], y[b_scalar ? 0 : i]);
            accumulate_broadcast(pa, std::move(ga));
        }
        if (pb.requires_grad()) {
            std::vector<double> gb(g.size());
            for (std::size_t i = 0; i < g.size(); ++i)
                gb[i] = g[i] * db(x[a_scalar ? 0 : i], y[b_scalar ? 0 : i]);
            accumulate_broadcast(pb, std::move(gb));
        }
    });
}

// C (m x n) += op(A) * op(B), row-major, plain loops in i-k-j order.
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c) {
    for (std::size_t i = 0; i < m; ++i) {
        double* ci = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = a[i * k + p];
            if (aip == 0.0) continue;
            const double* bp = b + p * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
        }
    }
}

// C (m x n) += A (m x k) * B^T where B is n x k.
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c) {
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            const double* ai = a + i * k;
            const double* bj = b + j * k;
            for (std::size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
            c[i * n + j] += acc;
        }
    }
}

// C (m x n) += A^T * B where A is k x m and B is k x n.
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c) {
    for (std::size_t p = 0; p < k; ++p) {
        const double* ap = a + p * m;
        const double* bp = b + p * n;
        for (std::size_t i = 0; i < m; ++i) {
            const double api = ap[i];
            if (api == 0.0) continue;
            double* ci = c + i * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += api * bp[j];
        }
    }
}

}  // namespace

std::string Shape::str() const {
    return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]";
}

Tensor::Tensor() = default;
Tensor::Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

Tensor Tensor::from(std::size_t rows, std::size_t cols, std::vector<double> values,
                    bool requires_grad) {
    if (values.size() != rows * cols)
        throw ShapeError("Tensor::from: " + std::to_string(values.size()) +
                         " values for shape " + Shape{rows, cols}.str());
    auto node = std::make_shared<detail::Node>();
    node->shape = {rows, cols};
    node->value = std::move(values);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::zeros(std::size_t rows, std::size_t cols, bool requires_grad) {
    return from(rows, cols, std::vector<double>(rows * cols, 0.0), requires_grad);
}

Tensor Tensor::ones(std::size_t rows, std::size_t cols, bool requires_grad) {
    return full(rows, cols, 1.0, requires_grad);
}

Tensor Tensor::full(std::size_t rows, std::size_t cols, double value, bool requires_grad) {
    return from(rows, cols, std::vector<double>(rows * cols, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return from(1, 1, {value}, requires_grad);
}

Tensor Tensor::column(std::vector<double> values, bool requires_grad) {
    const std::size_t n = values.size();
    return from(n, 1, std::move(values), requires_grad);
}

Tensor Tensor::identity(std::size_t n) {
    Tensor t = zeros(n, n);
    for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
    return t;
}

Shape Tensor::shape() const { return node_ ? node_->shape : Shape{}; }
std::size_t Tensor::rows() const { return shape().rows; }
std::size_t Tensor::cols() const { return shape().cols; }
std::size_t Tensor::size() const { return shape().size(); }

std::span<const double> Tensor::data() const { return node_->value; }
std::span<double> Tensor::mutable_data() { return node_->value; }

double Tensor::operator()(std::size_t r, std::size_t c) const {
    return node_->value[r * node_->shape.cols + c];
}

double& Tensor::at(std::size_t r, std::size_t c) {
    return node_->value[r * node_->shape.cols + c];
}

double Tensor::item() const {
    if (size() != 1) throw ShapeError("item() on non-scalar tensor " + shape().str());
    return node_->value[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }
void Tensor::set_requires_grad(bool value) { node_->requires_grad = value; }

std::span<const double> Tensor::grad() const { return node_->grad; }
bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }
void Tensor::zero_grad() { node_->grad.clear(); }

Tensor Tensor::detach() const { return from(rows(), cols(), node_->value, false); }

Tensor Tensor::clone() const {
    Tensor t = from(rows(), cols(), node_->value, node_->requires_grad);
    t.node_->grad = node_->grad;
    return t;
}

std::vector<double> Tensor::to_vector() const { return node_->value; }

const Tensor& Tensor::parent(std::size_t i) const { return node_->parents.at(i); }

void Tensor::accumulate_grad(std::span<const double> g) const {
    auto& buf = node_->grad;
    if (buf.empty()) buf.assign(node_->value.size(), 0.0);
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += g[i];
}

void Tensor::accumulate_grad(std::size_t index, double g) const {
    auto& buf = node_->grad;
    if (buf.empty()) buf.assign(node_->value.size(), 0.0);
    buf[index] += g;
}

Tensor Tensor::make_result(Shape shape, std::vector<double> values, std::vector<Tensor> parents,
                           BackwardFn backward) {
    Tensor out = from(shape.rows, shape.cols, std::move(values), false);
    if (!g_grad_enabled) return out;
    const bool any = std::any_of(parents.begin(), parents.end(),
                                 [](const Tensor& p) { return p.requires_grad(); });
    if (!any) return out;
    out.node_->requires_grad = true;
    out.node_->parents = std::move(parents);
    out.node_->backward = std::move(backward);
    return out;
}

void Tensor::backward() const {
    if (size() != 1) throw ShapeError("backward() requires a scalar output, got " + shape().str());
    if (!requires_grad()) return;

    // Iterative post-order DFS gives a topological order (parents first).
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> visited;
    std::vector<std::pair<detail::Node*, std::size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    visited.insert(node_.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            detail::Node* p = node->parents[next++].node_.get();
            if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    accumulate_grad(0, 1.0);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::Node* n = *it;
        if (!n->backward || n->grad.empty()) continue;
        // Non-owning handle, the graph is kept alive by this root.
        Tensor handle(std::shared_ptr<detail::Node>(std::shared_ptr<detail::Node>{}, n));
        n->backward(handle);
    }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows())
        throw ShapeError("matmul: inner dimensions disagree " + a.shape().str() + " x " +
                         b.shape().str());
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    std::vector<double> out(m * n, 0.0);
    gemm_nn(m, k, n, a.data().data(), b.data().data(), out.data());
    return Tensor::make_result({m, n}, std::move(out), {a, b}, [m, k, n](const Tensor& o) {
        const Tensor& pa = o.parent(0);
        const Tensor& pb = o.parent(1);
        auto g = o.grad();
        if (pa.requires_grad()) {
            std::vector<double> ga(m * k, 0.0);
            gemm_nt(m, n, k, g.data(), pb.data().data(), ga.data());
            pa.accumulate_grad(ga);
        }
        if (pb.requires_grad()) {
            std::vector<double> gb(k * n, 0.0);
            gemm_tn(k, m, n, pa.data().data(), g.data(), gb.data());
            pb.accumulate_grad(gb);
        }
    });
}

Tensor transpose(const Tensor& a) {
    const std::size_t r = a.rows(), c = a.cols();
    std::vector<double> out(r * c);
    auto x = a.data();
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = x[i * c + j];
    return Tensor::make_result({c, r}, std::move(out), {a}, [r, c](const Tensor& o) {
        auto g = o.grad();
        std::vector<double> gi(r * c);
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) gi[i * c + j] = g[j * r + i];
        o.parent(0).accumulate_grad(gi);
    });
}

Tensor add(const Tensor& a, const Tensor& b) {
    return binary(
        a, b, "add", [](double x, double y) { return x + y; },
        [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary(
        a, b, "sub", [](double x, double y) { return x - y; },
        [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary(
        a, b, "mul", [](double x, double y) { return x * y; },
        [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
    for (double v : b.data())
        if (v == 0.0) throw DomainError("div: division by zero");
    return binary(
        a, b, "div", [](double x, double y) { return x / y; },
        [](double, double y) { return 1.0 / y; }, [](double x, double y) { return -x / (y * y); });
}

Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor scale(const Tensor& a, double factor) {
    return unary(
        a, [factor](double x) { return factor * x; }, [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double value) {
    return unary(
        a, [value](double x) { return x + value; }, [](double, double) { return 1.0; });
}

// Subgradient 0 at the kink.
Tensor relu(const Tensor& a) {
    return unary(
        a, [](double x) { return x > 0.0 ? x : 0.0; },
        [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor exp(const Tensor& a) {
    return unary(
        a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
    for (double v : a.data())
        if (!(v > 0.0)) throw DomainError("log: non-positive input " + std::to_string(v));
    return unary(
        a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor tanh(const Tensor& a) {
    return unary(
        a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor softplus(const Tensor& a) {
    // log(1 + e^x) evaluated without overflow.
    return unary(
        a, [](double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); },
        [](double x, double) { return 1.0 / (1.0 + std::exp(-x)); });
}

Tensor max_scalar(const Tensor& a, double floor) {
    return unary(
        a, [floor](double x) { return x > floor ? x : floor; },
        [floor](double x, double) { return x > floor ? 1.0 : 0.0; });
}

Tensor sum(const Tensor& a) {
    double total = 0.0;
    for (double v : a.data()) total += v;
    const std::size_t n = a.size();
    return Tensor::make_result({1, 1}, {total}, {a}, [n](const Tensor& o) {
        o.parent(0).accumulate_grad(std::vector<double>(n, o.grad()[0]));
    });
}

Tensor mean_cols(const Tensor& a) {
    const std::size_t r = a.rows(), c = a.cols();
    if (c == 0) throw ShapeError("mean_cols: no columns in " + a.shape().str());
    std::vector<double> out(r, 0.0);
    auto x = a.data();
    for (std::size_t i = 0; i < r; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < c; ++j) acc += x[i * c + j];
        out[i] = acc / static_cast<double>(c);
    }
    return Tensor::make_result({r, 1}, std::move(out), {a}, [r, c](const Tensor& o) {
        auto g = o.grad();
        std::vector<double> gi(r * c);
        const double inv = 1.0 / static_cast<double>(c);
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) gi[i * c + j] = g[i] * inv;
        o.parent(0).accumulate_grad(gi);
    });
}

Tensor add_column(const Tensor& a, const Tensor& column) {
    const std::size_t r = a.rows(), c = a.cols();
    if (column.rows() != r || column.cols() != 1)
        throw ShapeError("add_column: " + a.shape().str() + " + " + column.shape().str());
    std::vector<double> out(a.data().begin(), a.data().end());
    auto v = column.data();
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] += v[i];
    return Tensor::make_result({r, c}, std::move(out), {a, column}, [r, c](const Tensor& o) {
        auto g = o.grad();
        if (o.parent(0).requires_grad()) o.parent(0).accumulate_grad(g);
        if (o.parent(1).requires_grad()) {
            std::vector<double> gc(r, 0.0);
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) gc[i] += g[i * c + j];
            o.parent(1).accumulate_grad(gc);
        }
    });
}

Tensor scale_columns(const Tensor& a, std::span<const double> factors) {
    const std::size_t r = a.rows(), c = a.cols();
    if (factors.size() != c)
        throw ShapeError("scale_columns: " + std::to_string(factors.size()) +
                         " factors for " + a.shape().str());
    std::vector<double> f(factors.begin(), factors.end());
    std::vector<double> out(a.data().begin(), a.data().end());
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] *= f[j];
    return Tensor::make_result({r, c}, std::move(out), {a}, [r, c, f](const Tensor& o) {
        auto g = o.grad();
        std::vector<double> gi(r * c);
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) gi[i * c + j] = g[i * c + j] * f[j];
        o.parent(0).accumulate_grad(gi);
    });
}

Tensor softmax_cols(const Tensor& a) {
    const std::size_t r = a.rows(), c = a.cols();
    std::vector<double> out(r * c);
    auto x = a.data();
    for (std::size_t j = 0; j < c; ++j) {
        double mx = -INFINITY;
        for (std::size_t i = 0; i < r; ++i) mx = std::max(mx, x[i * c + j]);
        double z = 0.0;
        for (std::size_t i = 0; i < r; ++i) {
            out[i * c + j] = std::exp(x[i * c + j] - mx);
            z += out[i * c + j];
        }
        for (std::size_t i = 0; i < r; ++i) out[i * c + j] /= z;
    }
    return Tensor::make_result({r, c}, std::move(out), {a}, [r, c](const Tensor& o) {
        auto g = o.grad();
        auto p = o.data();
        std::vector<double> gi(r * c);
        for (std::size_t j = 0; j < c; ++j) {
            double dot = 0.0;
            for (std::size_t i = 0; i < r; ++i) dot += p[i * c + j] * g[i * c + j];
            for (std::size_t i = 0; i < r; ++i) gi[i * c + j] = p[i * c + j] * (g[i * c + j] - dot);
        }
        o.parent(0).accumulate_grad(gi);
    });
}

}  // namespace lhfglp
