#include "lhfglp/sparse_coding.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace lhfglp {

Tensor soft_threshold(const Tensor& x, const Tensor& lambda) {
    if (lambda.size() != 1) throw ShapeError("soft_threshold: lambda must be 1x1, got " + lambda.shape().str());
    const double lam = lambda.item();
    if (!(lam >= 0.0)) throw std::invalid_argument("soft_threshold: negative lambda " + std::to_string(lam));
    auto xv = x.data();
    std::vector<double> out(xv.size());
    for (std::size_t i = 0; i < xv.size(); ++i) {
        const double a = std::abs(xv[i]) - lam;
        out[i] = a > 0.0 ? std::copysign(a, xv[i]) : 0.0;
    }
    return Tensor::make_result(x.shape(), std::move(out), {x, lambda}, [](const Tensor& o) {
        const Tensor& in = o.parent(0);
        const Tensor& lam_t = o.parent(1);
        const double lam_v = lam_t.item();
        auto g = o.grad();
        auto xv = in.data();
        std::vector<double> gx(g.size(), 0.0);
        double glam = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (std::abs(xv[i]) > lam_v) {
                gx[i] = g[i];
                glam -= g[i] * (xv[i] > 0.0 ? 1.0 : -1.0);
            }
        }
        if (in.requires_grad()) in.accumulate_grad(gx);
        if (lam_t.requires_grad()) lam_t.accumulate_grad(0, glam);
    });
}

Tensor soft_threshold(const Tensor& x, double lambda) {
    return soft_threshold(x, Tensor::scalar(lambda));
}

std::vector<double> sparsemax(std::span<const double> z) {
    if (z.empty()) throw ShapeError("sparsemax: empty input");
    for (double v : z)
        if (!std::isfinite(v)) throw DomainError("sparsemax: non-finite logit");
    // Working relative to the max makes the result exactly shift-invariant
    // whenever the shifted logits are themselves exact.
    const double top = *std::max_element(z.begin(), z.end());
    std::vector<double> sorted(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) sorted[i] = z[i] - top;
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    double cumsum = 0.0;
    double support_sum = 0.0;
    std::size_t k = 0;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        cumsum += sorted[i];
        if (1.0 + static_cast<double>(i + 1) * sorted[i] > cumsum) {
            k = i + 1;
            support_sum = cumsum;
        }
    }
    const double tau = (support_sum - 1.0) / static_cast<double>(k);
    std::vector<double> p(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) p[i] = std::max((z[i] - top) - tau, 0.0);
    return p;
}

Tensor sparsemax_cols(const Tensor& logits) {
    const std::size_t r = logits.rows(), c = logits.cols();
    std::vector<double> out(r * c);
    std::vector<double> column(r);
    auto x = logits.data();
    for (std::size_t j = 0; j < c; ++j) {
        for (std::size_t i = 0; i < r; ++i) column[i] = x[i * c + j];
        auto p = sparsemax(column);
        for (std::size_t i = 0; i < r; ++i) out[i * c + j] = p[i];
    }
    return Tensor::make_result({r, c}, std::move(out), {logits}, [r, c](const Tensor& o) {
        auto g = o.grad();
        auto p = o.data();
        std::vector<double> gi(r * c, 0.0);
        for (std::size_t j = 0; j < c; ++j) {
            double total = 0.0;
            std::size_t support = 0;
            for (std::size_t i = 0; i < r; ++i)
                if (p[i * c + j] > 0.0) {
                    total += g[i * c + j];
                    ++support;
                }
            const double mean = total / static_cast<double>(support);
            for (std::size_t i = 0; i < r; ++i)
                if (p[i * c + j] > 0.0) gi[i * c + j] = g[i * c + j] - mean;
        }
        o.parent(0).accumulate_grad(gi);
    });
}

std::vector<double> build_mask(std::span<const double> level_probs, const Hierarchy& h,
                               std::size_t level, std::size_t n_atoms) {
    if (level_probs.size() != h.size(level))
        throw ShapeError("build_mask: " + std::to_string(level_probs.size()) +
                         " probabilities for level " + std::to_string(level) + " with " +
                         std::to_string(h.size(level)) + " categories");
    std::vector<double> mask(h.fine_count() * n_atoms, 0.0);
    for (std::size_t c = 0; c < h.fine_count(); ++c) {
        if (level_probs[h.ancestor(c, level)] > 0.0)
            std::fill_n(mask.begin() + static_cast<std::ptrdiff_t>(c * n_atoms), n_atoms, 1.0);
    }
    return mask;
}

CategoryDictionary CategoryDictionary::random(std::size_t feature_dim, std::size_t categories,
                                              std::size_t n_atoms, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> values(feature_dim * categories * n_atoms);
    for (double& v : values) v = normal(rng);
    CategoryDictionary d;
    d.atoms = Tensor::from(feature_dim, categories * n_atoms, std::move(values), true);
    d.categories = categories;
    d.n_atoms = n_atoms;
    d.renormalize_columns();
    d.mu = Tensor::scalar(gram_spectral_norm(d.atoms), true);
    return d;
}

CategoryDictionary CategoryDictionary::from(Tensor atoms, double mu, std::size_t categories,
                                            std::size_t n_atoms) {
    if (atoms.cols() != categories * n_atoms)
        throw ShapeError("dictionary has " + std::to_string(atoms.cols()) + " columns, expected " +
                         std::to_string(categories * n_atoms));
    if (!(mu > 0.0)) throw std::invalid_argument("dictionary stepsize mu must be positive");
    CategoryDictionary d;
    d.atoms = std::move(atoms);
    d.mu = Tensor::scalar(mu, true);
    d.categories = categories;
    d.n_atoms = n_atoms;
    return d;
}

void CategoryDictionary::renormalize_columns() {
    const std::size_t r = atoms.rows(), c = atoms.cols();
    auto v = atoms.mutable_data();
    for (std::size_t j = 0; j < c; ++j) {
        double norm = 0.0;
        for (std::size_t i = 0; i < r; ++i) norm += v[i * c + j] * v[i * c + j];
        norm = std::sqrt(norm);
        if (norm == 0.0) continue;
        for (std::size_t i = 0; i < r; ++i) v[i * c + j] /= norm;
    }
}

double gram_spectral_norm(const Tensor& atoms, std::size_t iterations) {
    const std::size_t d = atoms.rows(), k = atoms.cols();
    auto a = atoms.data();
    std::vector<double> v(k, 1.0 / std::sqrt(static_cast<double>(k)));
    // Deterministic, non-degenerate start.
    for (std::size_t j = 0; j < k; ++j) v[j] += 1e-3 * static_cast<double>(j % 7);
    std::vector<double> dv(d), w(k);
    double eigen = 0.0;
    for (std::size_t it = 0; it < iterations; ++it) {
        std::fill(dv.begin(), dv.end(), 0.0);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < k; ++j) dv[i] += a[i * k + j] * v[j];
        std::fill(w.begin(), w.end(), 0.0);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < k; ++j) w[j] += a[i * k + j] * dv[i];
        double vv = 0.0, vw = 0.0, ww = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            vv += v[j] * v[j];
            vw += v[j] * w[j];
            ww += w[j] * w[j];
        }
        eigen = vw / vv;
        const double norm = std::sqrt(ww);
        if (norm == 0.0) return 0.0;
        for (std::size_t j = 0; j < k; ++j) v[j] = w[j] / norm;
    }
    return eigen;
}

MaskSchedule::MaskSchedule(std::vector<std::optional<std::size_t>> per_layer)
    : per_layer_(std::move(per_layer)) {
    if (per_layer_.empty()) throw std::invalid_argument("mask schedule needs at least one layer");
    std::optional<std::size_t> last;
    for (std::size_t t = 0; t < per_layer_.size(); ++t) {
        const auto& lvl = per_layer_[t];
        if (last && (!lvl || *lvl < *last))
            throw std::invalid_argument("mask schedule levels must be nondecreasing (layer " +
                                        std::to_string(t + 1) + ")");
        if (lvl) last = lvl;
    }
}

MaskSchedule MaskSchedule::unmasked(std::size_t layers) {
    return MaskSchedule(std::vector<std::optional<std::size_t>>(layers));
}

MaskSchedule MaskSchedule::progressive(std::size_t layers, const std::vector<std::size_t>& mask_levels) {
    return progressive_subset(layers, mask_levels, mask_levels);
}

MaskSchedule MaskSchedule::progressive_subset(std::size_t layers,
                                              const std::vector<std::size_t>& all_levels,
                                              const std::vector<std::size_t>& enabled) {
    if (layers == 0) throw std::invalid_argument("mask schedule needs at least one layer");
    const std::size_t groups = all_levels.size() + 1;
    if (layers < groups)
        throw std::invalid_argument(std::to_string(layers) + " layers cannot host " +
                                    std::to_string(all_levels.size()) + " mask stages");
    std::vector<std::optional<std::size_t>> per_layer(layers);
    std::optional<std::size_t> current;
    for (std::size_t g = 1; g < groups; ++g) {
        const std::size_t begin = g * layers / groups;
        const std::size_t end = (g + 1) * layers / groups;
        const std::size_t level = all_levels[g - 1];
        if (std::find(enabled.begin(), enabled.end(), level) != enabled.end()) current = level;
        for (std::size_t t = begin; t < end; ++t) per_layer[t] = current;
    }
    return MaskSchedule(std::move(per_layer));
}

std::vector<std::size_t> MaskSchedule::transitions() const {
    std::vector<std::size_t> out;
    std::optional<std::size_t> prev;
    for (std::size_t t = 0; t < per_layer_.size(); ++t) {
        if (per_layer_[t] && per_layer_[t] != prev) out.push_back(t);
        prev = per_layer_[t];
    }
    return out;
}

std::vector<std::size_t> MaskSchedule::masked_levels() const {
    std::vector<std::size_t> out;
    for (std::size_t t : transitions()) out.push_back(*per_layer_[t]);
    return out;
}

EncodeResult unrolled_encode(const Tensor& features, const CategoryDictionary& dict,
                             const Tensor& lambda, const MaskSchedule& schedule,
                             const MaskProvider& masks) {
    if (schedule.layers() == 0) throw std::invalid_argument("unrolled_encode: no layers");
    if (features.rows() != dict.feature_dim())
        throw ShapeError("unrolled_encode: features " + features.shape().str() +
                         " do not match dictionary " + dict.atoms.shape().str());
    if (!(lambda.item() >= 0.0)) throw std::invalid_argument("unrolled_encode: negative lambda");

    const std::size_t k = dict.columns();
    const std::size_t n = features.cols();
    const Tensor inv_mu = div(Tensor::scalar(1.0), dict.mu);
    const Tensor threshold = mul(lambda, inv_mu);
    // With D_t = D M the layer is W_t Z + W_e F = M (M Z - G M Z / mu + D^T F / mu)
    // for the unmasked Gram matrix G = D^T D, so G and D^T F are formed once.
    // M is binary, so masked rows of the output are exactly zero.
    const Tensor d_transposed = transpose(dict.atoms);
    const Tensor gram = matmul(d_transposed, dict.atoms);
    const Tensor drive = mul(inv_mu, matmul(d_transposed, features));

    EncodeResult result;
    Tensor z;  // undefined until the first layer: Z^(0) = 0
    std::optional<std::size_t> active;
    Tensor mask_matrix;
    for (std::size_t t = 0; t < schedule.layers(); ++t) {
        const auto level = schedule.level_at(t);
        if (level && level != active) {
            Tensor stage_code = z.defined() ? z : Tensor::zeros(k, n);
            std::vector<double> mask = masks(*level, stage_code);
            if (mask.size() == k) {
                std::vector<double> full(k * n);
                for (std::size_t a = 0; a < k; ++a)
                    for (std::size_t j = 0; j < n; ++j) full[a * n + j] = mask[a];
                mask_matrix = Tensor::from(k, n, std::move(full));
            } else if (mask.size() == k * n) {
                mask_matrix = Tensor::from(k, n, mask);
            } else {
                throw ShapeError("mask for level " + std::to_string(*level) + " has " +
                                 std::to_string(mask.size()) + " entries, expected " +
                                 std::to_string(k) + " or " + std::to_string(k * n));
            }
            result.stages.push_back({t, *level, stage_code, std::move(mask)});
        }
        active = level;

        Tensor pre = drive;
        if (z.defined()) {
            const Tensor zm = active ? mul(mask_matrix, z) : z;
            pre = add(sub(zm, mul(inv_mu, matmul(gram, zm))), drive);
        }
        if (active) pre = mul(mask_matrix, pre);
        z = soft_threshold(pre, threshold);
        for (double v : z.data())
            if (!std::isfinite(v))
                throw DivergenceError("unrolled_encode: non-finite code at layer " +
                                          std::to_string(t + 1) + " (mu too small for ||D||^2?)",
                                      t + 1);
    }
    result.code = z;
    return result;
}

EncodeResult unrolled_encode(const Tensor& features, const CategoryDictionary& dict,
                             const Tensor& lambda, const MaskSchedule& schedule,
                             const std::map<std::size_t, std::vector<double>>& masks) {
    return unrolled_encode(features, dict, lambda, schedule,
                           [&masks](std::size_t level, const Tensor&) {
                               auto it = masks.find(level);
                               if (it == masks.end())
                                   throw std::invalid_argument("no mask supplied for level " +
                                                               std::to_string(level));
                               return it->second;
                           });
}

double lasso_objective(std::span<const double> f, std::size_t dim, std::size_t n,
                       std::span<const double> dict, std::size_t atoms,
                       std::span<const double> code, double lambda) {
    double fit = 0.0;
    for (std::size_t i = 0; i < dim; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double r = f[i * n + j];
            for (std::size_t a = 0; a < atoms; ++a) r -= dict[i * atoms + a] * code[a * n + j];
            fit += r * r;
        }
    double l1 = 0.0;
    for (double v : code) l1 += std::abs(v);
    return 0.5 * fit + lambda * l1;
}

IstaResult ista_oracle(std::span<const double> f, std::size_t dim, std::size_t n,
                       std::span<const double> dict, std::size_t atoms, double lambda, double mu,
                       std::size_t iterations) {
    if (f.size() != dim * n || dict.size() != dim * atoms)
        throw ShapeError("ista_oracle: inconsistent matrix sizes");
    if (!(mu > 0.0)) throw StepsizeError("ista_oracle: mu must be positive");
    IstaResult out;
    out.code.assign(atoms * n, 0.0);
    std::vector<double> residual(dim * n);
    double previous = lasso_objective(f, dim, n, dict, atoms, out.code, lambda);
    const double shrink = lambda / mu;
    for (std::size_t it = 0; it < iterations; ++it) {
        // residual = D Z - F
        for (std::size_t i = 0; i < dim; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                double r = -f[i * n + j];
                for (std::size_t a = 0; a < atoms; ++a) r += dict[i * atoms + a] * out.code[a * n + j];
                residual[i * n + j] = r;
            }
        // Z <- S_{lambda/mu}(Z - D^T residual / mu)
        for (std::size_t a = 0; a < atoms; ++a)
            for (std::size_t j = 0; j < n; ++j) {
                double g = 0.0;
                for (std::size_t i = 0; i < dim; ++i) g += dict[i * atoms + a] * residual[i * n + j];
                const double v = out.code[a * n + j] - g / mu;
                const double m = std::abs(v) - shrink;
                out.code[a * n + j] = m > 0.0 ? std::copysign(m, v) : 0.0;
            }
        const double obj = lasso_objective(f, dim, n, dict, atoms, out.code, lambda);
        if (!std::isfinite(obj)) throw DivergenceError("ista_oracle: non-finite objective", it + 1);
        if (obj > previous + 1e-10 * (1.0 + std::abs(previous)))
            throw StepsizeError("ista_oracle: objective increased at iteration " +
                                std::to_string(it + 1) + "; mu is below the Lipschitz constant");
        out.objective.push_back(obj);
        previous = obj;
    }
    return out;
}

LambdaLearner LambdaLearner::zeros(std::size_t feature_dim, std::size_t hidden) {
    return {Tensor::zeros(hidden, feature_dim, true), Tensor::zeros(hidden, 1, true),
            Tensor::zeros(1, hidden, true), Tensor::zeros(1, 1, true)};
}

LambdaLearner LambdaLearner::random(std::size_t feature_dim, std::size_t hidden,
                                    double initial_lambda, std::mt19937_64& rng) {
    if (!(initial_lambda > 0.0)) throw std::invalid_argument("initial lambda must be positive");
    LambdaLearner l = zeros(feature_dim, hidden);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double s1 = 1.0 / std::sqrt(static_cast<double>(feature_dim));
    for (double& v : l.w1.mutable_data()) v = s1 * normal(rng);
    const double s2 = 0.1 / std::sqrt(static_cast<double>(hidden));
    for (double& v : l.w2.mutable_data()) v = s2 * normal(rng);
    // softplus^-1(lambda) = log(e^lambda - 1)
    l.b2.mutable_data()[0] = std::log(std::expm1(initial_lambda));
    return l;
}

Tensor LambdaLearner::operator()(const Tensor& features) const {
    Tensor pooled = mean_cols(features);
    Tensor hidden = tanh(add_column(matmul(w1, pooled), b1));
    return softplus(add(matmul(w2, hidden), b2));
}

}  // namespace lhfglp
