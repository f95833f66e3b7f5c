#include "lhfglp/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "lhfglp/text_io.hpp"

namespace lhfglp {

namespace {

using Vec = std::vector<double>;

// k orthonormal random directions in R^dim (Gram-Schmidt on Gaussian draws).
std::vector<Vec> random_orthonormal(std::size_t k, std::size_t dim, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<Vec> basis;
    while (basis.size() < k) {
        Vec v(dim);
        for (double& x : v) x = normal(rng);
        for (const Vec& b : basis) {
            double dot = 0.0;
            for (std::size_t i = 0; i < dim; ++i) dot += v[i] * b[i];
            for (std::size_t i = 0; i < dim; ++i) v[i] -= dot * b[i];
        }
        double norm = 0.0;
        for (double x : v) norm += x * x;
        norm = std::sqrt(norm);
        if (norm < 1e-8) continue;
        for (double& x : v) x /= norm;
        basis.push_back(std::move(v));
    }
    return basis;
}

// Vertices of a centered regular simplex with k vertices, each of norm `radius`.
// A single vertex is a random direction of norm `radius`.
std::vector<Vec> simplex_offsets(std::size_t k, std::size_t dim, double radius,
                                 std::mt19937_64& rng) {
    auto basis = random_orthonormal(k, dim, rng);
    std::vector<Vec> out(k, Vec(dim, 0.0));
    if (k == 1) {
        for (std::size_t i = 0; i < dim; ++i) out[0][i] = radius * basis[0][i];
        return out;
    }
    Vec mean(dim, 0.0);
    for (const Vec& b : basis)
        for (std::size_t i = 0; i < dim; ++i) mean[i] += b[i] / static_cast<double>(k);
    const double vertex_norm = std::sqrt(1.0 - 1.0 / static_cast<double>(k));
    for (std::size_t j = 0; j < k; ++j)
        for (std::size_t i = 0; i < dim; ++i)
            out[j][i] = radius * (basis[j][i] - mean[i]) / vertex_norm;
    return out;
}

void check_config(const SyntheticConfig& cfg) {
    if (cfg.level_sizes.empty()) throw DatasetError("level_sizes must not be empty");
    if (cfg.n_per_class < 4) throw DatasetError("n_per_class must be at least 4");
    if (cfg.dim == 0) throw DatasetError("dim must be positive");
    if (cfg.level_sizes.size() > 1 && !(cfg.fine_sep < cfg.coarse_sep))
        throw DatasetError("fine_sep must be smaller than coarse_sep");
    if (!(cfg.fine_sep > 0.0) || !(cfg.coarse_sep > 0.0))
        throw DatasetError("separations must be positive");
    if (!(cfg.noise_sigma >= 0.0)) throw DatasetError("noise_sigma must be nonnegative");
    if (!(cfg.test_fraction > 0.0 && cfg.test_fraction < 1.0))
        throw DatasetError("test_fraction must lie in (0, 1)");
}

}  // namespace

std::vector<std::size_t> InstanceDataset::indices(Split which) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < split.size(); ++i)
        if (split[i] == which) out.push_back(i);
    return out;
}

void InstanceDataset::validate() const {
    const std::size_t n = labels.size();
    if (features.size() != n * dim)
        throw DatasetError("feature matrix has " + std::to_string(features.size()) +
                           " values, expected " + std::to_string(n * dim));
    if (split.size() != n) throw DatasetError("split length does not match instance count");
    if (hierarchy.levels() == 0) throw DatasetError("dataset has no hierarchy");
    for (double v : features)
        if (!std::isfinite(v)) throw DatasetError("non-finite feature value");
    const std::size_t c = hierarchy.fine_count();
    std::vector<std::size_t> train(c, 0), test(c, 0);
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] >= c)
            throw DatasetError("label " + std::to_string(labels[i] + 1) + " of instance " +
                               std::to_string(i) + " exceeds " + std::to_string(c) + " categories");
        (split[i] == Split::kTrain ? train : test)[labels[i]]++;
    }
    for (std::size_t k = 0; k < c; ++k)
        if (train[k] == 0 || test[k] == 0)
            throw DatasetError("fine category " + std::to_string(k + 1) +
                               " is missing from a split");
}

double synthetic_level_separation(const SyntheticConfig& cfg, std::size_t level) {
    const std::size_t h = cfg.level_sizes.size();
    if (level == 0 || h == 1) return cfg.coarse_sep;
    const double t = static_cast<double>(level) / static_cast<double>(h - 1);
    return cfg.coarse_sep * std::pow(cfg.fine_sep / cfg.coarse_sep, t);
}

InstanceDataset generate_synthetic(const SyntheticConfig& cfg) {
    check_config(cfg);
    Hierarchy h;
    try {
        h = Hierarchy::balanced(cfg.level_sizes);
    } catch (const HierarchyError& e) {
        throw DatasetError(std::string("inconsistent level sizes: ") + e.what());
    }
    std::mt19937_64 rng(cfg.seed);

    const std::size_t dim = cfg.dim;
    const std::size_t k0 = h.size(0);
    if (k0 > dim) throw DatasetError("dim must be at least the number of coarse categories");
    // Distance between simplex vertices of norm r is r * sqrt(2k / (k - 1)).
    const double r0 = k0 == 1 ? 0.0
                              : cfg.coarse_sep / std::sqrt(2.0 * static_cast<double>(k0) /
                                                           static_cast<double>(k0 - 1));
    std::vector<Vec> centroids = simplex_offsets(k0, dim, r0, rng);

    for (std::size_t l = 1; l < h.levels(); ++l) {
        const auto& parents = h.parent_map(l);
        const double sep = synthetic_level_separation(cfg, l);
        std::vector<Vec> next(h.size(l));
        for (std::size_t p = 0; p < h.size(l - 1); ++p) {
            std::vector<std::size_t> children;
            for (std::size_t c = 0; c < parents.size(); ++c)
                if (parents[c] == p) children.push_back(c);
            if (children.size() > dim)
                throw DatasetError("dim must be at least the largest sibling group (" +
                                   std::to_string(children.size()) + ")");
            auto offsets = simplex_offsets(children.size(), dim, sep, rng);
            for (std::size_t j = 0; j < children.size(); ++j) {
                Vec v = centroids[p];
                for (std::size_t i = 0; i < dim; ++i) v[i] += offsets[j][i];
                next[children[j]] = std::move(v);
            }
        }
        centroids = std::move(next);
    }

    InstanceDataset ds;
    ds.dim = dim;
    ds.hierarchy = h;
    const std::size_t c = h.fine_count();
    const std::size_t n_test = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::llround(cfg.test_fraction * static_cast<double>(cfg.n_per_class))),
        1, cfg.n_per_class - 1);
    ds.features.reserve(c * cfg.n_per_class * dim);
    std::normal_distribution<double> noise(0.0, 1.0);
    for (std::size_t k = 0; k < c; ++k) {
        for (std::size_t j = 0; j < cfg.n_per_class; ++j) {
            for (std::size_t i = 0; i < dim; ++i)
                ds.features.push_back(centroids[k][i] + cfg.noise_sigma * noise(rng));
            ds.labels.push_back(k);
            ds.split.push_back(j + n_test >= cfg.n_per_class ? Split::kTest : Split::kTrain);
        }
    }
    ds.validate();
    return ds;
}

// Layout:
//   LLPDS v1
//   N d_in H
//   size_0 ... size_{H-1}
//   one line per parent map (levels 1..H-1), 1-based parent indices
//   one line of N split flags (0 train, 1 test)
//   N records: label_fine f_1 ... f_d (label 1-based)
std::string serialize_dataset(const InstanceDataset& ds) {
    std::ostringstream os;
    const Hierarchy& h = ds.hierarchy;
    os << "LLPDS v1\n" << ds.size() << ' ' << ds.dim << ' ' << h.levels() << '\n';
    for (std::size_t l = 0; l < h.levels(); ++l) os << (l ? " " : "") << h.size(l);
    os << '\n';
    for (std::size_t l = 1; l < h.levels(); ++l) {
        const auto& map = h.parent_map(l);
        for (std::size_t c = 0; c < map.size(); ++c) os << (c ? " " : "") << map[c] + 1;
        os << '\n';
    }
    for (std::size_t i = 0; i < ds.size(); ++i)
        os << (i ? " " : "") << static_cast<int>(ds.split[i]);
    os << '\n';
    for (std::size_t i = 0; i < ds.size(); ++i) {
        os << ds.labels[i] + 1;
        for (double v : ds.row(i)) os << ' ' << text::format_double(v);
        os << '\n';
    }
    return os.str();
}

InstanceDataset parse_dataset(const std::string& buffer) {
    text::Reader in(buffer);
    in.expect("LLPDS");
    {
        const std::size_t at = in.offset();
        auto version = in.token("version");
        if (version != "v1") throw ParseError("unknown dataset version '" + std::string(version) + "'", at);
    }
    const std::size_t n = in.u64("instance count");
    const std::size_t dim = in.u64("feature dimension");
    const std::size_t at_levels = in.offset();
    const std::size_t levels = in.u64("level count");
    if (levels == 0 || levels > 64) throw ParseError("bad level count", at_levels);
    std::vector<std::size_t> sizes(levels);
    for (auto& s : sizes) s = in.u64("level size");
    std::vector<std::vector<std::size_t>> maps;
    for (std::size_t l = 1; l < levels; ++l) {
        std::vector<std::size_t> map(sizes[l]);
        for (auto& p : map) {
            const std::size_t at = in.offset();
            p = in.u64("parent index");
            if (p == 0) throw ParseError("parent indices are 1-based", at);
            --p;
        }
        maps.push_back(std::move(map));
    }

    InstanceDataset ds;
    ds.dim = dim;
    try {
        ds.hierarchy = Hierarchy(std::move(sizes), std::move(maps));
    } catch (const HierarchyError& e) {
        throw ParseError(std::string("invalid hierarchy: ") + e.what(), in.offset());
    }
    ds.split.resize(n);
    for (auto& s : ds.split) {
        const std::size_t at = in.offset();
        const auto flag = in.u64("split flag");
        if (flag > 1) throw ParseError("split flag must be 0 or 1", at);
        s = static_cast<Split>(flag);
    }
    ds.labels.resize(n);
    ds.features.resize(n * dim);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t at = in.offset();
        const std::size_t label = in.u64("fine label");
        if (label == 0 || label > ds.hierarchy.fine_count())
            throw ParseError("label " + std::to_string(label) + " out of range", at);
        ds.labels[i] = label - 1;
        for (std::size_t j = 0; j < dim; ++j) ds.features[i * dim + j] = in.f64("feature value");
    }
    in.expect_end();
    try {
        ds.validate();
    } catch (const DatasetError& e) {
        throw ParseError(e.what(), buffer.size());
    }
    return ds;
}

void save_dataset(const InstanceDataset& ds, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << serialize_dataset(ds);
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

InstanceDataset load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_dataset(buf.str());
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed) {
    std::uint64_t h = seed;
    for (unsigned char b : bytes) {
        h ^= b;
        h *= 1099511628211ULL;
    }
    return h;
}

std::uint64_t dataset_hash(const InstanceDataset& ds) { return fnv1a(serialize_dataset(ds)); }

std::string hex64(std::uint64_t value) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
    return buf;
}

double nearest_centroid_accuracy(const InstanceDataset& ds) {
    const std::size_t c = ds.hierarchy.fine_count();
    std::vector<Vec> means(c, Vec(ds.dim, 0.0));
    std::vector<std::size_t> counts(c, 0);
    for (std::size_t i : ds.indices(Split::kTrain)) {
        auto row = ds.row(i);
        for (std::size_t j = 0; j < ds.dim; ++j) means[ds.labels[i]][j] += row[j];
        counts[ds.labels[i]]++;
    }
    for (std::size_t k = 0; k < c; ++k)
        for (double& v : means[k]) v /= static_cast<double>(std::max<std::size_t>(counts[k], 1));
    const auto test = ds.indices(Split::kTest);
    std::size_t correct = 0;
    for (std::size_t i : test) {
        auto row = ds.row(i);
        std::size_t best = 0;
        double best_d = INFINITY;
        for (std::size_t k = 0; k < c; ++k) {
            double d = 0.0;
            for (std::size_t j = 0; j < ds.dim; ++j) d += (row[j] - means[k][j]) * (row[j] - means[k][j]);
            if (d < best_d) {
                best_d = d;
                best = k;
            }
        }
        correct += best == ds.labels[i];
    }
    return test.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(test.size());
}

}  // namespace lhfglp
