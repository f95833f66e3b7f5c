#include "lhfglp/bagging.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <unordered_map>

#include "lhfglp/text_io.hpp"

namespace lhfglp {

namespace {

// Converts a proportion vector back to integer counts; false if an entry is
// not a multiple of 1/bag_size.
bool to_counts(const std::vector<double>& p, std::size_t bag_size, std::vector<long>& counts) {
    counts.resize(p.size());
    bool ok = true;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double scaled = p[i] * static_cast<double>(bag_size);
        counts[i] = std::lround(scaled);
        if (std::abs(scaled - static_cast<double>(counts[i])) > 1e-9 * static_cast<double>(bag_size))
            ok = false;
    }
    return ok;
}

}  // namespace

BagManifest make_bags(const InstanceDataset& ds, std::size_t bag_size, std::uint64_t seed) {
    if (bag_size < 2) throw BaggingError("bag_size must be at least 2");
    auto ids = ds.indices(Split::kTrain);
    if (ids.size() < bag_size)
        throw BaggingError("bag_size " + std::to_string(bag_size) + " exceeds the " +
                           std::to_string(ids.size()) + " train instances");
    std::mt19937_64 rng(seed);
    std::shuffle(ids.begin(), ids.end(), rng);

    const Hierarchy& h = ds.hierarchy;
    BagManifest m;
    m.dataset_hash = dataset_hash(ds);
    m.bag_size = bag_size;
    const std::size_t n_bags = ids.size() / bag_size;
    m.dropped = ids.size() - n_bags * bag_size;
    m.bags.reserve(n_bags);
    for (std::size_t b = 0; b < n_bags; ++b) {
        Bag bag;
        bag.instance_ids.assign(ids.begin() + static_cast<std::ptrdiff_t>(b * bag_size),
                                ids.begin() + static_cast<std::ptrdiff_t>((b + 1) * bag_size));
        for (std::size_t l = 0; l < h.levels(); ++l) {
            std::vector<std::size_t> counts(h.size(l), 0);
            for (std::size_t id : bag.instance_ids) counts[h.ancestor(ds.labels[id], l)]++;
            std::vector<double> p(counts.size());
            for (std::size_t k = 0; k < counts.size(); ++k)
                p[k] = static_cast<double>(counts[k]) / static_cast<double>(bag_size);
            bag.proportions.push_back(std::move(p));
        }
        m.bags.push_back(std::move(bag));
    }
    return m;
}

std::size_t ManifestReport::count(ManifestViolation::Kind kind) const {
    return static_cast<std::size_t>(std::count_if(
        violations.begin(), violations.end(), [kind](const auto& v) { return v.kind == kind; }));
}

ManifestReport validate_manifest(const BagManifest& m, const InstanceDataset& ds) {
    const std::uint64_t actual = dataset_hash(ds);
    if (actual != m.dataset_hash)
        throw StaleManifestError("manifest references dataset " + hex64(m.dataset_hash) +
                                 " but the dataset hashes to " + hex64(actual));
    using Kind = ManifestViolation::Kind;
    ManifestReport report;
    auto add = [&](Kind kind, std::size_t bag, std::size_t other, std::string msg) {
        report.violations.push_back({kind, bag, other, std::move(msg)});
    };

    const Hierarchy& h = ds.hierarchy;
    std::unordered_map<std::size_t, std::size_t> owner;
    std::size_t used = 0;
    for (std::size_t b = 0; b < m.bags.size(); ++b) {
        const Bag& bag = m.bags[b];
        const std::string where = "bag " + std::to_string(b);
        if (bag.instance_ids.size() != m.bag_size)
            add(Kind::kBagSize, b, b,
                where + " has " + std::to_string(bag.instance_ids.size()) + " members, expected " +
                    std::to_string(m.bag_size));

        bool ids_valid = true;
        for (std::size_t id : bag.instance_ids) {
            if (id >= ds.size()) {
                add(Kind::kInstanceRange, b, b, where + " references instance " + std::to_string(id));
                ids_valid = false;
                continue;
            }
            ++used;
            if (ds.split[id] != Split::kTrain)
                add(Kind::kTestInstance, b, b,
                    where + " holds test instance " + std::to_string(id));
            auto [it, inserted] = owner.emplace(id, b);
            if (!inserted)
                add(Kind::kDisjointness, it->second, b,
                    "instance " + std::to_string(id) + " appears in bag " +
                        std::to_string(it->second) + " and bag " + std::to_string(b));
        }

        if (bag.proportions.size() != h.levels()) {
            add(Kind::kLevelCount, b, b,
                where + " stores " + std::to_string(bag.proportions.size()) +
                    " proportion levels, expected " + std::to_string(h.levels()));
            continue;
        }
        std::vector<std::vector<long>> counts(h.levels());
        bool granular = true;
        for (std::size_t l = 0; l < h.levels(); ++l) {
            const auto& p = bag.proportions[l];
            const std::string lvl = where + " level " + std::to_string(l);
            if (p.size() != h.size(l)) {
                add(Kind::kLevelCount, b, b, lvl + " has length " + std::to_string(p.size()));
                granular = false;
                continue;
            }
            double total = 0.0;
            bool nonneg = true;
            for (double v : p) {
                total += v;
                nonneg = nonneg && v >= 0.0;
            }
            if (!nonneg || std::abs(total - 1.0) > 1e-9)
                add(Kind::kSimplex, b, b, lvl + " is not a probability vector (sum " +
                                              text::format_double(total) + ")");
            if (!to_counts(p, m.bag_size, counts[l])) {
                add(Kind::kGranularity, b, b,
                    lvl + " has an entry that is not a multiple of 1/" + std::to_string(m.bag_size));
                granular = false;
            }
        }
        if (!granular) continue;

        const std::size_t fine = h.fine_level();
        for (std::size_t l = 0; l < fine; ++l) {
            std::vector<long> coarsened(h.size(l), 0);
            for (std::size_t c = 0; c < h.fine_count(); ++c) coarsened[h.ancestor(c, l)] += counts[fine][c];
            if (coarsened != counts[l])
                add(Kind::kCoarsening, b, b,
                    where + " level " + std::to_string(l) +
                        " disagrees with the coarsened fine proportions");
        }
        if (ids_valid) {
            std::vector<long> actual_counts(h.fine_count(), 0);
            for (std::size_t id : bag.instance_ids) actual_counts[ds.labels[id]]++;
            if (actual_counts != counts[fine])
                add(Kind::kLabelMismatch, b, b,
                    where + " fine proportions do not match its instances");
        }
    }
    const std::size_t train = ds.indices(Split::kTrain).size();
    if (used + m.dropped != train)
        add(Kind::kDroppedCount, 0, 0,
            "dropped count " + std::to_string(m.dropped) + " plus " + std::to_string(used) +
                " bagged instances does not cover " + std::to_string(train) + " train instances");
    return report;
}

// Layout:
//   LLPBAGS v1
//   hash <16 hex digits>
//   path <rest of line>
//   bag_size <k> bags <n> dropped <d> levels <H>
//   per bag: "ids" + k instance ids, then H lines "p" + proportion vector
std::string serialize_manifest(const BagManifest& m) {
    std::ostringstream os;
    const std::size_t levels = m.bags.empty() ? 0 : m.bags.front().proportions.size();
    os << "LLPBAGS v1\nhash " << hex64(m.dataset_hash) << "\npath " << m.dataset_path
       << "\nbag_size " << m.bag_size << " bags " << m.bags.size() << " dropped " << m.dropped
       << " levels " << levels << '\n';
    for (const Bag& bag : m.bags) {
        os << "ids";
        for (std::size_t id : bag.instance_ids) os << ' ' << id;
        os << '\n';
        for (const auto& p : bag.proportions) {
            os << "p " << p.size();
            for (double v : p) os << ' ' << text::format_double(v);
            os << '\n';
        }
    }
    return os.str();
}

BagManifest parse_manifest(const std::string& buffer) {
    text::Reader in(buffer);
    in.expect("LLPBAGS");
    {
        const std::size_t at = in.offset();
        auto version = in.token("version");
        if (version != "v1")
            throw ParseError("unknown manifest version '" + std::string(version) + "'", at);
    }
    BagManifest m;
    in.expect("hash");
    m.dataset_hash = in.hex_u64("dataset hash");
    in.expect("path");
    {
        std::string_view rest = in.line("dataset path");
        if (!rest.empty() && rest.front() == ' ') rest.remove_prefix(1);
        m.dataset_path = std::string(rest);
    }
    in.expect("bag_size");
    m.bag_size = in.u64("bag size");
    in.expect("bags");
    const std::size_t n_bags = in.u64("bag count");
    in.expect("dropped");
    m.dropped = in.u64("dropped count");
    in.expect("levels");
    const std::size_t levels = in.u64("level count");
    m.bags.resize(n_bags);
    for (Bag& bag : m.bags) {
        in.expect("ids");
        bag.instance_ids.resize(m.bag_size);
        for (auto& id : bag.instance_ids) id = in.u64("instance id");
        bag.proportions.resize(levels);
        for (auto& p : bag.proportions) {
            in.expect("p");
            const std::size_t at = in.offset();
            const std::size_t len = in.u64("proportion length");
            if (len > 1'000'000) throw ParseError("implausible proportion length", at);
            p.resize(len);
            for (double& v : p) v = in.f64("proportion");
        }
    }
    in.expect_end();
    return m;
}

void save_manifest(const BagManifest& m, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << serialize_manifest(m);
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

BagManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_manifest(buf.str());
}

std::uint64_t manifest_hash(const BagManifest& m) {
    BagManifest copy = m;
    copy.dataset_path.clear();
    return fnv1a(serialize_manifest(copy));
}

Tensor feature_columns(const InstanceDataset& ds, std::span<const std::size_t> ids) {
    const std::size_t cols = ids.size();
    Tensor x = Tensor::zeros(ds.dim, cols);
    for (std::size_t j = 0; j < cols; ++j) {
        auto row = ds.row(ids[j]);
        for (std::size_t i = 0; i < ds.dim; ++i) x.at(i, j) = row[i];
    }
    return x;
}

std::vector<TrainingBag> training_bags(const BagManifest& m, const InstanceDataset& ds) {
    std::vector<TrainingBag> out;
    out.reserve(m.bags.size());
    for (const Bag& bag : m.bags) out.push_back({feature_columns(ds, bag.instance_ids), bag.proportions});
    return out;
}

}  // namespace lhfglp
