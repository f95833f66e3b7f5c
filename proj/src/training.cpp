#include "lhfglp/training.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "lhfglp/config.hpp"
#include "lhfglp/text_io.hpp"

namespace lhfglp {

namespace {

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
    T out{};
    const char* first = value.data();
    const char* last = value.data() + value.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    if (ec != std::errc() || ptr != last || value.empty())
        throw std::invalid_argument("bad value '" + value + "' for " + key);
    return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "on" || value == "true" || value == "1") return true;
    if (value == "off" || value == "false" || value == "0") return false;
    throw std::invalid_argument("bad value '" + value + "' for " + key + " (expected on/off)");
}

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& value) {
    std::vector<T> out;
    if (value == "none" || value.empty()) return out;
    std::size_t pos = 0;
    while (pos <= value.size()) {
        const auto comma = std::min(value.find(',', pos), value.size());
        std::string item = value.substr(pos, comma - pos);
        item.erase(0, item.find_first_not_of(' '));
        item.erase(item.find_last_not_of(' ') + 1);
        out.push_back(parse_number<T>(key, item));
        pos = comma + 1;
    }
    return out;
}

template <typename T>
std::string join(const std::vector<T>& v) {
    if (v.empty()) return "none";
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ",";
        if constexpr (std::is_floating_point_v<T>) {
            s += text::format_double(v[i]);
        } else {
            s += std::to_string(v[i]);
        }
    }
    return s;
}

}  // namespace

// ---------------------------------------------------------------- config

void TrainConfig::validate() const {
    if (!(lr0 > 0.0)) throw std::invalid_argument("lr0 must be positive");
    if (epochs == 0) throw std::invalid_argument("epochs must be at least 1");
    if (weight_decay < 0.0) throw std::invalid_argument("weight_decay must be nonnegative");
    if (momentum < 0.0 || momentum >= 1.0) throw std::invalid_argument("momentum must be in [0, 1)");
    if (bags_per_batch == 0) throw std::invalid_argument("bags_per_batch must be positive");
    for (double w : level_weights)
        if (!(w >= 0.0)) throw std::invalid_argument("level weights must be nonnegative");
}

std::vector<std::string> TrainConfig::keys() {
    return {"lr0",  "epochs",          "weight_decay",  "momentum",       "bags_per_batch",
            "seed", "level_weights",   "hidden_dim",    "feature_dim",    "n_atoms",
            "layers", "lambda_hidden", "initial_lambda", "dictionary",    "activation",
            "mask_pooling", "mask_levels"};
}

std::string TrainConfig::to_text() const {
    std::ostringstream o;
    o << "lr0 = " << text::format_double(lr0) << "\n"
      << "epochs = " << epochs << "\n"
      << "weight_decay = " << text::format_double(weight_decay) << "\n"
      << "momentum = " << text::format_double(momentum) << "\n"
      << "bags_per_batch = " << bags_per_batch << "\n"
      << "seed = " << seed << "\n"
      << "level_weights = " << join(level_weights) << "\n"
      << "hidden_dim = " << model.hidden_dim << "\n"
      << "feature_dim = " << model.feature_dim << "\n"
      << "n_atoms = " << model.n_atoms << "\n"
      << "layers = " << model.layers << "\n"
      << "lambda_hidden = " << model.lambda_hidden << "\n"
      << "initial_lambda = " << text::format_double(model.initial_lambda) << "\n"
      << "dictionary = " << (model.dictionary ? "on" : "off") << "\n"
      << "activation = " << to_string(model.activation) << "\n"
      << "mask_pooling = " << to_string(model.pooling) << "\n"
      << "mask_levels = " << join(model.mask_levels) << "\n";
    return o.str();
}

std::uint64_t TrainConfig::hash() const { return fnv1a(to_text()); }

void TrainConfig::set(const std::string& key, const std::string& value) {
    if (key == "lr0") {
        lr0 = parse_number<double>(key, value);
    } else if (key == "epochs") {
        epochs = parse_number<std::size_t>(key, value);
    } else if (key == "weight_decay") {
        weight_decay = parse_number<double>(key, value);
    } else if (key == "momentum") {
        momentum = parse_number<double>(key, value);
    } else if (key == "bags_per_batch") {
        bags_per_batch = parse_number<std::size_t>(key, value);
    } else if (key == "seed") {
        seed = parse_number<std::uint64_t>(key, value);
    } else if (key == "level_weights") {
        level_weights = parse_list<double>(key, value);
    } else if (key == "hidden_dim") {
        model.hidden_dim = parse_number<std::size_t>(key, value);
    } else if (key == "feature_dim") {
        model.feature_dim = parse_number<std::size_t>(key, value);
    } else if (key == "n_atoms") {
        model.n_atoms = parse_number<std::size_t>(key, value);
    } else if (key == "layers") {
        model.layers = parse_number<std::size_t>(key, value);
    } else if (key == "lambda_hidden") {
        model.lambda_hidden = parse_number<std::size_t>(key, value);
    } else if (key == "initial_lambda") {
        model.initial_lambda = parse_number<double>(key, value);
    } else if (key == "dictionary") {
        model.dictionary = parse_bool(key, value);
    } else if (key == "activation") {
        model.activation = parse_mask_activation(value);
    } else if (key == "mask_pooling") {
        model.pooling = parse_mask_pooling(value);
    } else if (key == "mask_levels") {
        model.mask_levels = parse_list<std::size_t>(key, value);
    } else {
        throw std::invalid_argument("unknown key '" + key + "'");
    }
}

// -------------------------------------------------------------- schedule

double cosine_lr(std::size_t t, std::size_t epochs, double lr0) {
    if (epochs == 0) throw std::invalid_argument("cosine_lr: epochs must be positive");
    if (t > epochs)
        throw std::out_of_range("cosine_lr: epoch " + std::to_string(t) + " beyond " +
                                std::to_string(epochs));
    const double x = std::numbers::pi * static_cast<double>(t) / static_cast<double>(epochs);
    return 0.5 * lr0 * (1.0 + std::cos(x));
}

double cosine_lr(std::size_t t, const TrainConfig& config) {
    return cosine_lr(t, config.epochs, config.lr0);
}

// ------------------------------------------------------------------ loss

Tensor bag_loss(const Model& model, const TrainingBag& bag, std::span<const double> level_weights) {
    const std::size_t levels = model.hierarchy().levels();
    if (bag.proportions.size() != levels)
        throw std::invalid_argument("bag has proportions for " + std::to_string(bag.proportions.size()) +
                                    " levels, model has " + std::to_string(levels));
    if (!level_weights.empty() && level_weights.size() != levels)
        throw std::invalid_argument("level_weights needs one weight per hierarchy level");
    const ForwardResult r = model.forward_bag(bag.features);
    std::vector<std::vector<double>> targets;
    std::vector<Tensor> estimates;
    std::vector<double> weights;
    for (std::size_t l : model.supervised_levels()) {
        targets.push_back(bag.proportions[l]);
        estimates.push_back(bag_estimate(softmax_cols(r.level_logits[l])));
        weights.push_back(level_weights.empty() ? 1.0 : level_weights[l]);
    }
    return hierarchical_proportion_loss(targets, estimates, weights);
}

// ------------------------------------------------------------- optimizer

MomentumSgd::MomentumSgd(std::vector<NamedParameter> params, double momentum, double weight_decay)
    : params_(std::move(params)), momentum_(momentum), weight_decay_(weight_decay) {
    for (const NamedParameter& p : params_) velocity_.emplace_back(p.tensor.size(), 0.0);
}

void MomentumSgd::zero_grad() {
    for (NamedParameter& p : params_) p.tensor.zero_grad();
}

void MomentumSgd::step(double lr) {
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Tensor& t = params_[i].tensor;
        auto value = t.mutable_data();
        auto grad = t.grad();
        const double wd = params_[i].decay ? weight_decay_ : 0.0;
        std::vector<double>& v = velocity_[i];
        for (std::size_t j = 0; j < value.size(); ++j) {
            const double g = (grad.empty() ? 0.0 : grad[j]) + wd * value[j];
            v[j] = momentum_ * v[j] + g;
            value[j] -= lr * v[j];
        }
    }
}

// ------------------------------------------------------------ evaluation

EvalReport score_predictions(std::span<const std::size_t> predicted, std::span<const std::size_t> truth,
                             const Hierarchy& h) {
    if (predicted.size() != truth.size())
        throw std::invalid_argument("score_predictions: prediction and label counts differ");
    if (truth.empty()) throw std::invalid_argument("score_predictions: nothing to score");
    EvalReport r;
    r.total = truth.size();
    r.confusion.assign(h.fine_count(), std::vector<std::size_t>(h.fine_count(), 0));
    std::vector<std::size_t> correct(h.levels(), 0);
    for (std::size_t i = 0; i < truth.size(); ++i) {
        ++r.confusion.at(truth[i]).at(predicted[i]);
        for (std::size_t l = 0; l < h.levels(); ++l)
            if (h.ancestor(predicted[i], l) == h.ancestor(truth[i], l)) ++correct[l];
    }
    for (std::size_t c : correct)
        r.level_accuracy.push_back(static_cast<double>(c) / static_cast<double>(r.total));
    r.fine_accuracy = r.level_accuracy.back();
    return r;
}

EvalReport evaluate(const Model& model, const InstanceDataset& ds, Split split) {
    const std::vector<std::size_t> ids = ds.indices(split);
    if (ids.empty()) throw std::invalid_argument("evaluate: split has no instances");
    std::vector<std::size_t> predicted, truth;
    for (std::size_t i : ids) {
        predicted.push_back(predict_instance(model, ds.row(i)));
        truth.push_back(ds.labels[i]);
    }
    return score_predictions(predicted, truth, ds.hierarchy);
}

// ------------------------------------------------------------ checkpoint

namespace {

constexpr std::string_view kCheckpointMagic = "LLPCKPT v1\n";

class Writer {
 public:
    void u64(std::uint64_t v) {
        unsigned char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
        out_.append(reinterpret_cast<const char*>(b), 8);
    }
    void f64(double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        u64(bits);
    }
    void str(const std::string& s) {
        u64(s.size());
        out_ += s;
    }
    void doubles(const std::vector<double>& v) {
        u64(v.size());
        for (double x : v) f64(x);
    }
    std::string& out() { return out_; }

 private:
    std::string out_;
};

class BinaryReader {
 public:
    explicit BinaryReader(const std::string& in) : in_(in) {}
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
        pos_ += 8;
        return v;
    }
    double f64() {
        const std::uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, sizeof v);
        return v;
    }
    std::string str() {
        const std::uint64_t n = u64();
        need(n);
        std::string s = in_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    std::vector<double> doubles() {
        const std::uint64_t n = u64();
        need(n * 8);
        std::vector<double> v(n);
        for (double& x : v) x = f64();
        return v;
    }
    void need(std::uint64_t n) const {
        if (n > in_.size() - pos_)
            throw CheckpointError("checkpoint truncated at byte " + std::to_string(pos_));
    }
    bool at_end() const { return pos_ == in_.size(); }

 private:
    const std::string& in_;
    std::size_t pos_ = kCheckpointMagic.size();
};

}  // namespace

std::string serialize_checkpoint(const Checkpoint& c) {
    if (c.values.size() != c.names.size() || c.velocities.size() != c.names.size())
        throw CheckpointError("checkpoint has mismatched parameter tables");
    Writer w;
    w.out() = std::string(kCheckpointMagic);
    w.str(c.config_text);
    w.u64(c.config_hash);
    w.u64(c.manifest_hash);
    w.u64(c.epoch);
    w.u64(c.names.size());
    for (std::size_t i = 0; i < c.names.size(); ++i) {
        w.str(c.names[i]);
        w.doubles(c.values[i]);
        w.doubles(c.velocities[i]);
    }
    w.u64(c.history.size());
    for (const EpochMetrics& m : c.history) {
        w.u64(m.epoch);
        w.f64(m.lr);
        w.f64(m.train_loss);
        w.doubles(m.level_accuracy);
    }
    return std::move(w.out());
}

Checkpoint parse_checkpoint(const std::string& bytes) {
    if (bytes.compare(0, kCheckpointMagic.size(), kCheckpointMagic) != 0)
        throw CheckpointError("not a checkpoint (missing LLPCKPT v1 header)");
    BinaryReader r(bytes);
    Checkpoint c;
    c.config_text = r.str();
    c.config_hash = r.u64();
    c.manifest_hash = r.u64();
    c.epoch = r.u64();
    const std::uint64_t n = r.u64();
    for (std::uint64_t i = 0; i < n; ++i) {
        c.names.push_back(r.str());
        c.values.push_back(r.doubles());
        c.velocities.push_back(r.doubles());
    }
    const std::uint64_t epochs = r.u64();
    for (std::uint64_t i = 0; i < epochs; ++i) {
        EpochMetrics m;
        m.epoch = r.u64();
        m.lr = r.f64();
        m.train_loss = r.f64();
        m.level_accuracy = r.doubles();
        c.history.push_back(std::move(m));
    }
    if (!r.at_end()) throw CheckpointError("trailing bytes after checkpoint");
    if (fnv1a(c.config_text) != c.config_hash)
        throw CheckpointError("checkpoint config hash does not match its config text");
    return c;
}

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << serialize_checkpoint(c);
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_checkpoint(ss.str());
}

namespace {

void load_parameters(const Checkpoint& c, const std::vector<NamedParameter>& params) {
    if (c.names.size() != params.size())
        throw CheckpointError("checkpoint has " + std::to_string(c.names.size()) +
                              " parameters, model has " + std::to_string(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor t = params[i].tensor;
        if (c.names[i] != params[i].name || c.values[i].size() != t.size())
            throw CheckpointError("checkpoint parameter '" + c.names[i] + "' does not match '" +
                                  params[i].name + "' " + t.shape().str());
        std::copy(c.values[i].begin(), c.values[i].end(), t.mutable_data().begin());
    }
}

TrainConfig effective_config(const TrainConfig& config, const InstanceDataset& ds) {
    TrainConfig c = config;
    c.model.input_dim = ds.dim;
    c.validate();
    return c;
}

}  // namespace

Model restore_model(const Checkpoint& c, const InstanceDataset& ds) {
    const TrainConfig config = effective_config(parse_train_config(c.config_text), ds);
    Model m = Model::create(config.model, ds.hierarchy, config.seed);
    load_parameters(c, m.parameters());
    return m;
}

// -------------------------------------------------------------- training

TrainResult train(const InstanceDataset& ds, const BagManifest& manifest, const TrainConfig& config,
                  const Checkpoint* resume, std::optional<std::size_t> stop_after) {
    const TrainConfig cfg = effective_config(config, ds);
    const ManifestReport report = validate_manifest(manifest, ds);
    if (!report.ok())
        throw BaggingError("manifest has " + std::to_string(report.violations.size()) +
                           " violations; first: " + report.violations.front().message);

    TrainResult result{Model::create(cfg.model, ds.hierarchy, cfg.seed), {}};
    Model& model = result.model;
    const std::vector<NamedParameter> params = model.parameters();
    MomentumSgd opt(params, cfg.momentum, cfg.weight_decay);

    Checkpoint& ck = result.checkpoint;
    ck.config_text = cfg.to_text();
    ck.config_hash = fnv1a(ck.config_text);
    ck.manifest_hash = manifest_hash(manifest);
    if (resume != nullptr) {
        if (resume->config_hash != ck.config_hash)
            throw CheckpointError("cannot resume: checkpoint config hash " + hex64(resume->config_hash) +
                                  " differs from " + hex64(ck.config_hash));
        if (resume->manifest_hash != ck.manifest_hash)
            throw CheckpointError("cannot resume: checkpoint was trained on a different manifest");
        if (resume->epoch > cfg.epochs)
            throw CheckpointError("cannot resume: checkpoint is past the configured epochs");
        load_parameters(*resume, params);
        opt.velocities() = resume->velocities;
        ck.epoch = resume->epoch;
        ck.history = resume->history;
    }

    const std::vector<TrainingBag> bags = training_bags(manifest, ds);
    if (bags.empty()) throw BaggingError("manifest has no bags to train on");
    const std::size_t last = std::min(cfg.epochs, stop_after.value_or(cfg.epochs));
    for (std::size_t epoch = ck.epoch; epoch < last; ++epoch) {
        const double lr = cosine_lr(epoch, cfg);
        std::vector<std::size_t> order(bags.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::seed_seq seq{cfg.seed, static_cast<std::uint64_t>(epoch), std::uint64_t{0x6c6c70}};
        std::mt19937_64 rng(seq);
        std::shuffle(order.begin(), order.end(), rng);

        double total = 0.0;
        std::size_t batch = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.bags_per_batch, ++batch) {
            const std::size_t end = std::min(order.size(), start + cfg.bags_per_batch);
            const double inv = 1.0 / static_cast<double>(end - start);
            opt.zero_grad();
            for (std::size_t b = start; b < end; ++b) {
                Tensor loss;
                try {
                    loss = bag_loss(model, bags[order[b]], cfg.level_weights);
                } catch (const NumericalError& e) {
                    throw TrainingDivergence("epoch " + std::to_string(epoch + 1) + ", batch " +
                                                 std::to_string(batch + 1) + ": " + e.what(),
                                             epoch + 1, batch + 1);
                }
                if (!std::isfinite(loss.item()))
                    throw TrainingDivergence("epoch " + std::to_string(epoch + 1) + ", batch " +
                                                 std::to_string(batch + 1) + ": non-finite loss",
                                             epoch + 1, batch + 1);
                total += loss.item();
                scale(loss, inv).backward();
            }
            opt.step(lr);
            model.project();
        }
        const EvalReport eval = evaluate(model, ds, Split::kTest);
        ck.history.push_back({epoch + 1, lr, total / static_cast<double>(bags.size()), eval.level_accuracy});
        ck.epoch = epoch + 1;
    }

    ck.names.clear();
    ck.values.clear();
    for (const NamedParameter& p : params) {
        ck.names.push_back(p.name);
        ck.values.push_back(p.tensor.to_vector());
    }
    ck.velocities = opt.velocities();
    return result;
}

std::string metrics_csv(const std::vector<EpochMetrics>& history, std::size_t levels) {
    std::string out = "epoch,lr,train_loss";
    for (std::size_t l = 0; l < levels; ++l) out += ",test_acc_level" + std::to_string(l);
    out += "\n";
    for (const EpochMetrics& m : history) {
        out += std::to_string(m.epoch) + "," + text::format_double(m.lr) + "," +
               text::format_double(m.train_loss);
        for (double a : m.level_accuracy) out += "," + text::format_double(a);
        out += "\n";
    }
    return out;
}

// -------------------------------------------------------------- ablation

std::vector<AblationArm> standard_arms() {
    return {
        {"no-dict", false, {}, MaskActivation::kSparsemax},
        {"dict-no-mask", true, {}, MaskActivation::kSparsemax},
        {"dict+mask_c", true, {0}, MaskActivation::kSparsemax},
        {"dict+mask_m", true, {1}, MaskActivation::kSparsemax},
        {"dict+both", true, {0, 1}, MaskActivation::kSparsemax},
        {"dict+both-softmax", true, {0, 1}, MaskActivation::kSoftmax},
    };
}

const AblationRow& AblationTable::row(const std::string& name) const {
    for (const AblationRow& r : rows)
        if (r.name == name) return r;
    throw std::out_of_range("no ablation arm named '" + name + "'");
}

std::string AblationTable::to_text() const {
    std::ostringstream o;
    o << "# manifest " << hex64(manifest_hash) << ", seeds";
    for (std::uint64_t s : seeds) o << " " << s;
    o << "\narm,mean_acc,std_acc";
    for (std::size_t i = 0; i < seeds.size(); ++i) o << ",seed" << seeds[i];
    o << "\n";
    for (const AblationRow& r : rows) {
        o << r.name << "," << text::format_double(r.mean) << "," << text::format_double(r.stddev);
        for (double a : r.accuracy) o << "," << text::format_double(a);
        o << "\n";
    }
    return o.str();
}

AblationTable run_ablation(const InstanceDataset& ds, const BagManifest& manifest,
                           const TrainConfig& base, const std::vector<AblationArm>& arms,
                           const std::vector<std::uint64_t>& seeds) {
    if (seeds.empty()) throw std::invalid_argument("run_ablation: no seeds");
    AblationTable table;
    table.manifest_hash = manifest_hash(manifest);
    table.seeds = seeds;
    for (const AblationArm& arm : arms) {
        AblationRow row;
        row.name = arm.name;
        for (std::uint64_t seed : seeds) {
            TrainConfig cfg = base;
            cfg.seed = seed;
            cfg.model.dictionary = arm.dictionary;
            cfg.model.mask_levels = arm.mask_levels;
            cfg.model.activation = arm.activation;
            const TrainResult r = train(ds, manifest, cfg);
            row.accuracy.push_back(r.checkpoint.history.back().level_accuracy.back());
        }
        const double n = static_cast<double>(row.accuracy.size());
        row.mean = std::accumulate(row.accuracy.begin(), row.accuracy.end(), 0.0) / n;
        double ss = 0.0;
        for (double a : row.accuracy) ss += (a - row.mean) * (a - row.mean);
        row.stddev = row.accuracy.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
        table.rows.push_back(std::move(row));
    }
    return table;
}

}  // namespace lhfglp
