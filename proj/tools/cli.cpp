#include "cli.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include "lhfglp/bagging.hpp"
#include "lhfglp/config.hpp"
#include "lhfglp/dataset.hpp"
#include "lhfglp/gradient_suite.hpp"
#include "lhfglp/text_io.hpp"
#include "lhfglp/training.hpp"

namespace lhfglp::cli {

namespace {

namespace fs = std::filesystem;

class ValidationFailure : public std::runtime_error {
 public:
    using std::runtime_error::runtime_error;
};

std::string flag_name(const std::string& key) {
    std::string flag = key;
    for (char& c : flag)
        if (c == '_') c = '-';
    return "--" + flag;
}

std::vector<std::size_t> parse_sizes(const std::string& text) {
    std::vector<std::size_t> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t pos = 0;
        const unsigned long long v = std::stoull(item, &pos);
        if (pos != item.size()) throw std::invalid_argument("bad size list '" + text + "'");
        out.push_back(v);
    }
    return out;
}

void write_file(const fs::path& path, const std::string& contents) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << contents;
}

const std::map<std::string, std::string>& key_help() {
    static const std::map<std::string, std::string> help{
        {"lr0", "Initial learning rate of the cosine schedule"},
        {"epochs", "Training epochs"},
        {"weight_decay", "L2 decay on weight matrices and atoms"},
        {"momentum", "SGD momentum"},
        {"bags_per_batch", "Bags per optimizer step"},
        {"seed", "Initialization and shuffle seed"},
        {"level_weights", "Per-level loss weights, coarse to fine (none = all 1)"},
        {"hidden_dim", "Hidden width of the feature extractor"},
        {"feature_dim", "Feature dimension d"},
        {"n_atoms", "Dictionary atoms per fine class"},
        {"layers", "Unrolled ISTA layers"},
        {"lambda_hidden", "Hidden width of the lambda learner"},
        {"initial_lambda", "Threshold the lambda learner starts from"},
        {"dictionary", "Use the category dictionary (on/off)"},
        {"activation", "Mask activation (sparsemax/softmax)"},
        {"mask_pooling", "Mask computed per bag or per instance (bag/instance)"},
        {"mask_levels", "Coarse levels used as masks (none for no masking)"},
    };
    return help;
}

/// Shortest text that reads back as the same double; other values unchanged.
std::string display_default(const std::string& value) {
    double v = 0.0;
    const auto [end, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (ec != std::errc() || end != value.data() + value.size()) return value;
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

/// Training flags mirror the config keys; values given on the command line
/// override the config file.
struct TrainFlags {
    std::string config;
    std::string dataset;
    std::string manifest;
    std::string out_dir;
    std::map<std::string, std::string> overrides;

    void add_to(CLI::App& cmd) {
        cmd.add_option("--config", config, "Experiment config file (key = value lines)");
        cmd.add_option("--dataset", dataset, "Dataset file (LLPDS v1)");
        cmd.add_option("--manifest", manifest, "Bag manifest file (LLPBAGS v1)");
        cmd.add_option("--out-dir", out_dir, "Output directory");
        const TrainConfig defaults;
        const std::vector<KeyValue> values = parse_key_values(defaults.to_text());
        for (const KeyValue& kv : values) {
            std::string names = flag_name(kv.key);
            if (kv.key == "dictionary") names += ",--dict";
            cmd.add_option_function<std::string>(
                   names, [this, key = kv.key](const std::string& v) { overrides[key] = v; },
                   key_help().at(kv.key))
                ->default_str(display_default(kv.value));
        }
    }

    ExperimentConfig resolve() const {
        ExperimentConfig x;
        if (!config.empty()) x = load_experiment_config(config);
        for (const auto& [key, value] : overrides) x.train.set(key, value);
        x.train.validate();
        if (!dataset.empty()) x.dataset = dataset;
        if (!manifest.empty()) x.manifest = manifest;
        if (!out_dir.empty()) x.output_dir = out_dir;
        if (x.dataset.empty()) throw CLI::RequiredError("--dataset (or 'dataset' in --config)");
        if (x.manifest.empty()) throw CLI::RequiredError("--manifest (or 'manifest' in --config)");
        if (x.output_dir.empty()) x.output_dir = ".";
        return x;
    }
};

void print_report(const EvalReport& r, const Hierarchy& h, std::ostream& out) {
    out << "instances " << r.total << "\n";
    for (std::size_t l = 0; l < r.level_accuracy.size(); ++l)
        out << "level " << l << " (" << h.size(l) << " classes) accuracy " << std::fixed
            << std::setprecision(4) << r.level_accuracy[l] << "\n";
    out << std::defaultfloat << "confusion (rows: true fine class, columns: predicted)\n";
    for (const auto& row : r.confusion) {
        for (std::size_t j = 0; j < row.size(); ++j) out << (j ? " " : "") << std::setw(4) << row[j];
        out << "\n";
    }
}

BagManifest load_checked_manifest(const fs::path& path, const InstanceDataset& ds, std::ostream& out) {
    BagManifest m = load_manifest(path);
    const ManifestReport report = validate_manifest(m, ds);
    if (!report.ok()) {
        for (const ManifestViolation& v : report.violations) out << "violation: " << v.message << "\n";
        throw ValidationFailure(std::to_string(report.violations.size()) + " manifest violations");
    }
    return m;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Hierarchical fine-grained learning from label proportions"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for every command");

    // generate
    SyntheticConfig gen;
    std::size_t classes = gen.level_sizes.back();
    std::string levels = "2,4";
    std::string gen_out;
    auto* generate = app.add_subcommand("generate", "Write a synthetic hierarchical dataset");
    generate->add_option("--seed", gen.seed, "Random seed")->capture_default_str();
    generate->add_option("--classes", classes, "Number of fine classes C")->capture_default_str();
    generate->add_option("--levels", levels, "Sizes of the coarser levels, coarse to fine")
        ->capture_default_str();
    generate->add_option("--n-per-class", gen.n_per_class, "Instances per fine class")->capture_default_str();
    generate->add_option("--dim", gen.dim, "Feature dimension")->capture_default_str();
    generate->add_option("--coarse-sep", gen.coarse_sep, "Distance between coarse centroids")
        ->capture_default_str();
    generate->add_option("--fine-sep", gen.fine_sep, "Sibling offset at the fine level")->capture_default_str();
    generate->add_option("--noise", gen.noise_sigma, "Per-coordinate noise sigma")->capture_default_str();
    generate->add_option("--test-fraction", gen.test_fraction, "Test share of each class")
        ->capture_default_str();
    generate->add_option("--out", gen_out, "Output dataset file")->required();

    // bag
    std::string bag_dataset, bag_out;
    std::size_t bag_size = kDefaultBagSize;
    std::uint64_t bag_seed = 1;
    auto* bag = app.add_subcommand("bag", "Partition the training split into label-proportion bags");
    bag->add_option("--dataset", bag_dataset, "Dataset file")->required();
    bag->add_option("--bag-size", bag_size, "Instances per bag")->capture_default_str();
    bag->add_option("--seed", bag_seed, "Shuffle seed")->capture_default_str();
    bag->add_option("--out", bag_out, "Output manifest file")->required();

    // validate
    std::string val_dataset, val_manifest;
    auto* validate = app.add_subcommand("validate", "Check a bag manifest against its dataset");
    validate->add_option("--dataset", val_dataset, "Dataset file")->required();
    validate->add_option("--manifest", val_manifest, "Manifest file")->required();

    // train
    TrainFlags train_flags;
    std::string resume;
    std::size_t stop_after = 0;
    auto* train_cmd = app.add_subcommand("train", "Train a model; writes checkpoint.llpckpt and metrics.csv");
    train_flags.add_to(*train_cmd);
    train_cmd->add_option("--resume", resume, "Continue from this checkpoint");
    train_cmd->add_option("--stop-after", stop_after,
                          "Stop after this epoch (0 = run to --epochs); the schedule still spans --epochs");

    // eval
    std::string eval_dataset, eval_checkpoint, eval_split = "test";
    auto* eval = app.add_subcommand("eval", "Instance-level accuracy of a checkpoint");
    eval->add_option("--dataset", eval_dataset, "Dataset file")->required();
    eval->add_option("--checkpoint", eval_checkpoint, "Checkpoint file")->required();
    eval->add_option("--split", eval_split, "Split to score")
        ->check(CLI::IsMember({"test", "train"}))
        ->capture_default_str();

    // eval-oracle
    std::string oracle_dataset;
    auto* oracle = app.add_subcommand("eval-oracle", "Nearest-centroid accuracy (uses labels)");
    oracle->add_option("--dataset", oracle_dataset, "Dataset file")->required();

    // ablate
    TrainFlags ablate_flags;
    std::string seeds_text = "1,2,3";
    std::string ablate_out;
    auto* ablate = app.add_subcommand("ablate", "Train every ablation arm over several seeds");
    ablate_flags.add_to(*ablate);
    ablate->add_option("--seeds", seeds_text, "Comma-separated training seeds")->capture_default_str();
    ablate->add_option("--out", ablate_out, "Table file (default: <out-dir>/ablation.csv)");

    // gradcheck
    std::uint64_t gc_seed = 1;
    double gc_eps = 1e-5, gc_tol = 1e-4;
    auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every gradient");
    gradcheck->add_option("--seed", gc_seed, "Input seed")->capture_default_str();
    gradcheck->add_option("--eps", gc_eps, "Central-difference step")->capture_default_str();
    gradcheck->add_option("--tol", gc_tol, "Relative error tolerance")->capture_default_str();

    std::vector<const char*> argv;
    for (const std::string& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (generate->parsed()) {
            gen.level_sizes = levels.empty() ? std::vector<std::size_t>{} : parse_sizes(levels);
            gen.level_sizes.push_back(classes);
            const InstanceDataset ds = generate_synthetic(gen);
            save_dataset(ds, gen_out);
            out << "wrote " << gen_out << ": " << ds.size() << " instances, " << ds.hierarchy.levels()
                << " levels, hash " << hex64(dataset_hash(ds)) << "\n";
        } else if (bag->parsed()) {
            const InstanceDataset ds = load_dataset(bag_dataset);
            BagManifest m = make_bags(ds, bag_size, bag_seed);
            m.dataset_path = bag_dataset;
            save_manifest(m, bag_out);
            out << "wrote " << bag_out << ": " << m.bags.size() << " bags of " << m.bag_size << ", "
                << m.dropped << " dropped, hash " << hex64(manifest_hash(m)) << "\n";
        } else if (validate->parsed()) {
            const InstanceDataset ds = load_dataset(val_dataset);
            const BagManifest m = load_checked_manifest(val_manifest, ds, out);
            out << "ok: " << m.bags.size() << " bags, 0 violations\n";
        } else if (train_cmd->parsed()) {
            const ExperimentConfig x = train_flags.resolve();
            const InstanceDataset ds = load_dataset(x.dataset);
            const BagManifest m = load_checked_manifest(x.manifest, ds, out);
            Checkpoint previous;
            if (!resume.empty()) previous = load_checkpoint(resume);
            const TrainResult r = train(ds, m, x.train, resume.empty() ? nullptr : &previous,
                                        stop_after == 0 ? std::nullopt : std::optional<std::size_t>(stop_after));
            fs::create_directories(x.output_dir);
            save_checkpoint(r.checkpoint, x.output_dir / "checkpoint.llpckpt");
            write_file(x.output_dir / "metrics.csv", metrics_csv(r.checkpoint.history, ds.hierarchy.levels()));
            out << "config hash " << hex64(r.checkpoint.config_hash) << ", manifest hash "
                << hex64(r.checkpoint.manifest_hash) << "\n";
            if (!r.checkpoint.history.empty()) {
                const EpochMetrics& last = r.checkpoint.history.back();
                out << "epoch " << last.epoch << " train_loss " << text::format_double(last.train_loss)
                    << " test fine accuracy " << text::format_double(last.level_accuracy.back()) << "\n";
            }
            out << "wrote " << (x.output_dir / "checkpoint.llpckpt").string() << " and "
                << (x.output_dir / "metrics.csv").string() << "\n";
        } else if (eval->parsed()) {
            const InstanceDataset ds = load_dataset(eval_dataset);
            const Checkpoint c = load_checkpoint(eval_checkpoint);
            const Model model = restore_model(c, ds);
            print_report(evaluate(model, ds, eval_split == "test" ? Split::kTest : Split::kTrain),
                         ds.hierarchy, out);
        } else if (oracle->parsed()) {
            const InstanceDataset ds = load_dataset(oracle_dataset);
            out << "nearest-centroid fine accuracy " << text::format_double(nearest_centroid_accuracy(ds))
                << "\n";
        } else if (ablate->parsed()) {
            const ExperimentConfig x = ablate_flags.resolve();
            const InstanceDataset ds = load_dataset(x.dataset);
            const BagManifest m = load_checked_manifest(x.manifest, ds, out);
            std::vector<std::uint64_t> seeds;
            for (std::size_t s : parse_sizes(seeds_text)) seeds.push_back(s);
            const AblationTable t = run_ablation(ds, m, x.train, standard_arms(), seeds);
            const fs::path path = ablate_out.empty() ? x.output_dir / "ablation.csv" : fs::path(ablate_out);
            write_file(path, t.to_text());
            out << t.to_text() << "wrote " << path.string() << "\n";
        } else if (gradcheck->parsed()) {
            bool all = true;
            for (const GradientCheck& c : run_gradient_suite(gc_seed, gc_eps, gc_tol)) {
                out << (c.report.pass ? "PASS " : "FAIL ") << c.name << ": " << c.report.summary() << "\n";
                all = all && c.report.pass;
            }
            if (!all) {
                err << "gradient check failed\n";
                return kNumerical;
            }
        }
    } catch (const CLI::Error& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kUsage;
    } catch (const NumericalError& e) {
        err << "numerical failure: " << e.what() << "\n";
        return kNumerical;
    } catch (const ValidationFailure& e) {
        err << "validation failed: " << e.what() << "\n";
        return kValidation;
    } catch (const StaleManifestError& e) {
        err << "validation failed: " << e.what() << "\n";
        return kValidation;
    } catch (const CheckpointError& e) {
        err << "validation failed: " << e.what() << "\n";
        return kValidation;
    } catch (const ParseError& e) {
        err << "validation failed: " << e.what() << "\n";
        return kValidation;
    } catch (const DatasetError& e) {
        err << "validation failed: " << e.what() << "\n";
        return kValidation;
    } catch (const BaggingError& e) {
        err << "validation failed: " << e.what() << "\n";
        return kValidation;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kFailure;
    }
    return kOk;
}

}  // namespace lhfglp::cli
