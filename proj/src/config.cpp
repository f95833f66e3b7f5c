#include "lhfglp/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace lhfglp {

namespace {

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return std::string(s.substr(first, last - first + 1));
}

}  // namespace

std::vector<KeyValue> parse_key_values(std::string_view text) {
    std::vector<KeyValue> out;
    std::set<std::string> seen;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto end = std::min(text.find('\n', pos), text.size());
        const std::string line = trim(text.substr(pos, end - pos));
        ++line_no;
        pos = end + 1;
        if (line.empty() || line.front() == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("expected 'key = value', got '" + line + "'", line_no);
        KeyValue kv{line_no, trim(std::string_view(line).substr(0, eq)),
                    trim(std::string_view(line).substr(eq + 1))};
        if (kv.key.empty()) throw ConfigError("missing key", line_no);
        if (!seen.insert(kv.key).second) throw ConfigError("duplicate key '" + kv.key + "'", line_no);
        out.push_back(std::move(kv));
    }
    return out;
}

TrainConfig parse_train_config(std::string_view text) {
    TrainConfig c;
    for (const KeyValue& kv : parse_key_values(text)) {
        try {
            c.set(kv.key, kv.value);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what(), kv.line);
        }
    }
    c.validate();
    return c;
}

ExperimentConfig parse_experiment_config(std::string_view text, const std::filesystem::path& base_dir) {
    ExperimentConfig x;
    x.output_dir = base_dir;
    auto resolve = [&](const std::string& v) {
        std::filesystem::path p(v);
        return p.is_absolute() ? p : base_dir / p;
    };
    for (const KeyValue& kv : parse_key_values(text)) {
        try {
            if (kv.key == "dataset") {
                x.dataset = resolve(kv.value);
            } else if (kv.key == "manifest") {
                x.manifest = resolve(kv.value);
            } else if (kv.key == "output_dir") {
                x.output_dir = resolve(kv.value);
            } else {
                x.train.set(kv.key, kv.value);
            }
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what(), kv.line);
        }
    }
    x.train.validate();
    return x;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open config " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_experiment_config(ss.str(), path.parent_path());
}

}  // namespace lhfglp
