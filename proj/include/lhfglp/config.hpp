#pragma once

#include <cstddef>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "lhfglp/training.hpp"

namespace lhfglp {

class ConfigError : public std::runtime_error {
 public:
    ConfigError(const std::string& what, std::size_t line)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const { return line_; }

 private:
    std::size_t line_;
};

struct KeyValue {
    std::size_t line = 0;  // 1-based
    std::string key;
    std::string value;
};

/// `key = value` lines; blank lines and lines starting with '#' are skipped.
/// Duplicate keys and lines without '=' are errors.
std::vector<KeyValue> parse_key_values(std::string_view text);

TrainConfig parse_train_config(std::string_view text);

/// A TrainConfig plus the files an experiment reads and writes. Relative
/// paths are resolved against the directory of the config file.
struct ExperimentConfig {
    TrainConfig train;
    std::filesystem::path dataset;
    std::filesystem::path manifest;
    std::filesystem::path output_dir;
};

ExperimentConfig parse_experiment_config(std::string_view text, const std::filesystem::path& base_dir);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

}  // namespace lhfglp
