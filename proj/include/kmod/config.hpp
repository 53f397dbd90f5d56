#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "kmod/gan.hpp"

namespace kmod {

struct DataConfig {
    std::uint64_t base_seed = 1234;
    std::uint64_t source_seed = 1;
    std::uint64_t target_seed = 2;
    std::size_t n_source = 2000;
    std::size_t n_target = 1024;
    std::size_t image_size = 32;
    double target_delta = 0.9;  // used by probe/adapt/eval
    double near_delta = 0.2;
    double far_delta = 0.9;
};

struct MetricsConfig {
    std::uint64_t extractor_seed = 20220601;
    std::uint64_t latent_seed = 99;
    std::size_t n_generated = 500;
    std::vector<std::size_t> sample_sizes{16, 64, 256, 1024};
    std::size_t repeats = 20;
    std::vector<std::uint64_t> bench_seeds{0, 1, 2, 3, 4};
};

struct RunConfig {
    TrainConfig train;
    DataConfig data;
    MetricsConfig metrics;

    // Throws ConfigError.
    void validate() const;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Applies `section.key = value`; throws ConfigError naming the key on unknown
// keys or unparsable values. `where` prefixes messages (e.g. "run.ini:12").
void set_config_value(RunConfig& cfg, const std::string& section, const std::string& key, const std::string& value,
                      const std::string& where);
// "section.key=value"
void apply_override(RunConfig& cfg, const std::string& assignment);

// Layers an INI text over `cfg`. Sections [train], [data], [metrics].
void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& source_name);
void apply_config_file(RunConfig& cfg, const std::filesystem::path& path);

// Every field, in schema order, fully resolved. Re-reading it reproduces cfg.
std::string format_config(const RunConfig& cfg);

struct ConfigKey {
    std::string section;
    std::string key;
    std::string help;
};
const std::vector<ConfigKey>& config_keys();

}  // namespace kmod
