#include "kmod/config.hpp"

#include <functional>
#include <sstream>

#include "kmod/io_util.hpp"

namespace kmod {

namespace {

struct Field {
    ConfigKey name;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
};

std::uint64_t parse_u64(const std::string& s) {
    const long long v = parse_int(s);
    if (v < 0) throw std::invalid_argument("expected a non-negative integer, got '" + s + "'");
    return static_cast<std::uint64_t>(v);
}

template <class T>
std::vector<T> parse_list(const std::string& s) {
    std::vector<T> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(static_cast<T>(parse_u64(std::string(trim(item)))));
    if (out.empty()) throw std::invalid_argument("expected a comma-separated list");
    return out;
}

template <class T>
std::string format_list(const std::vector<T>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(v[i]);
    }
    return out;
}

template <class T, class Member>
Field count_field(std::string section, std::string key, std::string help, Member member) {
    return {{std::move(section), std::move(key), std::move(help)},
            [member](const RunConfig& c) { return std::to_string(std::invoke(member, c)); },
            [member](RunConfig& c, const std::string& v) { std::invoke(member, c) = static_cast<T>(parse_u64(v)); }};
}

template <class Member>
Field real_field(std::string section, std::string key, std::string help, Member member) {
    return {{std::move(section), std::move(key), std::move(help)},
            [member](const RunConfig& c) { return format_double(std::invoke(member, c)); },
            [member](RunConfig& c, const std::string& v) { std::invoke(member, c) = parse_double(v); }};
}

const std::vector<Field>& fields() {
    static const std::vector<Field> table = [] {
        using S = std::size_t;
        using U = std::uint64_t;
        std::vector<Field> f;
        auto tr = [](auto ptr) { return [ptr](auto& c) -> auto& { return c.train.*ptr; }; };
        auto da = [](auto ptr) { return [ptr](auto& c) -> auto& { return c.data.*ptr; }; };
        auto me = [](auto ptr) { return [ptr](auto& c) -> auto& { return c.metrics.*ptr; }; };

        f.push_back(count_field<S>("train", "iter_pretrain", "source pretraining iterations", tr(&TrainConfig::iter_pretrain)));
        f.push_back(count_field<S>("train", "pretrain_batch_size", "source pretraining batch size",
                                   tr(&TrainConfig::pretrain_batch_size)));
        f.push_back(real_field("train", "pretrain_lr", "source pretraining learning rate", tr(&TrainConfig::pretrain_lr)));
        f.push_back(count_field<S>("train", "iter_probe", "importance probing iterations", tr(&TrainConfig::iter_probe)));
        f.push_back(count_field<S>("train", "iter_adapt", "adaptation iterations", tr(&TrainConfig::iter_adapt)));
        f.push_back(count_field<S>("train", "batch_size", "adaptation batch size", tr(&TrainConfig::batch_size)));
        f.push_back(real_field("train", "lr", "adaptation learning rate", tr(&TrainConfig::lr)));
        f.push_back(real_field("train", "modulation_lr", "learning rate for modulation vectors (0 = lr)",
                               tr(&TrainConfig::modulation_lr)));
        f.push_back(real_field("train", "beta1", "Adam beta1", tr(&TrainConfig::beta1)));
        f.push_back(real_field("train", "beta2", "Adam beta2", tr(&TrainConfig::beta2)));
        f.push_back(count_field<U>("train", "seed", "run seed", tr(&TrainConfig::seed)));
        f.push_back(real_field("train", "t", "importance quantile in percent", tr(&TrainConfig::t)));
        f.push_back(real_field("train", "t_discriminator", "discriminator quantile (0 = t)",
                               tr(&TrainConfig::t_discriminator)));
        f.push_back(count_field<S>("train", "k_shot", "few-shot target samples", tr(&TrainConfig::k_shot)));
        f.push_back({{"train", "method", "adam, tgan, freezed, modulate_all or freeze_important"},
                     [](const RunConfig& c) { return std::string(method_name(c.train.method)); },
                     [](RunConfig& c, const std::string& v) { c.train.method = parse_method(v); }});
        f.push_back(count_field<S>("train", "n_freeze", "FreezeD depth (0 = half the discriminator convs)",
                                   tr(&TrainConfig::n_freeze)));
        f.push_back(real_field("train", "mod_init_std", "modulation vector init std", tr(&TrainConfig::mod_init_std)));

        f.push_back(count_field<U>("data", "base_seed", "toy domain seed", da(&DataConfig::base_seed)));
        f.push_back(count_field<U>("data", "source_seed", "source dataset seed", da(&DataConfig::source_seed)));
        f.push_back(count_field<U>("data", "target_seed", "target dataset seed", da(&DataConfig::target_seed)));
        f.push_back(count_field<S>("data", "n_source", "source dataset size", da(&DataConfig::n_source)));
        f.push_back(count_field<S>("data", "n_target", "target dataset size", da(&DataConfig::n_target)));
        f.push_back(count_field<S>("data", "image_size", "image side length", da(&DataConfig::image_size)));
        f.push_back(real_field("data", "target_delta", "proximity knob of the adaptation target", da(&DataConfig::target_delta)));
        f.push_back(real_field("data", "near_delta", "near target for bench", da(&DataConfig::near_delta)));
        f.push_back(real_field("data", "far_delta", "far target for bench", da(&DataConfig::far_delta)));

        f.push_back(count_field<U>("metrics", "extractor_seed", "feature extractor seed", me(&MetricsConfig::extractor_seed)));
        f.push_back(count_field<U>("metrics", "latent_seed", "evaluation latent seed", me(&MetricsConfig::latent_seed)));
        f.push_back(count_field<S>("metrics", "n_generated", "generated samples per evaluation", me(&MetricsConfig::n_generated)));
        f.push_back({{"metrics", "sample_sizes", "proximity subsample sizes, comma separated"},
                     [](const RunConfig& c) { return format_list(c.metrics.sample_sizes); },
                     [](RunConfig& c, const std::string& v) { c.metrics.sample_sizes = parse_list<std::size_t>(v); }});
        f.push_back(count_field<S>("metrics", "repeats", "proximity repeats per size", me(&MetricsConfig::repeats)));
        f.push_back({{"metrics", "bench_seeds", "bench seeds, comma separated"},
                     [](const RunConfig& c) { return format_list(c.metrics.bench_seeds); },
                     [](RunConfig& c, const std::string& v) { c.metrics.bench_seeds = parse_list<std::uint64_t>(v); }});
        return f;
    }();
    return table;
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
    static const std::vector<ConfigKey> keys = [] {
        std::vector<ConfigKey> k;
        for (const auto& f : fields()) k.push_back(f.name);
        return k;
    }();
    return keys;
}

void RunConfig::validate() const {
    try {
        train.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("[train] ") + e.what());
    }
    auto bad = [](const std::string& key, const std::string& why) { throw ConfigError("invalid " + key + ": " + why); };
    auto check_delta = [&](const char* key, double d) {
        if (!(d >= 0.0 && d <= 1.0)) bad(std::string("data.") + key, "must lie in [0, 1]");
    };
    check_delta("target_delta", data.target_delta);
    check_delta("near_delta", data.near_delta);
    check_delta("far_delta", data.far_delta);
    if (data.n_source < 2) bad("data.n_source", "must be >= 2");
    if (data.n_target < train.k_shot) bad("data.n_target", "must be >= train.k_shot");
    if (data.n_target < 2) bad("data.n_target", "must be >= 2");
    if (data.image_size != 32) bad("data.image_size", "only 32 is supported by the bundled networks");
    if (metrics.n_generated < 2) bad("metrics.n_generated", "must be >= 2");
    if (metrics.repeats == 0) bad("metrics.repeats", "must be >= 1");
    for (auto s : metrics.sample_sizes) {
        if (s < 2) bad("metrics.sample_sizes", "entries must be >= 2");
        if (s > data.n_target) bad("metrics.sample_sizes", "entries must not exceed data.n_target");
    }
}

void set_config_value(RunConfig& cfg, const std::string& section, const std::string& key, const std::string& value,
                      const std::string& where) {
    for (const auto& f : fields()) {
        if (f.name.section != section || f.name.key != key) continue;
        try {
            f.set(cfg, value);
        } catch (const std::exception& e) {
            throw ConfigError(where + ": bad value for " + section + "." + key + ": " + e.what());
        }
        return;
    }
    throw ConfigError(where + ": unknown key '" + key + "' in [" + section + "]");
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
    const auto eq = assignment.find('=');
    const auto dot = assignment.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
        throw ConfigError("--set expects section.key=value, got '" + assignment + "'");
    }
    set_config_value(cfg, std::string(trim(assignment.substr(0, dot))),
                     std::string(trim(assignment.substr(dot + 1, eq - dot - 1))),
                     std::string(trim(assignment.substr(eq + 1))), "--set");
}

void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& source_name) {
    std::istringstream in(text);
    std::string raw, section;
    std::size_t line_no = 0;
    std::vector<std::string> seen;
    while (std::getline(in, raw)) {
        ++line_no;
        const std::string where = source_name + ":" + std::to_string(line_no);
        const std::string line(trim(raw));
        if (line.empty() || line[0] == '#' || line[0] == ';') continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(where + ": malformed section header '" + line + "'");
            section = std::string(trim(line.substr(1, line.size() - 2)));
            if (section != "train" && section != "data" && section != "metrics") {
                throw ConfigError(where + ": unknown section [" + section + "]");
            }
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(where + ": expected key = value, got '" + line + "'");
        if (section.empty()) throw ConfigError(where + ": key outside of a section");
        const std::string key(trim(line.substr(0, eq)));
        const std::string full = section + "." + key;
        for (const auto& s : seen) {
            if (s == full) throw ConfigError(where + ": duplicate key '" + key + "' in [" + section + "]");
        }
        set_config_value(cfg, section, key, std::string(trim(line.substr(eq + 1))), where);
        seen.push_back(full);
    }
}

void apply_config_file(RunConfig& cfg, const std::filesystem::path& path) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
    apply_config_text(cfg, text, path.string());
}

std::string format_config(const RunConfig& cfg) {
    std::string out = "# resolved configuration\n";
    std::string section;
    for (const auto& f : fields()) {
        if (f.name.section != section) {
            section = f.name.section;
            out += "\n[" + section + "]\n";
        }
        out += f.name.key + " = " + f.get(cfg) + "\n";
    }
    return out;
}

}  // namespace kmod
