#include <stdexcept>

#include "kmod/container.hpp"
#include "kmod/gan.hpp"
#include "kmod/io_util.hpp"

namespace kmod {

namespace {

constexpr std::string_view kCheckpointMagic = "ADAMCKPT";

void append_network(const Network& net, std::vector<NamedTensor>& tensors, nlohmann::json& layers) {
    const std::string prefix = std::string(role_name(net.role())) + ".";
    for (const auto& l : net.layers()) {
        const std::string key = prefix + l.desc.name;
        tensors.push_back({key + ".weight", l.weight});
        tensors.push_back({key + ".bias", l.bias});
        nlohmann::json entry{{"regime", std::string(reinterpret_cast<const char*>(l.regime.data()), l.regime.size())},
                             {"bias_trainable", l.bias_trainable}};
        if (l.modulation) {
            tensors.push_back({key + ".m1", l.modulation->m1});
            tensors.push_back({key + ".m2", l.modulation->m2});
            entry["modulated_rows"] = l.modulation->modulated_rows;
            entry["base_frozen"] = l.modulation->base_frozen;
        }
        layers[key] = entry;
    }
}

Network restore_network(const nlohmann::json& spec_json, ContainerContents& contents, const nlohmann::json& layers,
                        const std::string& source) {
    auto spec = spec_from_json(spec_json);
    const std::string prefix = std::string(role_name(spec.role)) + ".";
    auto take = [&](const std::string& name) {
        auto it = contents.tensors.find(name);
        if (it == contents.tensors.end()) throw std::runtime_error(source + ": missing tensor '" + name + "'");
        return it->second;
    };
    std::vector<Tensor> weights, biases;
    for (const auto& d : spec.layers) {
        weights.push_back(take(prefix + d.name + ".weight"));
        biases.push_back(take(prefix + d.name + ".bias"));
    }
    auto net = Network::from_tensors(spec, std::move(weights), std::move(biases));
    for (auto& l : net.layers()) {
        const std::string key = prefix + l.desc.name;
        if (!layers.contains(key)) throw std::runtime_error(source + ": missing layer entry '" + key + "'");
        const auto& entry = layers.at(key);
        const auto regime = entry.at("regime").get<std::string>();
        if (regime.size() != l.kernels()) throw std::runtime_error(source + ": regime length mismatch for " + key);
        for (std::size_t r = 0; r < regime.size(); ++r) {
            const char c = regime[r];
            if (c != 'F' && c != 'M' && c != 'Z') throw std::runtime_error(source + ": bad regime code in " + key);
            l.regime[r] = static_cast<KernelRegime>(c);
        }
        l.bias_trainable = entry.at("bias_trainable").get<bool>();
        if (entry.contains("modulated_rows")) {
            ModulatedKernel mk;
            mk.base = l.weight;
            mk.m1 = take(key + ".m1");
            mk.m2 = take(key + ".m2");
            mk.modulated_rows = entry.at("modulated_rows").get<std::vector<std::size_t>>();
            mk.base_frozen = entry.at("base_frozen").get<bool>();
            check_invariants(mk);
            l.modulation = std::move(mk);
        }
    }
    net.apply_regimes();
    return net;
}

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
    std::vector<NamedTensor> tensors;
    nlohmann::json layers = nlohmann::json::object();
    append_network(ckpt.generator, tensors, layers);
    append_network(ckpt.discriminator, tensors, layers);
    nlohmann::json meta{{"generator_spec", to_json(ckpt.generator.spec())},
                        {"discriminator_spec", to_json(ckpt.discriminator.spec())},
                        {"config", to_json(ckpt.config)},
                        {"stage", ckpt.stage},
                        {"report_path", ckpt.report_path},
                        {"rng_state", ckpt.rng_state},
                        {"iteration", ckpt.iteration},
                        {"layers", layers}};
    return encode_container(kCheckpointMagic, meta, tensors);
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    write_file_atomic(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    const std::string source = path.string();
    auto contents = read_container(path, kCheckpointMagic);
    const auto& meta = contents.meta;
    try {
        Checkpoint c;
        c.generator = restore_network(meta.at("generator_spec"), contents, meta.at("layers"), source);
        c.discriminator = restore_network(meta.at("discriminator_spec"), contents, meta.at("layers"), source);
        c.config = train_config_from_json(meta.at("config"));
        c.stage = meta.at("stage").get<std::string>();
        c.report_path = meta.at("report_path").get<std::string>();
        c.rng_state = meta.at("rng_state").get<std::string>();
        c.iteration = meta.at("iteration").get<std::uint64_t>();
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(source + ": malformed checkpoint header: " + e.what());
    } catch (const std::invalid_argument& e) {
        throw std::runtime_error(source + ": " + e.what());
    }
}

}  // namespace kmod
