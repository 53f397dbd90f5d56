#include "kmod/network.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace kmod {

NetworkSpec default_generator_spec(std::size_t latent_dim, std::size_t image_size) {
    if (image_size % 8 != 0) throw std::invalid_argument("generator image size must be a multiple of 8");
    const std::size_t side = image_size / 8;
    NetworkSpec spec;
    spec.role = NetworkRole::Generator;
    spec.latent_dim = latent_dim;
    spec.image_size = image_size;
    spec.layers = {
        {"fc", LayerKind::Linear, latent_dim, 64 * side * side, 1, 1, 0, 1, side, Activation::LeakyRelu},
        {"conv1", LayerKind::Conv, 64, 32, 3, 1, 1, 2, 0, Activation::LeakyRelu},
        {"conv2", LayerKind::Conv, 32, 16, 3, 1, 1, 2, 0, Activation::LeakyRelu},
        {"conv3", LayerKind::Conv, 16, 3, 3, 1, 1, 2, 0, Activation::Tanh},
    };
    return spec;
}

NetworkSpec default_discriminator_spec(std::size_t image_size) {
    if (image_size % 8 != 0) throw std::invalid_argument("discriminator image size must be a multiple of 8");
    const std::size_t side = image_size / 8;
    NetworkSpec spec;
    spec.role = NetworkRole::Discriminator;
    spec.latent_dim = 0;
    spec.image_size = image_size;
    spec.layers = {
        {"conv1", LayerKind::Conv, 3, 16, 4, 2, 1, 1, 0, Activation::LeakyRelu},
        {"conv2", LayerKind::Conv, 16, 32, 4, 2, 1, 1, 0, Activation::LeakyRelu},
        {"conv3", LayerKind::Conv, 32, 64, 4, 2, 1, 1, 0, Activation::LeakyRelu},
        {"fc", LayerKind::Linear, 64 * side * side, 1, 1, 1, 0, 1, 0, Activation::None},
    };
    return spec;
}

namespace {

const char* kind_name(LayerKind k) { return k == LayerKind::Linear ? "linear" : "conv"; }

LayerKind parse_kind(const std::string& s) {
    if (s == "linear") return LayerKind::Linear;
    if (s == "conv") return LayerKind::Conv;
    throw std::invalid_argument("unknown layer kind '" + s + "'");
}

const char* activation_name(Activation a) {
    switch (a) {
        case Activation::None: return "none";
        case Activation::LeakyRelu: return "leaky_relu";
        case Activation::Tanh: return "tanh";
    }
    return "none";
}

Activation parse_activation(const std::string& s) {
    if (s == "none") return Activation::None;
    if (s == "leaky_relu") return Activation::LeakyRelu;
    if (s == "tanh") return Activation::Tanh;
    throw std::invalid_argument("unknown activation '" + s + "'");
}

Shape weight_shape(const LayerDesc& d) {
    if (d.kind == LayerKind::Linear) return {d.out_channels, d.in_channels};
    return {d.out_channels, d.in_channels, d.kernel, d.kernel};
}

}  // namespace

nlohmann::json to_json(const NetworkSpec& spec) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : spec.layers) {
        layers.push_back({{"name", l.name},
                          {"kind", kind_name(l.kind)},
                          {"in", l.in_channels},
                          {"out", l.out_channels},
                          {"kernel", l.kernel},
                          {"stride", l.stride},
                          {"padding", l.padding},
                          {"upsample", l.upsample},
                          {"reshape_side", l.reshape_side},
                          {"activation", activation_name(l.activation)}});
    }
    return {{"role", role_name(spec.role)},
            {"latent_dim", spec.latent_dim},
            {"image_size", spec.image_size},
            {"channels", spec.channels},
            {"layers", layers}};
}

NetworkSpec spec_from_json(const nlohmann::json& j) {
    NetworkSpec spec;
    spec.role = parse_role(j.at("role").get<std::string>());
    spec.latent_dim = j.at("latent_dim").get<std::size_t>();
    spec.image_size = j.at("image_size").get<std::size_t>();
    spec.channels = j.at("channels").get<std::size_t>();
    for (const auto& l : j.at("layers")) {
        LayerDesc d;
        d.name = l.at("name").get<std::string>();
        d.kind = parse_kind(l.at("kind").get<std::string>());
        d.in_channels = l.at("in").get<std::size_t>();
        d.out_channels = l.at("out").get<std::size_t>();
        d.kernel = l.at("kernel").get<std::size_t>();
        d.stride = l.at("stride").get<std::size_t>();
        d.padding = l.at("padding").get<std::size_t>();
        d.upsample = l.at("upsample").get<std::size_t>();
        d.reshape_side = l.at("reshape_side").get<std::size_t>();
        d.activation = parse_activation(l.at("activation").get<std::string>());
        spec.layers.push_back(std::move(d));
    }
    return spec;
}

Network Network::initialize(NetworkSpec spec, std::mt19937_64& rng) {
    std::vector<Tensor> weights, biases;
    for (const auto& d : spec.layers) {
        const auto shape = weight_shape(d);
        const double fan_in = static_cast<double>(kernel_fan_in(shape));
        const double stddev = std::sqrt(2.0 / ((1.0 + kLeakySlope * kLeakySlope) * fan_in));
        weights.push_back(Tensor::randn(shape, rng, stddev));
        biases.push_back(Tensor::zeros(Shape{d.out_channels}));
    }
    return from_tensors(std::move(spec), std::move(weights), std::move(biases));
}

Network Network::from_tensors(NetworkSpec spec, std::vector<Tensor> weights, std::vector<Tensor> biases) {
    if (weights.size() != spec.layers.size() || biases.size() != spec.layers.size()) {
        throw std::invalid_argument("network tensors do not match layer count");
    }
    Network net;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const auto& d = spec.layers[i];
        if (weights[i].shape() != weight_shape(d)) {
            throw std::invalid_argument("layer '" + d.name + "' weight shape " + to_string(weights[i].shape()) +
                                        " does not match " + to_string(weight_shape(d)));
        }
        if (biases[i].shape() != Shape{d.out_channels}) {
            throw std::invalid_argument("layer '" + d.name + "' bias shape " + to_string(biases[i].shape()));
        }
        Layer layer;
        layer.desc = d;
        layer.weight = std::move(weights[i]);
        layer.bias = std::move(biases[i]);
        layer.regime.assign(d.out_channels, KernelRegime::FineTuned);
        net.layers_.push_back(std::move(layer));
    }
    net.spec_ = std::move(spec);
    net.apply_regimes();
    return net;
}

Tensor Network::forward(Tape& tape, const Tensor& input) const {
    Tensor x = input;
    if (spec_.role == NetworkRole::Generator) {
        if (x.rank() != 2 || x.size(1) != spec_.latent_dim) {
            throw std::invalid_argument("generator expects latents [n, " + std::to_string(spec_.latent_dim) +
                                        "], got " + to_string(x.shape()));
        }
    } else if (x.rank() != 4 || x.size(1) != spec_.channels || x.size(2) != spec_.image_size ||
               x.size(3) != spec_.image_size) {
        throw std::invalid_argument("discriminator expects images [n, " + std::to_string(spec_.channels) + ", " +
                                    std::to_string(spec_.image_size) + ", " + std::to_string(spec_.image_size) +
                                    "], got " + to_string(x.shape()));
    }
    const std::size_t n = x.size(0);
    for (const auto& layer : layers_) {
        const auto& d = layer.desc;
        const Tensor w = layer.modulation ? effective_weights(tape, *layer.modulation) : layer.weight;
        if (d.upsample > 1) x = op::upsample_nearest(tape, x, d.upsample);
        if (d.kind == LayerKind::Linear) {
            if (x.rank() != 2) x = op::reshape(tape, x, Shape{n, x.numel() / n});
            x = op::linear(tape, x, w, layer.bias);
            if (d.reshape_side > 0) {
                const auto s = d.reshape_side;
                x = op::reshape(tape, x, Shape{n, d.out_channels / (s * s), s, s});
            }
        } else {
            x = op::conv2d(tape, x, w, layer.bias, d.stride, d.padding);
        }
        switch (d.activation) {
            case Activation::LeakyRelu: x = op::leaky_relu(tape, x, kLeakySlope); break;
            case Activation::Tanh: x = op::tanh(tape, x); break;
            case Activation::None: break;
        }
    }
    return x;
}

Layer& Network::layer(const std::string& name) {
    for (auto& l : layers_) {
        if (l.desc.name == name) return l;
    }
    throw std::invalid_argument("no layer named '" + name + "'");
}

const Layer& Network::layer(const std::string& name) const {
    for (const auto& l : layers_) {
        if (l.desc.name == name) return l;
    }
    throw std::invalid_argument("no layer named '" + name + "'");
}

std::size_t Network::kernel_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.kernels();
    return n;
}

std::size_t Network::full_param_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.weight.numel() + l.bias.numel();
    return n;
}

std::size_t Network::trainable_param_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) {
        const std::size_t row = l.weight.numel() / l.kernels();
        n += row * static_cast<std::size_t>(std::count(l.regime.begin(), l.regime.end(), KernelRegime::FineTuned));
        if (l.bias_trainable) n += l.bias.numel();
        if (l.modulation) n += l.modulation->m1.numel() + l.modulation->m2.numel();
    }
    return n;
}

void Network::apply_regimes() {
    for (auto& l : layers_) {
        const bool any_fine =
            std::find(l.regime.begin(), l.regime.end(), KernelRegime::FineTuned) != l.regime.end();
        l.weight.set_requires_grad(any_fine);
        l.bias.set_requires_grad(l.bias_trainable);
        if (l.modulation) {
            l.modulation->m1.set_requires_grad(true);
            l.modulation->m2.set_requires_grad(true);
        }
    }
}

void Network::disable_grads() {
    for (auto& l : layers_) {
        l.weight.set_requires_grad(false);
        l.bias.set_requires_grad(false);
        if (l.modulation) {
            l.modulation->m1.set_requires_grad(false);
            l.modulation->m2.set_requires_grad(false);
        }
    }
}

std::vector<Tensor> Network::trainable_tensors() const {
    std::vector<Tensor> out;
    for (const auto& l : layers_) {
        if (l.modulation) {
            out.push_back(l.modulation->m1);
            out.push_back(l.modulation->m2);
        }
        if (std::find(l.regime.begin(), l.regime.end(), KernelRegime::FineTuned) != l.regime.end()) {
            out.push_back(l.weight);
        }
        if (l.bias_trainable) out.push_back(l.bias);
    }
    return out;
}

std::vector<bool> Network::trainable_is_proxy() const {
    std::vector<bool> out;
    for (const auto& l : layers_) {
        if (l.modulation) {
            out.push_back(true);
            out.push_back(true);
        }
        if (std::find(l.regime.begin(), l.regime.end(), KernelRegime::FineTuned) != l.regime.end()) {
            out.push_back(false);
        }
        if (l.bias_trainable) out.push_back(false);
    }
    return out;
}

void Network::zero_grads() {
    for (auto t : trainable_tensors()) {
        t.ensure_grad();
        t.zero_grad();
    }
}

void Network::mask_frozen_grads() {
    for (auto& l : layers_) {
        if (!l.weight.has_grad()) continue;
        auto g = l.weight.grad();
        const std::size_t row = l.weight.numel() / l.kernels();
        for (std::size_t r = 0; r < l.kernels(); ++r) {
            if (l.regime[r] != KernelRegime::FineTuned) std::fill_n(g.begin() + r * row, row, 0.0);
        }
    }
}

bool Network::has_modulation() const {
    return std::any_of(layers_.begin(), layers_.end(), [](const auto& l) { return l.modulation.has_value(); });
}

std::vector<ProxyGrads> Network::proxy_grads() const {
    std::vector<ProxyGrads> out;
    for (const auto& l : layers_) {
        if (l.modulation) out.push_back({l.desc.name, l.modulation->m1, l.modulation->m2});
    }
    return out;
}

Network Network::clone() const {
    Network net;
    net.spec_ = spec_;
    for (const auto& l : layers_) {
        Layer c;
        c.desc = l.desc;
        c.weight = l.weight.clone();
        c.bias = l.bias.clone();
        c.regime = l.regime;
        c.bias_trainable = l.bias_trainable;
        if (l.modulation) {
            ModulatedKernel mk;
            mk.base = c.weight;
            mk.m1 = l.modulation->m1.clone();
            mk.m2 = l.modulation->m2.clone();
            mk.modulated_rows = l.modulation->modulated_rows;
            mk.base_frozen = l.modulation->base_frozen;
            c.modulation = std::move(mk);
        }
        net.layers_.push_back(std::move(c));
    }
    net.apply_regimes();
    return net;
}

Tensor generate(const Network& generator, const Tensor& latents, std::size_t batch) {
    if (generator.role() != NetworkRole::Generator) throw std::invalid_argument("generate needs a generator");
    const std::size_t n = latents.size(0), dim = latents.size(1);
    const auto& spec = generator.spec();
    Tensor out(Shape{n, spec.channels, spec.image_size, spec.image_size});
    const std::size_t per_image = spec.channels * spec.image_size * spec.image_size;
    auto ld = latents.data();
    for (std::size_t start = 0; start < n; start += batch) {
        const std::size_t b = std::min(batch, n - start);
        Tensor z(Shape{b, dim}, std::vector<double>(ld.begin() + start * dim, ld.begin() + (start + b) * dim));
        auto tape = Tape::no_grad();
        const auto imgs = generator.forward(tape, z);
        std::copy(imgs.data().begin(), imgs.data().end(), out.data().begin() + start * per_image);
    }
    return out;
}

Tensor sample_latents(std::size_t n, std::size_t latent_dim, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return Tensor::randn(Shape{n, latent_dim}, rng);
}

}  // namespace kmod
