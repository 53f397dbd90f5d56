#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "kmod/fisher.hpp"
#include "kmod/modulation.hpp"

namespace kmod {

enum class LayerKind { Linear, Conv };
enum class Activation { None, LeakyRelu, Tanh };

inline constexpr double kLeakySlope = 0.2;

struct LayerDesc {
    std::string name;
    LayerKind kind = LayerKind::Conv;
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t kernel = 1;
    std::size_t stride = 1;
    std::size_t padding = 0;
    std::size_t upsample = 1;       // nearest upsampling of the layer input
    std::size_t reshape_side = 0;   // linear only: output viewed as [n, out/(s*s), s, s]
    Activation activation = Activation::None;

    bool operator==(const LayerDesc&) const = default;
};

struct NetworkSpec {
    NetworkRole role = NetworkRole::Generator;
    std::vector<LayerDesc> layers;
    std::size_t latent_dim = 64;
    std::size_t image_size = 32;
    std::size_t channels = 3;

    bool operator==(const NetworkSpec&) const = default;
};

// Linear projection to 4x4 followed by three upsample+conv blocks; final tanh.
NetworkSpec default_generator_spec(std::size_t latent_dim = 64, std::size_t image_size = 32);
// Three stride-2 convs followed by a linear head producing one logit.
NetworkSpec default_discriminator_spec(std::size_t image_size = 32);

nlohmann::json to_json(const NetworkSpec& spec);
NetworkSpec spec_from_json(const nlohmann::json& j);

// How one output kernel (row) of a layer is treated during training.
enum class KernelRegime : char { FineTuned = 'F', Modulated = 'M', Frozen = 'Z' };

struct Layer {
    LayerDesc desc;
    Tensor weight;  // [out, in, k, k] or [out, in]
    Tensor bias;    // [out]
    std::optional<ModulatedKernel> modulation;
    std::vector<KernelRegime> regime;  // one per output row
    bool bias_trainable = true;

    std::size_t kernels() const { return weight.size(0); }
};

class Network {
public:
    Network() = default;
    // Weights ~ N(0, 2 / ((1 + slope^2) fan_in)), zero biases, all rows fine-tuned.
    static Network initialize(NetworkSpec spec, std::mt19937_64& rng);
    // Layers with given tensors; regimes reset to fine-tuned.
    static Network from_tensors(NetworkSpec spec, std::vector<Tensor> weights, std::vector<Tensor> biases);

    Tensor forward(Tape& tape, const Tensor& input) const;

    const NetworkSpec& spec() const { return spec_; }
    NetworkRole role() const { return spec_.role; }
    std::vector<Layer>& layers() { return layers_; }
    const std::vector<Layer>& layers() const { return layers_; }
    Layer& layer(const std::string& name);
    const Layer& layer(const std::string& name) const;

    std::size_t kernel_count() const;
    // Weights and biases of the base network.
    std::size_t full_param_count() const;
    // Parameters updated by the optimizer under the current regimes.
    std::size_t trainable_param_count() const;

    // Sets requires_grad on every tensor according to the layer regimes.
    void apply_regimes();
    void disable_grads();
    // Tensors the optimizer should update, in a stable order.
    std::vector<Tensor> trainable_tensors() const;
    // Which of trainable_tensors() are proxy vectors.
    std::vector<bool> trainable_is_proxy() const;
    void zero_grads();
    // Zeroes weight gradients of rows that are not fine-tuned.
    void mask_frozen_grads();

    bool has_modulation() const;
    std::vector<ProxyGrads> proxy_grads() const;

    // Independent copy of every tensor.
    Network clone() const;

private:
    NetworkSpec spec_;
    std::vector<Layer> layers_;
};

// Samples in batches with a non-recording tape.
Tensor generate(const Network& generator, const Tensor& latents, std::size_t batch = 64);
Tensor sample_latents(std::size_t n, std::size_t latent_dim, std::uint64_t seed);

}  // namespace kmod
