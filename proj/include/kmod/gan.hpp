#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "kmod/data.hpp"
#include "kmod/fisher.hpp"
#include "kmod/network.hpp"
#include "kmod/optim.hpp"

namespace kmod {

enum class Method { Adam, Tgan, FreezeD, ModulateAll, FreezeImportant };

const char* method_name(Method m);
Method parse_method(const std::string& name);
inline constexpr Method kAllMethods[] = {Method::Tgan, Method::FreezeD, Method::ModulateAll, Method::FreezeImportant,
                                         Method::Adam};

struct TrainConfig {
    // Source pretraining.
    std::size_t iter_pretrain = 2500;
    std::size_t pretrain_batch_size = 16;
    double pretrain_lr = 1e-3;

    // Probing and adaptation.
    std::size_t iter_probe = 500;
    std::size_t iter_adapt = 1000;
    std::size_t batch_size = 4;
    double lr = 2e-3;
    double modulation_lr = 0.0;  // 0 means same as lr
    double beta1 = 0.5;
    double beta2 = 0.99;
    std::uint64_t seed = 0;
    double t = 75.0;
    double t_discriminator = 0.0;  // 0 means same as t
    std::size_t k_shot = 10;
    Method method = Method::Adam;
    std::size_t n_freeze = 0;  // FreezeD depth; 0 means half the discriminator convs, rounded down
    double mod_init_std = 0.01;

    double effective_t_discriminator() const { return t_discriminator > 0.0 ? t_discriminator : t; }
    double effective_modulation_lr() const { return modulation_lr > 0.0 ? modulation_lr : lr; }
    // Throws std::invalid_argument naming the offending field.
    void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct GanLosses {
    Tensor d_loss;
    Tensor g_loss;
};

// d = bce(real, 1) + bce(fake, 0); g = bce(fake, 1) (non-saturating).
GanLosses gan_losses(Tape& tape, const Tensor& real_logits, const Tensor& fake_logits);
Tensor discriminator_loss(Tape& tape, const Tensor& real_logits, const Tensor& fake_logits);
Tensor generator_loss(Tape& tape, const Tensor& fake_logits);

struct Checkpoint {
    Network generator;
    Network discriminator;
    TrainConfig config;
    std::string stage;        // "pretrain", "probe", "adapt:<method>"
    std::string report_path;  // importance report used by adaptation, if any
    std::string rng_state;
    std::uint64_t iteration = 0;

    Checkpoint clone() const;
};

struct LossRow {
    std::size_t iter = 0;
    double d_loss = 0.0;
    double g_loss = 0.0;
};

struct RunResult {
    Checkpoint checkpoint;
    std::vector<LossRow> log;
    double seconds = 0.0;
};

struct ProbeResult {
    ImportanceReport report;
    std::vector<LossRow> log;
    double seconds = 0.0;
    std::size_t trainable_params = 0;
    std::size_t full_params = 0;
    // Spearman correlation between the lightweight estimate and the full
    // expansion, averaged over probing steps; diagnostic only.
    double rank_correlation_generator = 0.0;
    double rank_correlation_discriminator = 0.0;
    // Networks as they were after probing (base weights untouched).
    Checkpoint probed;
};

Checkpoint initial_checkpoint(const TrainConfig& config, std::size_t latent_dim = 64, std::size_t image_size = 32);

RunResult pretrain_source(const Checkpoint& init, const Dataset& source, const TrainConfig& config);

// Importance probing: every kernel of both networks gets frozen-base rank-one
// modulation with d_out = c_out, only proxy vectors train, and their squared
// gradients accumulate into the Fisher estimate.
ProbeResult probe(const Checkpoint& ckpt, const Dataset& fewshot, const TrainConfig& config);

// Main adaptation: important kernels keep frozen bases and get fresh
// modulation; the remaining kernels and all biases are fine-tuned.
RunResult adapt(const Checkpoint& ckpt, const ImportanceReport& report, const Dataset& fewshot,
                const TrainConfig& config);

// Dispatches on config.method; `report` is required for adam and freeze_important.
RunResult adapt_baseline(const Checkpoint& ckpt, const Dataset& fewshot, const TrainConfig& config,
                         const ImportanceReport* report = nullptr);

// Regime construction, exposed for inspection and tests.
void prepare_probe(Network& net, std::mt19937_64& rng, double init_std);
void prepare_adapt(Network& net, const ImportanceReport& report, std::mt19937_64& rng, double init_std);
void prepare_fine_tune(Network& net);
void prepare_freeze_d(Network& discriminator, std::size_t n_freeze);
void prepare_freeze_important(Network& net, const ImportanceReport& report);
std::size_t default_freeze_depth(const Network& discriminator);

// Per-kernel records of a network, in layer order, with fi left at 0.
std::vector<KernelRecord> kernel_records(const Network& net);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);
std::string encode_checkpoint(const Checkpoint& ckpt);

std::string format_loss_log(const std::vector<LossRow>& log);
void save_loss_log(const std::vector<LossRow>& log, const std::filesystem::path& path);

}  // namespace kmod
