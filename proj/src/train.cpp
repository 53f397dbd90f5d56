#include <algorithm>
#include <chrono>
#include <sstream>
#include <stdexcept>

#include "kmod/gan.hpp"
#include "kmod/io_util.hpp"

namespace kmod {

const char* method_name(Method m) {
    switch (m) {
        case Method::Adam: return "adam";
        case Method::Tgan: return "tgan";
        case Method::FreezeD: return "freezed";
        case Method::ModulateAll: return "modulate_all";
        case Method::FreezeImportant: return "freeze_important";
    }
    return "adam";
}

Method parse_method(const std::string& name) {
    for (auto m : kAllMethods) {
        if (name == method_name(m)) return m;
    }
    throw std::invalid_argument("unknown method '" + name +
                                "' (expected adam, tgan, freezed, modulate_all or freeze_important)");
}

void TrainConfig::validate() const {
    auto bad = [](const std::string& field, const std::string& why) {
        throw std::invalid_argument("invalid " + field + ": " + why);
    };
    if (iter_probe > iter_adapt) bad("iter_probe", "must not exceed iter_adapt");
    if (batch_size == 0) bad("batch_size", "must be >= 1");
    if (pretrain_batch_size == 0) bad("pretrain_batch_size", "must be >= 1");
    if (k_shot == 0) bad("k_shot", "must be >= 1");
    if (!(lr > 0.0)) bad("lr", "must be positive");
    if (!(pretrain_lr > 0.0)) bad("pretrain_lr", "must be positive");
    if (modulation_lr < 0.0) bad("modulation_lr", "must be >= 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0)) bad("beta1", "must lie in [0, 1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) bad("beta2", "must lie in [0, 1)");
    if (!(t > 0.0 && t < 100.0)) bad("t", "must lie in (0, 100)");
    if (!(t_discriminator >= 0.0 && t_discriminator < 100.0)) bad("t_discriminator", "must lie in [0, 100)");
    if (!(mod_init_std >= 0.0)) bad("mod_init_std", "must be >= 0");
}

nlohmann::json to_json(const TrainConfig& c) {
    return {{"iter_pretrain", c.iter_pretrain},
            {"pretrain_batch_size", c.pretrain_batch_size},
            {"pretrain_lr", c.pretrain_lr},
            {"iter_probe", c.iter_probe},
            {"iter_adapt", c.iter_adapt},
            {"batch_size", c.batch_size},
            {"lr", c.lr},
            {"modulation_lr", c.modulation_lr},
            {"beta1", c.beta1},
            {"beta2", c.beta2},
            {"seed", c.seed},
            {"t", c.t},
            {"t_discriminator", c.t_discriminator},
            {"k_shot", c.k_shot},
            {"method", method_name(c.method)},
            {"n_freeze", c.n_freeze},
            {"mod_init_std", c.mod_init_std}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.iter_pretrain = j.at("iter_pretrain").get<std::size_t>();
    c.pretrain_batch_size = j.at("pretrain_batch_size").get<std::size_t>();
    c.pretrain_lr = j.at("pretrain_lr").get<double>();
    c.iter_probe = j.at("iter_probe").get<std::size_t>();
    c.iter_adapt = j.at("iter_adapt").get<std::size_t>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.lr = j.at("lr").get<double>();
    c.modulation_lr = j.at("modulation_lr").get<double>();
    c.beta1 = j.at("beta1").get<double>();
    c.beta2 = j.at("beta2").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.t = j.at("t").get<double>();
    c.t_discriminator = j.at("t_discriminator").get<double>();
    c.k_shot = j.at("k_shot").get<std::size_t>();
    c.method = parse_method(j.at("method").get<std::string>());
    c.n_freeze = j.at("n_freeze").get<std::size_t>();
    c.mod_init_std = j.at("mod_init_std").get<double>();
    return c;
}

Tensor discriminator_loss(Tape& tape, const Tensor& real_logits, const Tensor& fake_logits) {
    const auto real = op::bce_with_logits(tape, real_logits, Tensor::ones(real_logits.shape()));
    const auto fake = op::bce_with_logits(tape, fake_logits, Tensor::zeros(fake_logits.shape()));
    return op::add(tape, real, fake);
}

Tensor generator_loss(Tape& tape, const Tensor& fake_logits) {
    return op::bce_with_logits(tape, fake_logits, Tensor::ones(fake_logits.shape()));
}

GanLosses gan_losses(Tape& tape, const Tensor& real_logits, const Tensor& fake_logits) {
    return {discriminator_loss(tape, real_logits, fake_logits), generator_loss(tape, fake_logits)};
}

Checkpoint Checkpoint::clone() const {
    Checkpoint c;
    c.generator = generator.clone();
    c.discriminator = discriminator.clone();
    c.config = config;
    c.stage = stage;
    c.report_path = report_path;
    c.rng_state = rng_state;
    c.iteration = iteration;
    return c;
}

namespace {

enum StageTag : std::uint32_t { kInitTag = 11, kPretrainTag = 23, kProbeTag = 37, kAdaptTag = 41 };

std::mt19937_64 stage_rng(std::uint64_t seed, StageTag tag) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(tag)};
    return std::mt19937_64(seq);
}

std::string rng_text(const std::mt19937_64& rng) {
    std::ostringstream os;
    os << rng;
    return os.str();
}

struct NetOptimizer {
    std::vector<Tensor> params;
    std::vector<AdamState> states;

    NetOptimizer(const Network& net, double lr, double modulation_lr, double beta1, double beta2) {
        params = net.trainable_tensors();
        const auto proxy = net.trainable_is_proxy();
        for (std::size_t i = 0; i < params.size(); ++i) {
            AdamOptions o;
            o.lr = proxy[i] ? modulation_lr : lr;
            o.beta1 = beta1;
            o.beta2 = beta2;
            states.emplace_back(params[i].numel(), o);
        }
    }
    void step() { adam_step(params, states); }
};

// Running mean of the full per-kernel expansion, for the rank diagnostic.
struct OracleTracker {
    std::map<std::string, std::vector<double>> sums;
    std::size_t samples = 0;
    bool valid = true;  // false once a proxy entry hit exactly zero

    void accumulate(const Network& net) {
        if (!valid) return;
        try {
            for (const auto& l : net.layers()) {
                if (!l.modulation) continue;
                const auto& mk = *l.modulation;
                auto v = full_importance_oracle(mk.m1.data(), mk.m2.data(), mk.m1.grad(), mk.m2.grad());
                auto& s = sums[l.desc.name];
                if (s.empty()) s.assign(v.size(), 0.0);
                for (std::size_t i = 0; i < v.size(); ++i) s[i] += v[i];
            }
            ++samples;
        } catch (const std::domain_error&) {
            valid = false;
            samples = 0;
        }
    }
};

struct LoopHooks {
    FisherAccumulator* fisher_g = nullptr;
    FisherAccumulator* fisher_d = nullptr;
    OracleTracker* oracle_g = nullptr;
    OracleTracker* oracle_d = nullptr;
};

struct LoopOptions {
    std::size_t iterations = 0;
    std::size_t batch_size = 4;
    double lr = 2e-3;
    double modulation_lr = 2e-3;
    double beta1 = 0.5;
    double beta2 = 0.99;
};

std::vector<LossRow> run_adversarial(Network& gen, Network& disc, const Tensor& real_images, const LoopOptions& opt,
                                     std::mt19937_64& rng, const LoopHooks& hooks = {}) {
    if (real_images.size(0) == 0) throw std::invalid_argument("training needs at least one real image");
    gen.apply_regimes();
    disc.apply_regimes();
    NetOptimizer g_opt(gen, opt.lr, opt.modulation_lr, opt.beta1, opt.beta2);
    NetOptimizer d_opt(disc, opt.lr, opt.modulation_lr, opt.beta1, opt.beta2);
    const std::size_t latent = gen.spec().latent_dim;
    std::uniform_int_distribution<std::size_t> pick(0, real_images.size(0) - 1);
    std::vector<LossRow> log;
    log.reserve(opt.iterations);

    for (std::size_t it = 0; it < opt.iterations; ++it) {
        LossRow row;
        row.iter = it;

        std::vector<std::size_t> idx(opt.batch_size);
        for (auto& i : idx) i = pick(rng);
        const Tensor real = take_rows(real_images, idx);
        const Tensor z_d = Tensor::randn(Shape{opt.batch_size, latent}, rng);
        const Tensor fake_d = generate(gen, z_d, opt.batch_size);

        {
            Tape tape;
            const auto real_logits = disc.forward(tape, real);
            const auto fake_logits = disc.forward(tape, fake_d);
            const auto loss = discriminator_loss(tape, real_logits, fake_logits);
            disc.zero_grads();
            backward(loss, tape);
            if (hooks.fisher_d) {
                const auto pg = disc.proxy_grads();
                hooks.fisher_d->accumulate(pg);
            }
            if (hooks.oracle_d) hooks.oracle_d->accumulate(disc);
            disc.mask_frozen_grads();
            if (!d_opt.params.empty()) d_opt.step();
            row.d_loss = loss.item();
        }

        {
            disc.disable_grads();
            Tape tape;
            const Tensor z_g = Tensor::randn(Shape{opt.batch_size, latent}, rng);
            const auto fake = gen.forward(tape, z_g);
            const auto logits = disc.forward(tape, fake);
            const auto loss = generator_loss(tape, logits);
            gen.zero_grads();
            backward(loss, tape);
            disc.apply_regimes();
            if (hooks.fisher_g) {
                const auto pg = gen.proxy_grads();
                hooks.fisher_g->accumulate(pg);
            }
            if (hooks.oracle_g) hooks.oracle_g->accumulate(gen);
            gen.mask_frozen_grads();
            if (!g_opt.params.empty()) g_opt.step();
            row.g_loss = loss.item();
        }
        log.push_back(row);
    }
    return log;
}

LoopOptions adapt_options(const TrainConfig& c, std::size_t iterations) {
    LoopOptions o;
    o.iterations = iterations;
    o.batch_size = c.batch_size;
    o.lr = c.lr;
    o.modulation_lr = c.effective_modulation_lr();
    o.beta1 = c.beta1;
    o.beta2 = c.beta2;
    return o;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

void require_unmodulated(const Checkpoint& ckpt, const char* stage) {
    if (ckpt.generator.has_modulation() || ckpt.discriminator.has_modulation()) {
        throw std::invalid_argument(std::string(stage) + ": checkpoint already carries kernel modulation");
    }
}

void check_report_matches(const Network& net, const ImportanceReport& report) {
    const auto role = net.role();
    std::vector<std::string> names;
    for (const auto& l : net.layers()) names.push_back(l.desc.name);
    if (report.layers(role) != names) {
        throw std::invalid_argument(std::string("importance report does not match the ") + role_name(role) +
                                    " layers");
    }
    for (const auto& l : net.layers()) {
        std::size_t count = 0;
        for (const auto& r : report.records) {
            if (r.network == role && r.layer == l.desc.name) {
                if (r.kernel >= l.kernels()) {
                    throw std::invalid_argument("importance report kernel index out of range in layer '" +
                                                l.desc.name + "'");
                }
                ++count;
            }
        }
        if (count != l.kernels()) {
            throw std::invalid_argument("importance report has " + std::to_string(count) + " kernels for layer '" +
                                        l.desc.name + "', network has " + std::to_string(l.kernels()));
        }
    }
}

}  // namespace

std::vector<KernelRecord> kernel_records(const Network& net) {
    std::vector<KernelRecord> out;
    for (const auto& l : net.layers()) {
        for (std::size_t k = 0; k < l.kernels(); ++k) out.push_back({net.role(), l.desc.name, k, 0.0, false});
    }
    return out;
}

void prepare_fine_tune(Network& net) {
    for (auto& l : net.layers()) {
        l.modulation.reset();
        std::fill(l.regime.begin(), l.regime.end(), KernelRegime::FineTuned);
        l.bias_trainable = true;
    }
    net.apply_regimes();
}

void prepare_probe(Network& net, std::mt19937_64& rng, double init_std) {
    for (auto& l : net.layers()) {
        l.modulation = make_modulated_kernel(l.weight, all_rows(l.weight), rng, init_std, true);
        std::fill(l.regime.begin(), l.regime.end(), KernelRegime::Modulated);
        l.bias_trainable = false;
    }
    net.apply_regimes();
}

void prepare_adapt(Network& net, const ImportanceReport& report, std::mt19937_64& rng, double init_std) {
    check_report_matches(net, report);
    for (auto& l : net.layers()) {
        const auto rows = report.important_rows(net.role(), l.desc.name);
        std::fill(l.regime.begin(), l.regime.end(), KernelRegime::FineTuned);
        for (auto r : rows) l.regime[r] = KernelRegime::Modulated;
        l.bias_trainable = true;
        if (rows.empty()) {
            l.modulation.reset();
        } else {
            l.modulation = make_modulated_kernel(l.weight, rows, rng, init_std, true);
        }
    }
    net.apply_regimes();
}

std::size_t default_freeze_depth(const Network& discriminator) {
    const auto convs = std::count_if(discriminator.layers().begin(), discriminator.layers().end(),
                                     [](const Layer& l) { return l.desc.kind == LayerKind::Conv; });
    return static_cast<std::size_t>(convs) / 2;
}

void prepare_freeze_d(Network& discriminator, std::size_t n_freeze) {
    prepare_fine_tune(discriminator);
    std::size_t frozen = 0;
    for (auto& l : discriminator.layers()) {
        if (frozen >= n_freeze) break;
        if (l.desc.kind != LayerKind::Conv) continue;
        std::fill(l.regime.begin(), l.regime.end(), KernelRegime::Frozen);
        l.bias_trainable = false;
        ++frozen;
    }
    discriminator.apply_regimes();
}

void prepare_freeze_important(Network& net, const ImportanceReport& report) {
    check_report_matches(net, report);
    prepare_fine_tune(net);
    for (auto& l : net.layers()) {
        for (auto r : report.important_rows(net.role(), l.desc.name)) l.regime[r] = KernelRegime::Frozen;
    }
    net.apply_regimes();
}

Checkpoint initial_checkpoint(const TrainConfig& config, std::size_t latent_dim, std::size_t image_size) {
    auto rng = stage_rng(config.seed, kInitTag);
    Checkpoint c;
    c.generator = Network::initialize(default_generator_spec(latent_dim, image_size), rng);
    c.discriminator = Network::initialize(default_discriminator_spec(image_size), rng);
    c.config = config;
    c.stage = "init";
    c.rng_state = rng_text(rng);
    return c;
}

RunResult pretrain_source(const Checkpoint& init, const Dataset& source, const TrainConfig& config) {
    if (source.size() == 0) throw std::invalid_argument("pretrain_source: empty source dataset");
    config.validate();
    const auto start = std::chrono::steady_clock::now();
    RunResult out;
    out.checkpoint = init.clone();
    auto& c = out.checkpoint;
    prepare_fine_tune(c.generator);
    prepare_fine_tune(c.discriminator);
    auto rng = stage_rng(config.seed, kPretrainTag);
    LoopOptions o;
    o.iterations = config.iter_pretrain;
    o.batch_size = config.pretrain_batch_size;
    o.lr = config.pretrain_lr;
    o.modulation_lr = config.pretrain_lr;
    o.beta1 = config.beta1;
    o.beta2 = config.beta2;
    out.log = run_adversarial(c.generator, c.discriminator, source.images, o, rng);
    c.config = config;
    c.stage = "pretrain";
    c.iteration = config.iter_pretrain;
    c.rng_state = rng_text(rng);
    out.seconds = seconds_since(start);
    return out;
}

ProbeResult probe(const Checkpoint& ckpt, const Dataset& fewshot, const TrainConfig& config) {
    config.validate();
    if (fewshot.size() == 0) throw std::invalid_argument("probe: few-shot set is empty (k_shot = 0)");
    require_unmodulated(ckpt, "probe");
    const auto start = std::chrono::steady_clock::now();
    ProbeResult out;
    out.probed = ckpt.clone();
    auto& gen = out.probed.generator;
    auto& disc = out.probed.discriminator;
    auto rng = stage_rng(config.seed, kProbeTag);
    prepare_probe(gen, rng, config.mod_init_std);
    prepare_probe(disc, rng, config.mod_init_std);
    out.trainable_params = gen.trainable_param_count() + disc.trainable_param_count();
    out.full_params = gen.full_param_count() + disc.full_param_count();

    FisherAccumulator fisher_g, fisher_d;
    for (const auto& l : gen.layers()) fisher_g.register_layer(l.desc.name, l.kernels(), l.modulation->fan_in());
    for (const auto& l : disc.layers()) fisher_d.register_layer(l.desc.name, l.kernels(), l.modulation->fan_in());
    OracleTracker oracle_g, oracle_d;
    LoopHooks hooks{&fisher_g, &fisher_d, &oracle_g, &oracle_d};
    out.log = run_adversarial(gen, disc, fewshot.images, adapt_options(config, config.iter_probe), rng, hooks);

    std::vector<KernelRecord> records;
    for (auto* pair : {&fisher_g, &fisher_d}) {
        const Network& net = pair == &fisher_g ? gen : disc;
        auto& oracle = pair == &fisher_g ? oracle_g : oracle_d;
        std::vector<double> estimate_all, oracle_all;
        for (const auto& l : net.layers()) {
            const auto est = pair->sample_count() > 0 ? kernel_importance(*pair, l.desc.name)
                                                      : std::vector<double>(l.kernels(), 0.0);
            for (std::size_t k = 0; k < est.size(); ++k) {
                records.push_back({net.role(), l.desc.name, k, est[k], false});
                estimate_all.push_back(est[k]);
            }
            if (oracle.valid && oracle.samples > 0) {
                for (double v : oracle.sums[l.desc.name]) oracle_all.push_back(v / static_cast<double>(oracle.samples));
            }
        }
        if (oracle_all.size() == estimate_all.size() && estimate_all.size() >= 2) {
            const double rho = rank_correlation(estimate_all, oracle_all);
            (net.role() == NetworkRole::Generator ? out.rank_correlation_generator
                                                  : out.rank_correlation_discriminator) = rho;
        }
    }
    out.report = select_important(std::move(records), config.t, config.effective_t_discriminator());
    out.probed.config = config;
    out.probed.stage = "probe";
    out.probed.iteration = config.iter_probe;
    out.probed.rng_state = rng_text(rng);
    out.seconds = seconds_since(start);
    return out;
}

RunResult adapt(const Checkpoint& ckpt, const ImportanceReport& report, const Dataset& fewshot,
                const TrainConfig& config) {
    TrainConfig c = config;
    c.method = Method::Adam;
    return adapt_baseline(ckpt, fewshot, c, &report);
}

RunResult adapt_baseline(const Checkpoint& ckpt, const Dataset& fewshot, const TrainConfig& config,
                         const ImportanceReport* report) {
    config.validate();
    if (fewshot.size() == 0) throw std::invalid_argument("adapt: few-shot set is empty");
    require_unmodulated(ckpt, "adapt");
    const auto start = std::chrono::steady_clock::now();
    RunResult out;
    out.checkpoint = ckpt.clone();
    auto& gen = out.checkpoint.generator;
    auto& disc = out.checkpoint.discriminator;
    auto rng = stage_rng(config.seed, kAdaptTag);

    switch (config.method) {
        case Method::Adam:
            if (!report) throw std::invalid_argument("adapt: probe report required for method adam");
            prepare_adapt(gen, *report, rng, config.mod_init_std);
            prepare_adapt(disc, *report, rng, config.mod_init_std);
            break;
        case Method::Tgan:
            prepare_fine_tune(gen);
            prepare_fine_tune(disc);
            break;
        case Method::FreezeD:
            prepare_fine_tune(gen);
            prepare_freeze_d(disc, config.n_freeze > 0 ? config.n_freeze : default_freeze_depth(disc));
            break;
        case Method::ModulateAll:
            prepare_probe(gen, rng, config.mod_init_std);
            prepare_probe(disc, rng, config.mod_init_std);
            break;
        case Method::FreezeImportant:
            if (!report) throw std::invalid_argument("adapt: probe report required for method freeze_important");
            prepare_freeze_important(gen, *report);
            prepare_freeze_important(disc, *report);
            break;
    }

    out.log = run_adversarial(gen, disc, fewshot.images, adapt_options(config, config.iter_adapt), rng);
    out.checkpoint.config = config;
    out.checkpoint.stage = std::string("adapt:") + method_name(config.method);
    out.checkpoint.iteration = config.iter_adapt;
    out.checkpoint.rng_state = rng_text(rng);
    out.seconds = seconds_since(start);
    return out;
}

std::string format_loss_log(const std::vector<LossRow>& log) {
    std::string s = "iter,d_loss,g_loss\n";
    for (const auto& r : log) {
        s += std::to_string(r.iter) + "," + format_double(r.d_loss) + "," + format_double(r.g_loss) + "\n";
    }
    return s;
}

void save_loss_log(const std::vector<LossRow>& log, const std::filesystem::path& path) {
    write_file_atomic(path, format_loss_log(log));
}

}  // namespace kmod
