#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>

#include "gradcheck.hpp"
#include "kmod/gan.hpp"
#include "kmod/io_util.hpp"

using namespace kmod;
namespace fs = std::filesystem;

namespace {

TrainConfig tiny_config() {
    TrainConfig c;
    c.iter_pretrain = 6;
    c.iter_probe = 4;
    c.iter_adapt = 6;
    c.pretrain_batch_size = 4;
    return c;
}

struct Fixture {
    TrainConfig config = tiny_config();
    Dataset source = synthesize_domain({11, 0.0, 32}, 40, 1);
    Dataset fewshot = fewshot_sample(synthesize_domain({11, 0.9, 32}, 40, 2), 10, 3);
    Checkpoint pretrained = pretrain_source(initial_checkpoint(config), source, config).checkpoint;
};

const Fixture& fixture() {
    static const Fixture f;
    return f;
}

bool bit_equal(const Tensor& a, const Tensor& b) {
    return a.shape() == b.shape() && std::memcmp(a.data().data(), b.data().data(), a.numel() * sizeof(double)) == 0;
}

}  // namespace

TEST(Losses, ClosedFormAtZeroLogits) {
    Tape tape;
    const auto l = gan_losses(tape, Tensor::zeros({4, 1}), Tensor::zeros({4, 1}));
    EXPECT_NEAR(l.d_loss.item(), 2.0 * std::log(2.0), 1e-15);
    EXPECT_NEAR(l.g_loss.item(), std::log(2.0), 1e-15);
}

TEST(Losses, PerfectDiscriminatorHasNearZeroLoss) {
    Tape tape;
    const Tensor real(Shape{2, 1}, 40.0), fake(Shape{2, 1}, -40.0);
    EXPECT_LT(discriminator_loss(tape, real, fake).item(), 1e-15);
}

TEST(Losses, GeneratorGradientIsSigmoidMinusOne) {
    std::mt19937_64 rng(41);
    Tensor z = Tensor::randn({5, 1}, rng, 2.0);
    z.set_requires_grad(true);
    Tape tape;
    backward(generator_loss(tape, z), tape);
    for (std::size_t i = 0; i < 5; ++i) {
        const double expect = (1.0 / (1.0 + std::exp(-z[i])) - 1.0) / 5.0;
        EXPECT_NEAR(z.grad()[i], expect, 1e-15);
        EXPECT_LT(z.grad()[i], 0.0);
    }
    const auto r = kmod::testing::check_gradients([](Tape& t, const auto& x) { return generator_loss(t, x[0]); },
                                            {Tensor::randn({5, 1}, rng)}, rng);
    EXPECT_LT(r.max_rel_error, 1e-6);
}

TEST(Network, ShapesAndParamCounts) {
    const auto& f = fixture();
    const Tensor img = generate(f.pretrained.generator, sample_latents(3, 64, 1));
    EXPECT_EQ(img.shape(), (Shape{3, 3, 32, 32}));
    for (double v : img.data()) EXPECT_LE(std::abs(v), 1.0);
    Tape tape = Tape::no_grad();
    EXPECT_EQ(f.pretrained.discriminator.forward(tape, img).shape(), (Shape{3, 1}));
    EXPECT_EQ(f.pretrained.generator.kernel_count(), 64u * 16 + 32 + 16 + 3);
}

TEST(Network, ZeroM1ModulationLeavesOutputsUnchanged) {
    const auto& f = fixture();
    Network g = f.pretrained.generator.clone();
    std::mt19937_64 rng(42);
    prepare_probe(g, rng, 0.1);
    for (auto& l : g.layers()) {
        for (auto& x : l.modulation->m1.data()) x = 0.0;
    }
    const Tensor z = sample_latents(16, 64, 5);
    EXPECT_TRUE(bit_equal(generate(g, z), generate(f.pretrained.generator, z)));
}

TEST(Probe, KeepsBaseWeightsAndReportsCounts) {
    const auto& f = fixture();
    const auto result = probe(f.pretrained, f.fewshot, f.config);
    for (auto* pair : {&result.probed.generator, &result.probed.discriminator}) {
        const Network& before =
            pair == &result.probed.generator ? f.pretrained.generator : f.pretrained.discriminator;
        for (std::size_t i = 0; i < pair->layers().size(); ++i) {
            EXPECT_TRUE(bit_equal(pair->layers()[i].weight, before.layers()[i].weight));
            EXPECT_TRUE(bit_equal(pair->layers()[i].bias, before.layers()[i].bias));
        }
    }
    const auto& rep = result.report;
    for (auto role : {NetworkRole::Generator, NetworkRole::Discriminator}) {
        EXPECT_EQ(rep.important_count(role), important_quota(rep.kernel_count(role), 75.0));
    }
    EXPECT_LT(static_cast<double>(result.trainable_params), 0.05 * static_cast<double>(result.full_params));
    EXPECT_EQ(result.log.size(), f.config.iter_probe);
}

TEST(Adapt, ImportantRowsFrozenOthersMove) {
    const auto& f = fixture();
    const auto report = probe(f.pretrained, f.fewshot, f.config).report;
    const auto result = adapt(f.pretrained, report, f.fewshot, f.config);
    std::size_t changed = 0;
    for (auto role : {NetworkRole::Generator, NetworkRole::Discriminator}) {
        const Network& before =
            role == NetworkRole::Generator ? f.pretrained.generator : f.pretrained.discriminator;
        const Network& after =
            role == NetworkRole::Generator ? result.checkpoint.generator : result.checkpoint.discriminator;
        for (std::size_t li = 0; li < before.layers().size(); ++li) {
            const auto& lb = before.layers()[li];
            const auto& la = after.layers()[li];
            const auto rows = report.important_rows(role, lb.desc.name);
            const std::size_t fan = lb.weight.numel() / lb.kernels();
            for (std::size_t r = 0; r < lb.kernels(); ++r) {
                const bool same = std::memcmp(lb.weight.data().data() + r * fan, la.weight.data().data() + r * fan,
                                              fan * sizeof(double)) == 0;
                if (std::find(rows.begin(), rows.end(), r) != rows.end()) {
                    EXPECT_TRUE(same) << lb.desc.name << " row " << r;
                } else {
                    changed += !same;
                }
            }
        }
    }
    EXPECT_GT(changed, 0u);
}

TEST(Adapt, AdamWithoutReportFails) {
    const auto& f = fixture();
    try {
        adapt_baseline(f.pretrained, f.fewshot, f.config, nullptr);
        FAIL();
    } catch (const std::invalid_argument& e) {
        EXPECT_NE(std::string(e.what()).find("probe report required"), std::string::npos);
    }
}

TEST(Adapt, FreezeDFreezesEarlyDiscriminatorLayers) {
    const auto& f = fixture();
    TrainConfig c = f.config;
    c.method = Method::FreezeD;
    const auto result = adapt_baseline(f.pretrained, f.fewshot, c);
    const auto& before = f.pretrained.discriminator.layers();
    const auto& after = result.checkpoint.discriminator.layers();
    EXPECT_TRUE(bit_equal(before[0].weight, after[0].weight));
    EXPECT_FALSE(bit_equal(before.back().weight, after.back().weight));
}

TEST(Adapt, EveryMethodRunsAndMovesTheGenerator) {
    const auto& f = fixture();
    const auto report = probe(f.pretrained, f.fewshot, f.config).report;
    const Tensor z = sample_latents(4, 64, 3);
    const Tensor before = generate(f.pretrained.generator, z);
    for (Method m : kAllMethods) {
        TrainConfig c = f.config;
        c.method = m;
        const auto r = adapt_baseline(f.pretrained, f.fewshot, c, &report);
        EXPECT_FALSE(bit_equal(generate(r.checkpoint.generator, z), before)) << method_name(m);
        EXPECT_EQ(r.log.size(), c.iter_adapt);
    }
}

TEST(Config, ValidationNamesField) {
    TrainConfig c;
    c.iter_probe = 10;
    c.iter_adapt = 5;
    try {
        c.validate();
        FAIL();
    } catch (const std::invalid_argument& e) {
        EXPECT_NE(std::string(e.what()).find("iter_probe"), std::string::npos);
    }
    EXPECT_EQ(parse_method("freezed"), Method::FreezeD);
    EXPECT_THROW(parse_method("nope"), std::invalid_argument);
}

TEST(Checkpoint, RoundTripIsBitExact) {
    const auto& f = fixture();
    const auto report = probe(f.pretrained, f.fewshot, f.config).report;
    const auto adapted = adapt(f.pretrained, report, f.fewshot, f.config).checkpoint;
    const auto dir = fs::temp_directory_path() / "kmod_test_ckpt";
    fs::remove_all(dir);
    save_checkpoint(adapted, dir / "a.ckpt");
    const auto bytes = read_file(dir / "a.ckpt");
    EXPECT_EQ(bytes.substr(0, 8), "ADAMCKPT");
    EXPECT_EQ(bytes, encode_checkpoint(adapted));
    const auto back = load_checkpoint(dir / "a.ckpt");
    EXPECT_EQ(encode_checkpoint(back), bytes);
    EXPECT_EQ(back.stage, "adapt:adam");
    EXPECT_EQ(back.generator.layers()[1].regime, adapted.generator.layers()[1].regime);
    ASSERT_TRUE(back.generator.layers()[1].modulation.has_value() ==
                adapted.generator.layers()[1].modulation.has_value());
    // Reloaded generator reproduces the float32-rounded weights exactly.
    const Tensor z = sample_latents(4, 64, 9);
    const auto again = load_checkpoint(dir / "a.ckpt");
    EXPECT_TRUE(bit_equal(generate(back.generator, z), generate(again.generator, z)));
    fs::remove_all(dir);
}

TEST(Checkpoint, CorruptFileNamesPath) {
    const auto dir = fs::temp_directory_path() / "kmod_test_badckpt";
    fs::remove_all(dir);
    write_file_atomic(dir / "x.ckpt", "NOTACKPT and some bytes");
    try {
        load_checkpoint(dir / "x.ckpt");
        FAIL();
    } catch (const std::exception& e) {
        EXPECT_NE(std::string(e.what()).find("x.ckpt"), std::string::npos) << e.what();
    }
    fs::remove_all(dir);
}

TEST(Determinism, SameSeedSameBytes) {
    const auto& f = fixture();
    const auto a = pretrain_source(initial_checkpoint(f.config), f.source, f.config).checkpoint;
    EXPECT_EQ(encode_checkpoint(a), encode_checkpoint(f.pretrained));
    TrainConfig other = f.config;
    other.seed = 5;
    const auto b = pretrain_source(initial_checkpoint(other), f.source, other).checkpoint;
    EXPECT_NE(encode_checkpoint(b), encode_checkpoint(f.pretrained));
}

TEST(LossLog, CsvColumns) {
    const std::vector<LossRow> rows{{1, 0.5, 0.25}, {2, 1.0 / 3.0, 2.0}};
    EXPECT_EQ(format_loss_log(rows), "iter,d_loss,g_loss\n1,0.5,0.25\n2,0.3333333333333333,2\n");
}
