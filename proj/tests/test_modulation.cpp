#include <gtest/gtest.h>

#include <cstring>

#include "kmod/autograd.hpp"
#include "kmod/modulation.hpp"

using namespace kmod;

TEST(Modulation, ZeroM1IsBitExactIdentity) {
    std::mt19937_64 rng(11);
    const Tensor base = Tensor::randn({8, 4, 3, 3}, rng);
    auto mk = make_modulated_kernel(base, all_rows(base), rng, 0.5);
    for (auto& x : mk.m1.data()) x = 0.0;
    Tape tape;
    const Tensor w = effective_weights(tape, mk);
    ASSERT_EQ(w.shape(), base.shape());
    EXPECT_EQ(std::memcmp(w.data().data(), base.data().data(), base.numel() * sizeof(double)), 0);
}

TEST(Modulation, MatchesElementwiseFormula) {
    std::mt19937_64 rng(12);
    const Tensor base = Tensor::randn({5, 2, 3, 3}, rng);
    const std::vector<std::size_t> rows{1, 3, 4};
    const auto mk = make_modulated_kernel(base, rows, rng, 0.3);
    Tape tape;
    const Tensor w = effective_weights(tape, mk);
    const std::size_t fan = 18;
    for (std::size_t r = 0; r < 5; ++r) {
        const auto it = std::find(rows.begin(), rows.end(), r);
        for (std::size_t j = 0; j < fan; ++j) {
            double expect = base[r * fan + j];
            if (it != rows.end()) expect *= 1.0 + mk.m1[it - rows.begin()] * mk.m2[j];
            EXPECT_DOUBLE_EQ(w[r * fan + j], expect);
        }
    }
}

TEST(Modulation, LinearWeightsAreOneByOneKernels) {
    EXPECT_EQ(kernel_fan_in({7, 5}), 5u);
    EXPECT_EQ(kernel_fan_in({7, 5, 3, 3}), 45u);
}

TEST(Modulation, ParamCount) {
    std::mt19937_64 rng(13);
    const Tensor base = Tensor::randn({6, 4, 3, 3}, rng);
    auto mk = make_modulated_kernel(base, {0, 5}, rng);
    EXPECT_EQ(trainable_param_count(mk), 2u + 36u);
    mk.base_frozen = false;
    EXPECT_EQ(trainable_param_count(mk), 2u + 36u + base.numel());
}

TEST(Modulation, GradientsOnlyReachProxiesWhenBaseFrozen) {
    std::mt19937_64 rng(14);
    const Tensor base = Tensor::randn({3, 2, 2, 2}, rng);
    const auto mk = make_modulated_kernel(base, all_rows(base), rng, 0.1);
    Tape tape;
    const Tensor loss = op::reduce_sum(tape, effective_weights(tape, mk));
    backward(loss, tape);
    EXPECT_FALSE(base.has_grad());
    ASSERT_TRUE(mk.m1.has_grad());
    // d/dm1_i sum_j W_ij (1 + m1_i m2_j) = sum_j W_ij m2_j
    for (std::size_t i = 0; i < 3; ++i) {
        double expect = 0.0;
        for (std::size_t j = 0; j < 8; ++j) expect += base[i * 8 + j] * mk.m2[j];
        EXPECT_NEAR(mk.m1.grad()[i], expect, 1e-14);
    }
}

TEST(Modulation, RejectsBadRows) {
    std::mt19937_64 rng(15);
    const Tensor base = Tensor::randn({4, 2}, rng);
    EXPECT_THROW(make_modulated_kernel(base, {2, 1}, rng), std::invalid_argument);
    EXPECT_THROW(make_modulated_kernel(base, {1, 1}, rng), std::invalid_argument);
    EXPECT_THROW(make_modulated_kernel(base, {4}, rng), std::out_of_range);
    auto mk = make_modulated_kernel(base, {0, 3}, rng);
    mk.m2 = Tensor::zeros({3});
    EXPECT_THROW(check_invariants(mk), std::invalid_argument);
}

TEST(Modulation, EmptyRowSetIsRejected) {
    std::mt19937_64 rng(16);
    const Tensor base = Tensor::randn({4, 2}, rng);
    EXPECT_ANY_THROW(make_modulated_kernel(base, {}, rng));
}
