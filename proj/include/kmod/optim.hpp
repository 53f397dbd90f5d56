#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "kmod/tensor.hpp"

namespace kmod {

struct AdamOptions {
    double lr = 2e-3;
    double beta1 = 0.0;
    double beta2 = 0.99;
    double epsilon = 1e-8;
};

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::int64_t step = 0;
    AdamOptions options;

    AdamState() = default;
    AdamState(std::size_t length, AdamOptions opts) : m(length, 0.0), v(length, 0.0), options(opts) {}
};

// Bias-corrected Adam update of each params[i] from its grad. Throws when a
// parameter has no gradient or its state length differs.
void adam_step(std::span<Tensor> params, std::span<AdamState> states);

}  // namespace kmod
