#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "kmod/autograd.hpp"

namespace kmod {

// Rank-one kernel modulation of a conv weight [c_out, c_in, k, k] or linear
// weight [c_out, c_in] (a 1x1 kernel per output row):
//
//   W_hat[r] = W[r] * (1 + m1[i] * m2)   for r = modulated_rows[i]
//   W_hat[r] = W[r]                      otherwise
//
// `base` aliases the owning layer's weight tensor.
struct ModulatedKernel {
    Tensor base;
    Tensor m1;  // [d_out]
    Tensor m2;  // [c_in * k * k]
    std::vector<std::size_t> modulated_rows;
    bool base_frozen = true;

    std::size_t c_out() const { return base.size(0); }
    std::size_t d_out() const { return modulated_rows.size(); }
    std::size_t fan_in() const { return base.numel() / base.size(0); }
};

// c_in * k * k for a conv weight, c_in for a linear weight.
std::size_t kernel_fan_in(const Shape& weight_shape);

// Fresh proxy vectors drawn i.i.d. from N(0, init_std^2). Rows must be
// strictly increasing and inside [0, c_out).
ModulatedKernel make_modulated_kernel(Tensor base, std::vector<std::size_t> rows, std::mt19937_64& rng,
                                      double init_std = 0.01, bool base_frozen = true);

// Rows 0..c_out-1.
std::vector<std::size_t> all_rows(const Tensor& base);

// M = m1 (x) m2, shape [d_out, |m2|].
Tensor modulation_matrix(Tape& tape, const Tensor& m1, const Tensor& m2);

// Modulated weight with the same shape as mk.base.
Tensor effective_weights(Tape& tape, const ModulatedKernel& mk);

// d_out + |m2|, plus the full base when it is not frozen.
std::size_t trainable_param_count(const ModulatedKernel& mk);

// Validates the length and range invariants; throws std::invalid_argument.
void check_invariants(const ModulatedKernel& mk);

}  // namespace kmod
