#pragma once

// Central finite-difference oracle for tape gradients.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "kmod/autograd.hpp"

namespace kmod::testing {

using ScalarFn = std::function<Tensor(Tape&, const std::vector<Tensor>&)>;

struct GradCheck {
    double max_rel_error = 0.0;
    std::size_t coordinates = 0;
};

// |a - n| / max(|a|, |n|, floor). The floor keeps coordinates whose true
// gradient is ~0 from turning roundoff into huge ratios.
inline double rel_error(double analytic, double numeric, double floor = 1e-6) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

// Checks up to `max_coords` randomly chosen coordinates of every input.
inline GradCheck check_gradients(const ScalarFn& fn, std::vector<Tensor> inputs, std::mt19937_64& rng,
                                 std::size_t max_coords = 24, double h = 1e-6) {
    for (auto& t : inputs) {
        t.set_requires_grad(true);
        t.zero_grad();
    }
    Tape tape;
    const Tensor loss = fn(tape, inputs);
    backward(loss, tape);

    GradCheck out;
    for (auto& t : inputs) {
        const std::vector<double> analytic(t.grad().begin(), t.grad().end());
        std::vector<std::size_t> coords(t.numel());
        for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
        std::shuffle(coords.begin(), coords.end(), rng);
        coords.resize(std::min(max_coords, coords.size()));
        for (std::size_t c : coords) {
            auto data = t.data();
            const double saved = data[c];
            auto eval = [&] {
                Tape off = Tape::no_grad();
                return fn(off, inputs).item();
            };
            data[c] = saved + h;
            const double up = eval();
            data[c] = saved - h;
            const double down = eval();
            data[c] = saved;
            const double numeric = (up - down) / (2.0 * h);
            out.max_rel_error = std::max(out.max_rel_error, rel_error(analytic[c], numeric));
            ++out.coordinates;
        }
    }
    return out;
}

// Weighted sum with fixed random weights: turns any tensor into a scalar
// whose gradient exercises every output element.
inline Tensor weighted_sum(Tape& tape, const Tensor& y, std::uint64_t seed = 7) {
    std::mt19937_64 rng(seed);
    const Tensor w = Tensor::randn(y.shape(), rng);
    return op::reduce_sum(tape, op::hadamard(tape, y, w));
}

}  // namespace kmod::testing
