#include "kmod/modulation.hpp"

#include <stdexcept>
#include <string>

namespace kmod {

std::size_t kernel_fan_in(const Shape& weight_shape) {
    if (weight_shape.size() == 2) return weight_shape[1];
    if (weight_shape.size() == 4) return weight_shape[1] * weight_shape[2] * weight_shape[3];
    throw std::invalid_argument("kernel weight must be rank 2 or 4, got " + to_string(weight_shape));
}

std::vector<std::size_t> all_rows(const Tensor& base) {
    std::vector<std::size_t> rows(base.size(0));
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
    return rows;
}

void check_invariants(const ModulatedKernel& mk) {
    const auto k = kernel_fan_in(mk.base.shape());
    if (mk.modulated_rows.empty() || mk.modulated_rows.size() > mk.c_out()) {
        throw std::invalid_argument("modulated rows must be a nonempty subset of " + std::to_string(mk.c_out()) +
                                    " output channels");
    }
    for (std::size_t i = 0; i < mk.modulated_rows.size(); ++i) {
        const auto r = mk.modulated_rows[i];
        if (r >= mk.c_out()) {
            throw std::out_of_range("modulated row " + std::to_string(r) + " out of range for " +
                                    std::to_string(mk.c_out()) + " output channels");
        }
        if (i > 0 && r <= mk.modulated_rows[i - 1]) {
            throw std::invalid_argument("modulated rows must be strictly increasing");
        }
    }
    if (mk.m1.shape() != Shape{mk.modulated_rows.size()}) {
        throw std::invalid_argument("m1 shape " + to_string(mk.m1.shape()) + " does not match d_out " +
                                    std::to_string(mk.modulated_rows.size()));
    }
    if (mk.m2.shape() != Shape{k}) {
        throw std::invalid_argument("m2 shape " + to_string(mk.m2.shape()) + " does not match fan-in " +
                                    std::to_string(k));
    }
}

ModulatedKernel make_modulated_kernel(Tensor base, std::vector<std::size_t> rows, std::mt19937_64& rng,
                                      double init_std, bool base_frozen) {
    const auto k = kernel_fan_in(base.shape());
    ModulatedKernel mk;
    mk.m1 = Tensor::randn(Shape{rows.size()}, rng, init_std);
    mk.m2 = Tensor::randn(Shape{k}, rng, init_std);
    mk.m1.set_requires_grad(true);
    mk.m2.set_requires_grad(true);
    mk.base = std::move(base);
    mk.modulated_rows = std::move(rows);
    mk.base_frozen = base_frozen;
    check_invariants(mk);
    return mk;
}

Tensor modulation_matrix(Tape& tape, const Tensor& m1, const Tensor& m2) { return op::outer(tape, m1, m2); }

Tensor effective_weights(Tape& tape, const ModulatedKernel& mk) {
    const auto scale = op::add_scalar(tape, modulation_matrix(tape, mk.m1, mk.m2), 1.0);
    const auto rows = op::gather_rows(tape, mk.base, mk.modulated_rows);
    const auto modulated = op::hadamard(tape, rows, scale);
    return op::scatter_rows(tape, mk.base, mk.modulated_rows, modulated);
}

std::size_t trainable_param_count(const ModulatedKernel& mk) {
    std::size_t n = mk.m1.numel() + mk.m2.numel();
    if (!mk.base_frozen) n += mk.base.numel();
    return n;
}

}  // namespace kmod
