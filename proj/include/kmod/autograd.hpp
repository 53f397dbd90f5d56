#pragma once

#include <functional>
#include <vector>

#include "kmod/tensor.hpp"

namespace kmod {

// Ordered record of differentiable operations. An op is only recorded when at
// least one of its inputs requires grad, so a forward pass over frozen tensors
// leaves the tape empty.
class Tape {
public:
    // Reads output.grad() and accumulates into the inputs that require grad.
    using BackwardFn = std::function<void(const Tensor& output)>;

    Tape() = default;
    // A disabled tape records nothing; use it for inference passes.
    static Tape no_grad() {
        Tape t;
        t.enabled_ = false;
        return t;
    }
    bool enabled() const { return enabled_; }

    void record(std::vector<Tensor> inputs, Tensor output, BackwardFn backward);
    std::size_t size() const { return nodes_.size(); }
    void clear() { nodes_.clear(); }

    friend void backward(const Tensor& loss, Tape& tape);

private:
    struct Node {
        std::vector<Tensor> inputs;
        Tensor output;
        BackwardFn backward;
    };
    std::vector<Node> nodes_;
    bool enabled_ = true;
};

// Populates grad for every requires_grad leaf reachable from `loss`. Leaf
// gradients accumulate across calls until zero_grad(); intermediate gradients
// are recomputed from scratch on each call.
void backward(const Tensor& loss, Tape& tape);

// Adds `g` into t's gradient, allocating it on first use. No-op when t does
// not require grad.
void accumulate_grad(Tensor t, std::span<const double> g);

namespace op {

// Elementwise. A single-element operand broadcasts against the other.
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor hadamard(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& x, double factor);
Tensor add_scalar(Tape& tape, const Tensor& x, double value);

Tensor leaky_relu(Tape& tape, const Tensor& x, double slope);
Tensor tanh(Tape& tape, const Tensor& x);
Tensor sigmoid(Tape& tape, const Tensor& x);

// Copies data into the new shape; element count must match.
Tensor reshape(Tape& tape, const Tensor& x, Shape shape);

Tensor reduce_sum(Tape& tape, const Tensor& x);
Tensor reduce_mean(Tape& tape, const Tensor& x);

// u: [p], v: [q] -> [p, q]
Tensor outer(Tape& tape, const Tensor& u, const Tensor& v);
// a: [m, k], b: [k, n] -> [m, n]
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
// x: [n, in], weight: [out, in], bias: [out] or undefined -> [n, out]
Tensor linear(Tape& tape, const Tensor& x, const Tensor& weight, const Tensor& bias);

// Cross-correlation. input [n, c_in, h, w], weight [c_out, c_in, k, k],
// bias [c_out] or undefined.
Tensor conv2d(Tape& tape, const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t padding);
Tensor upsample_nearest(Tape& tape, const Tensor& x, std::size_t factor);
Tensor avg_pool(Tape& tape, const Tensor& x, std::size_t factor);

// Treats x as x.size(0) rows of numel/size(0) elements.
Tensor gather_rows(Tape& tape, const Tensor& x, const std::vector<std::size_t>& rows);
// Copy of `base` with base row rows[i] replaced by row i of `values`.
Tensor scatter_rows(Tape& tape, const Tensor& base, const std::vector<std::size_t>& rows, const Tensor& values);

// Mean over elements of the numerically stable binary cross-entropy.
Tensor bce_with_logits(Tape& tape, const Tensor& logits, const Tensor& targets);

}  // namespace op
}  // namespace kmod
