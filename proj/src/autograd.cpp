#include "kmod/autograd.hpp"

#include <algorithm>
#include <stdexcept>

namespace kmod {

void Tape::record(std::vector<Tensor> inputs, Tensor output, BackwardFn backward) {
    if (!enabled_) return;
    output.set_requires_grad(true);
    nodes_.push_back(Node{std::move(inputs), std::move(output), std::move(backward)});
}

void accumulate_grad(Tensor t, std::span<const double> g) {
    if (!t.requires_grad()) return;
    auto dst = t.ensure_grad();
    if (dst.size() != g.size()) throw std::logic_error("gradient length mismatch");
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
}

void backward(const Tensor& loss, Tape& tape) {
    if (!loss.defined() || loss.numel() != 1) {
        throw std::invalid_argument("backward requires a scalar loss, got shape " +
                                    (loss.defined() ? to_string(loss.shape()) : std::string("<undefined>")));
    }
    auto& nodes = tape.nodes_;
    auto it = std::find_if(nodes.rbegin(), nodes.rend(),
                           [&](const Tape::Node& n) { return n.output.same_storage(loss); });
    if (it == nodes.rend()) throw std::invalid_argument("backward: loss was not recorded on this tape");
    const std::size_t last = static_cast<std::size_t>(nodes.rend() - it);

    // Intermediates start from zero every pass so that only leaves accumulate.
    for (std::size_t i = 0; i < last; ++i) {
        auto out = nodes[i].output;
        out.ensure_grad();
        out.zero_grad();
    }
    Tensor seed = loss;
    seed.grad()[0] = 1.0;

    for (std::size_t i = last; i-- > 0;) {
        auto& node = nodes[i];
        node.backward(node.output);
    }
}

}  // namespace kmod
