#include "kmod/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace kmod {

void adam_step(std::span<Tensor> params, std::span<AdamState> states) {
    if (params.size() != states.size()) {
        throw std::invalid_argument("adam_step: " + std::to_string(params.size()) + " params but " +
                                    std::to_string(states.size()) + " states");
    }
    for (std::size_t p = 0; p < params.size(); ++p) {
        auto& param = params[p];
        auto& st = states[p];
        if (!param.has_grad()) {
            throw std::invalid_argument("adam_step: parameter " + std::to_string(p) + " of shape " +
                                        to_string(param.shape()) + " has no gradient");
        }
        if (st.m.size() != param.numel() || st.v.size() != param.numel()) {
            throw std::invalid_argument("adam_step: state length does not match parameter " + std::to_string(p));
        }
        ++st.step;
        const auto& o = st.options;
        const double bc1 = 1.0 - std::pow(o.beta1, static_cast<double>(st.step));
        const double bc2 = 1.0 - std::pow(o.beta2, static_cast<double>(st.step));
        auto w = param.data();
        auto g = param.grad();
        for (std::size_t i = 0; i < w.size(); ++i) {
            st.m[i] = o.beta1 * st.m[i] + (1.0 - o.beta1) * g[i];
            st.v[i] = o.beta2 * st.v[i] + (1.0 - o.beta2) * g[i] * g[i];
            const double m_hat = st.m[i] / bc1;
            const double v_hat = st.v[i] / bc2;
            w[i] -= o.lr * m_hat / (std::sqrt(v_hat) + o.epsilon);
        }
    }
}

}  // namespace kmod
