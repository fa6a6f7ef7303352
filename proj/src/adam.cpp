#include "airnet/adam.hpp"

#include <cmath>
#include <stdexcept>

#include "airnet/kernels.hpp"

namespace airnet {

AdamState AdamState::init(const std::vector<const Tensor*>& params, AdamHyperParams hyper) {
    AdamState s;
    s.hyper = hyper;
    s.m.reserve(params.size());
    s.v.reserve(params.size());
    for (const Tensor* p : params) {
        s.m.emplace_back(p->size(), 0.0f);
        s.v.emplace_back(p->size(), 0.0f);
    }
    return s;
}

void adam_step(std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads,
               AdamState& state) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw std::invalid_argument("adam_step: parameter/gradient/state count mismatch");
    state.t += 1;
    const double b1t = std::pow(static_cast<double>(state.hyper.beta1), state.t);
    const double b2t = std::pow(static_cast<double>(state.hyper.beta2), state.t);
    kernels::AdamHyper h;
    h.lr = state.hyper.lr;
    h.beta1 = state.hyper.beta1;
    h.beta2 = state.hyper.beta2;
    h.eps = state.hyper.eps;
    h.inv_bc1 = static_cast<float>(1.0 / (1.0 - b1t));
    h.inv_bc2 = static_cast<float>(1.0 / (1.0 - b2t));

    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i];
        if (p.size() != state.m[i].size())
            throw std::invalid_argument("adam_step: state shape mismatch at block " +
                                        std::to_string(i));
        if (grads[i] == nullptr) {
            // zero gradient: moments decay, update stays eps-guarded
            std::vector<float> zeros(p.size(), 0.0f);
            kernels::adam_step(p.data(), state.m[i].data(), state.v[i].data(), zeros.data(),
                               p.size(), h);
            continue;
        }
        if (grads[i]->size() != p.size())
            throw std::invalid_argument("adam_step: gradient shape mismatch at block " +
                                        std::to_string(i));
        kernels::adam_step(p.data(), state.m[i].data(), state.v[i].data(), grads[i]->data(),
                           p.size(), h);
    }
}

} // namespace airnet
