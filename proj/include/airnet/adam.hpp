#ifndef AIRNET_ADAM_HPP
#define AIRNET_ADAM_HPP

#include <cstdint>
#include <vector>

#include "airnet/tensor.hpp"

namespace airnet {

struct AdamHyperParams {
    float lr = 1e-4f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
};

/// Bias-corrected Adam moments for an ordered list of parameter tensors.
struct AdamState {
    std::vector<std::vector<float>> m;
    std::vector<std::vector<float>> v;
    std::int64_t t = 0;
    AdamHyperParams hyper;

    static AdamState init(const std::vector<const Tensor*>& params, AdamHyperParams hyper);
};

/// One update: t advances, then p -= lr * m_hat / (sqrt(v_hat) + eps) per
/// block. grads[i] may be null (treated as an all-zero gradient).
void adam_step(std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads,
               AdamState& state);

} // namespace airnet

#endif
