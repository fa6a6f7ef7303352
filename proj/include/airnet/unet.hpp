#ifndef AIRNET_UNET_HPP
#define AIRNET_UNET_HPP

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "airnet/nn_ops.hpp"
#include "airnet/tape.hpp"
#include "airnet/tensor.hpp"

namespace airnet {

struct UNetConfig {
    int levels = 5;
    int base_channels = 16;
    int valid_levels = 3; // resolution levels 1..valid_levels use non-padded convs
    std::array<int, 3> input_shape{252, 252, 252}; // (z, y, x) patch extents
    int in_channels = 1;
    int out_channels = 1;

    friend bool operator==(const UNetConfig&, const UNetConfig&) = default;
};

/// Feature channels carried by resolution level l (1-based):
/// base_channels * 2^(l-1).
int channels_at(const UNetConfig& cfg, int level);

struct ConvSpec {
    std::string name;
    int cin = 0;
    int cout = 0;
    int k = 3;
    bool valid_pad = false;
};

/// Ordered convolution plan: encoder level 1..L (two convs each), decoder
/// level L-1..1 (two convs each), then the final 1x1x1 conv.
std::vector<ConvSpec> conv_plan(const UNetConfig& cfg);

struct ShapeCheck {
    bool valid = false;
    std::string failing_layer; // empty when valid
};

/// Symbolic propagation through the layer plan: every valid conv needs
/// extent >= 3, every pooled extent must be even, decoder concat size
/// differences must be even.
ShapeCheck validate_input_shape(const std::array<int, 3>& shape, const UNetConfig& cfg);

struct OutputShape {
    std::array<int, 3> shape;
    int margin = 0; // per-side crop (input - output) / 2, equal on all axes
};

OutputShape compute_output_shape(const std::array<int, 3>& input_shape, const UNetConfig& cfg);

/// Bytes of float32 feature maps stored by one forward pass (conv, relu,
/// pool, upsample and concat outputs -- the activations retained for
/// backward). Optimizer state, pooling indices, scratch buffers and the
/// single-channel output head are outside the estimate. Pooling of odd
/// extents is floored and concatenation truncated to the smaller map so
/// that all-same-padding reference configs remain estimable.
std::size_t estimate_activation_bytes(const UNetConfig& cfg, const std::array<int, 3>& input_shape);

/// Footprint of cfg relative to its all-same-padding twin (valid_levels = 0).
double activation_memory_ratio(const UNetConfig& cfg, const std::array<int, 3>& input_shape);

class UNetModel {
public:
    UNetModel() = default;

    /// He-normal conv weights (std = sqrt(2 / (cin*k^3))), zero biases,
    /// fully determined by seed.
    static UNetModel init(const UNetConfig& cfg, std::uint64_t seed);

    const UNetConfig& config() const { return cfg_; }

    /// Interleaved [w0, b0, w1, b1, ...] in conv_plan order.
    std::vector<Tensor>& parameters() { return params_; }
    const std::vector<Tensor>& parameters() const { return params_; }

    std::size_t parameter_count() const;

    /// Forward pass for a (1, z, y, x) patch; returns the (1, z', y', x')
    /// probability map. No gradients are kept.
    Tensor infer(const Tensor& patch) const;

    static UNetModel from_parts(UNetConfig cfg, std::vector<Tensor> params);

private:
    UNetConfig cfg_;
    std::vector<Tensor> params_;
};

/// Closed-form parameter count from the layer plan.
std::size_t parameter_count_formula(const UNetConfig& cfg);

/// Records the full U-Net onto a tape. params must be refs to the model's
/// parameter tensors in conv_plan order (interleaved weight, bias).
template <class T>
ad::Ref unet_forward(ad::TapeT<T>& t, ad::Ref input, const std::vector<ad::Ref>& params,
                     const UNetConfig& cfg) {
    const auto plan = conv_plan(cfg);
    if (params.size() != plan.size() * 2)
        throw std::invalid_argument("unet_forward: parameter ref count mismatch");
    std::size_t pi = 0;
    auto conv_relu = [&](ad::Ref x, const ConvSpec& spec) {
        ad::Ref w = params[pi++];
        ad::Ref b = params[pi++];
        ad::Ref c = ad::conv3d(t, x, w, b,
                               spec.valid_pad ? ad::Padding::valid : ad::Padding::same);
        return ad::relu(t, c);
    };

    const int L = cfg.levels;
    std::vector<ad::Ref> skips(static_cast<std::size_t>(L) + 1);
    ad::Ref x = input;
    std::size_t plan_i = 0;
    for (int l = 1; l <= L; ++l) {
        x = conv_relu(x, plan[plan_i++]);
        x = conv_relu(x, plan[plan_i++]);
        if (l < L) {
            skips[static_cast<std::size_t>(l)] = x;
            x = ad::maxpool3d(t, x);
        }
    }
    for (int l = L - 1; l >= 1; --l) {
        x = ad::upsample3d(t, x);
        x = ad::concat_crop(t, skips[static_cast<std::size_t>(l)], x);
        x = conv_relu(x, plan[plan_i++]);
        x = conv_relu(x, plan[plan_i++]);
    }
    // final 1x1x1 conv + sigmoid
    ad::Ref w = params[pi++];
    ad::Ref b = params[pi++];
    ad::Ref logits = ad::conv3d(t, x, w, b, ad::Padding::valid);
    return ad::sigmoid(t, logits);
}

} // namespace airnet

#endif
