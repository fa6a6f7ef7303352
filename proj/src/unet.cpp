#include "airnet/unet.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "airnet/rng.hpp"

namespace airnet {

int channels_at(const UNetConfig& cfg, int level) {
    return cfg.base_channels << (level - 1);
}

static void check_config(const UNetConfig& cfg) {
    if (cfg.levels < 2) throw std::invalid_argument("UNetConfig: levels must be >= 2");
    if (cfg.valid_levels < 0 || cfg.valid_levels > cfg.levels)
        throw std::invalid_argument("UNetConfig: valid_levels out of range");
    if (cfg.base_channels < 1) throw std::invalid_argument("UNetConfig: base_channels >= 1");
    if (cfg.in_channels < 1 || cfg.out_channels < 1)
        throw std::invalid_argument("UNetConfig: channel counts must be >= 1");
}

std::vector<ConvSpec> conv_plan(const UNetConfig& cfg) {
    check_config(cfg);
    std::vector<ConvSpec> plan;
    const int L = cfg.levels;
    for (int l = 1; l <= L; ++l) {
        const bool vp = l <= cfg.valid_levels;
        const int c = channels_at(cfg, l);
        const int cin = (l == 1) ? cfg.in_channels : channels_at(cfg, l - 1);
        plan.push_back({"enc" + std::to_string(l) + "a", cin, c, 3, vp});
        plan.push_back({"enc" + std::to_string(l) + "b", c, c, 3, vp});
    }
    for (int l = L - 1; l >= 1; --l) {
        const bool vp = l <= cfg.valid_levels;
        const int c = channels_at(cfg, l);
        plan.push_back({"dec" + std::to_string(l) + "a", c + channels_at(cfg, l + 1), c, 3, vp});
        plan.push_back({"dec" + std::to_string(l) + "b", c, c, 3, vp});
    }
    plan.push_back({"final", channels_at(cfg, 1), cfg.out_channels, 1, true});
    return plan;
}

namespace {

struct Extents {
    std::array<int, 3> e;
    int min() const { return std::min(e[0], std::min(e[1], e[2])); }
};

struct Activation {
    long long channels;
    Extents ext;
};

struct Propagation {
    bool valid = true;
    std::string failing_layer;
    std::array<int, 3> output{};
    std::vector<Activation> stored; // forward activations, in order
};

// Walks the layer plan symbolically. strict mode enforces the runtime
// preconditions (even pools, even concat differences, valid-conv extents);
// relaxed mode floors odd pools and truncates concats so footprint
// comparisons against all-same-padding configs stay well defined.
Propagation propagate(const UNetConfig& cfg, std::array<int, 3> in, bool strict) {
    check_config(cfg);
    Propagation p;
    auto fail = [&](const std::string& layer) {
        p.valid = false;
        p.failing_layer = layer;
    };
    auto store = [&](int ch, Extents e) { p.stored.push_back({ch, e}); };

    const int L = cfg.levels;
    Extents x{in};
    std::vector<Extents> skip(static_cast<std::size_t>(L) + 1);

    auto conv_pair = [&](Extents& cur, int level, const char* path, int ch) -> bool {
        const bool vp = level <= cfg.valid_levels;
        for (int j = 0; j < 2; ++j) {
            if (vp) {
                if (cur.min() < 3) {
                    fail("level " + std::to_string(level) + " " + path + " conv" +
                         (j ? "b" : "a") + ": extent " + std::to_string(cur.min()) +
                         " < kernel 3 (valid)");
                    return false;
                }
                for (auto& e : cur.e) e -= 2;
            }
            store(ch, cur); // conv output
            store(ch, cur); // relu output
        }
        return true;
    };

    for (int l = 1; l <= L && p.valid; ++l) {
        if (!conv_pair(x, l, "encoder", channels_at(cfg, l))) break;
        if (l < L) {
            skip[static_cast<std::size_t>(l)] = x;
            bool odd = (x.e[0] % 2) || (x.e[1] % 2) || (x.e[2] % 2);
            if (odd && strict) {
                fail("level " + std::to_string(l) + " pooling: extent " +
                     std::to_string(x.min()) + " odd");
                break;
            }
            for (auto& e : x.e) e /= 2;
            if (x.min() < 1) {
                fail("level " + std::to_string(l) + " pooling: extent underflow");
                break;
            }
            store(channels_at(cfg, l), x); // pool output
        }
    }
    for (int l = L - 1; l >= 1 && p.valid; --l) {
        for (auto& e : x.e) e *= 2;
        store(channels_at(cfg, l + 1), x); // upsample output
        Extents s = skip[static_cast<std::size_t>(l)];
        for (int a = 0; a < 3; ++a) {
            const int d = s.e[a] - x.e[a];
            if (strict && (d < 0 || d % 2)) {
                fail("level " + std::to_string(l) + " concat: size difference " +
                     std::to_string(d) + (d < 0 ? " negative" : " odd"));
                break;
            }
            if (!strict) x.e[a] = std::min(s.e[a], x.e[a]);
        }
        if (!p.valid) break;
        store(channels_at(cfg, l) + channels_at(cfg, l + 1), x); // concat output
        if (!conv_pair(x, l, "decoder", channels_at(cfg, l))) break;
    }
    // The final 1x1x1 conv and sigmoid emit out_channels maps that do not
    // scale with the feature-map plan; they stay outside the footprint sum.
    if (p.valid) p.output = x.e;
    return p;
}

} // namespace

ShapeCheck validate_input_shape(const std::array<int, 3>& shape, const UNetConfig& cfg) {
    for (int e : shape)
        if (e < 1) return {false, "input: extent < 1"};
    Propagation p = propagate(cfg, shape, true);
    return {p.valid, p.failing_layer};
}

OutputShape compute_output_shape(const std::array<int, 3>& input_shape, const UNetConfig& cfg) {
    Propagation p = propagate(cfg, input_shape, true);
    if (!p.valid)
        throw std::invalid_argument("compute_output_shape: invalid input shape (" +
                                    p.failing_layer + ")");
    OutputShape o;
    o.shape = p.output;
    const int mz = (input_shape[0] - p.output[0]) / 2;
    const int my = (input_shape[1] - p.output[1]) / 2;
    const int mx = (input_shape[2] - p.output[2]) / 2;
    if (mz != my || my != mx)
        throw std::logic_error("compute_output_shape: anisotropic margin");
    o.margin = mz;
    return o;
}

std::size_t estimate_activation_bytes(const UNetConfig& cfg,
                                      const std::array<int, 3>& input_shape) {
    Propagation p = propagate(cfg, input_shape, false);
    if (!p.valid)
        throw std::invalid_argument("estimate_activation_bytes: shape collapses (" +
                                    p.failing_layer + ")");
    std::size_t elems = 0;
    for (const Activation& a : p.stored)
        elems += static_cast<std::size_t>(a.channels) * a.ext.e[0] * a.ext.e[1] * a.ext.e[2];
    return elems * sizeof(float);
}

double activation_memory_ratio(const UNetConfig& cfg, const std::array<int, 3>& input_shape) {
    UNetConfig same = cfg;
    same.valid_levels = 0;
    const double a = static_cast<double>(estimate_activation_bytes(cfg, input_shape));
    const double b = static_cast<double>(estimate_activation_bytes(same, input_shape));
    return a / b;
}

std::size_t parameter_count_formula(const UNetConfig& cfg) {
    std::size_t n = 0;
    for (const ConvSpec& s : conv_plan(cfg))
        n += static_cast<std::size_t>(s.cout) * s.cin * s.k * s.k * s.k + s.cout;
    return n;
}

UNetModel UNetModel::init(const UNetConfig& cfg, std::uint64_t seed) {
    UNetModel m;
    m.cfg_ = cfg;
    const auto plan = conv_plan(cfg);
    m.params_.reserve(plan.size() * 2);
    for (std::size_t i = 0; i < plan.size(); ++i) {
        const ConvSpec& s = plan[i];
        Rng rng(derive_seed(seed, i));
        const int fan_in = s.cin * s.k * s.k * s.k;
        const double stddev = std::sqrt(2.0 / fan_in);
        Tensor w({s.cout, s.cin, s.k, s.k, s.k});
        for (auto& v : w.vec()) v = static_cast<float>(rng.normal(0.0, stddev));
        m.params_.push_back(std::move(w));
        m.params_.push_back(Tensor({s.cout}));
    }
    return m;
}

UNetModel UNetModel::from_parts(UNetConfig cfg, std::vector<Tensor> params) {
    const auto plan = conv_plan(cfg);
    if (params.size() != plan.size() * 2)
        throw std::invalid_argument("UNetModel: parameter block count mismatch");
    for (std::size_t i = 0; i < plan.size(); ++i) {
        const ConvSpec& s = plan[i];
        const std::vector<int> wshape{s.cout, s.cin, s.k, s.k, s.k};
        if (params[2 * i].shape() != wshape || params[2 * i + 1].shape() != std::vector<int>{s.cout})
            throw std::invalid_argument("UNetModel: parameter shape mismatch at " + s.name);
    }
    UNetModel m;
    m.cfg_ = cfg;
    m.params_ = std::move(params);
    return m;
}

std::size_t UNetModel::parameter_count() const {
    std::size_t n = 0;
    for (const Tensor& t : params_) n += t.size();
    return n;
}

Tensor UNetModel::infer(const Tensor& patch) const {
    if (patch.rank() != 4 || patch.extent(0) != cfg_.in_channels)
        throw std::invalid_argument("infer: patch must be (in_channels, z, y, x)");
    const std::array<int, 3> in{patch.extent(1), patch.extent(2), patch.extent(3)};
    ShapeCheck chk = validate_input_shape(in, cfg_);
    if (!chk.valid)
        throw std::invalid_argument("infer: invalid patch shape (" + chk.failing_layer + ")");
    ad::Tape t;
    ad::Ref x = t.constant(patch);
    std::vector<ad::Ref> refs;
    refs.reserve(params_.size());
    for (const Tensor& p : params_) refs.push_back(t.constant(p));
    ad::Ref out = unet_forward(t, x, refs, cfg_);
    return t.value(out);
}

} // namespace airnet
