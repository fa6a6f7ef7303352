#include "airnet/inference.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <stdexcept>

#include "airnet/morphology.hpp"
#include "airnet/preprocess.hpp"

namespace airnet {

Volume3D normalize_ct(const Volume3D& ct) {
    Volume3D out(ct.dims(), ct.spacing(), ct.origin(), ElementKind::probability);
    for (std::size_t i = 0; i < ct.data().size(); ++i) {
        const float v = std::clamp(ct.data()[i], -1000.0f, 500.0f);
        out.data()[i] = (v + 1000.0f) / 1500.0f;
    }
    return out;
}

Volume3D pad_to_min(const Volume3D& v, Index3 min_dims) {
    const Index3 d = v.dims();
    if (d.x >= min_dims.x && d.y >= min_dims.y && d.z >= min_dims.z) return v;
    const Index3 nd{std::max(d.x, min_dims.x), std::max(d.y, min_dims.y),
                    std::max(d.z, min_dims.z)};
    const Index3 lo{(nd.x - d.x) / 2, (nd.y - d.y) / 2, (nd.z - d.z) / 2};
    Vec3 origin{v.origin().x - lo.x * v.spacing().x, v.origin().y - lo.y * v.spacing().y,
                v.origin().z - lo.z * v.spacing().z};
    Volume3D out(nd, v.spacing(), origin, v.kind());
    for (int z = 0; z < d.z; ++z)
        for (int y = 0; y < d.y; ++y) {
            const float* src = &v.data()[v.index(0, y, z)];
            float* dst = &out.data()[out.index(lo.x, lo.y + y, lo.z + z)];
            std::copy(src, src + d.x, dst);
        }
    return out;
}

std::vector<int> window_starts(int dim, int patch, int stride) {
    if (patch > dim) throw std::invalid_argument("window_starts: patch larger than volume");
    std::vector<int> starts;
    for (int s = 0; s + patch <= dim; s += stride) starts.push_back(s);
    const int last = dim - patch;
    if (starts.empty() || starts.back() != last) starts.push_back(last);
    return starts;
}

WindowPlan plan_windows(Index3 volume_dims, Index3 patch_dims, int margin) {
    if (margin < 0 || 2 * margin >= std::min({patch_dims.x, patch_dims.y, patch_dims.z}))
        throw std::invalid_argument("plan_windows: margin incompatible with patch");
    WindowPlan plan;
    plan.volume_dims = volume_dims;
    plan.patch = patch_dims;
    plan.margin = margin;
    auto stride_for = [margin](int patch) {
        // half-patch overlap, except when the output footprint is smaller
        // than that stride (the footprints must still cover the volume)
        return std::min(patch / 2, patch - 2 * margin);
    };
    const std::vector<int> xs = window_starts(volume_dims.x, patch_dims.x, stride_for(patch_dims.x));
    const std::vector<int> ys = window_starts(volume_dims.y, patch_dims.y, stride_for(patch_dims.y));
    const std::vector<int> zs = window_starts(volume_dims.z, patch_dims.z, stride_for(patch_dims.z));
    for (int z : zs)
        for (int y : ys)
            for (int x : xs) {
                BBox in{{x, y, z}, {x + patch_dims.x, y + patch_dims.y, z + patch_dims.z}};
                BBox out{{x + margin, y + margin, z + margin},
                         {x + patch_dims.x - margin, y + patch_dims.y - margin,
                          z + patch_dims.z - margin}};
                plan.inputs.push_back(in);
                plan.outputs.push_back(out);
            }
    return plan;
}

Volume3D aggregate(const std::vector<std::pair<int, Tensor>>& indexed_outputs,
                   const WindowPlan& plan) {
    std::vector<std::pair<int, const Tensor*>> order;
    order.reserve(indexed_outputs.size());
    for (const auto& [i, t] : indexed_outputs) order.push_back({i, &t});
    std::sort(order.begin(), order.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });

    if (order.size() != plan.outputs.size())
        throw std::invalid_argument("aggregate: output count does not match plan");

    const Index3 d = plan.volume_dims;
    std::vector<double> acc(static_cast<std::size_t>(d.x) * d.y * d.z, 0.0);
    std::vector<std::int32_t> cnt(acc.size(), 0);
    for (const auto& [wi, tp] : order) {
        if (wi < 0 || wi >= static_cast<int>(plan.outputs.size()))
            throw std::invalid_argument("aggregate: window index out of range");
        const BBox& box = plan.outputs[static_cast<std::size_t>(wi)];
        const Index3 sz = box.size();
        const Tensor& t = *tp;
        if (t.rank() != 4 || t.extent(0) != 1 || t.extent(1) != sz.z || t.extent(2) != sz.y ||
            t.extent(3) != sz.x)
            throw std::invalid_argument("aggregate: output tensor shape does not match placement");
        std::size_t ti = 0;
        for (int z = 0; z < sz.z; ++z)
            for (int y = 0; y < sz.y; ++y)
                for (int x = 0; x < sz.x; ++x, ++ti) {
                    const std::size_t vi =
                        static_cast<std::size_t>(box.lo.x + x) +
                        static_cast<std::size_t>(d.x) *
                            (static_cast<std::size_t>(box.lo.y + y) +
                             static_cast<std::size_t>(d.y) *
                                 static_cast<std::size_t>(box.lo.z + z));
                    acc[vi] += static_cast<double>(t[ti]);
                    cnt[vi] += 1;
                }
    }
    Volume3D out(d, {1, 1, 1}, {0, 0, 0}, ElementKind::probability);
    for (std::size_t i = 0; i < acc.size(); ++i)
        out.data()[i] = cnt[i] ? static_cast<float>(acc[i] / cnt[i]) : 0.0f;
    return out;
}

Volume3D aggregate(const std::vector<Tensor>& outputs, const WindowPlan& plan) {
    std::vector<std::pair<int, Tensor>> indexed;
    indexed.reserve(outputs.size());
    for (std::size_t i = 0; i < outputs.size(); ++i)
        indexed.push_back({static_cast<int>(i), outputs[i]});
    return aggregate(indexed, plan);
}

Volume3D extract_airways(const Volume3D& prob, const Volume3D& lung_mask,
                         const Volume3D& central_mask, float threshold, int connectivity) {
    if (!(prob.dims() == lung_mask.dims()) || !(prob.dims() == central_mask.dims()))
        throw std::invalid_argument("extract_airways: dims mismatch");
    if (!(threshold > 0.0f && threshold < 1.0f))
        throw std::invalid_argument("extract_airways: threshold must be in (0,1)");
    if (connectivity != 6 && connectivity != 26)
        throw std::invalid_argument("extract_airways: connectivity must be 6 or 26");

    Volume3D masked = mask_apply(prob, lung_mask);
    Volume3D bin(prob.dims(), prob.spacing(), prob.origin(), ElementKind::binary_mask);
    for (std::size_t i = 0; i < bin.data().size(); ++i)
        bin.data()[i] = masked.data()[i] >= threshold ? 1.0f : 0.0f;
    Volume3D merged = mask_or(bin, central_mask);
    if (merged.count_nonzero() == 0) {
        std::cerr << "extract_airways: warning: empty segmentation after thresholding\n";
        return merged;
    }
    Volume3D largest = largest_component(merged, connectivity);
    largest.set_origin(prob.origin());
    return largest;
}

PredictResult predict(const Volume3D& ct, const Volume3D& lung_mask, const Volume3D* central,
                      const UNetModel& model, const PredictParams& params) {
    const UNetConfig& cfg = model.config();
    const Index3 patch{cfg.input_shape[2], cfg.input_shape[1], cfg.input_shape[0]};
    const int margin = compute_output_shape(cfg.input_shape, cfg).margin;
    return predict_with(
        ct, lung_mask, central, [&model](const Tensor& t) { return model.infer(t); }, patch,
        margin, params);
}

PredictResult predict_with(const Volume3D& ct, const Volume3D& lung_mask,
                           const Volume3D* central,
                           const std::function<Tensor(const Tensor&)>& forward, Index3 patch,
                           int margin, const PredictParams& params) {
    if (!(ct.dims() == lung_mask.dims()))
        throw std::invalid_argument("predict: ct / lung mask dims mismatch");

    // 1. ROI crop with buffer, then intensity normalization
    const BBox roi = compute_roi_bbox(lung_mask, params.roi_buffer);
    Volume3D norm = normalize_ct(crop(ct, roi));
    const Index3 crop_dims = norm.dims();

    // 2. pad by the margin so output footprints cover the whole ROI, then up
    // to the patch size if the ROI is small
    Volume3D padded = pad_to_min(
        norm, {crop_dims.x + 2 * margin, crop_dims.y + 2 * margin, crop_dims.z + 2 * margin});
    padded = pad_to_min(padded, patch);
    const Index3 pad_lo{(padded.dims().x - crop_dims.x) / 2,
                        (padded.dims().y - crop_dims.y) / 2,
                        (padded.dims().z - crop_dims.z) / 2};

    // 3-5. window plan, per-window forward, aggregation
    WindowPlan plan = plan_windows(padded.dims(), patch, margin);
    std::vector<Tensor> outputs;
    outputs.reserve(plan.inputs.size());
    for (const BBox& in : plan.inputs) {
        Tensor t({1, patch.z, patch.y, patch.x});
        std::size_t ti = 0;
        for (int z = 0; z < patch.z; ++z)
            for (int y = 0; y < patch.y; ++y)
                for (int x = 0; x < patch.x; ++x, ++ti)
                    t[ti] = padded.at(in.lo.x + x, in.lo.y + y, in.lo.z + z);
        outputs.push_back(forward(t));
    }
    Volume3D prob_padded = aggregate(outputs, plan);

    // 6. unpad to the crop frame, re-embed into the original frame
    Volume3D prob_full(ct.dims(), ct.spacing(), ct.origin(), ElementKind::probability);
    for (int z = 0; z < crop_dims.z; ++z)
        for (int y = 0; y < crop_dims.y; ++y)
            for (int x = 0; x < crop_dims.x; ++x)
                prob_full.at(roi.lo.x + x, roi.lo.y + y, roi.lo.z + z) =
                    prob_padded.at(pad_lo.x + x, pad_lo.y + y, pad_lo.z + z);

    // 7. airway extraction on the full frame
    Volume3D central_mask = central ? *central : extract_central_airways(ct, lung_mask);
    PredictResult r{extract_airways(prob_full, lung_mask, central_mask, params.threshold,
                                    params.connectivity),
                    std::move(prob_full)};
    return r;
}

} // namespace airnet
