#ifndef AIRNET_INFERENCE_HPP
#define AIRNET_INFERENCE_HPP

#include <functional>
#include <utility>
#include <vector>

#include "airnet/tensor.hpp"
#include "airnet/unet.hpp"
#include "airnet/volume.hpp"

namespace airnet {

/// Window starts 0, stride, 2*stride, ... with the final start clamped to
/// dim - patch and deduplicated.
std::vector<int> window_starts(int dim, int patch, int stride);

/// Sliding-window placements over a (padded) volume. Input windows stride by
/// half the patch, tightened to the output footprint when the margin eats
/// more than a quarter of the patch so the footprints still tile the volume.
struct WindowPlan {
    Index3 volume_dims;
    Index3 patch;
    int margin = 0;
    std::vector<BBox> inputs;  // patch-sized, within volume_dims
    std::vector<BBox> outputs; // inputs shrunk by margin per side
};

WindowPlan plan_windows(Index3 volume_dims, Index3 patch_dims, int margin);

/// Count-normalized stitching: voxelwise sum of overlapping window outputs
/// divided by coverage, 64-bit accumulation in canonical plan order (the
/// result is independent of the order patches arrive in). Uncovered voxels
/// stay 0.
Volume3D aggregate(const std::vector<std::pair<int, Tensor>>& indexed_outputs,
                   const WindowPlan& plan);
Volume3D aggregate(const std::vector<Tensor>& outputs_in_plan_order, const WindowPlan& plan);

/// Lung-masked thresholding, merge with the central-airway mask, then the
/// largest connected component at the given connectivity. An empty
/// post-threshold result returns an empty mask (with a warning on stderr).
Volume3D extract_airways(const Volume3D& prob, const Volume3D& lung_mask,
                         const Volume3D& central_mask, float threshold, int connectivity);

struct PredictParams {
    float threshold = 0.5f;
    int connectivity = 26;
    int roi_buffer = 30;
};

struct PredictResult {
    Volume3D mask; // binary airway tree, full volume frame
    Volume3D prob; // aggregated probabilities, full volume frame
};

/// Full-scan prediction: ROI crop, normalization, margin padding, sliding
/// windows, per-window forward, count-normalized aggregation, re-embedding
/// into the original frame, then airway extraction against the lung and
/// central-airway masks. central == nullptr auto-computes the trachea mask
/// from the CT.
PredictResult predict(const Volume3D& ct, const Volume3D& lung_mask, const Volume3D* central,
                      const UNetModel& model, const PredictParams& params = {});

/// predict() with an arbitrary patch->probability function (used to drive
/// the pipeline with oracle stubs). forward must map a (1, pz, py, px)
/// patch to the (1, pz-2m, py-2m, pz-2m) output footprint.
PredictResult predict_with(const Volume3D& ct, const Volume3D& lung_mask,
                           const Volume3D* central,
                           const std::function<Tensor(const Tensor&)>& forward,
                           Index3 patch, int margin, const PredictParams& params = {});

} // namespace airnet

#endif
