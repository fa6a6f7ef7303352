#ifndef AIRNET_TRAIN_HPP
#define AIRNET_TRAIN_HPP

#include <optional>
#include <string>
#include <vector>

#include "airnet/adam.hpp"
#include "airnet/checkpoint.hpp"
#include "airnet/preprocess.hpp"
#include "airnet/rng.hpp"
#include "airnet/tensor.hpp"
#include "airnet/unet.hpp"
#include "airnet/volume.hpp"

namespace airnet {

/// One training example: the image patch at network input size and the
/// ground-truth / ROI patches center-cropped to the output footprint.
struct TrainSample {
    Tensor image; // (1, pz, py, px)
    Tensor gt;    // (1, oz, oy, ox), binary
    Tensor roi;   // (1, oz, oy, ox), binary
};

/// Loss value only (no graph); same masked soft Dice as the recorded op.
double soft_dice_value(const Tensor& p, const Tensor& g, const Tensor& m, double eps = 1e-7);

/// Uniform random corner over [0, D-d] per axis (volumes smaller than the
/// patch are symmetrically zero-padded first); gt and roi are cropped to the
/// output footprint given the model margin.
TrainSample sample_patch(const Volume3D& image, const Volume3D& gt, const Volume3D& roi,
                         Index3 patch_dims, int margin, Rng& rng);

struct AugmentParams {
    bool enabled = true;
    bool flips = true;
    double max_rotate_deg = 10.0;
    double scale_min = 0.75;
    double scale_max = 1.25;
};

struct RigidTransform {
    bool flip[3] = {false, false, false};   // x, y, z mirror
    double angles_deg[3] = {0.0, 0.0, 0.0}; // about x, then y, then z
    double scale = 1.0;
};

RigidTransform sample_transform(const AugmentParams& params, Rng& rng);

/// Applies one rigid transform about each patch's center: trilinear for the
/// image, nearest-neighbour for gt/roi, background 0 outside.
TrainSample apply_rigid(const TrainSample& s, const RigidTransform& t);

TrainSample augment(const TrainSample& s, const AugmentParams& params, Rng& rng);

enum class Convergence { keep_training, stop_rise, stop_stall };

struct LossHistory {
    std::vector<double> train_loss;
    std::vector<double> val_loss;
    int ma_window = 50;
    int stall_window = 20;
    double rise_tol = 0.05;   // stop when the moving average rises > 5%
    double stall_tol = 0.001; // stop when it fails to fall by 0.1%
};

/// Moving average of the validation loss now vs stall_window epochs ago;
/// stopping needs ma_window + stall_window epochs of history.
Convergence convergence_check(const LossHistory& h);

/// A scan prepared for training: ROI-cropped, normalized, gt pre-masked to
/// the lungs, all padded to at least the patch size.
struct TrainScan {
    std::string id;
    Volume3D image; // normalized CT
    Volume3D gt;    // lung-masked airway ground truth
    Volume3D roi;   // lung mask
};

TrainScan prepare_scan(const std::string& id, const Volume3D& ct, const Volume3D& gt,
                       const Volume3D& lung, int roi_buffer, Index3 patch_dims);

struct TrainOptions {
    UNetConfig model;
    AdamHyperParams adam;
    AugmentParams augment;
    int patches_per_scan = 8;
    int epoch_cap = 1000;
    int roi_buffer = 30;
    int val_windows_per_scan = 8;
    int ma_window = 50;
    int stall_window = 20;
    double rise_tol = 0.05;
    double stall_tol = 0.001;
    std::uint64_t seed = 17;
    std::string out_dir; // empty: keep everything in memory
};

struct TrainResult {
    UNetModel best_model;
    int best_epoch = 0;
    double best_val_loss = 0.0;
    LossHistory history;
    Convergence stop_reason = Convergence::keep_training; // keep_training = epoch cap
    std::size_t patches_sampled = 0; // patches_per_scan * scans * epochs
    std::string best_checkpoint_path;                     // when out_dir is set
    std::string last_checkpoint_path;
};

/// Epoch loop of the reference pipeline: per epoch, patches_per_scan random
/// augmented patches per training scan at batch size one with an Adam step
/// each, validation on a fixed deterministic window tiling, best-validation
/// checkpoint retention, convergence-rule stopping. Per-epoch RNG streams
/// are derived from (seed, epoch), so resuming from the last checkpoint
/// reproduces the uninterrupted run exactly.
TrainResult train(const std::vector<TrainScan>& train_scans,
                  const std::vector<TrainScan>& val_scans, const TrainOptions& opt,
                  const Checkpoint* resume = nullptr);

void write_loss_csv(const LossHistory& h, const std::string& path);

} // namespace airnet

#endif
