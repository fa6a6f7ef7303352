#include "airnet/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "airnet/inference.hpp"
#include "airnet/nn_ops.hpp"

namespace airnet {

double soft_dice_value(const Tensor& p, const Tensor& g, const Tensor& m, double eps) {
    if (!(p.shape() == g.shape()) || !(p.shape() == m.shape()))
        throw std::invalid_argument("soft_dice_value: shape mismatch");
    double a = 0.0, sp = 0.0, sg = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (m[i] != 0.0f) {
            a += static_cast<double>(p[i]) * g[i];
            sp += p[i];
            sg += g[i];
        }
    }
    return 1.0 - 2.0 * a / (sp + sg + eps);
}

namespace {

Tensor volume_patch_to_tensor(const Volume3D& v, Index3 corner, Index3 size) {
    Tensor t({1, size.z, size.y, size.x});
    std::size_t ti = 0;
    for (int z = 0; z < size.z; ++z)
        for (int y = 0; y < size.y; ++y)
            for (int x = 0; x < size.x; ++x, ++ti)
                t[ti] = v.at(corner.x + x, corner.y + y, corner.z + z);
    return t;
}

} // namespace

TrainSample sample_patch(const Volume3D& image, const Volume3D& gt, const Volume3D& roi,
                         Index3 patch_dims, int margin, Rng& rng) {
    if (!(image.dims() == gt.dims()) || !(image.dims() == roi.dims()))
        throw std::invalid_argument("sample_patch: dims mismatch");
    Volume3D img = pad_to_min(image, patch_dims);
    Volume3D g = pad_to_min(gt, patch_dims);
    Volume3D r = pad_to_min(roi, patch_dims);
    const Index3 d = img.dims();
    const Index3 corner{rng.uniform_int(0, d.x - patch_dims.x),
                        rng.uniform_int(0, d.y - patch_dims.y),
                        rng.uniform_int(0, d.z - patch_dims.z)};
    TrainSample s;
    s.image = volume_patch_to_tensor(img, corner, patch_dims);
    const Index3 foot{patch_dims.x - 2 * margin, patch_dims.y - 2 * margin,
                      patch_dims.z - 2 * margin};
    const Index3 fc{corner.x + margin, corner.y + margin, corner.z + margin};
    s.gt = volume_patch_to_tensor(g, fc, foot);
    s.roi = volume_patch_to_tensor(r, fc, foot);
    return s;
}

RigidTransform sample_transform(const AugmentParams& p, Rng& rng) {
    RigidTransform t;
    if (!p.enabled) return t;
    if (p.flips)
        for (bool& f : t.flip) f = rng.coin();
    for (double& a : t.angles_deg) a = rng.uniform(-p.max_rotate_deg, p.max_rotate_deg);
    t.scale = rng.uniform(p.scale_min, p.scale_max);
    return t;
}

namespace {

struct Mat3 {
    double m[3][3];
};

Mat3 matmul(const Mat3& a, const Mat3& b) {
    Mat3 r{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double s = 0.0;
            for (int k = 0; k < 3; ++k) s += a.m[i][k] * b.m[k][j];
            r.m[i][j] = s;
        }
    return r;
}

Mat3 rotation(int axis, double deg) {
    const double rad = deg * 3.14159265358979323846 / 180.0;
    const double c = std::cos(rad), s = std::sin(rad);
    Mat3 r{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
    const int a = (axis + 1) % 3, b = (axis + 2) % 3;
    r.m[a][a] = c;
    r.m[a][b] = -s;
    r.m[b][a] = s;
    r.m[b][b] = c;
    return r;
}

// forward transform y = F * s * Rz * Ry * Rx * x (about the patch center);
// sampling uses the inverse.
Mat3 inverse_linear(const RigidTransform& t) {
    Mat3 inv = rotation(0, -t.angles_deg[0]);                   // Rx^-1
    inv = matmul(inv, rotation(1, -t.angles_deg[1]));           // * Ry^-1
    inv = matmul(inv, rotation(2, -t.angles_deg[2]));           // * Rz^-1
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            inv.m[i][j] /= t.scale;
            if (t.flip[j]) inv.m[i][j] = -inv.m[i][j]; // F^-1 = F on the right
        }
    return inv;
}

// tensor (1, Z, Y, X); coordinate order in the matrix is (x, y, z)
template <bool nearest>
Tensor resample(const Tensor& src, const Mat3& inv) {
    const int Z = src.extent(1), Y = src.extent(2), X = src.extent(3);
    const double cx = (X - 1) / 2.0, cy = (Y - 1) / 2.0, cz = (Z - 1) / 2.0;
    Tensor out({1, Z, Y, X});
    auto value_at = [&](int x, int y, int z) -> float {
        if (x < 0 || y < 0 || z < 0 || x >= X || y >= Y || z >= Z) return 0.0f;
        return src[(static_cast<std::size_t>(z) * Y + y) * static_cast<std::size_t>(X) + x];
    };
    std::size_t o = 0;
    for (int z = 0; z < Z; ++z)
        for (int y = 0; y < Y; ++y)
            for (int x = 0; x < X; ++x, ++o) {
                const double dx = x - cx, dy = y - cy, dz = z - cz;
                const double sx = inv.m[0][0] * dx + inv.m[0][1] * dy + inv.m[0][2] * dz + cx;
                const double sy = inv.m[1][0] * dx + inv.m[1][1] * dy + inv.m[1][2] * dz + cy;
                const double sz = inv.m[2][0] * dx + inv.m[2][1] * dy + inv.m[2][2] * dz + cz;
                if constexpr (nearest) {
                    out[o] = value_at(static_cast<int>(std::lround(sx)),
                                      static_cast<int>(std::lround(sy)),
                                      static_cast<int>(std::lround(sz)));
                } else {
                    const int x0 = static_cast<int>(std::floor(sx));
                    const int y0 = static_cast<int>(std::floor(sy));
                    const int z0 = static_cast<int>(std::floor(sz));
                    const double fx = sx - x0, fy = sy - y0, fz = sz - z0;
                    double acc = 0.0;
                    for (int dz2 = 0; dz2 < 2; ++dz2)
                        for (int dy2 = 0; dy2 < 2; ++dy2)
                            for (int dx2 = 0; dx2 < 2; ++dx2) {
                                const double w = (dx2 ? fx : 1.0 - fx) * (dy2 ? fy : 1.0 - fy) *
                                                 (dz2 ? fz : 1.0 - fz);
                                if (w != 0.0)
                                    acc += w * value_at(x0 + dx2, y0 + dy2, z0 + dz2);
                            }
                    out[o] = static_cast<float>(acc);
                }
            }
    return out;
}

} // namespace

TrainSample apply_rigid(const TrainSample& s, const RigidTransform& t) {
    const Mat3 inv = inverse_linear(t);
    TrainSample out;
    out.image = resample<false>(s.image, inv);
    out.gt = resample<true>(s.gt, inv);
    out.roi = resample<true>(s.roi, inv);
    return out;
}

TrainSample augment(const TrainSample& s, const AugmentParams& p, Rng& rng) {
    if (!p.enabled) return s;
    return apply_rigid(s, sample_transform(p, rng));
}

Convergence convergence_check(const LossHistory& h) {
    const int n = static_cast<int>(h.val_loss.size());
    if (n < h.ma_window + h.stall_window) return Convergence::keep_training;
    auto ma = [&](int end_idx) {
        double s = 0.0;
        for (int i = end_idx - h.ma_window + 1; i <= end_idx; ++i)
            s += h.val_loss[static_cast<std::size_t>(i)];
        return s / h.ma_window;
    };
    const double now = ma(n - 1);
    const double ref = ma(n - 1 - h.stall_window);
    if (now > ref * (1.0 + h.rise_tol)) return Convergence::stop_rise;
    if (now > ref * (1.0 - h.stall_tol)) return Convergence::stop_stall;
    return Convergence::keep_training;
}

TrainScan prepare_scan(const std::string& id, const Volume3D& ct, const Volume3D& gt,
                       const Volume3D& lung, int roi_buffer, Index3 patch_dims) {
    const BBox roi = compute_roi_bbox(lung, roi_buffer);
    TrainScan s;
    s.id = id;
    s.image = pad_to_min(normalize_ct(crop(ct, roi)), patch_dims);
    s.gt = pad_to_min(mask_and(crop(gt, roi), crop(lung, roi)), patch_dims);
    s.roi = pad_to_min(crop(lung, roi), patch_dims);
    return s;
}

namespace {

struct ValWindow {
    int scan = 0;
    Index3 corner; // input window corner
};

// fixed tiling at stride = patch, ranked by ROI coverage of the output
// footprint; deterministic given the data
std::vector<ValWindow> select_val_windows(const std::vector<TrainScan>& scans,
                                          Index3 patch, int margin, int per_scan) {
    std::vector<ValWindow> out;
    for (std::size_t si = 0; si < scans.size(); ++si) {
        const Index3 d = scans[si].roi.dims();
        std::vector<std::pair<std::size_t, ValWindow>> ranked; // (coverage, window)
        for (int z : window_starts(d.z, patch.z, patch.z))
            for (int y : window_starts(d.y, patch.y, patch.y))
                for (int x : window_starts(d.x, patch.x, patch.x)) {
                    std::size_t cover = 0;
                    for (int zz = z + margin; zz < z + patch.z - margin; ++zz)
                        for (int yy = y + margin; yy < y + patch.y - margin; ++yy)
                            for (int xx = x + margin; xx < x + patch.x - margin; ++xx)
                                if (scans[si].roi.at(xx, yy, zz) != 0.0f) ++cover;
                    ranked.push_back({cover, ValWindow{static_cast<int>(si), {x, y, z}}});
                }
        std::stable_sort(ranked.begin(), ranked.end(),
                         [](const auto& a, const auto& b) { return a.first > b.first; });
        const int take = std::min<int>(per_scan, static_cast<int>(ranked.size()));
        for (int i = 0; i < take; ++i) out.push_back(ranked[static_cast<std::size_t>(i)].second);
    }
    return out;
}

} // namespace

TrainResult train(const std::vector<TrainScan>& train_scans,
                  const std::vector<TrainScan>& val_scans, const TrainOptions& opt,
                  const Checkpoint* resume) {
    if (train_scans.empty() || val_scans.empty())
        throw std::invalid_argument("train: empty train or validation split");

    const UNetConfig& cfg = opt.model;
    const Index3 patch{cfg.input_shape[2], cfg.input_shape[1], cfg.input_shape[0]};
    const int margin = compute_output_shape(cfg.input_shape, cfg).margin;

    UNetModel model =
        resume ? resume->model : UNetModel::init(cfg, derive_seed(opt.seed, 0x1817));
    if (resume && !(resume->model.config() == cfg))
        throw std::invalid_argument("train: resume checkpoint config mismatch");

    std::vector<Tensor*> params;
    std::vector<const Tensor*> cparams;
    for (Tensor& p : model.parameters()) {
        params.push_back(&p);
        cparams.push_back(&p);
    }
    AdamState adam = resume ? resume->adam : AdamState::init(cparams, opt.adam);

    const std::vector<ValWindow> val_windows =
        select_val_windows(val_scans, patch, margin, opt.val_windows_per_scan);
    if (val_windows.empty()) throw std::invalid_argument("train: no validation windows");

    TrainResult result;
    result.history.ma_window = opt.ma_window;
    result.history.stall_window = opt.stall_window;
    result.history.rise_tol = opt.rise_tol;
    result.history.stall_tol = opt.stall_tol;

    double best_val = resume ? resume->best_val_loss : 1e300;
    int best_epoch = resume ? resume->epoch : 0;
    UNetModel best_model = model;

    namespace fs = std::filesystem;
    if (!opt.out_dir.empty()) {
        fs::create_directories(opt.out_dir);
        result.best_checkpoint_path = (fs::path(opt.out_dir) / "checkpoint_best.bin").string();
        result.last_checkpoint_path = (fs::path(opt.out_dir) / "checkpoint_last.bin").string();
    }

    const int start_epoch = resume ? resume->epoch + 1 : 1;
    for (int epoch = start_epoch; epoch <= opt.epoch_cap; ++epoch) {
        Rng rng(derive_seed(opt.seed, 0xE90C4, static_cast<std::uint64_t>(epoch)));
        double train_sum = 0.0;
        int steps = 0;
        for (const TrainScan& scan : train_scans) {
            for (int k = 0; k < opt.patches_per_scan; ++k) {
                TrainSample s = sample_patch(scan.image, scan.gt, scan.roi, patch, margin, rng);
                s = augment(s, opt.augment, rng);

                ad::Tape tape;
                std::vector<ad::Ref> refs;
                refs.reserve(model.parameters().size());
                for (Tensor& p : model.parameters()) refs.push_back(tape.param(p));
                ad::Ref x = tape.constant(s.image);
                ad::Ref y = unet_forward(tape, x, refs, cfg);
                ad::Ref loss = ad::soft_dice_loss(tape, y, s.gt, s.roi);
                const double lv = static_cast<double>(tape.value(loss)[0]);
                if (!std::isfinite(lv))
                    throw std::runtime_error("train: non-finite loss at epoch " +
                                             std::to_string(epoch) + ", scan " + scan.id);
                train_sum += lv;
                ++steps;
                ++result.patches_sampled;

                // a patch with no in-ROI ground truth has an identically zero
                // Dice gradient; stepping the optimizer there only replays
                // decayed momentum, so it is skipped
                bool has_gt = false;
                for (std::size_t i = 0; i < s.gt.size() && !has_gt; ++i)
                    has_gt = s.gt[i] != 0.0f && s.roi[i] != 0.0f;
                if (!has_gt) continue;

                tape.backward(loss);
                std::vector<const Tensor*> grads;
                grads.reserve(refs.size());
                for (ad::Ref r : refs) grads.push_back(&tape.grad(r));
                adam_step(params, grads, adam);
            }
        }

        double val_sum = 0.0;
        for (const ValWindow& w : val_windows) {
            const TrainScan& scan = val_scans[static_cast<std::size_t>(w.scan)];
            Tensor in = volume_patch_to_tensor(scan.image, w.corner, patch);
            Tensor out = model.infer(in);
            const Index3 fc{w.corner.x + margin, w.corner.y + margin, w.corner.z + margin};
            const Index3 foot{patch.x - 2 * margin, patch.y - 2 * margin, patch.z - 2 * margin};
            Tensor g = volume_patch_to_tensor(scan.gt, fc, foot);
            Tensor r = volume_patch_to_tensor(scan.roi, fc, foot);
            val_sum += soft_dice_value(out, g, r);
        }
        const double val_loss = val_sum / static_cast<double>(val_windows.size());
        if (!std::isfinite(val_loss))
            throw std::runtime_error("train: non-finite validation loss at epoch " +
                                     std::to_string(epoch));

        result.history.train_loss.push_back(train_sum / std::max(1, steps));
        result.history.val_loss.push_back(val_loss);

        if (val_loss < best_val) {
            best_val = val_loss;
            best_epoch = epoch;
            best_model = model;
            if (!result.best_checkpoint_path.empty())
                save_checkpoint(model, adam, epoch, best_val, result.best_checkpoint_path);
        }
        if (!result.last_checkpoint_path.empty())
            save_checkpoint(model, adam, epoch, best_val, result.last_checkpoint_path);

        const Convergence c = convergence_check(result.history);
        if (c != Convergence::keep_training) {
            result.stop_reason = c;
            break;
        }
    }

    result.best_model = std::move(best_model);
    result.best_epoch = best_epoch;
    result.best_val_loss = best_val;
    if (!opt.out_dir.empty())
        write_loss_csv(result.history, (fs::path(opt.out_dir) / "loss.csv").string());
    return result;
}

void write_loss_csv(const LossHistory& h, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_loss_csv: cannot open " + path);
    out << "epoch,train_loss,val_loss\n";
    for (std::size_t i = 0; i < h.val_loss.size(); ++i)
        out << (i + 1) << ',' << h.train_loss[i] << ',' << h.val_loss[i] << '\n';
}

} // namespace airnet
