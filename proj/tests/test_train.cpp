#include <cmath>
#include <map>

#include "doctest.h"

#include "airnet/phantom.hpp"
#include "airnet/preprocess.hpp"
#include "airnet/train.hpp"
#include "test_support.hpp"

using namespace airnet;

TEST_CASE("normalize_ct: endpoints, midpoint, order preservation") {
    Volume3D ct({4, 1, 1}, {1, 1, 1}, {0, 0, 0}, ElementKind::ct_hu,
                {-1000.0f, 500.0f, -250.0f, -2000.0f});
    Volume3D n = normalize_ct(ct);
    CHECK(n.kind() == ElementKind::probability);
    CHECK(n.data()[0] == 0.0f);
    CHECK(n.data()[1] == 1.0f);
    CHECK(n.data()[2] == 0.5f);
    CHECK(n.data()[3] == 0.0f); // clipped below

    Volume3D r = testsup::random_ct({9, 9, 9}, 5);
    Volume3D nr = normalize_ct(r);
    for (std::size_t i = 0; i < nr.data().size(); ++i) {
        CHECK(nr.data()[i] >= 0.0f);
        CHECK(nr.data()[i] <= 1.0f);
        for (std::size_t j = i + 1; j < std::min(nr.data().size(), i + 5); ++j)
            if (r.data()[i] < r.data()[j]) CHECK(nr.data()[i] <= nr.data()[j]);
    }
}

TEST_CASE("soft_dice_value: perfect, empty, hand case") {
    Tensor g({1, 1, 1, 4}, {1, 0, 1, 0});
    Tensor m({1, 1, 1, 4}, {1, 1, 1, 1});
    Tensor p = g;
    CHECK(soft_dice_value(p, g, m) <= 1e-6);
    Tensor zero({1, 1, 1, 4});
    CHECK(std::abs(soft_dice_value(zero, g, m) - 1.0) < 1e-6);

    // within-ROI p = (1, 0), g = (1, 1) -> 1 - 2/3
    Tensor g2({1, 1, 1, 2}, {1, 1});
    Tensor p2({1, 1, 1, 2}, {1, 0});
    Tensor m2({1, 1, 1, 2}, {1, 1});
    CHECK(std::abs(soft_dice_value(p2, g2, m2) - (1.0 / 3.0)) < 1e-6);
}

TEST_CASE("dice loss ignores voxels outside the ROI exactly") {
    Rng rng(3);
    Tensor p({1, 4, 4, 4}), g({1, 4, 4, 4}), m({1, 4, 4, 4});
    for (std::size_t i = 0; i < p.size(); ++i) {
        p[i] = static_cast<float>(rng.uniform());
        m[i] = rng.uniform() < 0.6 ? 1.0f : 0.0f;
        g[i] = (m[i] != 0.0f && rng.uniform() < 0.5) ? 1.0f : 0.0f;
    }
    const double base = soft_dice_value(p, g, m);
    Tensor p2 = p;
    for (std::size_t i = 0; i < p2.size(); ++i)
        if (m[i] == 0.0f) p2[i] = static_cast<float>(rng.uniform());
    CHECK(soft_dice_value(p2, g, m) == base);
}

TEST_CASE("sample_patch: collapsed range, crop equality, footprint") {
    Volume3D img({20, 20, 20}, {1, 1, 1}, {0, 0, 0}, ElementKind::probability);
    Rng fill(9);
    for (auto& v : img.data()) v = static_cast<float>(fill.uniform());
    Volume3D gt = testsup::random_mask({20, 20, 20}, 0.2, 10);
    Volume3D roi = testsup::random_mask({20, 20, 20}, 0.8, 11);

    // volume exactly patch-sized: corner forced to the origin
    Rng rng(12);
    TrainSample s = sample_patch(img, gt, roi, {20, 20, 20}, 4, rng);
    CHECK(s.image.shape() == std::vector<int>{1, 20, 20, 20});
    CHECK(s.gt.shape() == std::vector<int>{1, 12, 12, 12});
    for (int z = 0; z < 20; ++z)
        for (int y = 0; y < 20; ++y)
            for (int x = 0; x < 20; ++x)
                CHECK(s.image[(static_cast<std::size_t>(z) * 20 + y) * 20 + x] ==
                      img.at(x, y, z));
    // gt patch equals the center crop
    for (int z = 0; z < 12; ++z)
        for (int y = 0; y < 12; ++y)
            for (int x = 0; x < 12; ++x)
                CHECK(s.gt[(static_cast<std::size_t>(z) * 12 + y) * 12 + x] ==
                      gt.at(x + 4, y + 4, z + 4));
}

TEST_CASE("sample_patch: corners are uniform over the admissible range") {
    // D - d = 4 on x; other axes collapsed
    Volume3D img({12, 8, 8}, {1, 1, 1}, {0, 0, 0}, ElementKind::probability);
    for (int x = 0; x < 12; ++x)
        for (int y = 0; y < 8; ++y)
            for (int z = 0; z < 8; ++z) img.at(x, y, z) = static_cast<float>(x);
    Volume3D zero({12, 8, 8}, {1, 1, 1}, {0, 0, 0}, ElementKind::binary_mask);
    Rng rng(77);
    std::map<int, int> corner_count;
    const int trials = 10000;
    for (int i = 0; i < trials; ++i) {
        TrainSample s = sample_patch(img, zero, zero, {8, 8, 8}, 0, rng);
        corner_count[static_cast<int>(s.image[0])] += 1; // first voxel = corner x
    }
    REQUIRE(corner_count.size() == 5);
    for (const auto& [corner, count] : corner_count) {
        const double freq = static_cast<double>(count) / trials;
        CAPTURE(corner);
        CHECK(freq > 0.18);
        CHECK(freq < 0.22);
    }
}

TEST_CASE("sample_patch pads volumes smaller than the patch") {
    Volume3D img({6, 6, 6}, {1, 1, 1}, {0, 0, 0}, ElementKind::probability);
    img.fill(0.5f);
    Volume3D msk({6, 6, 6}, {1, 1, 1}, {0, 0, 0}, ElementKind::binary_mask);
    Rng rng(13);
    TrainSample s = sample_patch(img, msk, msk, {10, 10, 10}, 2, rng);
    CHECK(s.image.shape() == std::vector<int>{1, 10, 10, 10});
    // padded border is zero, center keeps the data
    CHECK(s.image[0] == 0.0f);
    CHECK(s.image[(5ul * 10 + 5) * 10 + 5] == 0.5f);
}

TEST_CASE("augment: identity transform leaves the sample unchanged") {
    Rng rng(21);
    TrainSample s;
    s.image = Tensor({1, 8, 8, 8});
    for (auto& v : s.image.vec()) v = static_cast<float>(rng.uniform());
    s.gt = Tensor({1, 4, 4, 4});
    s.roi = Tensor({1, 4, 4, 4});
    for (std::size_t i = 0; i < s.gt.size(); ++i) {
        s.roi[i] = rng.uniform() < 0.7 ? 1.0f : 0.0f;
        s.gt[i] = (s.roi[i] != 0.0f && rng.uniform() < 0.5) ? 1.0f : 0.0f;
    }
    RigidTransform id;
    TrainSample t = apply_rigid(s, id);
    CHECK(t.image.vec() == s.image.vec());
    CHECK(t.gt.vec() == s.gt.vec());
    CHECK(t.roi.vec() == s.roi.vec());
}

TEST_CASE("augment: a flip applied twice recovers the original") {
    Rng rng(22);
    TrainSample s;
    s.image = Tensor({1, 6, 6, 6});
    for (auto& v : s.image.vec()) v = static_cast<float>(rng.uniform());
    s.gt = Tensor({1, 6, 6, 6});
    s.roi = Tensor({1, 6, 6, 6});
    for (std::size_t i = 0; i < s.gt.size(); ++i) {
        s.gt[i] = rng.uniform() < 0.3 ? 1.0f : 0.0f;
        s.roi[i] = 1.0f;
    }
    for (int axis = 0; axis < 3; ++axis) {
        RigidTransform f;
        f.flip[axis] = true;
        TrainSample once = apply_rigid(s, f);
        CHECK(once.image.vec() != s.image.vec());
        TrainSample twice = apply_rigid(once, f);
        CHECK(twice.image.vec() == s.image.vec());
        CHECK(twice.gt.vec() == s.gt.vec());
    }
}

TEST_CASE("augment: masks stay binary and dims stay fixed") {
    Rng rng(23);
    TrainSample s;
    s.image = Tensor({1, 10, 10, 10});
    s.gt = Tensor({1, 6, 6, 6});
    s.roi = Tensor({1, 6, 6, 6});
    for (auto& v : s.image.vec()) v = static_cast<float>(rng.uniform());
    for (std::size_t i = 0; i < s.gt.size(); ++i) {
        s.gt[i] = rng.uniform() < 0.4 ? 1.0f : 0.0f;
        s.roi[i] = rng.uniform() < 0.8 ? 1.0f : 0.0f;
    }
    AugmentParams p;
    for (int trial = 0; trial < 20; ++trial) {
        TrainSample t = augment(s, p, rng);
        CHECK(t.image.shape() == s.image.shape());
        CHECK(t.gt.shape() == s.gt.shape());
        CHECK(t.roi.shape() == s.roi.shape());
        for (float v : t.gt.vec()) CHECK((v == 0.0f || v == 1.0f));
        for (float v : t.roi.vec()) CHECK((v == 0.0f || v == 1.0f));
    }
}

TEST_CASE("convergence_check: descent continues, stall and rise stop") {
    LossHistory h;
    h.ma_window = 50;
    h.stall_window = 20;
    // strictly decreasing 1% per epoch
    for (int i = 0; i < 90; ++i) h.val_loss.push_back(std::pow(0.99, i));
    CHECK(convergence_check(h) == Convergence::keep_training);

    LossHistory flat;
    for (int i = 0; i < 75; ++i) flat.val_loss.push_back(0.5);
    CHECK(convergence_check(flat) == Convergence::stop_stall);

    // rising 6% over the comparison window
    LossHistory rise;
    for (int i = 0; i < 80; ++i) rise.val_loss.push_back(0.5 * std::pow(1.006, i));
    CHECK(convergence_check(rise) == Convergence::stop_rise);

    LossHistory young;
    for (int i = 0; i < 69; ++i) young.val_loss.push_back(0.5);
    CHECK(convergence_check(young) == Convergence::keep_training);
}

namespace {

TrainScan phantom_scan(std::uint64_t seed, Index3 patch) {
    PhantomConfig cfg;
    cfg.dims = {80, 80, 80};
    cfg.spacing_mm = 1.0;
    cfg.tree.generations = 2;
    cfg.tree.seed = seed;
    cfg.noise_seed = seed + 100;
    PhantomBundle b = make_phantom(cfg);
    return prepare_scan("ph" + std::to_string(seed), b.ct, b.gt, b.lung, 10, patch);
}

TrainOptions tiny_options() {
    TrainOptions opt;
    opt.model.levels = 2;
    opt.model.base_channels = 4;
    opt.model.valid_levels = 2;
    opt.model.input_shape = {28, 28, 28};
    opt.adam.lr = 1e-3f;
    opt.patches_per_scan = 4;
    opt.val_windows_per_scan = 4;
    opt.seed = 99;
    return opt;
}

} // namespace

TEST_CASE("train: determinism, best retention, resume equivalence") {
    const Index3 patch{28, 28, 28};
    std::vector<TrainScan> scans{phantom_scan(1, patch), phantom_scan(2, patch)};
    std::vector<TrainScan> val{phantom_scan(3, patch)};

    TrainOptions opt = tiny_options();
    opt.epoch_cap = 4;

    TrainResult a = train(scans, val, opt);
    TrainResult b = train(scans, val, opt);
    CHECK(a.history.train_loss == b.history.train_loss);
    CHECK(a.history.val_loss == b.history.val_loss);
    REQUIRE(a.history.val_loss.size() == 4);

    // retained checkpoint has the minimum recorded validation loss
    double minv = 1e300;
    for (double v : a.history.val_loss) minv = std::min(minv, v);
    CHECK(a.best_val_loss == minv);

    // resume from the epoch-3 checkpoint reproduces epoch 4 exactly
    auto dir = testsup::tmp_dir("train");
    TrainOptions opt3 = opt;
    opt3.epoch_cap = 3;
    opt3.out_dir = (dir / "run3").string();
    TrainResult r3 = train(scans, val, opt3);
    Checkpoint ck = load_checkpoint(r3.last_checkpoint_path);
    CHECK(ck.epoch == 3);
    TrainOptions opt4 = opt;
    opt4.epoch_cap = 4;
    TrainResult r4 = train(scans, val, opt4, &ck);
    REQUIRE(r4.history.val_loss.size() == 1);
    CHECK(r4.history.val_loss[0] == a.history.val_loss[3]);
    CHECK(r4.history.train_loss[0] == a.history.train_loss[3]);
}

TEST_CASE("train smoke: loss halves within 30 epochs on 3 phantoms at desk scale") {
    const Index3 patch{68, 68, 68};
    std::vector<TrainScan> scans;
    for (std::uint64_t s = 0; s < 3; ++s) {
        PhantomConfig pc;
        pc.tree.seed = 900 + s;
        pc.noise_seed = 950 + s;
        PhantomBundle b = make_phantom(pc);
        scans.push_back(prepare_scan("smoke" + std::to_string(s), b.ct, b.gt, b.lung, 30, patch));
    }
    PhantomConfig vc;
    vc.tree.seed = 980;
    vc.noise_seed = 981;
    PhantomBundle vb = make_phantom(vc);
    std::vector<TrainScan> val{prepare_scan("smokeval", vb.ct, vb.gt, vb.lung, 30, patch)};

    auto dir = testsup::tmp_dir("train_smoke");
    TrainOptions opt;
    opt.model.levels = 3;
    opt.model.base_channels = 8;
    opt.model.valid_levels = 3;
    opt.model.input_shape = {68, 68, 68};
    opt.adam.lr = 2e-4f;
    opt.seed = 31;
    opt.out_dir = dir.string();

    // run in 5-epoch chunks (resuming from the last checkpoint) so the test
    // exits as soon as the halving target is reached
    double first = 0.0, best = 1e300;
    int epochs = 0;
    Checkpoint ck;
    while (epochs < 30) {
        opt.epoch_cap = epochs + 5;
        TrainResult r = epochs == 0 ? train(scans, val, opt) : train(scans, val, opt, &ck);
        if (epochs == 0) first = r.history.train_loss.front();
        for (double v : r.history.train_loss) best = std::min(best, v);
        epochs = opt.epoch_cap;
        if (best <= 0.5 * first) break;
        ck = load_checkpoint(r.last_checkpoint_path);
    }
    MESSAGE("first-epoch train loss ", first, ", best ", best, " after ", epochs, " epochs");
    CHECK(best <= 0.5 * first);
}

TEST_CASE("train: epoch patch count and error paths") {
    const Index3 patch{28, 28, 28};
    std::vector<TrainScan> scans{phantom_scan(5, patch), phantom_scan(7, patch)};
    std::vector<TrainScan> val{phantom_scan(6, patch)};
    TrainOptions opt = tiny_options();
    opt.epoch_cap = 2;
    opt.patches_per_scan = 8;
    TrainResult r = train(scans, val, opt);
    CHECK(r.history.train_loss.size() == 2);
    // 8 patches per scan per epoch
    CHECK(r.patches_sampled == 8u * 2u * 2u);

    CHECK_THROWS_AS(train({}, val, opt), std::invalid_argument);
    CHECK_THROWS_AS(train(scans, {}, opt), std::invalid_argument);
}
