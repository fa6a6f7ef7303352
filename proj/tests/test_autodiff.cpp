#include <cmath>
#include <cstring>

#include "doctest.h"

#include "airnet/adam.hpp"
#include "airnet/nn_ops.hpp"
#include "airnet/rng.hpp"
#include "airnet/tape.hpp"
#include "gradcheck.hpp"

using namespace airnet;
using ad::Padding;
using ad::Ref;

namespace {

// 7-nested-loop convolution oracle with double accumulation, independent of
// the row-kernel implementation path.
template <class T>
TensorT<T> conv_oracle(const TensorT<T>& in, const TensorT<T>& w, const TensorT<T>& b,
                       bool same) {
    const int Ci = in.extent(0), Z = in.extent(1), Y = in.extent(2), X = in.extent(3);
    const int Co = w.extent(0), k = w.extent(2);
    const int p = same ? (k - 1) / 2 : 0;
    const int Oz = Z + 2 * p - (k - 1), Oy = Y + 2 * p - (k - 1), Ox = X + 2 * p - (k - 1);
    TensorT<T> out({Co, Oz, Oy, Ox});
    auto inv = [&](int c, int z, int y, int x) -> double {
        if (z < 0 || y < 0 || x < 0 || z >= Z || y >= Y || x >= X) return 0.0;
        return static_cast<double>(
            in[((static_cast<std::size_t>(c) * Z + z) * Y + y) * static_cast<std::size_t>(X) +
               x]);
    };
    std::size_t o = 0;
    for (int co = 0; co < Co; ++co)
        for (int oz = 0; oz < Oz; ++oz)
            for (int oy = 0; oy < Oy; ++oy)
                for (int ox = 0; ox < Ox; ++ox, ++o) {
                    double acc = static_cast<double>(b[static_cast<std::size_t>(co)]);
                    for (int ci = 0; ci < Ci; ++ci)
                        for (int kz = 0; kz < k; ++kz)
                            for (int ky = 0; ky < k; ++ky)
                                for (int kx = 0; kx < k; ++kx)
                                    acc += static_cast<double>(
                                               w[((((static_cast<std::size_t>(co) * Ci + ci) *
                                                        k +
                                                    kz) *
                                                       k +
                                                   ky) *
                                                      k +
                                                  kx)]) *
                                           inv(ci, oz + kz - p, oy + ky - p, ox + kx - p);
                    out[o] = static_cast<T>(acc);
                }
    return out;
}

// relative to the magnitude of the larger operand or the field scale,
// whichever dominates (float accumulation noise is absolute per output)
float rel_diff(float a, float b, float scale = 1.0f) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), scale});
}

template <class T>
float max_abs(const TensorT<T>& t) {
    float m = 0.0f;
    for (std::size_t i = 0; i < t.size(); ++i)
        m = std::max(m, std::abs(static_cast<float>(t[i])));
    return m;
}

} // namespace

TEST_CASE("conv3d: identity kernel with same padding reproduces the input") {
    ad::Tape t;
    Tensor in = testsup::random_tensor<float>({2, 5, 5, 5}, 1);
    Tensor w({2, 2, 3, 3, 3});
    // channel-preserving identity: center weight 1 on the diagonal
    for (int c = 0; c < 2; ++c) w[(((c * 2 + c) * 3 + 1) * 3 + 1) * 3 + 1] = 1.0f;
    Tensor b({2});
    Ref out = ad::conv3d(t, t.constant(in), t.constant(w), t.constant(b), Padding::same);
    CHECK(t.value(out).shape() == in.shape());
    for (std::size_t i = 0; i < in.size(); ++i) CHECK(t.value(out)[i] == in[i]);
}

TEST_CASE("conv3d: all-ones valid kernel on all-ones 5^3 input gives 27") {
    ad::Tape t;
    Tensor in({1, 5, 5, 5});
    in.fill(1.0f);
    Tensor w({1, 1, 3, 3, 3});
    w.fill(1.0f);
    Tensor b({1});
    Ref out = ad::conv3d(t, t.constant(in), t.constant(w), t.constant(b), Padding::valid);
    CHECK(t.value(out).shape() == std::vector<int>{1, 3, 3, 3});
    for (std::size_t i = 0; i < t.value(out).size(); ++i) CHECK(t.value(out)[i] == 27.0f);
}

TEST_CASE("conv3d matches the naive loop oracle") {
    for (bool same : {false, true}) {
        CAPTURE(same);
        ad::Tape t;
        Tensor in = testsup::random_tensor<float>({2, 6, 6, 6}, 7);
        Tensor w = testsup::random_tensor<float>({3, 2, 3, 3, 3}, 8);
        Tensor b = testsup::random_tensor<float>({3}, 9);
        Ref out = ad::conv3d(t, t.constant(in), t.constant(w), t.constant(b),
                             same ? Padding::same : Padding::valid);
        Tensor want = conv_oracle(in, w, b, same);
        REQUIRE(t.value(out).shape() == want.shape());
        const float scale = max_abs(want);
        for (std::size_t i = 0; i < want.size(); ++i)
            CHECK(rel_diff(t.value(out)[i], want[i], scale) < 1e-5f);
    }
    // 1x1x1 kernel
    ad::Tape t;
    Tensor in = testsup::random_tensor<float>({3, 4, 4, 4}, 10);
    Tensor w = testsup::random_tensor<float>({2, 3, 1, 1, 1}, 11);
    Tensor b = testsup::random_tensor<float>({2}, 12);
    Ref out = ad::conv3d(t, t.constant(in), t.constant(w), t.constant(b), Padding::valid);
    Tensor want = conv_oracle(in, w, b, false);
    const float scale = max_abs(want);
    for (std::size_t i = 0; i < want.size(); ++i)
        CHECK(rel_diff(t.value(out)[i], want[i], scale) < 1e-5f);
}

TEST_CASE("conv3d: valid and same agree on the interior") {
    ad::Tape t;
    Tensor in = testsup::random_tensor<float>({2, 7, 6, 8}, 21);
    Tensor w = testsup::random_tensor<float>({2, 2, 3, 3, 3}, 22);
    Tensor b = testsup::random_tensor<float>({2}, 23);
    Ref v = ad::conv3d(t, t.constant(in), t.constant(w), t.constant(b), Padding::valid);
    Ref s = ad::conv3d(t, t.constant(in), t.constant(w), t.constant(b), Padding::same);
    const Tensor& tv = t.value(v);
    const Tensor& ts = t.value(s);
    const int Oz = tv.extent(1), Oy = tv.extent(2), Ox = tv.extent(3);
    for (int c = 0; c < 2; ++c)
        for (int z = 0; z < Oz; ++z)
            for (int y = 0; y < Oy; ++y)
                for (int x = 0; x < Ox; ++x) {
                    const float a =
                        tv[((static_cast<std::size_t>(c) * Oz + z) * Oy + y) * Ox + x];
                    const float bb = ts[((static_cast<std::size_t>(c) * (Oz + 2) + (z + 1)) *
                                             (Oy + 2) +
                                         (y + 1)) *
                                            (Ox + 2) +
                                        (x + 1)];
                    CHECK(a == bb);
                }
}

TEST_CASE("conv3d error paths") {
    ad::Tape t;
    Tensor in = testsup::random_tensor<float>({2, 4, 4, 4}, 1);
    Tensor w_badci = testsup::random_tensor<float>({2, 3, 3, 3, 3}, 2);
    Tensor b({2});
    CHECK_THROWS_AS(
        ad::conv3d(t, t.constant(in), t.constant(w_badci), t.constant(b), Padding::valid),
        std::invalid_argument);
    Tensor small = testsup::random_tensor<float>({1, 2, 4, 4}, 3);
    Tensor w1 = testsup::random_tensor<float>({1, 1, 3, 3, 3}, 4);
    Tensor b1({1});
    CHECK_THROWS_AS(
        ad::conv3d(t, t.constant(small), t.constant(w1), t.constant(b1), Padding::valid),
        std::invalid_argument);
}

TEST_CASE("maxpool3d: constants, max block, oracle, odd-dim error") {
    ad::Tape t;
    Tensor c({1, 4, 4, 4});
    c.fill(3.5f);
    Ref pc = ad::maxpool3d(t, t.constant(c));
    CHECK(t.value(pc).shape() == std::vector<int>{1, 2, 2, 2});
    for (std::size_t i = 0; i < t.value(pc).size(); ++i) CHECK(t.value(pc)[i] == 3.5f);

    Tensor blk({1, 2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
    Ref pb = ad::maxpool3d(t, t.constant(blk));
    CHECK(t.value(pb).size() == 1);
    CHECK(t.value(pb)[0] == 8.0f);

    Tensor r = testsup::random_tensor<float>({2, 4, 4, 4}, 31);
    Ref pr = ad::maxpool3d(t, t.constant(r));
    // blockwise-max oracle
    for (int c2 = 0; c2 < 2; ++c2)
        for (int z = 0; z < 2; ++z)
            for (int y = 0; y < 2; ++y)
                for (int x = 0; x < 2; ++x) {
                    float want = -1e30f;
                    for (int dz = 0; dz < 2; ++dz)
                        for (int dy = 0; dy < 2; ++dy)
                            for (int dx = 0; dx < 2; ++dx)
                                want = std::max(
                                    want, r[((static_cast<std::size_t>(c2) * 4 + 2 * z + dz) * 4 +
                                             2 * y + dy) *
                                                4 +
                                            2 * x + dx]);
                    CHECK(t.value(pr)[((static_cast<std::size_t>(c2) * 2 + z) * 2 + y) * 2 + x] ==
                          want);
                }

    Tensor odd({1, 3, 4, 4});
    CHECK_THROWS_AS(ad::maxpool3d(t, t.constant(odd)), std::invalid_argument);
}

TEST_CASE("upsample3d: replication and maxpool inverse") {
    ad::Tape t;
    Tensor one({1, 1, 1, 1}, {2.25f});
    Ref up = ad::upsample3d(t, t.constant(one));
    CHECK(t.value(up).shape() == std::vector<int>{1, 2, 2, 2});
    for (std::size_t i = 0; i < 8; ++i) CHECK(t.value(up)[i] == 2.25f);

    Tensor v = testsup::random_tensor<float>({3, 3, 2, 4}, 41);
    Ref u = ad::upsample3d(t, t.constant(v));
    Ref back = ad::maxpool3d(t, u);
    REQUIRE(t.value(back).shape() == v.shape());
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(t.value(back)[i] == v[i]);
}

TEST_CASE("activation values") {
    ad::Tape t;
    Tensor x({4}, {-2.0f, 0.0f, 3.0f, -0.5f});
    Ref r = ad::relu(t, t.constant(x));
    CHECK(t.value(r)[0] == 0.0f);
    CHECK(t.value(r)[1] == 0.0f);
    CHECK(t.value(r)[2] == 3.0f);
    CHECK(t.value(r)[3] == 0.0f);
    Ref s = ad::sigmoid(t, t.constant(Tensor({1}, {0.0f})));
    CHECK(t.value(s)[0] == 0.5f);
}

TEST_CASE("concat_crop: equal shapes, center crop, oracle") {
    ad::Tape t;
    Tensor a = testsup::random_tensor<float>({2, 4, 4, 4}, 51);
    Tensor b = testsup::random_tensor<float>({3, 4, 4, 4}, 52);
    Ref cc = ad::concat_crop(t, t.constant(a), t.constant(b));
    CHECK(t.value(cc).shape() == std::vector<int>{5, 4, 4, 4});
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(t.value(cc)[i] == a[i]);
    for (std::size_t i = 0; i < b.size(); ++i) CHECK(t.value(cc)[a.size() + i] == b[i]);

    Tensor skip = testsup::random_tensor<float>({1, 8, 8, 8}, 53);
    Tensor up = testsup::random_tensor<float>({1, 4, 4, 4}, 54);
    Ref c2 = ad::concat_crop(t, t.constant(skip), t.constant(up));
    // skip cropped to the central 4^3 (offset 2)
    for (int z = 0; z < 4; ++z)
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 4; ++x)
                CHECK(t.value(c2)[(static_cast<std::size_t>(z) * 4 + y) * 4 + x] ==
                      skip[((static_cast<std::size_t>(z) + 2) * 8 + (y + 2)) * 8 + (x + 2)]);

    Tensor odd = testsup::random_tensor<float>({1, 7, 4, 4}, 55);
    CHECK_THROWS_AS(ad::concat_crop(t, t.constant(odd), t.constant(up)),
                    std::invalid_argument);
    CHECK_THROWS_AS(ad::concat_crop(t, t.constant(up), t.constant(skip)),
                    std::invalid_argument);
}

TEST_CASE("backward: analytic gradients for sum and sum of squares") {
    {
        ad::Tape t;
        Ref w = t.param(testsup::random_tensor<float>({3, 4}, 61));
        Ref loss = ad::sum(t, w);
        t.backward(loss);
        for (std::size_t i = 0; i < t.grad(w).size(); ++i) CHECK(t.grad(w)[i] == 1.0f);
    }
    {
        ad::Tape t;
        Tensor init = testsup::random_tensor<float>({5}, 62);
        Ref w = t.param(init);
        Ref loss = ad::scale(t, ad::sum(t, ad::mul(t, w, w)), 0.5f);
        t.backward(loss);
        for (std::size_t i = 0; i < init.size(); ++i)
            CHECK(t.grad(w)[i] == doctest::Approx(init[i]).epsilon(1e-6));
    }
}

TEST_CASE("backward errors: non-scalar loss, consumed graph") {
    ad::Tape t;
    Ref w = t.param(testsup::random_tensor<float>({3}, 63));
    CHECK_THROWS_AS(t.backward(w), std::runtime_error);
    Ref loss = ad::sum(t, w);
    t.backward(loss);
    t.consume();
    CHECK_THROWS_AS(t.backward(loss), std::runtime_error);
}

#ifdef _OPENMP
#include <omp.h>
TEST_CASE("conv results are bitwise independent of the thread count") {
    Tensor in = testsup::random_tensor<float>({4, 10, 10, 10}, 301);
    Tensor w = testsup::random_tensor<float>({6, 4, 3, 3, 3}, 302);
    Tensor b = testsup::random_tensor<float>({6}, 303);
    auto run = [&](int threads) {
        omp_set_num_threads(threads);
        ad::Tape t;
        Ref wr = t.param(w);
        Ref br = t.param(b);
        Ref out = ad::conv3d(t, t.constant(in), wr, br, Padding::valid);
        Ref loss = ad::sum(t, ad::mul(t, out, out));
        t.backward(loss);
        return std::make_tuple(t.value(out).vec(), t.grad(wr).vec(), t.grad(br).vec());
    };
    auto one = run(1);
    auto two = run(2);
    omp_set_num_threads(omp_get_num_procs());
    CHECK(std::get<0>(one) == std::get<0>(two));
    CHECK(std::get<1>(one) == std::get<1>(two));
    CHECK(std::get<2>(one) == std::get<2>(two));
}
#endif

TEST_CASE("backward determinism: identical graphs give bitwise-equal gradients") {
    auto run = [](std::uint64_t seed) {
        ad::Tape t;
        Tensor in = testsup::random_tensor<float>({1, 6, 6, 6}, seed);
        Ref w = t.param(testsup::random_tensor<float>({2, 1, 3, 3, 3}, seed + 1));
        Ref b = t.param(testsup::random_tensor<float>({2}, seed + 2));
        Ref out = ad::relu(t, ad::conv3d(t, t.constant(in), w, b, Padding::valid));
        Ref loss = ad::sum(t, ad::mul(t, out, out));
        t.backward(loss);
        return std::make_pair(t.grad(w).vec(), t.grad(b).vec());
    };
    auto a = run(100);
    auto b = run(100);
    CHECK(a.first == b.first);
    CHECK(a.second == b.second);
}

// --- gradient checks ------------------------------------------------------

template <class T>
static void check_all_ops(double tol, double skip) {
    // conv3d, valid and same
    for (bool same : {false, true}) {
        auto build = [same](ad::TapeT<T>& t, const std::vector<Ref>& p) {
            Ref out = ad::conv3d(t, p[0], p[1], p[2], same ? Padding::same : Padding::valid);
            Ref wsum = ad::mul(t, out, t.constant(testsup::random_tensor<T>(
                                           t.value(out).shape(), 999)));
            return ad::sum(t, wsum);
        };
        const double e = testsup::gradcheck_max_rel<T>(
            build,
            {testsup::random_tensor<T>({2, 5, 5, 5}, 71), // input
             testsup::random_tensor<T>({2, 2, 3, 3, 3}, 72, -0.5, 0.5),
             testsup::random_tensor<T>({2}, 73)},
            40, 74, skip);
        CAPTURE(same);
        CHECK(e < tol);
    }
    // maxpool
    {
        auto build = [](ad::TapeT<T>& t, const std::vector<Ref>& p) {
            Ref out = ad::maxpool3d(t, p[0]);
            return ad::sum(t,
                           ad::mul(t, out,
                                   t.constant(testsup::random_tensor<T>(t.value(out).shape(),
                                                                        998))));
        };
        const double e = testsup::gradcheck_max_rel<T>(
            build, {testsup::random_tensor<T>({2, 4, 4, 4}, 81)}, 30, 82, skip);
        CHECK(e < tol);
    }
    // upsample (spec example: random 3^3 input)
    {
        auto build = [](ad::TapeT<T>& t, const std::vector<Ref>& p) {
            Ref out = ad::upsample3d(t, p[0]);
            return ad::sum(t,
                           ad::mul(t, out,
                                   t.constant(testsup::random_tensor<T>(t.value(out).shape(),
                                                                        997))));
        };
        const double e = testsup::gradcheck_max_rel<T>(
            build, {testsup::random_tensor<T>({1, 3, 3, 3}, 83)}, 27, 84, skip);
        CHECK(e < tol);
    }
    // relu (inputs kept away from the kink at 0) and sigmoid
    {
        Tensor dummy;
        auto off_zero = testsup::random_tensor<T>({40}, 85);
        for (std::size_t i = 0; i < off_zero.size(); ++i)
            if (std::abs(static_cast<double>(off_zero[i])) < 0.1)
                off_zero[i] = static_cast<T>(0.25);
        auto build_r = [](ad::TapeT<T>& t, const std::vector<Ref>& p) {
            Ref out = ad::relu(t, p[0]);
            return ad::sum(t,
                           ad::mul(t, out,
                                   t.constant(testsup::random_tensor<T>(t.value(out).shape(),
                                                                        996))));
        };
        CHECK(testsup::gradcheck_max_rel<T>(build_r, {off_zero}, 30, 86, skip) < tol);
        auto build_s = [](ad::TapeT<T>& t, const std::vector<Ref>& p) {
            Ref out = ad::sigmoid(t, p[0]);
            return ad::sum(t,
                           ad::mul(t, out,
                                   t.constant(testsup::random_tensor<T>(t.value(out).shape(),
                                                                        995))));
        };
        CHECK(testsup::gradcheck_max_rel<T>(
                  build_s, {testsup::random_tensor<T>({40}, 87, -2.0, 2.0)}, 30, 88, skip) <
              tol);
    }
    // concat_crop
    {
        auto build = [](ad::TapeT<T>& t, const std::vector<Ref>& p) {
            Ref out = ad::concat_crop(t, p[0], p[1]);
            return ad::sum(t,
                           ad::mul(t, out,
                                   t.constant(testsup::random_tensor<T>(t.value(out).shape(),
                                                                        994))));
        };
        const double e = testsup::gradcheck_max_rel<T>(
            build,
            {testsup::random_tensor<T>({2, 6, 6, 6}, 91),
             testsup::random_tensor<T>({1, 4, 4, 4}, 92)},
            30, 93, skip);
        CHECK(e < tol);
    }
    // soft dice loss
    {
        airnet::Rng rng(94);
        TensorT<T> gt({1, 4, 4, 4});
        TensorT<T> roi({1, 4, 4, 4});
        for (std::size_t i = 0; i < gt.size(); ++i) {
            roi[i] = rng.uniform() < 0.8 ? T(1) : T(0);
            gt[i] = (roi[i] != T(0) && rng.uniform() < 0.4) ? T(1) : T(0);
        }
        auto build = [gt, roi](ad::TapeT<T>& t, const std::vector<Ref>& p) {
            Ref prob = ad::sigmoid(t, p[0]);
            return ad::soft_dice_loss(t, prob, gt, roi, 1e-7);
        };
        const double e = testsup::gradcheck_max_rel<T>(
            build, {testsup::random_tensor<T>({1, 4, 4, 4}, 95, -1.5, 1.5)}, 40, 96, skip);
        CHECK(e < tol);
    }
}

TEST_CASE("gradient checks at 64-bit: rel err < 1e-6") { check_all_ops<double>(1e-6, 0.0); }

TEST_CASE("gradient checks at 32-bit: rel err < 1e-3") { check_all_ops<float>(1e-3, 1e-2); }

// --- Adam ------------------------------------------------------------------

TEST_CASE("adam: zero gradient leaves fresh parameters unchanged, t advances") {
    Tensor p({4}, {1.0f, -2.0f, 0.5f, 3.0f});
    std::vector<Tensor*> params{&p};
    AdamState st = AdamState::init({&p}, {});
    Tensor zero({4});
    std::vector<const Tensor*> grads{&zero};
    adam_step(params, grads, st);
    CHECK(st.t == 1);
    CHECK(p.vec() == std::vector<float>{1.0f, -2.0f, 0.5f, 3.0f});
}

TEST_CASE("adam: first step moves w by -lr (bias-corrected)") {
    Tensor p({1}, {0.0f});
    std::vector<Tensor*> params{&p};
    AdamState st = AdamState::init({&p}, {});
    st.hyper.lr = 1e-4f;
    Tensor g({1}, {1.0f});
    std::vector<const Tensor*> grads{&g};
    adam_step(params, grads, st);
    // m_hat = 1, v_hat = 1 -> step = lr / (1 + eps)
    CHECK(std::abs(p[0] - (-1e-4f)) < 1e-9f);
}

TEST_CASE("adam: 100 steps on f(w)=w^2 strictly decrease f") {
    Tensor w({1}, {1.0f});
    std::vector<Tensor*> params{&w};
    AdamState st = AdamState::init({&w}, {}); // lr 1e-4
    float prev = w[0] * w[0];
    for (int i = 0; i < 100; ++i) {
        Tensor g({1}, {2.0f * w[0]});
        std::vector<const Tensor*> grads{&g};
        adam_step(params, grads, st);
        const float f = w[0] * w[0];
        CHECK(f < prev);
        prev = f;
    }
}

TEST_CASE("adam: shape mismatch is an error") {
    Tensor p({4});
    std::vector<Tensor*> params{&p};
    AdamState st = AdamState::init({&p}, {});
    Tensor g({3});
    std::vector<const Tensor*> grads{&g};
    CHECK_THROWS_AS(adam_step(params, grads, st), std::invalid_argument);
}
