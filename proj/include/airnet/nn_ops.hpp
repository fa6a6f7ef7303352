#ifndef AIRNET_NN_OPS_HPP
#define AIRNET_NN_OPS_HPP

#include <cmath>
#include <cstdint>
#include <limits>
#include <type_traits>

#include "airnet/kernels.hpp"
#include "airnet/tape.hpp"

namespace airnet::ad {

enum class Padding { valid, same };

namespace detail {

template <class T>
inline void row_conv3(T* dst, const T* src, const T w[3], std::size_t n) {
    if constexpr (std::is_same_v<T, float>)
        kernels::conv_row3(dst, src, w, n);
    else
        kernels::generic::conv_row3(dst, src, w, n);
}

template <class T>
inline void row_axpy(T* dst, const T* src, T a, std::size_t n) {
    if constexpr (std::is_same_v<T, float>)
        kernels::axpy(dst, src, a, n);
    else
        kernels::generic::axpy(dst, src, a, n);
}

template <class T>
inline void row_dot_striped8(const T* a, const T* b, std::size_t n, T acc[8]) {
    if constexpr (std::is_same_v<T, float>)
        kernels::dot_striped8(a, b, n, acc);
    else
        kernels::generic::dot_striped8(a, b, n, acc);
}

template <class T>
inline void vrelu(T* dst, const T* src, std::size_t n) {
    if constexpr (std::is_same_v<T, float>)
        kernels::relu(dst, src, n);
    else
        kernels::generic::relu(dst, src, n);
}

template <class T>
inline void vrelu_backward(T* gin, const T* x, const T* gout, std::size_t n) {
    if constexpr (std::is_same_v<T, float>)
        kernels::relu_backward(gin, x, gout, n);
    else
        kernels::generic::relu_backward(gin, x, gout, n);
}

template <class T>
inline void vsigmoid_backward(T* gin, const T* y, const T* gout, std::size_t n) {
    if constexpr (std::is_same_v<T, float>)
        kernels::sigmoid_backward(gin, y, gout, n);
    else
        kernels::generic::sigmoid_backward(gin, y, gout, n);
}

template <class T>
inline void add_into(T* dst, const T* src, std::size_t n) {
    row_axpy(dst, src, T(1), n);
}

// Zero-pad each spatial border of a {C,Z,Y,X} map by p voxels.
template <class T>
TensorT<T> pad3d(const TensorT<T>& in, int p) {
    const int C = in.extent(0), Z = in.extent(1), Y = in.extent(2), X = in.extent(3);
    TensorT<T> out({C, Z + 2 * p, Y + 2 * p, X + 2 * p});
    const std::size_t ip = static_cast<std::size_t>(Y) * X;
    const std::size_t ic = static_cast<std::size_t>(Z) * ip;
    const int Xp = X + 2 * p, Yp = Y + 2 * p;
    const std::size_t op = static_cast<std::size_t>(Yp) * Xp;
    const std::size_t oc = static_cast<std::size_t>(Z + 2 * p) * op;
    for (int c = 0; c < C; ++c)
        for (int z = 0; z < Z; ++z)
            for (int y = 0; y < Y; ++y) {
                const T* s = in.data() + c * ic + z * ip + static_cast<std::size_t>(y) * X;
                T* d = out.data() + c * oc + static_cast<std::size_t>(z + p) * op +
                       static_cast<std::size_t>(y + p) * Xp + p;
                std::copy(s, s + X, d);
            }
    return out;
}

// dst (interior of {C,Z,Y,X} sized like unpadded) += padded interior region
template <class T>
void unpad_add(TensorT<T>& dst, const TensorT<T>& padded, int p) {
    const int C = dst.extent(0), Z = dst.extent(1), Y = dst.extent(2), X = dst.extent(3);
    const int Xp = X + 2 * p, Yp = Y + 2 * p;
    const std::size_t pp = static_cast<std::size_t>(Yp) * Xp;
    const std::size_t pc = static_cast<std::size_t>(Z + 2 * p) * pp;
    const std::size_t ip = static_cast<std::size_t>(Y) * X;
    const std::size_t ic = static_cast<std::size_t>(Z) * ip;
    for (int c = 0; c < C; ++c)
        for (int z = 0; z < Z; ++z)
            for (int y = 0; y < Y; ++y) {
                const T* s = padded.data() + c * pc + static_cast<std::size_t>(z + p) * pp +
                             static_cast<std::size_t>(y + p) * Xp + p;
                T* d = dst.data() + c * ic + z * ip + static_cast<std::size_t>(y) * X;
                add_into(d, s, static_cast<std::size_t>(X));
            }
}

// Valid 3D correlation, kernel size k in {1,3}. Writes out (fill + taps);
// per-output accumulation order is (ci, kz, ky, kx) after the bias term.
template <class T>
void conv_valid_core(const T* in, int Ci, int Dz, int Dy, int Dx, const T* w, int k, int Co,
                     const T* bias, T* out) {
    const int Oz = Dz - (k - 1), Oy = Dy - (k - 1), Ox = Dx - (k - 1);
    const std::size_t in_plane = static_cast<std::size_t>(Dy) * Dx;
    const std::size_t in_chan = static_cast<std::size_t>(Dz) * in_plane;
    const std::size_t out_plane = static_cast<std::size_t>(Oy) * Ox;
    const std::size_t out_chan = static_cast<std::size_t>(Oz) * out_plane;
    if (k == 3) {
#pragma omp parallel for collapse(2) schedule(static)
        for (int co = 0; co < Co; ++co)
            for (int oz = 0; oz < Oz; ++oz) {
                T* oslab = out + co * out_chan + oz * out_plane;
                std::fill(oslab, oslab + out_plane, bias ? bias[co] : T(0));
                const T* wc = w + static_cast<std::size_t>(co) * Ci * 27;
                for (int ci = 0; ci < Ci; ++ci)
                    for (int kz = 0; kz < 3; ++kz) {
                        const T* iplane =
                            in + ci * in_chan + static_cast<std::size_t>(oz + kz) * in_plane;
                        for (int ky = 0; ky < 3; ++ky) {
                            const T* wk = wc + static_cast<std::size_t>(ci) * 27 + kz * 9 + ky * 3;
                            for (int oy = 0; oy < Oy; ++oy)
                                row_conv3(oslab + static_cast<std::size_t>(oy) * Ox,
                                          iplane + static_cast<std::size_t>(oy + ky) * Dx, wk,
                                          static_cast<std::size_t>(Ox));
                        }
                    }
            }
    } else {
#pragma omp parallel for schedule(static)
        for (int co = 0; co < Co; ++co) {
            T* oslab = out + co * out_chan;
            std::fill(oslab, oslab + out_chan, bias ? bias[co] : T(0));
            for (int ci = 0; ci < Ci; ++ci)
                row_axpy(oslab, in + ci * in_chan, w[static_cast<std::size_t>(co) * Ci + ci],
                         out_chan);
        }
    }
}

// dw += correlation of gout with in; striped 8-lane partial sums with a
// fixed sequential combine keep the result backend-independent.
template <class T>
void conv_valid_backward_weights(const T* in, int Ci, int Dz, int Dy, int Dx, const T* gout,
                                 int k, int Co, T* dw) {
    const int Oz = Dz - (k - 1), Oy = Dy - (k - 1), Ox = Dx - (k - 1);
    const std::size_t in_plane = static_cast<std::size_t>(Dy) * Dx;
    const std::size_t in_chan = static_cast<std::size_t>(Dz) * in_plane;
    const std::size_t out_plane = static_cast<std::size_t>(Oy) * Ox;
    const std::size_t out_chan = static_cast<std::size_t>(Oz) * out_plane;
    if (k == 3) {
#pragma omp parallel for collapse(2) schedule(static)
        for (int co = 0; co < Co; ++co)
            for (int ci = 0; ci < Ci; ++ci)
                for (int kz = 0; kz < 3; ++kz)
                    for (int ky = 0; ky < 3; ++ky)
                        for (int kx = 0; kx < 3; ++kx) {
                            T acc[8] = {T(0), T(0), T(0), T(0), T(0), T(0), T(0), T(0)};
                            for (int oz = 0; oz < Oz; ++oz)
                                for (int oy = 0; oy < Oy; ++oy)
                                    row_dot_striped8(
                                        gout + co * out_chan +
                                            static_cast<std::size_t>(oz) * out_plane +
                                            static_cast<std::size_t>(oy) * Ox,
                                        in + ci * in_chan +
                                            static_cast<std::size_t>(oz + kz) * in_plane +
                                            static_cast<std::size_t>(oy + ky) * Dx + kx,
                                        static_cast<std::size_t>(Ox), acc);
                            dw[((static_cast<std::size_t>(co) * Ci + ci) * 27) + kz * 9 + ky * 3 +
                               kx] += kernels::generic::combine8(acc);
                        }
    } else {
#pragma omp parallel for collapse(2) schedule(static)
        for (int co = 0; co < Co; ++co)
            for (int ci = 0; ci < Ci; ++ci) {
                T acc[8] = {T(0), T(0), T(0), T(0), T(0), T(0), T(0), T(0)};
                row_dot_striped8(gout + co * out_chan, in + ci * in_chan, out_chan, acc);
                dw[static_cast<std::size_t>(co) * Ci + ci] += kernels::generic::combine8(acc);
            }
    }
}

template <class T>
void conv_backward_bias(const T* gout, int Co, std::size_t out_chan, T* db) {
    for (int co = 0; co < Co; ++co) {
        T acc = T(0);
        const T* p = gout + co * out_chan;
        for (std::size_t i = 0; i < out_chan; ++i) acc += p[i];
        db[co] += acc;
    }
}

// Weight tensor with channel roles swapped and taps flipped, used to express
// the input gradient as a forward valid conv on the padded output gradient.
template <class T>
TensorT<T> flip_transpose_weights(const TensorT<T>& w) {
    const int Co = w.extent(0), Ci = w.extent(1), k = w.extent(2);
    TensorT<T> out({Ci, Co, k, k, k});
    for (int co = 0; co < Co; ++co)
        for (int ci = 0; ci < Ci; ++ci)
            for (int a = 0; a < k; ++a)
                for (int b = 0; b < k; ++b)
                    for (int c = 0; c < k; ++c) {
                        const std::size_t src =
                            (((static_cast<std::size_t>(co) * Ci + ci) * k + (k - 1 - a)) * k +
                             (k - 1 - b)) *
                                k +
                            (k - 1 - c);
                        const std::size_t dst =
                            (((static_cast<std::size_t>(ci) * Co + co) * k + a) * k + b) * k + c;
                        out[dst] = w[src];
                    }
    return out;
}

} // namespace detail

/// 3D convolution with 3x3x3 (or 1x1x1) kernels. valid shrinks each spatial
/// extent by k-1; same preserves extents via zero-padding.
template <class T>
Ref conv3d(TapeT<T>& t, Ref input, Ref weights, Ref bias, Padding padding) {
    const TensorT<T>& in = t.value(input);
    const TensorT<T>& w = t.value(weights);
    const TensorT<T>& b = t.value(bias);
    if (in.rank() != 4 || w.rank() != 5)
        throw std::invalid_argument("conv3d: input must be rank 4, weights rank 5");
    const int Ci = in.extent(0);
    const int k = w.extent(2);
    if (k != 1 && k != 3) throw std::invalid_argument("conv3d: kernel must be 1 or 3");
    if (w.extent(3) != k || w.extent(4) != k)
        throw std::invalid_argument("conv3d: kernel must be cubic");
    if (w.extent(1) != Ci)
        throw std::invalid_argument("conv3d: channel mismatch between input and weights");
    const int Co = w.extent(0);
    if (b.rank() != 1 || b.extent(0) != Co)
        throw std::invalid_argument("conv3d: bias shape mismatch");

    const int pad = (padding == Padding::same) ? (k - 1) / 2 : 0;
    const int Dz = in.extent(1) + 2 * pad, Dy = in.extent(2) + 2 * pad,
              Dx = in.extent(3) + 2 * pad;
    if (padding == Padding::valid && (Dz < k || Dy < k || Dx < k))
        throw std::invalid_argument("conv3d: spatial extent smaller than kernel in valid mode");

    TensorT<T> out({Co, Dz - (k - 1), Dy - (k - 1), Dx - (k - 1)});
    if (pad > 0) {
        TensorT<T> padded = detail::pad3d(in, pad);
        detail::conv_valid_core(padded.data(), Ci, Dz, Dy, Dx, w.data(), k, Co, b.data(),
                                out.data());
    } else {
        detail::conv_valid_core(in.data(), Ci, Dz, Dy, Dx, w.data(), k, Co, b.data(),
                                out.data());
    }

    const bool needs = t.needs_grad(input) || t.needs_grad(weights) || t.needs_grad(bias);
    Ref self{static_cast<int>(t.num_nodes())};
    auto back = [self, input, weights, bias, k, pad](TapeT<T>& tp) {
        const TensorT<T>& go = tp.grad(self);
        const TensorT<T>& inv = tp.value(input);
        const TensorT<T>& wv = tp.value(weights);
        const int Ci_ = inv.extent(0), Co_ = wv.extent(0);
        const int Dz_ = inv.extent(1) + 2 * pad, Dy_ = inv.extent(2) + 2 * pad,
                  Dx_ = inv.extent(3) + 2 * pad;
        const int Oz = go.extent(1), Oy = go.extent(2), Ox = go.extent(3);
        const std::size_t out_chan = static_cast<std::size_t>(Oz) * Oy * Ox;

        if (tp.needs_grad(bias))
            detail::conv_backward_bias(go.data(), Co_, out_chan, tp.grad_buffer(bias).data());

        if (tp.needs_grad(weights)) {
            if (pad > 0) {
                TensorT<T> padded = detail::pad3d(inv, pad);
                detail::conv_valid_backward_weights(padded.data(), Ci_, Dz_, Dy_, Dx_, go.data(),
                                                    k, Co_, tp.grad_buffer(weights).data());
            } else {
                detail::conv_valid_backward_weights(inv.data(), Ci_, Dz_, Dy_, Dx_, go.data(), k,
                                                    Co_, tp.grad_buffer(weights).data());
            }
        }

        if (tp.needs_grad(input)) {
            TensorT<T>& gin = tp.grad_buffer(input);
            if (k == 3) {
                TensorT<T> wT = detail::flip_transpose_weights(wv);
                TensorT<T> gpad = detail::pad3d(go, 2);
                TensorT<T> tmp({Ci_, Dz_, Dy_, Dx_});
                detail::conv_valid_core(gpad.data(), Co_, Oz + 4, Oy + 4, Ox + 4, wT.data(), 3,
                                        Ci_, static_cast<const T*>(nullptr), tmp.data());
                if (pad > 0)
                    detail::unpad_add(gin, tmp, pad);
                else
                    detail::add_into(gin.data(), tmp.data(), tmp.size());
            } else {
                const std::size_t chan = out_chan;
                for (int ci = 0; ci < Ci_; ++ci)
                    for (int co = 0; co < Co_; ++co)
                        detail::row_axpy(gin.data() + ci * chan, go.data() + co * chan,
                                         wv[static_cast<std::size_t>(co) * Ci_ + ci], chan);
            }
        }
    };
    return t.node(std::move(out), needs, needs ? std::function<void(TapeT<T>&)>(back) : nullptr);
}

/// 2x2x2 max pooling; gradient routes to the argmax voxel (first index in
/// scan order on ties).
template <class T>
Ref maxpool3d(TapeT<T>& t, Ref input) {
    const TensorT<T>& in = t.value(input);
    if (in.rank() != 4) throw std::invalid_argument("maxpool3d: input must be rank 4");
    const int C = in.extent(0), Z = in.extent(1), Y = in.extent(2), X = in.extent(3);
    if (Z % 2 || Y % 2 || X % 2)
        throw std::invalid_argument("maxpool3d: spatial extents must be even, got " +
                                    shape_str(in.shape()));
    const int Oz = Z / 2, Oy = Y / 2, Ox = X / 2;
    TensorT<T> out({C, Oz, Oy, Ox});
    std::vector<std::int64_t> argmax(out.size());
    const std::size_t ipl = static_cast<std::size_t>(Y) * X;
    const std::size_t ich = static_cast<std::size_t>(Z) * ipl;
    std::size_t o = 0;
    for (int c = 0; c < C; ++c)
        for (int oz = 0; oz < Oz; ++oz)
            for (int oy = 0; oy < Oy; ++oy)
                for (int ox = 0; ox < Ox; ++ox, ++o) {
                    T best = -std::numeric_limits<T>::infinity();
                    std::int64_t bi = -1;
                    for (int dz = 0; dz < 2; ++dz)
                        for (int dy = 0; dy < 2; ++dy)
                            for (int dx = 0; dx < 2; ++dx) {
                                const std::size_t idx =
                                    c * ich + static_cast<std::size_t>(2 * oz + dz) * ipl +
                                    static_cast<std::size_t>(2 * oy + dy) * X + (2 * ox + dx);
                                if (in[idx] > best) {
                                    best = in[idx];
                                    bi = static_cast<std::int64_t>(idx);
                                }
                            }
                    out[o] = best;
                    argmax[o] = bi;
                }
    const bool needs = t.needs_grad(input);
    Ref self{static_cast<int>(t.num_nodes())};
    auto back = [self, input, argmax = std::move(argmax)](TapeT<T>& tp) {
        if (!tp.needs_grad(input)) return;
        const TensorT<T>& go = tp.grad(self);
        TensorT<T>& gin = tp.grad_buffer(input);
        for (std::size_t i = 0; i < go.size(); ++i)
            gin[static_cast<std::size_t>(argmax[i])] += go[i];
    };
    return t.node(std::move(out), needs, needs ? std::function<void(TapeT<T>&)>(back) : nullptr);
}

/// Nearest-neighbour doubling of each spatial extent; gradient sums the 8
/// downstream contributions per source voxel.
template <class T>
Ref upsample3d(TapeT<T>& t, Ref input) {
    const TensorT<T>& in = t.value(input);
    if (in.rank() != 4) throw std::invalid_argument("upsample3d: input must be rank 4");
    const int C = in.extent(0), Z = in.extent(1), Y = in.extent(2), X = in.extent(3);
    TensorT<T> out({C, 2 * Z, 2 * Y, 2 * X});
    const std::size_t ipl = static_cast<std::size_t>(Y) * X;
    const std::size_t ich = static_cast<std::size_t>(Z) * ipl;
    const std::size_t opl = static_cast<std::size_t>(2 * Y) * (2 * X);
    const std::size_t och = static_cast<std::size_t>(2 * Z) * opl;
    for (int c = 0; c < C; ++c)
        for (int z = 0; z < 2 * Z; ++z)
            for (int y = 0; y < 2 * Y; ++y) {
                const T* s = in.data() + c * ich + static_cast<std::size_t>(z / 2) * ipl +
                             static_cast<std::size_t>(y / 2) * X;
                T* d = out.data() + c * och + static_cast<std::size_t>(z) * opl +
                       static_cast<std::size_t>(y) * (2 * X);
                for (int x = 0; x < X; ++x) {
                    d[2 * x] = s[x];
                    d[2 * x + 1] = s[x];
                }
            }
    const bool needs = t.needs_grad(input);
    Ref self{static_cast<int>(t.num_nodes())};
    auto back = [self, input, C, Z, Y, X, ipl, ich, opl, och](TapeT<T>& tp) {
        if (!tp.needs_grad(input)) return;
        const TensorT<T>& go = tp.grad(self);
        TensorT<T>& gin = tp.grad_buffer(input);
        for (int c = 0; c < C; ++c)
            for (int z = 0; z < Z; ++z)
                for (int y = 0; y < Y; ++y)
                    for (int x = 0; x < X; ++x) {
                        T acc = gin[c * ich + z * ipl + static_cast<std::size_t>(y) * X + x];
                        for (int dz = 0; dz < 2; ++dz)
                            for (int dy = 0; dy < 2; ++dy)
                                for (int dx = 0; dx < 2; ++dx)
                                    acc += go[c * och +
                                              static_cast<std::size_t>(2 * z + dz) * opl +
                                              static_cast<std::size_t>(2 * y + dy) * (2 * X) +
                                              (2 * x + dx)];
                        gin[c * ich + z * ipl + static_cast<std::size_t>(y) * X + x] = acc;
                    }
    };
    return t.node(std::move(out), needs, needs ? std::function<void(TapeT<T>&)>(back) : nullptr);
}

template <class T>
Ref relu(TapeT<T>& t, Ref input) {
    const TensorT<T>& in = t.value(input);
    TensorT<T> out(in.shape());
    detail::vrelu(out.data(), in.data(), in.size());
    const bool needs = t.needs_grad(input);
    Ref self{static_cast<int>(t.num_nodes())};
    auto back = [self, input](TapeT<T>& tp) {
        if (!tp.needs_grad(input)) return;
        const TensorT<T>& go = tp.grad(self);
        detail::vrelu_backward(tp.grad_buffer(input).data(), tp.value(input).data(), go.data(),
                               go.size());
    };
    return t.node(std::move(out), needs, needs ? std::function<void(TapeT<T>&)>(back) : nullptr);
}

template <class T>
Ref sigmoid(TapeT<T>& t, Ref input) {
    const TensorT<T>& in = t.value(input);
    TensorT<T> out(in.shape());
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = T(1) / (T(1) + std::exp(-in[i]));
    const bool needs = t.needs_grad(input);
    Ref self{static_cast<int>(t.num_nodes())};
    auto back = [self, input](TapeT<T>& tp) {
        if (!tp.needs_grad(input)) return;
        const TensorT<T>& go = tp.grad(self);
        detail::vsigmoid_backward(tp.grad_buffer(input).data(), tp.value(self).data(), go.data(),
                                  go.size());
    };
    return t.node(std::move(out), needs, needs ? std::function<void(TapeT<T>&)>(back) : nullptr);
}

/// Center-crops `skip` to the spatial extents of `up` and concatenates the
/// channels (skip first). Cropped-away skip voxels receive zero gradient.
template <class T>
Ref concat_crop(TapeT<T>& t, Ref skip, Ref up) {
    const TensorT<T>& s = t.value(skip);
    const TensorT<T>& u = t.value(up);
    if (s.rank() != 4 || u.rank() != 4)
        throw std::invalid_argument("concat_crop: inputs must be rank 4");
    int off[3];
    for (int a = 0; a < 3; ++a) {
        const int d = s.extent(a + 1) - u.extent(a + 1);
        if (d < 0)
            throw std::invalid_argument("concat_crop: skip smaller than up on axis " +
                                        std::to_string(a));
        if (d % 2)
            throw std::invalid_argument("concat_crop: odd size difference on axis " +
                                        std::to_string(a));
        off[a] = d / 2;
    }
    const int Cs = s.extent(0), Cu = u.extent(0);
    const int Z = u.extent(1), Y = u.extent(2), X = u.extent(3);
    TensorT<T> out({Cs + Cu, Z, Y, X});
    const std::size_t spl = static_cast<std::size_t>(s.extent(2)) * s.extent(3);
    const std::size_t sch = static_cast<std::size_t>(s.extent(1)) * spl;
    const std::size_t opl = static_cast<std::size_t>(Y) * X;
    const std::size_t och = static_cast<std::size_t>(Z) * opl;
    for (int c = 0; c < Cs; ++c)
        for (int z = 0; z < Z; ++z)
            for (int y = 0; y < Y; ++y) {
                const T* src = s.data() + c * sch +
                               static_cast<std::size_t>(z + off[0]) * spl +
                               static_cast<std::size_t>(y + off[1]) * s.extent(3) + off[2];
                std::copy(src, src + X,
                          out.data() + c * och + static_cast<std::size_t>(z) * opl +
                              static_cast<std::size_t>(y) * X);
            }
    std::copy(u.data(), u.data() + u.size(), out.data() + static_cast<std::size_t>(Cs) * och);

    const bool needs = t.needs_grad(skip) || t.needs_grad(up);
    Ref self{static_cast<int>(t.num_nodes())};
    auto back = [self, skip, up, off0 = off[0], off1 = off[1], off2 = off[2], Cs, Cu, Z, Y,
                 X](TapeT<T>& tp) {
        const TensorT<T>& go = tp.grad(self);
        const std::size_t opl = static_cast<std::size_t>(Y) * X;
        const std::size_t och = static_cast<std::size_t>(Z) * opl;
        if (tp.needs_grad(skip)) {
            TensorT<T>& gs = tp.grad_buffer(skip);
            const int Sy = gs.extent(2), Sx = gs.extent(3);
            const std::size_t spl = static_cast<std::size_t>(Sy) * Sx;
            const std::size_t sch = static_cast<std::size_t>(gs.extent(1)) * spl;
            for (int c = 0; c < Cs; ++c)
                for (int z = 0; z < Z; ++z)
                    for (int y = 0; y < Y; ++y)
                        detail::add_into(gs.data() + c * sch +
                                             static_cast<std::size_t>(z + off0) * spl +
                                             static_cast<std::size_t>(y + off1) * Sx + off2,
                                         go.data() + c * och + static_cast<std::size_t>(z) * opl +
                                             static_cast<std::size_t>(y) * X,
                                         static_cast<std::size_t>(X));
        }
        if (tp.needs_grad(up)) {
            TensorT<T>& gu = tp.grad_buffer(up);
            detail::add_into(gu.data(), go.data() + static_cast<std::size_t>(Cs) * och,
                             static_cast<std::size_t>(Cu) * och);
        }
    };
    return t.node(std::move(out), needs, needs ? std::function<void(TapeT<T>&)>(back) : nullptr);
}

/// Soft Dice loss restricted to the ROI: 1 - 2*sum(m p g) / (sum(m p) +
/// sum(m g) + eps). gt and roi are constants; sums run in double.
template <class T>
Ref soft_dice_loss(TapeT<T>& t, Ref pred, TensorT<T> gt, TensorT<T> roi,
                   double eps = 1e-7) {
    const TensorT<T>& p = t.value(pred);
    if (!(p.shape() == gt.shape()) || !(p.shape() == roi.shape()))
        throw std::invalid_argument("soft_dice_loss: shape mismatch");
    double a = 0.0, sp = 0.0, sg = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (roi[i] != T(0)) {
            const double pv = static_cast<double>(p[i]);
            const double gv = static_cast<double>(gt[i]);
            a += pv * gv;
            sp += pv;
            sg += gv;
        }
    }
    const double denom = sp + sg + eps;
    const double loss = 1.0 - 2.0 * a / denom;
    const bool needs = t.needs_grad(pred);
    Ref self{static_cast<int>(t.num_nodes())};
    auto back = [self, pred, gt = std::move(gt), roi = std::move(roi), a, denom](TapeT<T>& tp) {
        if (!tp.needs_grad(pred)) return;
        const double g0 = static_cast<double>(tp.grad(self)[0]);
        TensorT<T>& gp = tp.grad_buffer(pred);
        const double cg = 2.0 / denom;
        const double ca = 2.0 * a / (denom * denom);
        for (std::size_t i = 0; i < gp.size(); ++i)
            if (roi[i] != T(0))
                gp[i] += static_cast<T>(-g0 * (cg * static_cast<double>(gt[i]) - ca));
    };
    return t.node(TensorT<T>::scalar(static_cast<T>(loss)), needs,
                  needs ? std::function<void(TapeT<T>&)>(back) : nullptr);
}

template <class T>
Ref sum(TapeT<T>& t, Ref input) {
    const TensorT<T>& in = t.value(input);
    double s = 0.0;
    for (std::size_t i = 0; i < in.size(); ++i) s += static_cast<double>(in[i]);
    const bool needs = t.needs_grad(input);
    Ref self{static_cast<int>(t.num_nodes())};
    auto back = [self, input](TapeT<T>& tp) {
        if (!tp.needs_grad(input)) return;
        const T g = tp.grad(self)[0];
        TensorT<T>& gi = tp.grad_buffer(input);
        for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += g;
    };
    return t.node(TensorT<T>::scalar(static_cast<T>(s)), needs,
                  needs ? std::function<void(TapeT<T>&)>(back) : nullptr);
}

template <class T>
Ref mul(TapeT<T>& t, Ref a, Ref b) {
    const TensorT<T>& av = t.value(a);
    const TensorT<T>& bv = t.value(b);
    if (!av.same_shape(bv)) throw std::invalid_argument("mul: shape mismatch");
    TensorT<T> out(av.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    const bool needs = t.needs_grad(a) || t.needs_grad(b);
    Ref self{static_cast<int>(t.num_nodes())};
    auto back = [self, a, b](TapeT<T>& tp) {
        const TensorT<T>& go = tp.grad(self);
        if (tp.needs_grad(a)) {
            TensorT<T>& ga = tp.grad_buffer(a);
            const TensorT<T>& bv2 = tp.value(b);
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i] * bv2[i];
        }
        if (tp.needs_grad(b)) {
            TensorT<T>& gb = tp.grad_buffer(b);
            const TensorT<T>& av2 = tp.value(a);
            for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += go[i] * av2[i];
        }
    };
    return t.node(std::move(out), needs, needs ? std::function<void(TapeT<T>&)>(back) : nullptr);
}

template <class T>
Ref scale(TapeT<T>& t, Ref input, T c) {
    const TensorT<T>& in = t.value(input);
    TensorT<T> out(in.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * in[i];
    const bool needs = t.needs_grad(input);
    Ref self{static_cast<int>(t.num_nodes())};
    auto back = [self, input, c](TapeT<T>& tp) {
        if (!tp.needs_grad(input)) return;
        const TensorT<T>& go = tp.grad(self);
        TensorT<T>& gi = tp.grad_buffer(input);
        for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += c * go[i];
    };
    return t.node(std::move(out), needs, needs ? std::function<void(TapeT<T>&)>(back) : nullptr);
}

} // namespace airnet::ad

#endif
