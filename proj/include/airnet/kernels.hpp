#ifndef AIRNET_KERNELS_HPP
#define AIRNET_KERNELS_HPP

#include <cmath>
#include <cstddef>

// Arithmetic inner loops of the tensor engine. Every kernel exists as a
// scalar reference implementation and, where profitable, an AVX2 variant.
// The active variant is selected once at runtime (overridable with the
// AIRNET_KERNELS environment variable: "scalar" or "avx2").
//
// The two variants are bit-exact equivalents by construction: identical
// per-output accumulation order, multiply-then-add (no FMA), and reductions
// striped over a fixed 8-lane pattern. The equivalence suite asserts this.

namespace airnet::kernels {

// Reference formulations, templated so the 64-bit gradient-checking path
// can reuse them. The float instantiations are the scalar backend.
namespace generic {

// dst[i] += a * src[i]
template <class T>
inline void axpy(T* dst, const T* src, T a, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) dst[i] += a * src[i];
}

// dst[i] += w[0]*src[i] + w[1]*src[i+1] + w[2]*src[i+2]
// (1-D valid correlation; src must have n+2 readable elements)
template <class T>
inline void conv_row3(T* dst, const T* src, const T w[3], std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        T acc = dst[i];
        acc += w[0] * src[i];
        acc += w[1] * src[i + 1];
        acc += w[2] * src[i + 2];
        dst[i] = acc;
    }
}

// acc[i % 8] += a[i] * b[i]; lane-striped partial sums so the SIMD variant
// can accumulate the same values in the same order per lane.
template <class T>
inline void dot_striped8(const T* a, const T* b, std::size_t n, T acc[8]) {
    for (std::size_t i = 0; i < n; ++i) acc[i & 7] += a[i] * b[i];
}

// Sequential combine of the striped partial sums.
template <class T>
inline T combine8(const T acc[8]) {
    T s = acc[0];
    for (int i = 1; i < 8; ++i) s += acc[i];
    return s;
}

template <class T>
inline void relu(T* dst, const T* src, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) dst[i] = src[i] > T(0) ? src[i] : T(0);
}

// gin[i] += (x[i] > 0 ? gout[i] : 0); the zero add is kept unconditional to
// match the masked vector form.
template <class T>
inline void relu_backward(T* gin, const T* x, const T* gout, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) gin[i] += x[i] > T(0) ? gout[i] : T(0);
}

// gin[i] += gout[i] * (y[i] * (1 - y[i])), y = sigmoid output
template <class T>
inline void sigmoid_backward(T* gin, const T* y, const T* gout, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        T t = T(1) - y[i];
        t = y[i] * t;
        gin[i] += gout[i] * t;
    }
}

} // namespace generic

struct AdamHyper {
    float lr;
    float beta1;
    float beta2;
    float eps;
    float inv_bc1; // 1 / (1 - beta1^t)
    float inv_bc2; // 1 / (1 - beta2^t)
};

namespace scalar {
void axpy(float* dst, const float* src, float a, std::size_t n);
void conv_row3(float* dst, const float* src, const float w[3], std::size_t n);
void dot_striped8(const float* a, const float* b, std::size_t n, float acc[8]);
void relu(float* dst, const float* src, std::size_t n);
void relu_backward(float* gin, const float* x, const float* gout, std::size_t n);
void sigmoid_backward(float* gin, const float* y, const float* gout, std::size_t n);
void adam_step(float* p, float* m, float* v, const float* g, std::size_t n,
               const AdamHyper& h);
} // namespace scalar

namespace avx2 {
bool available(); // true iff the running CPU supports AVX2
void axpy(float* dst, const float* src, float a, std::size_t n);
void conv_row3(float* dst, const float* src, const float w[3], std::size_t n);
void dot_striped8(const float* a, const float* b, std::size_t n, float acc[8]);
void relu(float* dst, const float* src, std::size_t n);
void relu_backward(float* gin, const float* x, const float* gout, std::size_t n);
void sigmoid_backward(float* gin, const float* y, const float* gout, std::size_t n);
void adam_step(float* p, float* m, float* v, const float* g, std::size_t n,
               const AdamHyper& h);
} // namespace avx2

// Dispatched entry points.
void axpy(float* dst, const float* src, float a, std::size_t n);
void conv_row3(float* dst, const float* src, const float w[3], std::size_t n);
void dot_striped8(const float* a, const float* b, std::size_t n, float acc[8]);
void relu(float* dst, const float* src, std::size_t n);
void relu_backward(float* gin, const float* x, const float* gout, std::size_t n);
void sigmoid_backward(float* gin, const float* y, const float* gout, std::size_t n);
void adam_step(float* p, float* m, float* v, const float* g, std::size_t n,
               const AdamHyper& h);

const char* active_backend();
// Force a backend by name ("scalar"/"avx2"); throws if unavailable.
void set_backend(const char* name);

} // namespace airnet::kernels

#endif
