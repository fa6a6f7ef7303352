// AVX2 kernel variants. This translation unit is compiled with -mavx2; the
// dispatcher only routes here when the CPU reports AVX2 support.
//
// Multiplies and adds are kept as separate instructions (no FMA) and every
// per-output accumulation follows the same order as the scalar reference,
// so results are bit-identical across backends.

#include "airnet/kernels.hpp"

#if defined(__AVX2__)
#include <immintrin.h>
#endif

namespace airnet::kernels::avx2 {

bool available() {
#if defined(__AVX2__) && (defined(__GNUC__) || defined(__clang__))
    return __builtin_cpu_supports("avx2") != 0;
#else
    return false;
#endif
}

#if defined(__AVX2__)

namespace {

// lane masks for tails of length 1..7
inline __m256i tail_mask(std::size_t r) {
    alignas(32) static const int table[16] = {-1, -1, -1, -1, -1, -1, -1, -1,
                                              0,  0,  0,  0,  0,  0,  0,  0};
    return _mm256_loadu_si256(reinterpret_cast<const __m256i*>(table + (8 - r)));
}

} // namespace

void axpy(float* dst, const float* src, float a, std::size_t n) {
    const __m256 va = _mm256_set1_ps(a);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 d = _mm256_loadu_ps(dst + i);
        const __m256 s = _mm256_loadu_ps(src + i);
        d = _mm256_add_ps(d, _mm256_mul_ps(va, s));
        _mm256_storeu_ps(dst + i, d);
    }
    for (; i < n; ++i) dst[i] += a * src[i];
}

void conv_row3(float* dst, const float* src, const float w[3], std::size_t n) {
    const __m256 w0 = _mm256_set1_ps(w[0]);
    const __m256 w1 = _mm256_set1_ps(w[1]);
    const __m256 w2 = _mm256_set1_ps(w[2]);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 acc = _mm256_loadu_ps(dst + i);
        acc = _mm256_add_ps(acc, _mm256_mul_ps(w0, _mm256_loadu_ps(src + i)));
        acc = _mm256_add_ps(acc, _mm256_mul_ps(w1, _mm256_loadu_ps(src + i + 1)));
        acc = _mm256_add_ps(acc, _mm256_mul_ps(w2, _mm256_loadu_ps(src + i + 2)));
        _mm256_storeu_ps(dst + i, acc);
    }
    for (; i < n; ++i) {
        float acc = dst[i];
        acc += w[0] * src[i];
        acc += w[1] * src[i + 1];
        acc += w[2] * src[i + 2];
        dst[i] = acc;
    }
}

void dot_striped8(const float* a, const float* b, std::size_t n, float acc[8]) {
    __m256 vacc = _mm256_loadu_ps(acc);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 va = _mm256_loadu_ps(a + i);
        const __m256 vb = _mm256_loadu_ps(b + i);
        vacc = _mm256_add_ps(vacc, _mm256_mul_ps(va, vb));
    }
    const std::size_t r = n - i;
    if (r) {
        const __m256i mask = tail_mask(r);
        const __m256 va = _mm256_maskload_ps(a + i, mask);
        const __m256 vb = _mm256_maskload_ps(b + i, mask);
        vacc = _mm256_add_ps(vacc, _mm256_mul_ps(va, vb));
    }
    _mm256_storeu_ps(acc, vacc);
}

void relu(float* dst, const float* src, std::size_t n) {
    const __m256 zero = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(dst + i, _mm256_max_ps(_mm256_loadu_ps(src + i), zero));
    for (; i < n; ++i) dst[i] = src[i] > 0.0f ? src[i] : 0.0f;
}

void relu_backward(float* gin, const float* x, const float* gout, std::size_t n) {
    const __m256 zero = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 mask = _mm256_cmp_ps(_mm256_loadu_ps(x + i), zero, _CMP_GT_OQ);
        const __m256 g = _mm256_and_ps(mask, _mm256_loadu_ps(gout + i));
        _mm256_storeu_ps(gin + i, _mm256_add_ps(_mm256_loadu_ps(gin + i), g));
    }
    for (; i < n; ++i) gin[i] += x[i] > 0.0f ? gout[i] : 0.0f;
}

void sigmoid_backward(float* gin, const float* y, const float* gout, std::size_t n) {
    const __m256 one = _mm256_set1_ps(1.0f);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 vy = _mm256_loadu_ps(y + i);
        __m256 t = _mm256_sub_ps(one, vy);
        t = _mm256_mul_ps(vy, t);
        t = _mm256_mul_ps(_mm256_loadu_ps(gout + i), t);
        _mm256_storeu_ps(gin + i, _mm256_add_ps(_mm256_loadu_ps(gin + i), t));
    }
    for (; i < n; ++i) {
        float t = 1.0f - y[i];
        t = y[i] * t;
        gin[i] += gout[i] * t;
    }
}

void adam_step(float* p, float* m, float* v, const float* g, std::size_t n,
               const AdamHyper& h) {
    const float c1s = 1.0f - h.beta1;
    const float c2s = 1.0f - h.beta2;
    const __m256 b1 = _mm256_set1_ps(h.beta1);
    const __m256 b2 = _mm256_set1_ps(h.beta2);
    const __m256 c1 = _mm256_set1_ps(c1s);
    const __m256 c2 = _mm256_set1_ps(c2s);
    const __m256 i1 = _mm256_set1_ps(h.inv_bc1);
    const __m256 i2 = _mm256_set1_ps(h.inv_bc2);
    const __m256 lr = _mm256_set1_ps(h.lr);
    const __m256 eps = _mm256_set1_ps(h.eps);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 gi = _mm256_loadu_ps(g + i);
        __m256 mi = _mm256_loadu_ps(m + i);
        mi = _mm256_add_ps(_mm256_mul_ps(b1, mi), _mm256_mul_ps(c1, gi));
        _mm256_storeu_ps(m + i, mi);
        __m256 vi = _mm256_loadu_ps(v + i);
        vi = _mm256_add_ps(_mm256_mul_ps(b2, vi), _mm256_mul_ps(c2, _mm256_mul_ps(gi, gi)));
        _mm256_storeu_ps(v + i, vi);
        const __m256 mh = _mm256_mul_ps(mi, i1);
        const __m256 vh = _mm256_mul_ps(vi, i2);
        const __m256 den = _mm256_add_ps(_mm256_sqrt_ps(vh), eps);
        const __m256 upd = _mm256_div_ps(_mm256_mul_ps(lr, mh), den);
        _mm256_storeu_ps(p + i, _mm256_sub_ps(_mm256_loadu_ps(p + i), upd));
    }
    for (; i < n; ++i) {
        const float gi = g[i];
        m[i] = h.beta1 * m[i] + c1s * gi;
        v[i] = h.beta2 * v[i] + c2s * (gi * gi);
        const float mh = m[i] * h.inv_bc1;
        const float vh = v[i] * h.inv_bc2;
        const float den = std::sqrt(vh) + h.eps;
        p[i] = p[i] - (h.lr * mh) / den;
    }
}

#else // !__AVX2__: stubs keep the link intact on non-AVX2 toolchains

void axpy(float* d, const float* s, float a, std::size_t n) { scalar::axpy(d, s, a, n); }
void conv_row3(float* d, const float* s, const float w[3], std::size_t n) {
    scalar::conv_row3(d, s, w, n);
}
void dot_striped8(const float* a, const float* b, std::size_t n, float acc[8]) {
    scalar::dot_striped8(a, b, n, acc);
}
void relu(float* d, const float* s, std::size_t n) { scalar::relu(d, s, n); }
void relu_backward(float* g, const float* x, const float* go, std::size_t n) {
    scalar::relu_backward(g, x, go, n);
}
void sigmoid_backward(float* g, const float* y, const float* go, std::size_t n) {
    scalar::sigmoid_backward(g, y, go, n);
}
void adam_step(float* p, float* m, float* v, const float* g, std::size_t n,
               const AdamHyper& h) {
    scalar::adam_step(p, m, v, g, n, h);
}

#endif

} // namespace airnet::kernels::avx2
