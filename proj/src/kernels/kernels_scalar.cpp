#include "airnet/kernels.hpp"

namespace airnet::kernels::scalar {

void axpy(float* dst, const float* src, float a, std::size_t n) {
    generic::axpy(dst, src, a, n);
}

void conv_row3(float* dst, const float* src, const float w[3], std::size_t n) {
    generic::conv_row3(dst, src, w, n);
}

void dot_striped8(const float* a, const float* b, std::size_t n, float acc[8]) {
    generic::dot_striped8(a, b, n, acc);
}

void relu(float* dst, const float* src, std::size_t n) {
    generic::relu(dst, src, n);
}

void relu_backward(float* gin, const float* x, const float* gout, std::size_t n) {
    generic::relu_backward(gin, x, gout, n);
}

void sigmoid_backward(float* gin, const float* y, const float* gout, std::size_t n) {
    generic::sigmoid_backward(gin, y, gout, n);
}

void adam_step(float* p, float* m, float* v, const float* g, std::size_t n,
               const AdamHyper& h) {
    const float c1 = 1.0f - h.beta1;
    const float c2 = 1.0f - h.beta2;
    for (std::size_t i = 0; i < n; ++i) {
        const float gi = g[i];
        m[i] = h.beta1 * m[i] + c1 * gi;
        v[i] = h.beta2 * v[i] + c2 * (gi * gi);
        const float mh = m[i] * h.inv_bc1;
        const float vh = v[i] * h.inv_bc2;
        const float den = std::sqrt(vh) + h.eps;
        p[i] = p[i] - (h.lr * mh) / den;
    }
}

} // namespace airnet::kernels::scalar
