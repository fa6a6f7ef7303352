#include "airnet/kernels.hpp"

#include <cstdlib>
#include <cstring>
#include <stdexcept>

namespace airnet::kernels {

namespace {

enum class Backend { scalar_backend, avx2_backend };

Backend pick_initial() {
    if (const char* env = std::getenv("AIRNET_KERNELS")) {
        if (std::strcmp(env, "scalar") == 0) return Backend::scalar_backend;
        if (std::strcmp(env, "avx2") == 0) {
            if (!avx2::available())
                throw std::runtime_error("AIRNET_KERNELS=avx2 but CPU lacks AVX2");
            return Backend::avx2_backend;
        }
    }
    return avx2::available() ? Backend::avx2_backend : Backend::scalar_backend;
}

Backend& state() {
    static Backend b = pick_initial();
    return b;
}

} // namespace

const char* active_backend() {
    return state() == Backend::avx2_backend ? "avx2" : "scalar";
}

void set_backend(const char* name) {
    if (std::strcmp(name, "scalar") == 0) {
        state() = Backend::scalar_backend;
    } else if (std::strcmp(name, "avx2") == 0) {
        if (!avx2::available()) throw std::runtime_error("CPU lacks AVX2");
        state() = Backend::avx2_backend;
    } else {
        throw std::invalid_argument(std::string("unknown kernel backend: ") + name);
    }
}

void axpy(float* dst, const float* src, float a, std::size_t n) {
    state() == Backend::avx2_backend ? avx2::axpy(dst, src, a, n)
                                     : scalar::axpy(dst, src, a, n);
}

void conv_row3(float* dst, const float* src, const float w[3], std::size_t n) {
    state() == Backend::avx2_backend ? avx2::conv_row3(dst, src, w, n)
                                     : scalar::conv_row3(dst, src, w, n);
}

void dot_striped8(const float* a, const float* b, std::size_t n, float acc[8]) {
    state() == Backend::avx2_backend ? avx2::dot_striped8(a, b, n, acc)
                                     : scalar::dot_striped8(a, b, n, acc);
}

void relu(float* dst, const float* src, std::size_t n) {
    state() == Backend::avx2_backend ? avx2::relu(dst, src, n) : scalar::relu(dst, src, n);
}

void relu_backward(float* gin, const float* x, const float* gout, std::size_t n) {
    state() == Backend::avx2_backend ? avx2::relu_backward(gin, x, gout, n)
                                     : scalar::relu_backward(gin, x, gout, n);
}

void sigmoid_backward(float* gin, const float* y, const float* gout, std::size_t n) {
    state() == Backend::avx2_backend ? avx2::sigmoid_backward(gin, y, gout, n)
                                     : scalar::sigmoid_backward(gin, y, gout, n);
}

void adam_step(float* p, float* m, float* v, const float* g, std::size_t n,
               const AdamHyper& h) {
    state() == Backend::avx2_backend ? avx2::adam_step(p, m, v, g, n, h)
                                     : scalar::adam_step(p, m, v, g, n, h);
}

} // namespace airnet::kernels
