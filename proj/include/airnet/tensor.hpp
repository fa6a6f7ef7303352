#ifndef AIRNET_TENSOR_HPP
#define AIRNET_TENSOR_HPP

#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace airnet {

/// Dense N-d value. Feature maps use shape {C, Z, Y, X} with X contiguous
/// (same linear layout as Volume3D data); conv weights use {Co, Ci, Kz, Ky, Kx}.
template <class T>
class TensorT {
public:
    TensorT() = default;

    explicit TensorT(std::vector<int> shape) : shape_(std::move(shape)) {
        data_.assign(count(shape_), T(0));
    }

    TensorT(std::vector<int> shape, std::vector<T> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != count(shape_))
            throw std::invalid_argument("Tensor: data length does not match shape");
    }

    static TensorT scalar(T v) { return TensorT({1}, {v}); }

    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int extent(int i) const { return shape_[static_cast<std::size_t>(i)]; }
    std::size_t size() const { return data_.size(); }
    bool is_scalar() const { return data_.size() == 1; }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& vec() { return data_; }
    const std::vector<T>& vec() const { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    bool same_shape(const TensorT& o) const { return shape_ == o.shape_; }

    static std::size_t count(const std::vector<int>& shape) {
        std::size_t n = 1;
        for (int e : shape) {
            if (e < 1) throw std::invalid_argument("Tensor: extents must be >= 1");
            n *= static_cast<std::size_t>(e);
        }
        return n;
    }

    template <class U>
    TensorT<U> cast() const {
        std::vector<U> d(data_.size());
        for (std::size_t i = 0; i < data_.size(); ++i) d[i] = static_cast<U>(data_[i]);
        return TensorT<U>(shape_, std::move(d));
    }

private:
    std::vector<int> shape_;
    std::vector<T> data_;
};

using Tensor = TensorT<float>;

inline std::string shape_str(const std::vector<int>& s) {
    std::string r = "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) r += ",";
        r += std::to_string(s[i]);
    }
    return r + ")";
}

} // namespace airnet

#endif
