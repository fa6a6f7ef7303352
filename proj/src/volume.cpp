#include "airnet/volume.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace airnet {

const char* element_kind_name(ElementKind k) {
    switch (k) {
    case ElementKind::ct_hu: return "ct_hu";
    case ElementKind::binary_mask: return "binary_mask";
    case ElementKind::probability: return "probability";
    }
    return "?";
}

static void check_geometry(const Index3& dims, const Vec3& spacing) {
    if (dims.x < 1 || dims.y < 1 || dims.z < 1)
        throw std::invalid_argument("Volume3D: all dims must be >= 1");
    if (!(spacing.x > 0.0) || !(spacing.y > 0.0) || !(spacing.z > 0.0))
        throw std::invalid_argument("Volume3D: spacing must be positive");
}

Volume3D::Volume3D(Index3 dims, Vec3 spacing, Vec3 origin, ElementKind kind)
    : dims_(dims), spacing_(spacing), origin_(origin), kind_(kind) {
    check_geometry(dims, spacing);
    data_.assign(static_cast<std::size_t>(dims.x) * dims.y * dims.z, 0.0f);
}

Volume3D::Volume3D(Index3 dims, Vec3 spacing, Vec3 origin, ElementKind kind,
                   std::vector<float> data)
    : dims_(dims), spacing_(spacing), origin_(origin), kind_(kind), data_(std::move(data)) {
    check_geometry(dims, spacing);
    const std::size_t expect = static_cast<std::size_t>(dims.x) * dims.y * dims.z;
    if (data_.size() != expect)
        throw std::invalid_argument("Volume3D: data length does not match dims");
}

void Volume3D::validate_values() const {
    switch (kind_) {
    case ElementKind::binary_mask:
        for (float v : data_)
            if (v != 0.0f && v != 1.0f)
                throw std::runtime_error("binary_mask volume contains a value outside {0,1}");
        break;
    case ElementKind::probability:
        for (float v : data_)
            if (!(v >= 0.0f && v <= 1.0f))
                throw std::runtime_error("probability volume contains a value outside [0,1]");
        break;
    case ElementKind::ct_hu:
        for (float v : data_) {
            if (v != static_cast<float>(static_cast<std::int64_t>(v)) || v < -32768.0f ||
                v > 32767.0f)
                throw std::runtime_error("ct_hu volume contains a non int16 value");
        }
        break;
    }
}

std::size_t Volume3D::count_nonzero() const {
    std::size_t n = 0;
    for (float v : data_)
        if (v != 0.0f) ++n;
    return n;
}

bool BBox::valid_within(const Index3& dims) const {
    return lo.x >= 0 && lo.y >= 0 && lo.z >= 0 && lo.x <= hi.x && lo.y <= hi.y &&
           lo.z <= hi.z && hi.x <= dims.x && hi.y <= dims.y && hi.z <= dims.z;
}

BBox compute_roi_bbox(const Volume3D& lung_mask, int buffer) {
    if (buffer < 0) throw std::invalid_argument("compute_roi_bbox: buffer must be >= 0");
    const Index3 d = lung_mask.dims();
    Index3 mn{d.x, d.y, d.z};
    Index3 mx{-1, -1, -1};
    for (int z = 0; z < d.z; ++z)
        for (int y = 0; y < d.y; ++y)
            for (int x = 0; x < d.x; ++x)
                if (lung_mask.at(x, y, z) != 0.0f) {
                    mn.x = std::min(mn.x, x);
                    mn.y = std::min(mn.y, y);
                    mn.z = std::min(mn.z, z);
                    mx.x = std::max(mx.x, x);
                    mx.y = std::max(mx.y, y);
                    mx.z = std::max(mx.z, z);
                }
    if (mx.x < 0) throw std::runtime_error("compute_roi_bbox: mask has no foreground");
    BBox b;
    b.lo = {std::max(0, mn.x - buffer), std::max(0, mn.y - buffer), std::max(0, mn.z - buffer)};
    b.hi = {std::min(d.x, mx.x + buffer + 1), std::min(d.y, mx.y + buffer + 1),
            std::min(d.z, mx.z + buffer + 1)};
    return b;
}

Volume3D crop(const Volume3D& v, const BBox& b) {
    if (!b.valid_within(v.dims()))
        throw std::invalid_argument("crop: box out of bounds");
    const Index3 sz = b.size();
    if (sz.x < 1 || sz.y < 1 || sz.z < 1)
        throw std::invalid_argument("crop: empty box");
    Vec3 origin{v.origin().x + b.lo.x * v.spacing().x,
                v.origin().y + b.lo.y * v.spacing().y,
                v.origin().z + b.lo.z * v.spacing().z};
    Volume3D out(sz, v.spacing(), origin, v.kind());
    for (int z = 0; z < sz.z; ++z)
        for (int y = 0; y < sz.y; ++y) {
            const float* src = &v.data()[v.index(b.lo.x, b.lo.y + y, b.lo.z + z)];
            float* dst = &out.data()[out.index(0, y, z)];
            std::copy(src, src + sz.x, dst);
        }
    return out;
}

Volume3D mask_apply(const Volume3D& v, const Volume3D& m) {
    if (!(v.dims() == m.dims()))
        throw std::invalid_argument("mask_apply: dims mismatch");
    Volume3D out = v;
    const std::vector<float>& mm = m.data();
    std::vector<float>& dd = out.data();
    for (std::size_t i = 0; i < dd.size(); ++i)
        dd[i] *= mm[i];
    return out;
}

static void check_same_dims(const Volume3D& a, const Volume3D& b, const char* who) {
    if (!(a.dims() == b.dims()))
        throw std::invalid_argument(std::string(who) + ": dims mismatch");
}

Volume3D mask_and(const Volume3D& a, const Volume3D& b) {
    check_same_dims(a, b, "mask_and");
    Volume3D out = a;
    for (std::size_t i = 0; i < out.data().size(); ++i)
        out.data()[i] = (a.data()[i] != 0.0f && b.data()[i] != 0.0f) ? 1.0f : 0.0f;
    return out;
}

Volume3D mask_or(const Volume3D& a, const Volume3D& b) {
    check_same_dims(a, b, "mask_or");
    Volume3D out = a;
    for (std::size_t i = 0; i < out.data().size(); ++i)
        out.data()[i] = (a.data()[i] != 0.0f || b.data()[i] != 0.0f) ? 1.0f : 0.0f;
    return out;
}

Volume3D mask_and_not(const Volume3D& a, const Volume3D& b) {
    check_same_dims(a, b, "mask_and_not");
    Volume3D out = a;
    for (std::size_t i = 0; i < out.data().size(); ++i)
        out.data()[i] = (a.data()[i] != 0.0f && b.data()[i] == 0.0f) ? 1.0f : 0.0f;
    return out;
}

std::size_t overlap_count(const Volume3D& a, const Volume3D& b) {
    check_same_dims(a, b, "overlap_count");
    std::size_t n = 0;
    for (std::size_t i = 0; i < a.data().size(); ++i)
        if (a.data()[i] != 0.0f && b.data()[i] != 0.0f) ++n;
    return n;
}

} // namespace airnet
