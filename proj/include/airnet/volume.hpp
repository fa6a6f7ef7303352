#ifndef AIRNET_VOLUME_HPP
#define AIRNET_VOLUME_HPP

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace airnet {

struct Index3 {
    int x = 0, y = 0, z = 0;

    friend bool operator==(const Index3&, const Index3&) = default;
};

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    friend bool operator==(const Vec3&, const Vec3&) = default;
};

enum class ElementKind {
    ct_hu,       // signed 16-bit integer semantics (Hounsfield units)
    binary_mask, // values restricted to {0, 1}
    probability  // values restricted to [0, 1]
};

const char* element_kind_name(ElementKind k);

/// Dense 3D scalar grid. Data is stored x-fastest: index(x,y,z) =
/// x + nx*(y + ny*z), matching the MetaImage raw payload layout.
class Volume3D {
public:
    Volume3D() = default;
    Volume3D(Index3 dims, Vec3 spacing, Vec3 origin, ElementKind kind);
    Volume3D(Index3 dims, Vec3 spacing, Vec3 origin, ElementKind kind,
             std::vector<float> data);

    const Index3& dims() const { return dims_; }
    const Vec3& spacing() const { return spacing_; }
    const Vec3& origin() const { return origin_; }
    ElementKind kind() const { return kind_; }
    void set_kind(ElementKind k) { kind_ = k; }
    void set_origin(Vec3 o) { origin_ = o; }

    std::size_t voxel_count() const { return data_.size(); }

    std::size_t index(int x, int y, int z) const {
        return static_cast<std::size_t>(x) +
               static_cast<std::size_t>(dims_.x) *
                   (static_cast<std::size_t>(y) +
                    static_cast<std::size_t>(dims_.y) * static_cast<std::size_t>(z));
    }

    float at(int x, int y, int z) const { return data_[index(x, y, z)]; }
    float& at(int x, int y, int z) { return data_[index(x, y, z)]; }

    bool in_bounds(int x, int y, int z) const {
        return x >= 0 && y >= 0 && z >= 0 && x < dims_.x && y < dims_.y && z < dims_.z;
    }

    const std::vector<float>& data() const { return data_; }
    std::vector<float>& data() { return data_; }

    void fill(float v) { std::fill(data_.begin(), data_.end(), v); }

    /// Re-checks the element-kind value constraints; throws on violation.
    void validate_values() const;

    std::size_t count_nonzero() const;

private:
    Index3 dims_{0, 0, 0};
    Vec3 spacing_{1.0, 1.0, 1.0};
    Vec3 origin_{0.0, 0.0, 0.0};
    ElementKind kind_ = ElementKind::ct_hu;
    std::vector<float> data_;
};

/// Half-open voxel box: lo inclusive, hi exclusive.
struct BBox {
    Index3 lo;
    Index3 hi;

    Index3 size() const { return {hi.x - lo.x, hi.y - lo.y, hi.z - lo.z}; }
    bool valid_within(const Index3& dims) const;

    friend bool operator==(const BBox&, const BBox&) = default;
};

/// Tight bounding box of the mask foreground expanded by `buffer` voxels per
/// direction and clamped to the volume. Throws if the mask is empty.
BBox compute_roi_bbox(const Volume3D& lung_mask, int buffer = 30);

Volume3D crop(const Volume3D& v, const BBox& b);

/// Voxelwise product v*m; m must be a binary mask of identical dims.
Volume3D mask_apply(const Volume3D& v, const Volume3D& m);

// mask algebra on binary volumes of identical dims
Volume3D mask_and(const Volume3D& a, const Volume3D& b);
Volume3D mask_or(const Volume3D& a, const Volume3D& b);
Volume3D mask_and_not(const Volume3D& a, const Volume3D& b);
std::size_t overlap_count(const Volume3D& a, const Volume3D& b);

} // namespace airnet

#endif
