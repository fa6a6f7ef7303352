#ifndef AIRNET_PHANTOM_HPP
#define AIRNET_PHANTOM_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "airnet/volume.hpp"

namespace airnet {

struct TreeSpec {
    int generations = 3;        // 0 = trachea only; g generations -> 2^(g+1)-1 segments
    double root_radius_mm = 3.5;
    double taper = 0.80;        // child radius = parent radius * taper
    double angle_min_deg = 25.0;
    double angle_max_deg = 45.0;
    double length_to_radius = 6.0;
    std::uint64_t seed = 1;
};

struct TreeSegment {
    Vec3 p0, p1; // mm, voxel centers at index * spacing
    double radius_mm = 0.0;
    int generation = 0;
    int parent = -1;
};

struct CenterlineTree {
    std::vector<TreeSegment> segments;
    double total_length_mm() const;
};

/// Two lung ellipsoids; proportions follow the volume extent.
struct LungGeometry {
    Vec3 center_left, center_right;
    Vec3 semi_axes;

    bool inside_left(const Vec3& p) const;
    bool inside_right(const Vec3& p) const;
    bool inside(const Vec3& p) const { return inside_left(p) || inside_right(p); }
    /// min over both lungs of the normalized ellipsoid radius (<1 inside)
    double rho(const Vec3& p) const;
};

LungGeometry default_lungs(Index3 dims, double spacing_mm);

struct PhantomIntensities {
    float lumen_hu = -950.0f;
    float wall_hu = -200.0f;
    float parenchyma_hu = -850.0f;
    float vessel_hu = 0.0f;
    float body_hu = 40.0f;
    double wall_thickness_mm = 1.5;
};

struct PhantomConfig {
    Index3 dims{112, 112, 112};
    double spacing_mm = 0.7;
    TreeSpec tree;
    PhantomIntensities intensities;
    double noise_sigma_hu = 20.0;
    int vessels_per_lung = 3;
    std::uint64_t noise_seed = 2;
};

/// Recursive binary branching from a vertical trachea: bronchi aim into the
/// lung ellipsoids, deeper branches sample angles in range and are
/// rejection-resampled until they fit without self-intersection. Throws when
/// a branch cannot be placed.
CenterlineTree generate_tree(const TreeSpec& spec, const LungGeometry& lungs, Index3 dims,
                             double spacing_mm);

struct PhantomBundle {
    Volume3D ct;      // ct_hu
    Volume3D gt;      // airway lumen mask
    Volume3D lung;    // lung-field mask (analytic ellipsoids)
    Volume3D central; // extrapulmonary lumen: gt minus lungs
    CenterlineTree tree;
};

PhantomBundle render_ct(const CenterlineTree& tree, const PhantomConfig& cfg);

/// generate_tree + render_ct with the config's default lung geometry.
PhantomBundle make_phantom(const PhantomConfig& cfg);

/// Nearest-voxel rasterization of the centerline polylines (1 mm steps).
Volume3D voxelize_centerline(const CenterlineTree& tree, Index3 dims, double spacing_mm);

/// Emits ct/gt/lung/central MetaImage pairs plus a small text manifest.
void write_phantom(const PhantomBundle& bundle, const PhantomConfig& cfg,
                   const std::string& dir);

} // namespace airnet

#endif
