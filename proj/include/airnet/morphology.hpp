#ifndef AIRNET_MORPHOLOGY_HPP
#define AIRNET_MORPHOLOGY_HPP

#include <cstdint>
#include <optional>
#include <vector>

#include "airnet/volume.hpp"

namespace airnet {

/// Dense labelling of a binary mask: 0 = background, labels 1..K ordered by
/// first foreground voxel in scan order.
struct LabelVolume {
    Index3 dims;
    Vec3 spacing;
    std::vector<std::int32_t> labels;
    std::vector<std::size_t> component_sizes; // indexed by label-1

    int num_components() const { return static_cast<int>(component_sizes.size()); }
    std::int32_t label_at(int x, int y, int z) const {
        return labels[static_cast<std::size_t>(x) +
                      static_cast<std::size_t>(dims.x) *
                          (static_cast<std::size_t>(y) +
                           static_cast<std::size_t>(dims.y) * static_cast<std::size_t>(z))];
    }
};

LabelVolume connected_components(const Volume3D& mask, int connectivity);

/// Largest component of a binary mask; empty input gives an empty mask.
Volume3D largest_component(const Volume3D& mask, int connectivity);

/// 6-connected set of voxels reachable from seed with intensity strictly
/// below upper_threshold. Throws if the seed itself fails the threshold.
Volume3D region_grow(const Volume3D& ct, Index3 seed, float upper_threshold_hu);

struct LungSegParams {
    float threshold_hu = -320.0f;
    int closing_radius = 2;
    double second_component_min_fraction = 0.25;
};

/// Air mask -> border-free components -> largest one or two -> closing and
/// slice-wise hole filling. Throws when no candidate component exists.
Volume3D segment_lungs(const Volume3D& ct, const LungSegParams& params = {});

struct CentralAirwayParams {
    // The phantom lumen renders at -950 HU, so the growth threshold sits
    // between lumen and parenchyma (-850 HU).
    float grow_threshold_hu = -900.0f;
    int seed_slab_slices = 10;
};

/// Seed voxel inside the trachea lumen: centroid of the largest
/// sub-threshold component within the most cranial (top-z) slices.
Index3 detect_trachea_seed(const Volume3D& ct, const CentralAirwayParams& params = {});

/// Region growth from the trachea seed restricted to voxels outside the
/// lung mask: the trachea plus extrapulmonary main bronchi.
Volume3D extract_central_airways(const Volume3D& ct, const Volume3D& lung_mask,
                                 std::optional<Index3> seed = std::nullopt,
                                 const CentralAirwayParams& params = {});

/// Topology-preserving thinning to 1-voxel-wide centerlines: six directional
/// sub-iterations per pass, sequential deletion of simple points (26-connned
/// foreground / 6-connected background characterization) with line-end
/// preservation, iterated to a fixpoint.
Volume3D skeletonize(const Volume3D& mask);

/// Per axial slice: background 4-components not connected to the slice
/// border become foreground.
Volume3D fill_holes_slicewise(const Volume3D& mask);

/// Binary closing with a Euclidean ball structuring element.
Volume3D morphological_close(const Volume3D& mask, int radius);

} // namespace airnet

#endif
