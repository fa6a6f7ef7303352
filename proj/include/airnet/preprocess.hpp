#ifndef AIRNET_PREPROCESS_HPP
#define AIRNET_PREPROCESS_HPP

#include "airnet/volume.hpp"

namespace airnet {

/// Clip to [-1000, 500] HU and map linearly to [0, 1]; the result is a
/// probability-kind volume (background air maps to 0).
Volume3D normalize_ct(const Volume3D& ct);

/// Symmetric zero-padding up to at least min_dims per axis (low side gets
/// the floor half). Returns v unchanged when already large enough.
Volume3D pad_to_min(const Volume3D& v, Index3 min_dims);

} // namespace airnet

#endif
