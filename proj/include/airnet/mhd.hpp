#ifndef AIRNET_MHD_HPP
#define AIRNET_MHD_HPP

#include <string>

#include "airnet/volume.hpp"

namespace airnet {

/// Reads a MetaImage header (.mhd) and its companion raw file.
///
/// Honored keys: NDims, DimSize, ElementType, ElementSpacing, Offset,
/// ElementDataFile, ElementByteOrderMSB / BinaryDataByteOrderMSB.
/// ElementType maps to the element kind: MET_SHORT -> ct_hu,
/// MET_UCHAR -> binary_mask, MET_FLOAT -> probability.
/// The raw payload is little-endian, x-fastest.
Volume3D read_mhd(const std::string& path);

/// Writes header + raw such that read_mhd(write_mhd(v)) == v bit-exactly.
/// The raw file is written next to the header with extension .raw.
void write_mhd(const Volume3D& v, const std::string& path);

} // namespace airnet

#endif
