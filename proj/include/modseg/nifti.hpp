#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace modseg {

// Decoded single-volume NIfTI-1 image, voxels as float with scl_slope /
// scl_inter applied; x varies fastest (data[(z*ny + y)*nx + x]).
struct NiftiVolume {
  int64_t nz = 0, ny = 0, nx = 0;
  std::vector<float> data;
};

// Reads .nii or .nii.gz (little-endian, single 3D volume). Supported
// datatypes: uint8/int8, int16/uint16, int32/uint32, float32, float64.
NiftiVolume load_nifti(const std::filesystem::path& path);

}  // namespace modseg
