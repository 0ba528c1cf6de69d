#include "modseg/nifti.hpp"

#include <cstring>

#include "modseg/error.hpp"
#include "modseg/io.hpp"

namespace modseg {

namespace {

template <typename T>
T read_at(const std::vector<uint8_t>& bytes, size_t offset) {
  T value;
  std::memcpy(&value, bytes.data() + offset, sizeof(T));
  return value;
}

template <typename T>
void convert(const uint8_t* raw, float* out, int64_t n, float slope, float inter) {
  for (int64_t i = 0; i < n; ++i) {
    T v;
    std::memcpy(&v, raw + i * sizeof(T), sizeof(T));
    out[i] = static_cast<float>(v) * slope + inter;
  }
}

}  // namespace

NiftiVolume load_nifti(const std::filesystem::path& path) {
  const auto bytes = gunzip(read_file(path));
  require(bytes.size() >= 352, path.string(), ": too short for a NIfTI-1 file");
  const auto sizeof_hdr = read_at<int32_t>(bytes, 0);
  require(sizeof_hdr == 348, path.string(), ": not a little-endian NIfTI-1 file (sizeof_hdr=",
          sizeof_hdr, ")");
  const char* magic = reinterpret_cast<const char*>(bytes.data() + 344);
  require(std::strncmp(magic, "n+1", 3) == 0 || std::strncmp(magic, "ni1", 3) == 0,
          path.string(), ": bad NIfTI magic");

  int16_t dim[8];
  std::memcpy(dim, bytes.data() + 40, sizeof(dim));
  require(dim[0] >= 3, path.string(), ": expected a 3D volume, ndim=", dim[0]);
  for (int d = 4; d <= dim[0]; ++d)
    require(dim[d] <= 1, path.string(), ": expected a single 3D volume, dim[", d, "]=", dim[d]);

  NiftiVolume vol;
  vol.nx = dim[1];
  vol.ny = dim[2];
  vol.nz = dim[3];
  require(vol.nx > 0 && vol.ny > 0 && vol.nz > 0, path.string(), ": bad dimensions");
  const int64_t n = vol.nx * vol.ny * vol.nz;

  const auto datatype = read_at<int16_t>(bytes, 70);
  float slope = read_at<float>(bytes, 112);
  const float inter = read_at<float>(bytes, 116);
  if (slope == 0.0f) slope = 1.0f;
  const auto vox_offset = static_cast<size_t>(read_at<float>(bytes, 108));
  require(std::strncmp(magic, "n+1", 3) != 0 || vox_offset >= 348, path.string(),
          ": bad vox_offset");

  size_t elem = 0;
  switch (datatype) {
    case 2: case 256: elem = 1; break;
    case 4: case 512: elem = 2; break;
    case 8: case 768: case 16: elem = 4; break;
    case 64: elem = 8; break;
    default: fail(path.string(), ": unsupported NIfTI datatype ", datatype);
  }
  require(bytes.size() >= vox_offset + elem * static_cast<size_t>(n), path.string(),
          ": truncated voxel data");

  vol.data.resize(static_cast<size_t>(n));
  const uint8_t* raw = bytes.data() + vox_offset;
  switch (datatype) {
    case 2: convert<uint8_t>(raw, vol.data.data(), n, slope, inter); break;
    case 256: convert<int8_t>(raw, vol.data.data(), n, slope, inter); break;
    case 4: convert<int16_t>(raw, vol.data.data(), n, slope, inter); break;
    case 512: convert<uint16_t>(raw, vol.data.data(), n, slope, inter); break;
    case 8: convert<int32_t>(raw, vol.data.data(), n, slope, inter); break;
    case 768: convert<uint32_t>(raw, vol.data.data(), n, slope, inter); break;
    case 16: convert<float>(raw, vol.data.data(), n, slope, inter); break;
    case 64: convert<double>(raw, vol.data.data(), n, slope, inter); break;
    default: break;
  }
  return vol;
}

}  // namespace modseg
