#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "modseg/tensor.hpp"

namespace modseg {

// Binary tensor container: magic "MSTN", u32 version, u32 dtype
// (1 = float32, 2 = uint8), u32 rank, u64 dims[rank], then raw
// little-endian payload.
void write_tensor_f32(const std::filesystem::path& path, const Tensor& t);
Tensor read_tensor_f32(const std::filesystem::path& path);

void write_tensor_u8(const std::filesystem::path& path, const std::vector<uint8_t>& data,
                     const std::vector<int64_t>& shape);
std::vector<uint8_t> read_tensor_u8(const std::filesystem::path& path,
                                    std::vector<int64_t>& shape_out);

std::vector<uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const void* data, size_t size);
void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

// Inflates zlib/gzip streams; plain (non-compressed) input is returned as-is
// when `auto_detect` finds no gzip magic.
std::vector<uint8_t> gunzip(const std::vector<uint8_t>& compressed);
bool is_gzip(const std::vector<uint8_t>& bytes);

// FNV-1a, used for dataset and artifact fingerprints in run manifests.
uint64_t fnv1a(const void* data, size_t size, uint64_t seed = 0xcbf29ce484222325ull);
uint64_t fnv1a_file(const std::filesystem::path& path);

}  // namespace modseg
