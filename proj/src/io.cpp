#include "modseg/io.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>

#include "modseg/error.hpp"

namespace modseg {

namespace {

constexpr char kMagic[4] = {'M', 'S', 'T', 'N'};
constexpr uint32_t kVersion = 1;
constexpr uint32_t kDtypeF32 = 1;
constexpr uint32_t kDtypeU8 = 2;

struct Header {
  uint32_t dtype = 0;
  std::vector<int64_t> shape;
  size_t payload_offset = 0;
  int64_t numel = 1;
};

void append_bytes(std::vector<uint8_t>& out, const void* p, size_t n) {
  const auto* b = static_cast<const uint8_t*>(p);
  out.insert(out.end(), b, b + n);
}

std::vector<uint8_t> encode_header(uint32_t dtype, const std::vector<int64_t>& shape) {
  std::vector<uint8_t> out;
  append_bytes(out, kMagic, 4);
  append_bytes(out, &kVersion, 4);
  append_bytes(out, &dtype, 4);
  const uint32_t rank = static_cast<uint32_t>(shape.size());
  append_bytes(out, &rank, 4);
  for (int64_t d : shape) {
    const uint64_t v = static_cast<uint64_t>(d);
    append_bytes(out, &v, 8);
  }
  return out;
}

Header decode_header(const std::vector<uint8_t>& bytes, const std::filesystem::path& path) {
  require(bytes.size() >= 16, path.string(), ": truncated tensor container");
  require(std::memcmp(bytes.data(), kMagic, 4) == 0, path.string(),
          ": not a tensor container (bad magic)");
  uint32_t version = 0, dtype = 0, rank = 0;
  std::memcpy(&version, bytes.data() + 4, 4);
  std::memcpy(&dtype, bytes.data() + 8, 4);
  std::memcpy(&rank, bytes.data() + 12, 4);
  require(version == kVersion, path.string(), ": unsupported container version ", version);
  require(rank <= 8, path.string(), ": implausible tensor rank ", rank);
  require(bytes.size() >= 16 + 8ull * rank, path.string(), ": truncated tensor header");
  Header h;
  h.dtype = dtype;
  for (uint32_t i = 0; i < rank; ++i) {
    uint64_t d = 0;
    std::memcpy(&d, bytes.data() + 16 + 8ull * i, 8);
    require(d > 0 && d < (1ull << 40), path.string(), ": bad tensor dimension ", d);
    h.shape.push_back(static_cast<int64_t>(d));
    h.numel *= static_cast<int64_t>(d);
  }
  h.payload_offset = 16 + 8ull * rank;
  return h;
}

}  // namespace

void write_tensor_f32(const std::filesystem::path& path, const Tensor& t) {
  std::vector<uint8_t> out = encode_header(kDtypeF32, t.shape());
  append_bytes(out, t.data(), sizeof(float) * static_cast<size_t>(t.numel()));
  write_file(path, out.data(), out.size());
}

Tensor read_tensor_f32(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  const Header h = decode_header(bytes, path);
  require(h.dtype == kDtypeF32, path.string(), ": expected float32 tensor, dtype=", h.dtype);
  require(bytes.size() == h.payload_offset + sizeof(float) * static_cast<size_t>(h.numel),
          path.string(), ": tensor payload size mismatch");
  Tensor t(h.shape);
  std::memcpy(t.data(), bytes.data() + h.payload_offset,
              sizeof(float) * static_cast<size_t>(h.numel));
  return t;
}

void write_tensor_u8(const std::filesystem::path& path, const std::vector<uint8_t>& data,
                     const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  require(n == static_cast<int64_t>(data.size()), "write_tensor_u8: shape/data mismatch");
  std::vector<uint8_t> out = encode_header(kDtypeU8, shape);
  append_bytes(out, data.data(), data.size());
  write_file(path, out.data(), out.size());
}

std::vector<uint8_t> read_tensor_u8(const std::filesystem::path& path,
                                    std::vector<int64_t>& shape_out) {
  const auto bytes = read_file(path);
  const Header h = decode_header(bytes, path);
  require(h.dtype == kDtypeU8, path.string(), ": expected uint8 tensor, dtype=", h.dtype);
  require(bytes.size() == h.payload_offset + static_cast<size_t>(h.numel), path.string(),
          ": tensor payload size mismatch");
  shape_out = h.shape;
  return std::vector<uint8_t>(bytes.begin() + static_cast<ptrdiff_t>(h.payload_offset),
                              bytes.end());
}

std::vector<uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "cannot open ", path.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<size_t>(in.tellg());
  in.seekg(0);
  std::vector<uint8_t> bytes(size);
  if (size > 0) in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
  require(in.good(), "short read on ", path.string());
  return bytes;
}

void write_file(const std::filesystem::path& path, const void* data, size_t size) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), "cannot open ", path.string(), " for writing");
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
  out.flush();
  require(out.good(), "short write on ", path.string());
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  write_file(path, text.data(), text.size());
}

std::string read_text_file(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return std::string(bytes.begin(), bytes.end());
}

bool is_gzip(const std::vector<uint8_t>& bytes) {
  return bytes.size() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b;
}

std::vector<uint8_t> gunzip(const std::vector<uint8_t>& compressed) {
  if (!is_gzip(compressed)) return compressed;
  z_stream zs{};
  // 15+32: accept zlib or gzip framing
  require(inflateInit2(&zs, 15 + 32) == Z_OK, "zlib init failed");
  std::vector<uint8_t> out;
  out.reserve(compressed.size() * 4);
  std::vector<uint8_t> buf(1 << 16);
  zs.next_in = const_cast<Bytef*>(compressed.data());
  zs.avail_in = static_cast<uInt>(compressed.size());
  int rc = Z_OK;
  do {
    zs.next_out = buf.data();
    zs.avail_out = static_cast<uInt>(buf.size());
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      fail("gzip decompression failed (zlib rc=", rc, ")");
    }
    out.insert(out.end(), buf.data(), buf.data() + (buf.size() - zs.avail_out));
  } while (rc != Z_STREAM_END);
  inflateEnd(&zs);
  return out;
}

uint64_t fnv1a(const void* data, size_t size, uint64_t seed) {
  const auto* p = static_cast<const uint8_t*>(data);
  uint64_t h = seed;
  for (size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

uint64_t fnv1a_file(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return fnv1a(bytes.data(), bytes.size());
}

}  // namespace modseg
