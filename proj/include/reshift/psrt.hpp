#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "reshift/common.hpp"
#include "reshift/tensor.hpp"

// PSRT tensor dump format:
//   magic "PSRT", u8 version = 1, u8 dtype (0 = f32, 1 = f64), u8 ndim,
//   u32-LE dims[ndim], row-major little-endian payload.
// Feature caches are written as f32; checkpoints use f64 so training state
// round-trips bit-exactly.

namespace reshift {

static_assert(std::endian::native == std::endian::little, "little-endian host required");

enum class PsrtDtype : uint8_t { f32 = 0, f64 = 1 };

struct PsrtTensor {
  PsrtDtype dtype = PsrtDtype::f32;
  std::vector<uint32_t> dims;
  std::vector<double> values;  // converted to double on read

  size_t element_count() const {
    size_t n = 1;
    for (uint32_t d : dims) n *= d;
    return n;
  }
};

inline std::vector<uint8_t> psrt_encode(const std::vector<uint32_t>& dims,
                                        const double* values, size_t count,
                                        PsrtDtype dtype) {
  size_t expect = 1;
  for (uint32_t d : dims) expect *= d;
  if (expect != count) throw ConfigError("psrt: dims do not match value count");
  if (dims.size() > 255) throw ConfigError("psrt: too many dims");

  const size_t elem = dtype == PsrtDtype::f32 ? 4 : 8;
  std::vector<uint8_t> out;
  out.reserve(7 + 4 * dims.size() + elem * count);
  out.push_back('P');
  out.push_back('S');
  out.push_back('R');
  out.push_back('T');
  out.push_back(1);  // version
  out.push_back(static_cast<uint8_t>(dtype));
  out.push_back(static_cast<uint8_t>(dims.size()));
  for (uint32_t d : dims) {
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<uint8_t>((d >> (8 * b)) & 0xff));
  }
  const size_t payload_at = out.size();
  out.resize(payload_at + elem * count);
  if (dtype == PsrtDtype::f32) {
    float* p = reinterpret_cast<float*>(out.data() + payload_at);
    for (size_t i = 0; i < count; ++i) p[i] = static_cast<float>(values[i]);
  } else {
    std::memcpy(out.data() + payload_at, values, 8 * count);
  }
  return out;
}

inline PsrtTensor psrt_decode(const uint8_t* bytes, size_t len, const std::string& what) {
  auto fail = [&](const std::string& why) -> PsrtTensor {
    throw RuntimeError("psrt: " + what + ": " + why);
  };
  if (len < 7) return fail("truncated header");
  if (std::memcmp(bytes, "PSRT", 4) != 0) return fail("bad magic");
  if (bytes[4] != 1) return fail("unsupported version " + std::to_string(bytes[4]));
  PsrtTensor t;
  if (bytes[5] > 1) return fail("unsupported dtype " + std::to_string(bytes[5]));
  t.dtype = static_cast<PsrtDtype>(bytes[5]);
  const size_t ndim = bytes[6];
  if (len < 7 + 4 * ndim) return fail("truncated dims");
  size_t count = 1;
  for (size_t i = 0; i < ndim; ++i) {
    uint32_t d = 0;
    for (int b = 0; b < 4; ++b) d |= static_cast<uint32_t>(bytes[7 + 4 * i + b]) << (8 * b);
    t.dims.push_back(d);
    count *= d;
  }
  const size_t elem = t.dtype == PsrtDtype::f32 ? 4 : 8;
  const size_t payload_at = 7 + 4 * ndim;
  if (len != payload_at + elem * count) return fail("payload size mismatch");
  t.values.resize(count);
  if (t.dtype == PsrtDtype::f32) {
    const float* p = reinterpret_cast<const float*>(bytes + payload_at);
    for (size_t i = 0; i < count; ++i) t.values[i] = static_cast<double>(p[i]);
  } else {
    std::memcpy(t.values.data(), bytes + payload_at, 8 * count);
  }
  return t;
}

inline void write_file_bytes(const std::filesystem::path& path, const std::vector<uint8_t>& bytes) {
  // Atomic write: temp file in the same directory, then rename.
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  std::FILE* f = std::fopen(tmp.string().c_str(), "wb");
  if (!f) throw RuntimeError("cannot open for write: " + tmp.string());
  const size_t n = std::fwrite(bytes.data(), 1, bytes.size(), f);
  std::fclose(f);
  if (n != bytes.size()) {
    std::filesystem::remove(tmp);
    throw RuntimeError("short write: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::vector<uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::FILE* f = std::fopen(path.string().c_str(), "rb");
  if (!f) throw RuntimeError("cannot open: " + path.string());
  std::fseek(f, 0, SEEK_END);
  const long sz = std::ftell(f);
  std::fseek(f, 0, SEEK_SET);
  std::vector<uint8_t> bytes(sz > 0 ? static_cast<size_t>(sz) : 0);
  const size_t n = bytes.empty() ? 0 : std::fread(bytes.data(), 1, bytes.size(), f);
  std::fclose(f);
  if (n != bytes.size()) throw RuntimeError("short read: " + path.string());
  return bytes;
}

inline void psrt_write(const std::filesystem::path& path, const std::vector<uint32_t>& dims,
                       const std::vector<double>& values, PsrtDtype dtype = PsrtDtype::f32) {
  write_file_bytes(path, psrt_encode(dims, values.data(), values.size(), dtype));
}

inline PsrtTensor psrt_read(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return psrt_decode(bytes.data(), bytes.size(), path.string());
}

inline void psrt_write_matrix(const std::filesystem::path& path, const Matrix& m,
                              PsrtDtype dtype = PsrtDtype::f32) {
  psrt_write(path, {static_cast<uint32_t>(m.rows), static_cast<uint32_t>(m.cols)}, m.data, dtype);
}

inline Matrix psrt_read_matrix(const std::filesystem::path& path) {
  PsrtTensor t = psrt_read(path);
  if (t.dims.size() != 2) throw RuntimeError("psrt: " + path.string() + ": expected 2-D tensor");
  Matrix m(t.dims[0], t.dims[1]);
  m.data = std::move(t.values);
  return m;
}

}  // namespace reshift
