#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <vector>

#include "reshift/audio.hpp"
#include "reshift/common.hpp"
#include "reshift/psrt.hpp"

// Minimal RIFF/WAVE I/O. Reads PCM 16/24-bit and IEEE float 32-bit, taking
// the first channel of multichannel files. Writes 32-bit float mono.

namespace reshift {

namespace wav_detail {

inline uint32_t read_u32(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

inline uint16_t read_u16(const uint8_t* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

inline void put_u32(std::vector<uint8_t>& v, uint32_t x) {
  for (int b = 0; b < 4; ++b) v.push_back(static_cast<uint8_t>((x >> (8 * b)) & 0xff));
}

inline void put_u16(std::vector<uint8_t>& v, uint16_t x) {
  v.push_back(static_cast<uint8_t>(x & 0xff));
  v.push_back(static_cast<uint8_t>((x >> 8) & 0xff));
}

}  // namespace wav_detail

inline AudioBuffer read_wav(const std::filesystem::path& path) {
  using namespace wav_detail;
  const std::vector<uint8_t> bytes = read_file_bytes(path);
  auto fail = [&](const std::string& why) -> AudioBuffer {
    throw RuntimeError("wav: " + path.string() + ": " + why);
  };
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    return fail("not a RIFF/WAVE file");

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  const uint8_t* data = nullptr;
  size_t data_len = 0;
  bool have_fmt = false;

  size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const uint8_t* hdr = bytes.data() + pos;
    const uint32_t chunk_len = read_u32(hdr + 4);
    const uint8_t* body = hdr + 8;
    if (pos + 8 + chunk_len > bytes.size()) break;
    if (std::memcmp(hdr, "fmt ", 4) == 0 && chunk_len >= 16) {
      format = read_u16(body);
      channels = read_u16(body + 2);
      rate = read_u32(body + 4);
      bits = read_u16(body + 14);
      if (format == 0xFFFE && chunk_len >= 40) format = read_u16(body + 24);  // extensible
      have_fmt = true;
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      data = body;
      data_len = chunk_len;
    }
    pos += 8 + chunk_len + (chunk_len & 1);  // chunks are word-aligned
  }

  if (!have_fmt || !data) return fail("missing fmt or data chunk");
  if (channels == 0 || rate == 0) return fail("bad fmt chunk");

  AudioBuffer out;
  out.sample_rate = static_cast<int>(rate);
  const size_t bytes_per_sample = bits / 8;
  if (bytes_per_sample == 0) return fail("bad bit depth");
  const size_t frame_bytes = bytes_per_sample * channels;
  const size_t frames = data_len / frame_bytes;
  out.samples.resize(frames);

  if (format == 1 && bits == 16) {
    for (size_t i = 0; i < frames; ++i) {
      const uint8_t* p = data + i * frame_bytes;
      const int16_t s = static_cast<int16_t>(p[0] | (p[1] << 8));
      out.samples[i] = static_cast<double>(s) / 32768.0;
    }
  } else if (format == 1 && bits == 24) {
    for (size_t i = 0; i < frames; ++i) {
      const uint8_t* p = data + i * frame_bytes;
      int32_t s = (p[0] << 8) | (p[1] << 16) | (static_cast<int32_t>(p[2]) << 24);
      s >>= 8;
      out.samples[i] = static_cast<double>(s) / 8388608.0;
    }
  } else if (format == 3 && bits == 32) {
    for (size_t i = 0; i < frames; ++i) {
      float f;
      std::memcpy(&f, data + i * frame_bytes, 4);
      out.samples[i] = static_cast<double>(f);
    }
  } else {
    return fail("unsupported format tag " + std::to_string(format) + " / " +
                std::to_string(bits) + " bits");
  }
  return out;
}

// 32-bit float, mono.
inline void write_wav(const std::filesystem::path& path, const AudioBuffer& audio) {
  using namespace wav_detail;
  audio.validate("write_wav");
  const uint32_t n = static_cast<uint32_t>(audio.samples.size());
  const uint32_t data_bytes = n * 4;
  std::vector<uint8_t> out;
  out.reserve(58 + data_bytes);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put_u32(out, 4 + 24 + 8 + data_bytes);
  out.insert(out.end(), {'W', 'A', 'V', 'E'});
  out.insert(out.end(), {'f', 'm', 't', ' '});
  put_u32(out, 16);
  put_u16(out, 3);  // IEEE float
  put_u16(out, 1);  // mono
  put_u32(out, static_cast<uint32_t>(audio.sample_rate));
  put_u32(out, static_cast<uint32_t>(audio.sample_rate) * 4);
  put_u16(out, 4);
  put_u16(out, 32);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put_u32(out, data_bytes);
  const size_t at = out.size();
  out.resize(at + data_bytes);
  float* p = reinterpret_cast<float*>(out.data() + at);
  for (uint32_t i = 0; i < n; ++i) p[i] = static_cast<float>(audio.samples[i]);
  write_file_bytes(path, out);
}

}  // namespace reshift
