#pragma once

#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "reshift/common.hpp"
#include "reshift/config_json.hpp"
#include "reshift/denoiser.hpp"
#include "reshift/psrt.hpp"

// Checkpoint archive: magic "PSRA", u32-LE manifest length, manifest JSON,
// then the named tensors as concatenated PSRT blobs (f64) in manifest
// order. Holds denoiser weights, Adam state, and the full config snapshot,
// so a resumed run continues bit-exactly.

namespace reshift {

struct Checkpoint {
  DenoiserParams params;
  AdamState adam;
  TrainingConfig train;
  MelConfig mel;
  PitchConfig pitch;
};

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& cp) {
  nlohmann::json tensors = nlohmann::json::array();
  std::vector<std::vector<uint8_t>> blobs;

  auto add = [&](const std::string& name, const Tensor& t) {
    std::vector<uint32_t> dims;
    for (size_t d : t.shape) dims.push_back(static_cast<uint32_t>(d));
    blobs.push_back(psrt_encode(dims, t.v.data(), t.v.size(), PsrtDtype::f64));
    tensors.push_back({{"name", name}, {"bytes", blobs.back().size()}});
  };
  for (const Tensor& t : cp.params.tensors) add("param." + t.name, t);
  for (const Tensor& t : cp.adam.m) add("adam_m." + t.name, t);
  for (const Tensor& t : cp.adam.v) add("adam_v." + t.name, t);

  const nlohmann::json manifest = {{"version", 1},
                                   {"denoiser", denoiser_to_json(cp.params.cfg)},
                                   {"training", training_to_json(cp.train)},
                                   {"mel", mel_to_json(cp.mel)},
                                   {"pitch", pitch_to_json(cp.pitch)},
                                   {"adam_step", cp.adam.step},
                                   {"tensors", tensors}};
  const std::string mtext = manifest.dump();

  std::vector<uint8_t> out;
  out.insert(out.end(), {'P', 'S', 'R', 'A'});
  const uint32_t mlen = static_cast<uint32_t>(mtext.size());
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<uint8_t>((mlen >> (8 * b)) & 0xff));
  out.insert(out.end(), mtext.begin(), mtext.end());
  for (const auto& blob : blobs) out.insert(out.end(), blob.begin(), blob.end());
  write_file_bytes(path, out);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::vector<uint8_t> bytes = read_file_bytes(path);
  if (bytes.size() < 8 || std::memcmp(bytes.data(), "PSRA", 4) != 0)
    throw RuntimeError("checkpoint: " + path.string() + ": bad magic");
  uint32_t mlen = 0;
  for (int b = 0; b < 4; ++b) mlen |= static_cast<uint32_t>(bytes[4 + b]) << (8 * b);
  if (bytes.size() < 8 + mlen) throw RuntimeError("checkpoint: truncated manifest");
  const nlohmann::json manifest =
      nlohmann::json::parse(bytes.begin() + 8, bytes.begin() + 8 + mlen);
  if (manifest.at("version").get<int>() != 1)
    throw RuntimeError("checkpoint: unsupported version");

  Checkpoint cp;
  cp.train = training_from_json(manifest.at("training"));
  cp.mel = mel_from_json(manifest.at("mel"));
  cp.pitch = pitch_from_json(manifest.at("pitch"));
  const DenoiserConfig dcfg = denoiser_from_json(manifest.at("denoiser"));
  cp.params = denoiser_init(dcfg, 0);
  cp.adam = make_adam_state(cp.params);
  cp.adam.step = manifest.at("adam_step").get<long>();

  size_t at = 8 + mlen;
  for (const auto& tj : manifest.at("tensors")) {
    const std::string name = tj.at("name").get<std::string>();
    const size_t len = tj.at("bytes").get<size_t>();
    if (at + len > bytes.size()) throw RuntimeError("checkpoint: truncated tensor " + name);
    const PsrtTensor pt = psrt_decode(bytes.data() + at, len, name);
    at += len;

    Tensor* dst = nullptr;
    if (name.rfind("param.", 0) == 0)
      dst = &cp.params.at(name.substr(6));
    else if (name.rfind("adam_m.", 0) == 0)
      dst = &grad_at(cp.adam.m, name.substr(7));
    else if (name.rfind("adam_v.", 0) == 0)
      dst = &grad_at(cp.adam.v, name.substr(7));
    else
      throw RuntimeError("checkpoint: unexpected tensor " + name);
    if (pt.values.size() != dst->v.size())
      throw RuntimeError("checkpoint: size mismatch for " + name);
    dst->v = pt.values;
  }
  return cp;
}

}  // namespace reshift
