#pragma once

#include <set>
#include <string>

#include <json.hpp>

#include "reshift/common.hpp"
#include "reshift/denoiser.hpp"
#include "reshift/dsp.hpp"
#include "reshift/pitch.hpp"

// JSON (de)serialization for the pipeline configs. Parsers reject unknown
// keys so config typos fail loudly instead of silently using defaults.

namespace reshift {

inline void reject_unknown_keys(const nlohmann::json& j, const std::set<std::string>& known,
                                const std::string& what) {
  if (!j.is_object()) throw ConfigError(what + ": expected a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key())) throw ConfigError(what + ": unknown key \"" + it.key() + "\"");
}

template <typename T>
T json_get(const nlohmann::json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  return j.at(key).get<T>();
}

inline nlohmann::json spectral_to_json(const SpectralConfig& c) {
  return {{"n_fft", c.n_fft}, {"hop", c.hop}, {"win", c.win}};
}

inline SpectralConfig spectral_from_json(const nlohmann::json& j) {
  reject_unknown_keys(j, {"n_fft", "hop", "win"}, "spectral config");
  SpectralConfig c;
  c.n_fft = json_get(j, "n_fft", c.n_fft);
  c.hop = json_get(j, "hop", c.hop);
  c.win = json_get(j, "win", c.win);
  c.validate();
  return c;
}

inline nlohmann::json mel_to_json(const MelConfig& c) {
  return {{"spectral", spectral_to_json(c.spectral)},
          {"n_mels", c.n_mels},
          {"f_min", c.f_min},
          {"f_max", c.f_max},
          {"log_floor", c.log_floor},
          {"sample_rate", c.sample_rate}};
}

inline MelConfig mel_from_json(const nlohmann::json& j) {
  reject_unknown_keys(j, {"spectral", "n_mels", "f_min", "f_max", "log_floor", "sample_rate"},
                      "mel config");
  MelConfig c;
  if (j.contains("spectral")) c.spectral = spectral_from_json(j.at("spectral"));
  c.n_mels = json_get(j, "n_mels", c.n_mels);
  c.f_min = json_get(j, "f_min", c.f_min);
  c.f_max = json_get(j, "f_max", c.f_max);
  c.log_floor = json_get(j, "log_floor", c.log_floor);
  c.sample_rate = json_get(j, "sample_rate", c.sample_rate);
  c.validate();
  return c;
}

inline nlohmann::json pitch_to_json(const PitchConfig& c) {
  return {{"f_min", c.f_min},
          {"f_max", c.f_max},
          {"hop", c.hop},
          {"voicing_threshold", c.voicing_threshold}};
}

inline PitchConfig pitch_from_json(const nlohmann::json& j) {
  reject_unknown_keys(j, {"f_min", "f_max", "hop", "voicing_threshold"}, "pitch config");
  PitchConfig c;
  c.f_min = json_get(j, "f_min", c.f_min);
  c.f_max = json_get(j, "f_max", c.f_max);
  c.hop = json_get(j, "hop", c.hop);
  c.voicing_threshold = json_get(j, "voicing_threshold", c.voicing_threshold);
  return c;
}

inline nlohmann::json denoiser_to_json(const DenoiserConfig& c) {
  return {{"n_mels", c.n_mels},     {"channels", c.channels},   {"cond_dim", c.cond_dim},
          {"f0_scale", c.f0_scale}, {"mel_mean", c.mel_mean},   {"mel_scale", c.mel_scale}};
}

inline DenoiserConfig denoiser_from_json(const nlohmann::json& j) {
  reject_unknown_keys(j, {"n_mels", "channels", "cond_dim", "f0_scale", "mel_mean", "mel_scale"},
                      "denoiser config");
  DenoiserConfig c;
  c.n_mels = json_get(j, "n_mels", c.n_mels);
  c.channels = json_get(j, "channels", c.channels);
  c.cond_dim = json_get(j, "cond_dim", c.cond_dim);
  c.f0_scale = json_get(j, "f0_scale", c.f0_scale);
  c.mel_mean = json_get(j, "mel_mean", c.mel_mean);
  c.mel_scale = json_get(j, "mel_scale", c.mel_scale);
  c.validate();
  return c;
}

// Training configuration; the on-disk JSON the train subcommand consumes.
struct TrainingConfig {
  int K = 100;
  double beta_start = 1e-4;
  double beta_end = 0.06;
  int T = 30;
  int stride = 10;
  double lambda_mel = 1.0;
  double lambda_f0 = 0.1;
  double lr = 2e-4;
  long lr_decay_every = 10000;
  int batch_size = 32;
  int block_frames = 512;
  int steps = 2000;
  int val_interval = 200;
  int channels = 64;
  double mel_mean = -3.0;
  double mel_scale = 8.0;
  uint64_t seed = 0;

  void validate() const {
    if (K < 1 || T < 1 || T > K || stride < 1) throw ConfigError("training config: bad K/T/stride");
    if (lambda_mel < 0.0 || lambda_f0 < 0.0) throw ConfigError("training config: negative lambda");
    if (lr <= 0.0 || batch_size < 1 || block_frames < 8 || steps < 0 || val_interval < 1)
      throw ConfigError("training config: bad optimizer settings");
  }
};

inline nlohmann::json training_to_json(const TrainingConfig& c) {
  return {{"schedule", {{"K", c.K}, {"beta_start", c.beta_start}, {"beta_end", c.beta_end}}},
          {"T", c.T},
          {"stride", c.stride},
          {"lambda1", c.lambda_mel},
          {"lambda2", c.lambda_f0},
          {"lr", c.lr},
          {"lr_decay_every", c.lr_decay_every},
          {"batch_size", c.batch_size},
          {"block_frames", c.block_frames},
          {"steps", c.steps},
          {"val_interval", c.val_interval},
          {"channels", c.channels},
          {"mel_mean", c.mel_mean},
          {"mel_scale", c.mel_scale},
          {"seed", c.seed}};
}

inline TrainingConfig training_from_json(const nlohmann::json& j) {
  reject_unknown_keys(j,
                      {"schedule", "T", "stride", "lambda1", "lambda2", "lr", "lr_decay_every",
                       "batch_size", "block_frames", "steps", "val_interval", "channels",
                       "mel_mean", "mel_scale", "seed"},
                      "training config");
  TrainingConfig c;
  if (j.contains("schedule")) {
    const auto& s = j.at("schedule");
    reject_unknown_keys(s, {"K", "beta_start", "beta_end"}, "schedule config");
    c.K = json_get(s, "K", c.K);
    c.beta_start = json_get(s, "beta_start", c.beta_start);
    c.beta_end = json_get(s, "beta_end", c.beta_end);
  }
  c.T = json_get(j, "T", c.T);
  c.stride = json_get(j, "stride", c.stride);
  c.lambda_mel = json_get(j, "lambda1", c.lambda_mel);
  c.lambda_f0 = json_get(j, "lambda2", c.lambda_f0);
  c.lr = json_get(j, "lr", c.lr);
  c.lr_decay_every = json_get(j, "lr_decay_every", c.lr_decay_every);
  c.batch_size = json_get(j, "batch_size", c.batch_size);
  c.block_frames = json_get(j, "block_frames", c.block_frames);
  c.steps = json_get(j, "steps", c.steps);
  c.val_interval = json_get(j, "val_interval", c.val_interval);
  c.channels = json_get(j, "channels", c.channels);
  c.mel_mean = json_get(j, "mel_mean", c.mel_mean);
  c.mel_scale = json_get(j, "mel_scale", c.mel_scale);
  c.seed = json_get(j, "seed", c.seed);
  c.validate();
  return c;
}

}  // namespace reshift
