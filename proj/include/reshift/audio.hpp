#pragma once

#include <cmath>
#include <vector>

#include "reshift/common.hpp"

namespace reshift {

// Mono waveform plus its sample rate. Samples are dimensionless amplitudes,
// nominally in [-1, 1].
struct AudioBuffer {
  std::vector<double> samples;
  int sample_rate = 44100;

  AudioBuffer() = default;
  AudioBuffer(std::vector<double> s, int rate) : samples(std::move(s)), sample_rate(rate) {}

  size_t size() const { return samples.size(); }
  double duration_seconds() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }

  void validate(const char* what = "audio") const {
    if (sample_rate <= 0) throw ConfigError(std::string(what) + ": sample_rate must be positive");
    for (double v : samples)
      if (!std::isfinite(v)) throw ConfigError(std::string(what) + ": non-finite sample");
  }
};

inline double rms(const std::vector<double>& x) {
  if (x.empty()) return 0.0;
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s / static_cast<double>(x.size()));
}

inline double peak_abs(const std::vector<double>& x) {
  double p = 0.0;
  for (double v : x) p = std::max(p, std::fabs(v));
  return p;
}

}  // namespace reshift
