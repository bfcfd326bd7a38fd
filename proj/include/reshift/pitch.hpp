#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "reshift/audio.hpp"
#include "reshift/common.hpp"
#include "reshift/psrt.hpp"

// F0 estimation with voicing decisions (YIN cumulative-mean-normalized
// difference), plus contour arithmetic.

namespace reshift {

struct PitchConfig {
  double f_min = 65.0;
  double f_max = 800.0;
  int hop = 256;
  double voicing_threshold = 0.15;

  void validate(int sample_rate) const {
    if (!(f_min > 0.0 && f_min < f_max && f_max < sample_rate / 2.0))
      throw ConfigError("pitch config: need 0 < f_min < f_max < sample_rate/2");
    if (hop <= 0) throw ConfigError("pitch config: hop must be positive");
    if (!(voicing_threshold > 0.0 && voicing_threshold < 1.0))
      throw ConfigError("pitch config: voicing_threshold must be in (0,1)");
  }
};

// Per-frame fundamental frequency. f0[t] == 0 exactly when voiced[t] is
// false.
struct F0Contour {
  std::vector<double> f0;
  std::vector<uint8_t> voiced;
  int hop = 256;
  int sample_rate = 44100;

  size_t frames() const { return f0.size(); }

  size_t voiced_count() const {
    size_t n = 0;
    for (uint8_t v : voiced) n += v ? 1 : 0;
    return n;
  }

  double median_voiced_f0() const {
    std::vector<double> vals;
    for (size_t t = 0; t < f0.size(); ++t)
      if (voiced[t]) vals.push_back(f0[t]);
    if (vals.empty()) return 0.0;
    std::sort(vals.begin(), vals.end());
    const size_t n = vals.size();
    return n % 2 == 1 ? vals[n / 2] : 0.5 * (vals[n / 2 - 1] + vals[n / 2]);
  }
};

// 1200 * log2(f_est / f_ref)
inline double cents_between(double f_ref, double f_est) {
  if (!(f_ref > 0.0) || !(f_est > 0.0))
    throw ConfigError("cents_between: frequencies must be positive");
  return 1200.0 * std::log2(f_est / f_ref);
}

inline F0Contour shift_f0(const F0Contour& contour, double semitones) {
  F0Contour out = contour;
  const double ratio = std::exp2(semitones / 12.0);
  for (size_t t = 0; t < out.f0.size(); ++t)
    if (out.voiced[t]) out.f0[t] *= ratio;
  return out;
}

// YIN: difference function over an integration window of one maximum
// period, cumulative mean normalization, absolute-threshold voicing, and
// parabolic refinement of the chosen lag. Octave errors are damped by
// preferring the smallest lag whose CMND value is within 1.05x of the
// global minimum.
inline F0Contour estimate_f0(const AudioBuffer& audio, const PitchConfig& cfg) {
  audio.validate("estimate_f0");
  cfg.validate(audio.sample_rate);
  const double sr = static_cast<double>(audio.sample_rate);
  const int tau_min = std::max(2, static_cast<int>(std::floor(sr / cfg.f_max)));
  const int tau_max = static_cast<int>(std::ceil(sr / cfg.f_min)) + 2;
  const int window = tau_max;           // integration window
  const int span = window + tau_max;    // samples needed per frame
  if (static_cast<long>(audio.samples.size()) < window)
    throw ConfigError("estimate_f0: audio shorter than one analysis window");

  const size_t frames = audio.samples.size() / static_cast<size_t>(cfg.hop) + 1;
  F0Contour out;
  out.hop = cfg.hop;
  out.sample_rate = audio.sample_rate;
  out.f0.assign(frames, 0.0);
  out.voiced.assign(frames, 0);

  const long n = static_cast<long>(audio.samples.size());
  std::vector<double> frame(static_cast<size_t>(span));
  std::vector<double> diff(static_cast<size_t>(tau_max) + 1);
  std::vector<double> cmnd(static_cast<size_t>(tau_max) + 1);

  for (size_t t = 0; t < frames; ++t) {
    const long center = static_cast<long>(t) * cfg.hop;
    const long start = center - span / 2;
    for (int i = 0; i < span; ++i) {
      const long idx = start + i;
      frame[static_cast<size_t>(i)] =
          (idx >= 0 && idx < n) ? audio.samples[static_cast<size_t>(idx)] : 0.0;
    }

    diff[0] = 0.0;
    for (int tau = 1; tau <= tau_max; ++tau) {
      double acc = 0.0;
      const double* a = frame.data();
      const double* b = frame.data() + tau;
      for (int j = 0; j < window; ++j) {
        const double d = a[j] - b[j];
        acc += d * d;
      }
      diff[static_cast<size_t>(tau)] = acc;
    }

    cmnd[0] = 1.0;
    double running = 0.0;
    for (int tau = 1; tau <= tau_max; ++tau) {
      running += diff[static_cast<size_t>(tau)];
      cmnd[static_cast<size_t>(tau)] =
          running > 0.0 ? diff[static_cast<size_t>(tau)] * tau / running : 1.0;
    }

    // CMND dips below the voicing threshold, refined parabolically. Dips
    // are compared by interpolated depth because the true period of a
    // sampled waveform falls between integer lags, where its own
    // subharmonic (nearer an integer lag) would otherwise look deeper.
    struct Dip {
      double lag;
      double value;
    };
    std::vector<Dip> dips;
    for (int tau = tau_min + 1; tau < tau_max; ++tau) {
      const double y0 = cmnd[static_cast<size_t>(tau) - 1];
      const double y1 = cmnd[static_cast<size_t>(tau)];
      const double y2 = cmnd[static_cast<size_t>(tau) + 1];
      if (!(y1 <= y0 && y1 <= y2)) continue;
      if (y1 >= 4.0 * cfg.voicing_threshold) continue;  // cheap reject
      double lag = static_cast<double>(tau);
      double value = y1;
      const double denom = y0 - 2.0 * y1 + y2;
      if (denom > 1e-30) {
        const double delta = 0.5 * (y0 - y2) / denom;
        if (std::fabs(delta) < 1.0) {
          lag += delta;
          value = y1 - 0.125 * (y0 - y2) * (y0 - y2) / denom;
        }
      }
      // A true period between integer lags leaves the integer CMND well
      // above its interpolated depth, so the gate uses the latter.
      value = std::clamp(value, 0.0, y1);
      if (value >= cfg.voicing_threshold) continue;
      dips.push_back({lag, value});
    }
    if (dips.empty()) continue;  // unvoiced

    double global_min = dips[0].value;
    for (const Dip& d : dips) global_min = std::min(global_min, d.value);

    // smallest lag whose dip is within 1.05x of the global minimum (small
    // absolute slack so exact-zero minima do not reject their neighbors)
    const double accept = std::max(global_min * 1.05, global_min + 0.15 * cfg.voicing_threshold);
    double chosen_lag = dips[0].lag;
    for (const Dip& d : dips) {
      if (d.value <= accept) {
        chosen_lag = d.lag;
        break;
      }
    }

    double f0 = sr / chosen_lag;
    // allow a small undershoot at the range edges before rejecting
    if (f0 < cfg.f_min) {
      if (f0 >= cfg.f_min * 0.97) f0 = cfg.f_min;
      else continue;
    }
    if (f0 > cfg.f_max) {
      if (f0 <= cfg.f_max * 1.03) f0 = cfg.f_max;
      else continue;
    }
    out.f0[t] = f0;
    out.voiced[t] = 1;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

// PSRT layout: 2 x frames, row 0 = f0 Hz, row 1 = voiced flag as 0/1.
inline void f0_write_psrt(const std::filesystem::path& path, const F0Contour& c) {
  std::vector<double> flat(2 * c.f0.size());
  for (size_t t = 0; t < c.f0.size(); ++t) {
    flat[t] = c.f0[t];
    flat[c.f0.size() + t] = c.voiced[t] ? 1.0 : 0.0;
  }
  psrt_write(path, {2, static_cast<uint32_t>(c.f0.size())}, flat, PsrtDtype::f32);
}

inline F0Contour f0_read_psrt(const std::filesystem::path& path, int hop, int sample_rate) {
  const PsrtTensor t = psrt_read(path);
  if (t.dims.size() != 2 || t.dims[0] != 2)
    throw RuntimeError("f0 psrt: " + path.string() + ": expected 2 x frames tensor");
  F0Contour c;
  c.hop = hop;
  c.sample_rate = sample_rate;
  const size_t frames = t.dims[1];
  c.f0.resize(frames);
  c.voiced.resize(frames);
  for (size_t i = 0; i < frames; ++i) {
    c.voiced[i] = t.values[frames + i] > 0.5 ? 1 : 0;
    c.f0[i] = c.voiced[i] ? t.values[i] : 0.0;
  }
  return c;
}

inline std::string f0_to_csv(const F0Contour& c) {
  std::string out = "frame,f0_hz,voiced\n";
  char line[64];
  for (size_t t = 0; t < c.f0.size(); ++t) {
    std::snprintf(line, sizeof(line), "%zu,%.6f,%d\n", t, c.f0[t], c.voiced[t] ? 1 : 0);
    out += line;
  }
  return out;
}

}  // namespace reshift
