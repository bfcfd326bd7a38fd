#pragma once

// Shared synthetic-signal generators and brute-force oracles for the test
// suites. Everything here is independent of the library's spectral path so
// it can serve as an oracle for it.

#include <cmath>
#include <complex>
#include <vector>

#include "reshift/audio.hpp"
#include "reshift/rng.hpp"

namespace testsig {

constexpr double kPi = 3.14159265358979323846;

inline reshift::AudioBuffer sine(double freq, double seconds, int sr, double amp = 0.5,
                                 double phase0 = 0.0) {
  const size_t n = static_cast<size_t>(seconds * sr);
  std::vector<double> x(n);
  for (size_t i = 0; i < n; ++i) x[i] = amp * std::sin(2.0 * kPi * freq * i / sr + phase0);
  return reshift::AudioBuffer(std::move(x), sr);
}

// Band-limited sawtooth following an arbitrary per-sample f0 trajectory.
// Harmonic amplitudes fall off as 1/k; phase is integrated so the
// instantaneous frequency matches the trajectory exactly.
inline reshift::AudioBuffer sawtooth_traj(const std::vector<double>& f0_per_sample, int sr,
                                          double amp = 0.4) {
  const size_t n = f0_per_sample.size();
  double fmax = 0.0;
  for (double f : f0_per_sample) fmax = std::max(fmax, f);
  const int harmonics = std::max(1, static_cast<int>(0.45 * sr / fmax));
  std::vector<double> x(n, 0.0);
  double phase = 0.0;
  for (size_t i = 0; i < n; ++i) {
    phase += 2.0 * kPi * f0_per_sample[i] / sr;
    double v = 0.0;
    for (int k = 1; k <= harmonics; ++k) v += std::sin(k * phase) / k;
    x[i] = v;
  }
  double peak = 0.0;
  for (double v : x) peak = std::max(peak, std::fabs(v));
  if (peak > 0.0)
    for (double& v : x) v *= amp / peak;
  return reshift::AudioBuffer(std::move(x), sr);
}

inline reshift::AudioBuffer sawtooth(double f0, double seconds, int sr, double amp = 0.4) {
  return sawtooth_traj(std::vector<double>(static_cast<size_t>(seconds * sr), f0), sr, amp);
}

// Sawtooth "vocal": mean f0 with sinusoidal vibrato in cents.
inline reshift::AudioBuffer sawtooth_vibrato(double mean_f0, double seconds, int sr,
                                             double vibrato_cents = 30.0,
                                             double vibrato_hz = 5.0, double amp = 0.4) {
  const size_t n = static_cast<size_t>(seconds * sr);
  std::vector<double> f0(n);
  for (size_t i = 0; i < n; ++i) {
    const double m = vibrato_cents * std::sin(2.0 * kPi * vibrato_hz * i / sr);
    f0[i] = mean_f0 * std::exp2(m / 1200.0);
  }
  return sawtooth_traj(f0, sr, amp);
}

inline reshift::AudioBuffer white_noise(double seconds, int sr, uint64_t seed, double amp = 0.3) {
  reshift::Rng rng(seed);
  const size_t n = static_cast<size_t>(seconds * sr);
  std::vector<double> x(n);
  for (size_t i = 0; i < n; ++i) x[i] = amp * rng.normal() * 0.33;
  return reshift::AudioBuffer(std::move(x), sr);
}

inline reshift::AudioBuffer silence(double seconds, int sr) {
  return reshift::AudioBuffer(std::vector<double>(static_cast<size_t>(seconds * sr), 0.0), sr);
}

// O(n^2) DFT of one frame; the oracle for stft peak locations.
inline std::vector<std::complex<double>> brute_dft(const std::vector<double>& frame) {
  const size_t n = frame.size();
  std::vector<std::complex<double>> out(n);
  for (size_t k = 0; k < n; ++k) {
    std::complex<double> acc(0.0, 0.0);
    for (size_t j = 0; j < n; ++j) {
      const double ang = -2.0 * kPi * static_cast<double>(k) * static_cast<double>(j) /
                         static_cast<double>(n);
      acc += frame[j] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    out[k] = acc;
  }
  return out;
}

inline double rel_l2_error(const std::vector<double>& ref, const std::vector<double>& est,
                           size_t begin, size_t end) {
  double num = 0.0, den = 0.0;
  for (size_t i = begin; i < end && i < ref.size() && i < est.size(); ++i) {
    const double d = ref[i] - est[i];
    num += d * d;
    den += ref[i] * ref[i];
  }
  return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

}  // namespace testsig
