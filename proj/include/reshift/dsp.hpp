#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <vector>

#include "reshift/audio.hpp"
#include "reshift/common.hpp"
#include "reshift/rng.hpp"
#include "reshift/tensor.hpp"

// Spectral front-end and back-end: STFT/ISTFT, mel filterbank, log-mel,
// MFCC, RMS envelope, windowed-sinc resampling, Griffin-Lim.

namespace reshift {

inline constexpr double kPi = 3.14159265358979323846;

enum class WindowKind { hann, rect };

struct SpectralConfig {
  int n_fft = 1024;
  int hop = 256;
  int win = 1024;
  WindowKind window = WindowKind::hann;

  int bins() const { return n_fft / 2 + 1; }

  void validate() const {
    if (hop <= 0 || win <= 0 || n_fft <= 0 || hop > win || win > n_fft)
      throw ConfigError("spectral config: need 0 < hop <= win <= n_fft");
    if (!is_power_of_two(static_cast<size_t>(n_fft)))
      throw ConfigError("spectral config: n_fft must be a power of two");
  }
};

struct MelConfig {
  SpectralConfig spectral;
  int n_mels = 128;
  double f_min = 0.0;
  double f_max = 22050.0;
  double log_floor = 1e-5;  // clamp on power before log
  int sample_rate = 44100;

  void validate() const {
    spectral.validate();
    if (sample_rate <= 0) throw ConfigError("mel config: sample_rate must be positive");
    if (n_mels < 1) throw ConfigError("mel config: n_mels must be >= 1");
    if (!(f_min >= 0.0 && f_min < f_max))
      throw ConfigError("mel config: need 0 <= f_min < f_max");
    if (f_max > sample_rate / 2.0 + 1e-9)
      throw ConfigError("mel config: f_max exceeds Nyquist");
    if (!(log_floor > 0.0)) throw ConfigError("mel config: log_floor must be positive");
  }
};

// frames x n_mels, natural-log power, floored at log(log_floor)
struct MelSpectrogram {
  Matrix data;
  MelConfig config;

  size_t frames() const { return data.rows; }
};

// frames x (n_fft/2+1), non-negative linear magnitude
struct MagnitudeSpectrogram {
  Matrix data;
  SpectralConfig config;
};

// per-frame RMS energy, hop-aligned to mel frames of the same config
struct VolumeEnvelope {
  std::vector<double> values;
};

// complex STFT frames
struct ComplexSpectrogram {
  size_t rows = 0;  // frames
  size_t cols = 0;  // bins
  std::vector<std::complex<double>> data;

  ComplexSpectrogram() = default;
  ComplexSpectrogram(size_t r, size_t c) : rows(r), cols(c), data(r * c) {}
  std::complex<double>& operator()(size_t r, size_t c) { return data[r * cols + c]; }
  const std::complex<double>& operator()(size_t r, size_t c) const { return data[r * cols + c]; }
};

// ---------------------------------------------------------------------------
// FFT (iterative radix-2, power-of-two sizes)
// ---------------------------------------------------------------------------

inline void fft_inplace(std::vector<std::complex<double>>& a, bool inverse) {
  const size_t n = a.size();
  if (!is_power_of_two(n)) throw ConfigError("fft: size must be a power of two");
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = (inverse ? 2.0 : -2.0) * kPi / static_cast<double>(len);
    const std::complex<double> step(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= step;
      }
    }
  }
  if (inverse) {
    const double inv = 1.0 / static_cast<double>(n);
    for (auto& x : a) x *= inv;
  }
}

// ---------------------------------------------------------------------------
// Framing
// ---------------------------------------------------------------------------

// Analysis window placed centered inside the n_fft frame. Hann is periodic.
inline std::vector<double> make_window(const SpectralConfig& cfg) {
  std::vector<double> w(static_cast<size_t>(cfg.n_fft), 0.0);
  const int offset = (cfg.n_fft - cfg.win) / 2;
  for (int i = 0; i < cfg.win; ++i) {
    double v = 1.0;
    if (cfg.window == WindowKind::hann)
      v = 0.5 * (1.0 - std::cos(2.0 * kPi * i / static_cast<double>(cfg.win)));
    w[static_cast<size_t>(offset + i)] = v;
  }
  return w;
}

inline size_t stft_frame_count(size_t samples, int hop) {
  return samples / static_cast<size_t>(hop) + 1;
}

// Reflection padding by pad samples on both ends (no edge repeat). Virtual
// index v maps to the triangle-wave fold of [0, n).
inline std::vector<double> reflect_pad(const std::vector<double>& x, size_t pad) {
  const long n = static_cast<long>(x.size());
  std::vector<double> out(x.size() + 2 * pad, 0.0);
  for (size_t j = 0; j < out.size(); ++j) {
    long v = static_cast<long>(j) - static_cast<long>(pad);
    if (n == 1) {
      out[j] = x[0];
      continue;
    }
    const long period = 2 * (n - 1);
    long m = v % period;
    if (m < 0) m += period;
    const long idx = m < n ? m : period - m;
    out[j] = x[static_cast<size_t>(idx)];
  }
  return out;
}

// STFT over a raw buffer with no padding: frame t covers [t*hop, t*hop+n_fft).
inline ComplexSpectrogram stft_raw(const std::vector<double>& padded, const SpectralConfig& cfg) {
  cfg.validate();
  if (padded.size() < static_cast<size_t>(cfg.n_fft))
    throw ConfigError("stft: buffer shorter than one frame");
  const std::vector<double> w = make_window(cfg);
  const size_t frames = (padded.size() - static_cast<size_t>(cfg.n_fft)) /
                            static_cast<size_t>(cfg.hop) + 1;
  const size_t bins = static_cast<size_t>(cfg.bins());
  ComplexSpectrogram spec(frames, bins);
  std::vector<std::complex<double>> buf(static_cast<size_t>(cfg.n_fft));
  for (size_t t = 0; t < frames; ++t) {
    const double* frame = padded.data() + t * static_cast<size_t>(cfg.hop);
    for (int i = 0; i < cfg.n_fft; ++i) buf[static_cast<size_t>(i)] = frame[i] * w[static_cast<size_t>(i)];
    fft_inplace(buf, false);
    for (size_t k = 0; k < bins; ++k) spec(t, k) = buf[k];
  }
  return spec;
}

// Least-squares inverse of stft_raw: windowed overlap-add normalized by the
// summed squared window.
inline std::vector<double> istft_raw(const ComplexSpectrogram& spec, const SpectralConfig& cfg,
                                     size_t out_len) {
  cfg.validate();
  if (spec.cols != static_cast<size_t>(cfg.bins()))
    throw ConfigError("istft: spectrogram bin count does not match config");
  const std::vector<double> w = make_window(cfg);
  const size_t n_fft = static_cast<size_t>(cfg.n_fft);
  std::vector<double> acc(out_len, 0.0);
  std::vector<double> wsum(out_len, 0.0);
  std::vector<std::complex<double>> buf(n_fft);
  for (size_t t = 0; t < spec.rows; ++t) {
    // rebuild the full conjugate-symmetric spectrum
    for (size_t k = 0; k < spec.cols; ++k) buf[k] = spec(t, k);
    for (size_t k = spec.cols; k < n_fft; ++k) buf[k] = std::conj(spec(t, n_fft - k));
    fft_inplace(buf, true);
    const size_t start = t * static_cast<size_t>(cfg.hop);
    for (size_t i = 0; i < n_fft && start + i < out_len; ++i) {
      acc[start + i] += buf[i].real() * w[i];
      wsum[start + i] += w[i] * w[i];
    }
  }
  for (size_t i = 0; i < out_len; ++i)
    if (wsum[i] > 1e-11) acc[i] /= wsum[i];
  return acc;
}

// ---------------------------------------------------------------------------
// STFT / ISTFT with center padding
// ---------------------------------------------------------------------------

// Frames are centered at t*hop via reflection padding of n_fft/2 on both
// ends; frame count is floor(len/hop)+1.
inline ComplexSpectrogram stft(const AudioBuffer& audio, const SpectralConfig& cfg) {
  cfg.validate();
  if (audio.samples.empty()) throw ConfigError("stft: empty input");
  const size_t pad = static_cast<size_t>(cfg.n_fft) / 2;
  return stft_raw(reflect_pad(audio.samples, pad), cfg);
}

inline AudioBuffer istft(const ComplexSpectrogram& spec, const SpectralConfig& cfg,
                         int sample_rate, size_t expected_len = 0) {
  const size_t pad = static_cast<size_t>(cfg.n_fft) / 2;
  const size_t padded_len = (spec.rows - 1) * static_cast<size_t>(cfg.hop) +
                            static_cast<size_t>(cfg.n_fft);
  std::vector<double> padded = istft_raw(spec, cfg, padded_len);
  size_t want = expected_len > 0 ? expected_len : (spec.rows - 1) * static_cast<size_t>(cfg.hop);
  want = std::min(want, padded_len - pad);
  std::vector<double> out(want);
  for (size_t i = 0; i < want; ++i) out[i] = padded[pad + i];
  return AudioBuffer(std::move(out), sample_rate);
}

inline MagnitudeSpectrogram magnitude_spectrogram(const AudioBuffer& audio,
                                                  const SpectralConfig& cfg) {
  const ComplexSpectrogram s = stft(audio, cfg);
  MagnitudeSpectrogram m;
  m.config = cfg;
  m.data = Matrix(s.rows, s.cols);
  for (size_t i = 0; i < s.data.size(); ++i) m.data.data[i] = std::abs(s.data[i]);
  return m;
}

// ---------------------------------------------------------------------------
// Mel filterbank and log-mel
// ---------------------------------------------------------------------------

// HTK mel scale.
inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// Triangular filters on the Hz axis, area-normalized (2 / bandwidth).
inline Matrix mel_filterbank(const MelConfig& cfg) {
  cfg.validate();
  const int bins = cfg.spectral.bins();
  const double mel_lo = hz_to_mel(cfg.f_min);
  const double mel_hi = hz_to_mel(cfg.f_max);
  std::vector<double> hz_pts(static_cast<size_t>(cfg.n_mels) + 2);
  for (int i = 0; i < cfg.n_mels + 2; ++i)
    hz_pts[static_cast<size_t>(i)] =
        mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / static_cast<double>(cfg.n_mels + 1));

  Matrix fb(static_cast<size_t>(cfg.n_mels), static_cast<size_t>(bins), 0.0);
  for (int m = 0; m < cfg.n_mels; ++m) {
    const double lo = hz_pts[static_cast<size_t>(m)];
    const double center = hz_pts[static_cast<size_t>(m) + 1];
    const double hi = hz_pts[static_cast<size_t>(m) + 2];
    const double enorm = 2.0 / (hi - lo);
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * cfg.sample_rate / cfg.spectral.n_fft;
      const double rise = (f - lo) / std::max(center - lo, 1e-12);
      const double fall = (hi - f) / std::max(hi - center, 1e-12);
      const double tri = std::max(0.0, std::min(rise, fall));
      fb(static_cast<size_t>(m), static_cast<size_t>(k)) = tri * enorm;
    }
  }
  return fb;
}

inline MelSpectrogram log_mel(const AudioBuffer& audio, const MelConfig& cfg) {
  cfg.validate();
  if (audio.sample_rate != cfg.sample_rate)
    throw ConfigError("log_mel: audio is " + std::to_string(audio.sample_rate) +
                      " Hz, config expects " + std::to_string(cfg.sample_rate) +
                      " Hz; resample first");
  const ComplexSpectrogram s = stft(audio, cfg.spectral);
  const Matrix fb = mel_filterbank(cfg);
  MelSpectrogram out;
  out.config = cfg;
  out.data = Matrix(s.rows, static_cast<size_t>(cfg.n_mels));
  std::vector<double> power(s.cols);
  for (size_t t = 0; t < s.rows; ++t) {
    for (size_t k = 0; k < s.cols; ++k) power[k] = std::norm(s(t, k));
    for (size_t m = 0; m < static_cast<size_t>(cfg.n_mels); ++m) {
      double acc = 0.0;
      const double* w = fb.row(m);
      for (size_t k = 0; k < s.cols; ++k) acc += w[k] * power[k];
      out.data(t, m) = std::log(std::max(acc, cfg.log_floor));
    }
  }
  return out;
}

// Orthonormal DCT-II of each row, first n_coeffs coefficients.
inline Matrix mfcc_from_log_mel(const Matrix& log_mel_data, int n_coeffs) {
  const size_t n_bands = log_mel_data.cols;
  if (static_cast<size_t>(n_coeffs) > n_bands)
    throw ConfigError("mfcc: n_coeffs exceeds mel band count");
  Matrix out(log_mel_data.rows, static_cast<size_t>(n_coeffs));
  for (size_t t = 0; t < log_mel_data.rows; ++t) {
    const double* x = log_mel_data.row(t);
    for (int k = 0; k < n_coeffs; ++k) {
      double acc = 0.0;
      for (size_t b = 0; b < n_bands; ++b)
        acc += x[b] * std::cos(kPi * k * (2.0 * b + 1.0) / (2.0 * static_cast<double>(n_bands)));
      const double scale = k == 0 ? std::sqrt(1.0 / static_cast<double>(n_bands))
                                  : std::sqrt(2.0 / static_cast<double>(n_bands));
      out(t, static_cast<size_t>(k)) = acc * scale;
    }
  }
  return out;
}

inline Matrix mfcc(const AudioBuffer& audio, const MelConfig& cfg, int n_coeffs = 13) {
  return mfcc_from_log_mel(log_mel(audio, cfg).data, n_coeffs);
}

// ---------------------------------------------------------------------------
// RMS envelope
// ---------------------------------------------------------------------------

// Same frame grid as the STFT (centered at t*hop) but zero-padded at the
// edges and unwindowed: value = sqrt(mean(sample^2)) over win samples.
inline VolumeEnvelope rms_envelope(const AudioBuffer& audio, const SpectralConfig& cfg) {
  cfg.validate();
  if (audio.samples.empty()) throw ConfigError("rms_envelope: empty input");
  const size_t frames = stft_frame_count(audio.samples.size(), cfg.hop);
  VolumeEnvelope env;
  env.values.resize(frames, 0.0);
  const long n = static_cast<long>(audio.samples.size());
  for (size_t t = 0; t < frames; ++t) {
    const long start = static_cast<long>(t) * cfg.hop - cfg.win / 2;
    double acc = 0.0;
    for (int i = 0; i < cfg.win; ++i) {
      const long idx = start + i;
      if (idx >= 0 && idx < n) {
        const double v = audio.samples[static_cast<size_t>(idx)];
        acc += v * v;
      }
    }
    env.values[t] = std::sqrt(acc / static_cast<double>(cfg.win));
  }
  return env;
}

// ---------------------------------------------------------------------------
// Resampling (windowed sinc, Kaiser beta = 12, 64-tap kernel)
// ---------------------------------------------------------------------------

namespace dsp_detail {

inline double bessel_i0(double x) {
  double sum = 1.0, term = 1.0;
  const double half_sq = x * x / 4.0;
  for (int k = 1; k < 64; ++k) {
    term *= half_sq / (static_cast<double>(k) * k);
    sum += term;
    if (term < sum * 1e-17) break;
  }
  return sum;
}

}  // namespace dsp_detail

inline AudioBuffer resample(const AudioBuffer& in, int target_rate) {
  if (in.sample_rate <= 0 || target_rate <= 0)
    throw ConfigError("resample: rates must be positive");
  if (target_rate == in.sample_rate) return in;

  const double ratio = static_cast<double>(target_rate) / in.sample_rate;  // out per in
  const size_t out_len =
      static_cast<size_t>(std::llround(static_cast<double>(in.samples.size()) * ratio));
  constexpr int kHalf = 32;
  constexpr double kBeta = 12.0;
  const double cutoff = 0.9475 * std::min(1.0, ratio);
  const double i0_beta = dsp_detail::bessel_i0(kBeta);
  const long n = static_cast<long>(in.samples.size());

  AudioBuffer out;
  out.sample_rate = target_rate;
  out.samples.resize(out_len, 0.0);
  for (size_t j = 0; j < out_len; ++j) {
    const double t = static_cast<double>(j) / ratio;  // position in input samples
    const long k0 = static_cast<long>(std::floor(t));
    double acc = 0.0;
    for (long k = k0 - kHalf + 1; k <= k0 + kHalf; ++k) {
      if (k < 0 || k >= n) continue;
      const double u = t - static_cast<double>(k);
      const double frac = u / kHalf;
      if (frac <= -1.0 || frac >= 1.0) continue;
      const double window = dsp_detail::bessel_i0(kBeta * std::sqrt(1.0 - frac * frac)) / i0_beta;
      const double a = kPi * cutoff * u;
      const double sinc = std::fabs(a) < 1e-12 ? 1.0 : std::sin(a) / a;
      acc += in.samples[static_cast<size_t>(k)] * cutoff * sinc * window;
    }
    out.samples[j] = acc;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Mel inversion + Griffin-Lim
// ---------------------------------------------------------------------------

// Per-frame non-negative least squares against the filterbank, solved by
// projected gradient with a power-iteration step size. Returns linear power
// per FFT bin.
inline Matrix mel_to_linear_power(const MelSpectrogram& mel, int nnls_iters = 50) {
  const Matrix fb = mel_filterbank(mel.config);
  const size_t bins = fb.cols;
  const size_t bands = fb.rows;

  // sparse rows: triangles touch few bins
  std::vector<size_t> row_start(bands), row_len(bands);
  for (size_t m = 0; m < bands; ++m) {
    size_t first = bins, last = 0;
    for (size_t k = 0; k < bins; ++k)
      if (fb(m, k) > 0.0) {
        first = std::min(first, k);
        last = std::max(last, k);
      }
    row_start[m] = first == bins ? 0 : first;
    row_len[m] = first == bins ? 0 : last - first + 1;
  }

  auto apply_fb = [&](const std::vector<double>& p, std::vector<double>& out) {
    for (size_t m = 0; m < bands; ++m) {
      double acc = 0.0;
      const double* w = fb.row(m) + row_start[m];
      const double* x = p.data() + row_start[m];
      for (size_t k = 0; k < row_len[m]; ++k) acc += w[k] * x[k];
      out[m] = acc;
    }
  };
  auto apply_fb_t = [&](const std::vector<double>& r, std::vector<double>& out) {
    std::fill(out.begin(), out.end(), 0.0);
    for (size_t m = 0; m < bands; ++m) {
      const double rm = r[m];
      if (rm == 0.0) continue;
      const double* w = fb.row(m) + row_start[m];
      double* x = out.data() + row_start[m];
      for (size_t k = 0; k < row_len[m]; ++k) x[k] += w[k] * rm;
    }
  };

  // Lipschitz constant of the gradient: top eigenvalue of fb^T fb.
  std::vector<double> v(bins, 1.0), fv(bands), tv(bins);
  double eig = 1.0;
  for (int it = 0; it < 30; ++it) {
    apply_fb(v, fv);
    apply_fb_t(fv, tv);
    double norm = 0.0;
    for (double x : tv) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-30) break;
    eig = norm;
    for (size_t k = 0; k < bins; ++k) v[k] = tv[k] / norm;
  }
  const double step = 1.0 / std::max(eig, 1e-12);

  Matrix power(mel.data.rows, bins, 0.0);
  std::vector<double> target(bands), p(bins), resid(bands), grad(bins);
  for (size_t t = 0; t < mel.data.rows; ++t) {
    for (size_t m = 0; m < bands; ++m) target[m] = std::exp(mel.data(t, m));
    // init: scaled adjoint
    apply_fb_t(target, p);
    apply_fb(p, resid);
    double num = 0.0, den = 0.0;
    for (size_t m = 0; m < bands; ++m) {
      num += resid[m] * target[m];
      den += resid[m] * resid[m];
    }
    const double s0 = den > 1e-30 ? num / den : 0.0;
    for (size_t k = 0; k < bins; ++k) p[k] = std::max(0.0, p[k] * s0);
    for (int it = 0; it < nnls_iters; ++it) {
      apply_fb(p, resid);
      for (size_t m = 0; m < bands; ++m) resid[m] -= target[m];
      apply_fb_t(resid, grad);
      for (size_t k = 0; k < bins; ++k) p[k] = std::max(0.0, p[k] - step * grad[k]);
    }
    for (size_t k = 0; k < bins; ++k) power(t, k) = p[k];
  }
  return power;
}

// Iterative phase reconstruction. Seed fixes the initial phases; the
// Frobenius distance to the target magnitude is recorded per iteration if
// requested.
inline AudioBuffer griffin_lim(const MelSpectrogram& mel, int iters, uint64_t seed,
                               std::vector<double>* distance_trace = nullptr) {
  if (iters < 1) throw ConfigError("griffin_lim: iters must be >= 1");
  mel.config.validate();
  const SpectralConfig& cfg = mel.config.spectral;
  const Matrix power = mel_to_linear_power(mel);
  Matrix target(power.rows, power.cols);
  for (size_t i = 0; i < power.data.size(); ++i) target.data[i] = std::sqrt(power.data[i]);

  const size_t frames = target.rows;
  const size_t bins = target.cols;
  const size_t padded_len =
      (frames - 1) * static_cast<size_t>(cfg.hop) + static_cast<size_t>(cfg.n_fft);

  Rng rng(seed);
  ComplexSpectrogram spec(frames, bins);
  for (size_t i = 0; i < spec.data.size(); ++i) {
    const double phase = rng.uniform(0.0, 2.0 * kPi);
    spec.data[i] = std::polar(target.data[i], phase);
  }

  std::vector<double> x;
  for (int it = 0; it < iters; ++it) {
    x = istft_raw(spec, cfg, padded_len);
    const ComplexSpectrogram re = stft_raw(x, cfg);
    if (distance_trace) {
      double d = 0.0;
      for (size_t i = 0; i < re.data.size(); ++i) {
        const double diff = target.data[i] - std::abs(re.data[i]);
        d += diff * diff;
      }
      distance_trace->push_back(std::sqrt(d));
    }
    for (size_t i = 0; i < re.data.size(); ++i) {
      const double mag = std::abs(re.data[i]);
      spec.data[i] = mag > 0.0 ? re.data[i] * (target.data[i] / mag)
                               : std::complex<double>(target.data[i], 0.0);
    }
  }
  x = istft_raw(spec, cfg, padded_len);

  const size_t pad = static_cast<size_t>(cfg.n_fft) / 2;
  const size_t out_len = (frames - 1) * static_cast<size_t>(cfg.hop);
  std::vector<double> out(out_len);
  for (size_t i = 0; i < out_len; ++i) out[i] = x[pad + i];
  return AudioBuffer(std::move(out), mel.config.sample_rate);
}

}  // namespace reshift
