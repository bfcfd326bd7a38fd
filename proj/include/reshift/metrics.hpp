#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "reshift/audio.hpp"
#include "reshift/common.hpp"
#include "reshift/dsp.hpp"
#include "reshift/pitch.hpp"
#include "reshift/rng.hpp"
#include "reshift/tensor.hpp"

// Pairwise and statistical evaluation suite: SC, LSD, SI-SDR, F0 RMSE in
// cents, log-F0 RMSE, V/UV error, MFCC distance, and kernel two-sample
// divergences (MMD, KID) over externally supplied embeddings.

namespace reshift {

struct MetricsReport {
  std::optional<double> sc;
  std::optional<double> lsd;
  std::optional<double> si_sdr_db;
  std::optional<double> f0_rmse_cents;
  std::optional<double> log_f0_rmse;
  std::optional<double> vuv_error_pct;
  std::optional<double> mfcc_l2;
  std::optional<double> mmd;
  std::optional<double> kid;
};

namespace metrics_detail {

inline size_t common_frames(const Matrix& a, const Matrix& b, const char* what) {
  if (a.cols != b.cols)
    throw ConfigError(std::string(what) + ": bin counts differ");
  if (a.rows != b.rows)
    log_warn("%s: frame counts differ (%zu vs %zu), cropping", what, a.rows, b.rows);
  return std::min(a.rows, b.rows);
}

inline double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace metrics_detail

// ||R - E||_F / ||R||_F, undefined for an all-zero reference.
inline std::optional<double> spectral_convergence(const Matrix& ref, const Matrix& est) {
  const size_t frames = metrics_detail::common_frames(ref, est, "spectral_convergence");
  double num = 0.0, den = 0.0;
  for (size_t t = 0; t < frames; ++t) {
    for (size_t k = 0; k < ref.cols; ++k) {
      const double d = ref(t, k) - est(t, k);
      num += d * d;
      den += ref(t, k) * ref(t, k);
    }
  }
  if (den <= 0.0) return std::nullopt;
  return std::sqrt(num) / std::sqrt(den);
}

// Mean over frames of the RMS log10 power-spectral difference; magnitudes
// floored at 1e-8 before the log.
inline double lsd(const Matrix& ref, const Matrix& est) {
  const size_t frames = metrics_detail::common_frames(ref, est, "lsd");
  constexpr double kFloor = 1e-8;
  double total = 0.0;
  for (size_t t = 0; t < frames; ++t) {
    double acc = 0.0;
    for (size_t k = 0; k < ref.cols; ++k) {
      const double r = std::max(ref(t, k), kFloor);
      const double e = std::max(est(t, k), kFloor);
      const double d = 2.0 * (std::log10(r) - std::log10(e));
      acc += d * d;
    }
    total += std::sqrt(acc / static_cast<double>(ref.cols));
  }
  return frames > 0 ? total / static_cast<double>(frames) : 0.0;
}

// Scale-invariant SDR in dB, capped at +-100. Undefined for a silent
// reference.
inline std::optional<double> si_sdr(const AudioBuffer& ref, const AudioBuffer& est) {
  const size_t n = std::min(ref.samples.size(), est.samples.size());
  if (n == 0) return std::nullopt;
  double mr = 0.0, me = 0.0;
  for (size_t i = 0; i < n; ++i) {
    mr += ref.samples[i];
    me += est.samples[i];
  }
  mr /= static_cast<double>(n);
  me /= static_cast<double>(n);
  double dot = 0.0, rr = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double r = ref.samples[i] - mr;
    const double e = est.samples[i] - me;
    dot += e * r;
    rr += r * r;
  }
  if (rr <= 0.0) return std::nullopt;
  const double scale = dot / rr;
  double sig = 0.0, err = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double r = ref.samples[i] - mr;
    const double e = est.samples[i] - me;
    const double s = scale * r;
    sig += s * s;
    err += (e - s) * (e - s);
  }
  if (sig <= 0.0) return -100.0;
  if (err <= 0.0) return 100.0;
  return std::clamp(10.0 * std::log10(sig / err), -100.0, 100.0);
}

// RMSE of 1200*log2(est/ref) over frames voiced in both contours.
inline std::optional<double> f0_rmse_cents(const F0Contour& ref, const F0Contour& est) {
  const size_t n = std::min(ref.frames(), est.frames());
  double acc = 0.0;
  size_t count = 0;
  for (size_t t = 0; t < n; ++t) {
    if (!ref.voiced[t] || !est.voiced[t]) continue;
    const double c = 1200.0 * std::log2(est.f0[t] / ref.f0[t]);
    acc += c * c;
    ++count;
  }
  if (count == 0) return std::nullopt;
  return std::sqrt(acc / static_cast<double>(count));
}

// RMSE of natural-log f0 over frames voiced in both contours.
inline std::optional<double> log_f0_rmse(const F0Contour& ref, const F0Contour& est) {
  const size_t n = std::min(ref.frames(), est.frames());
  double acc = 0.0;
  size_t count = 0;
  for (size_t t = 0; t < n; ++t) {
    if (!ref.voiced[t] || !est.voiced[t]) continue;
    const double d = std::log(est.f0[t]) - std::log(ref.f0[t]);
    acc += d * d;
    ++count;
  }
  if (count == 0) return std::nullopt;
  return std::sqrt(acc / static_cast<double>(count));
}

// Percentage of frames whose voicing flags disagree.
inline double vuv_error(const F0Contour& ref, const F0Contour& est) {
  const size_t n = std::min(ref.frames(), est.frames());
  if (n == 0) throw ConfigError("vuv_error: empty contours");
  size_t mismatch = 0;
  for (size_t t = 0; t < n; ++t)
    if ((ref.voiced[t] != 0) != (est.voiced[t] != 0)) ++mismatch;
  return 100.0 * static_cast<double>(mismatch) / static_cast<double>(n);
}

// Mean Euclidean distance between aligned 13-dim MFCC vectors.
inline double mfcc_distance(const AudioBuffer& ref, const AudioBuffer& est, const MelConfig& cfg,
                            int n_coeffs = 13) {
  if (ref.sample_rate != est.sample_rate)
    throw ConfigError("mfcc_distance: sample rates differ");
  const Matrix a = mfcc(ref, cfg, n_coeffs);
  const Matrix b = mfcc(est, cfg, n_coeffs);
  const size_t frames = std::min(a.rows, b.rows);
  double total = 0.0;
  for (size_t t = 0; t < frames; ++t) {
    double acc = 0.0;
    for (size_t k = 0; k < a.cols; ++k) {
      const double d = a(t, k) - b(t, k);
      acc += d * d;
    }
    total += std::sqrt(acc);
  }
  return frames > 0 ? total / static_cast<double>(frames) : 0.0;
}

// ---------------------------------------------------------------------------
// Kernel two-sample divergences
// ---------------------------------------------------------------------------

inline double rbf_kernel(const double* x, const double* y, size_t dim, double sigma) {
  double d2 = 0.0;
  for (size_t i = 0; i < dim; ++i) {
    const double d = x[i] - y[i];
    d2 += d * d;
  }
  return std::exp(-d2 / (2.0 * sigma * sigma));
}

inline double poly_kernel(const double* x, const double* y, size_t dim, int degree) {
  double dot = 0.0;
  for (size_t i = 0; i < dim; ++i) dot += x[i] * y[i];
  return std::pow(dot / static_cast<double>(dim) + 1.0, degree);
}

// MMD^2 with an RBF kernel. The unbiased estimator omits self pairs in the
// within-set terms and may be slightly negative; the biased variant uses
// plain means and is exactly zero for identical multisets.
inline double mmd_rbf(const Matrix& a, const Matrix& b, double sigma, bool biased = false) {
  if (a.cols != b.cols) throw ConfigError("mmd: embedding dimensions differ");
  const size_t m = a.rows, n = b.rows;
  if (m < 2 || n < 2) throw ConfigError("mmd: need at least 2 vectors per set");
  double kaa = 0.0, kbb = 0.0, kab = 0.0;
  for (size_t i = 0; i < m; ++i)
    for (size_t j = 0; j < m; ++j) {
      if (!biased && i == j) continue;
      kaa += rbf_kernel(a.row(i), a.row(j), a.cols, sigma);
    }
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < n; ++j) {
      if (!biased && i == j) continue;
      kbb += rbf_kernel(b.row(i), b.row(j), b.cols, sigma);
    }
  for (size_t i = 0; i < m; ++i)
    for (size_t j = 0; j < n; ++j) kab += rbf_kernel(a.row(i), b.row(j), a.cols, sigma);
  const double mm = static_cast<double>(m), nn = static_cast<double>(n);
  const double sa = biased ? kaa / (mm * mm) : kaa / (mm * (mm - 1.0));
  const double sb = biased ? kbb / (nn * nn) : kbb / (nn * (nn - 1.0));
  return sa + sb - 2.0 * kab / (mm * nn);
}

// Equal-size paired U-statistic MMD^2 used per KID subset; exactly zero
// when y is elementwise identical to x.
inline double mmd_paired_unbiased(const Matrix& x, const Matrix& y, int degree) {
  const size_t m = x.rows;
  if (m != y.rows || m < 2) throw ConfigError("kid: subsets must be equal-size, >= 2");
  double acc = 0.0;
  for (size_t i = 0; i < m; ++i)
    for (size_t j = 0; j < m; ++j) {
      if (i == j) continue;
      acc += poly_kernel(x.row(i), x.row(j), x.cols, degree) +
             poly_kernel(y.row(i), y.row(j), y.cols, degree) -
             poly_kernel(x.row(i), y.row(j), x.cols, degree) -
             poly_kernel(x.row(j), y.row(i), x.cols, degree);
    }
  return acc / (static_cast<double>(m) * (static_cast<double>(m) - 1.0));
}

// KID: mean over seeded subsets of the paired unbiased MMD^2 with a
// polynomial kernel (x.y/d + 1)^degree. When the two sets have equal size
// the same subset index pattern is applied to both, so identical sets score
// exactly zero.
inline double kid_poly(const Matrix& a, const Matrix& b, int degree, size_t subset_size,
                       int n_subsets, uint64_t seed) {
  if (a.cols != b.cols) throw ConfigError("kid: embedding dimensions differ");
  if (a.rows < 2 || b.rows < 2) throw ConfigError("kid: need at least 2 vectors per set");
  if (subset_size < 2) throw ConfigError("kid: subset_size must be >= 2");
  if (subset_size > std::min(a.rows, b.rows))
    throw ConfigError("kid: subset_size exceeds the smaller set");
  if (n_subsets < 1) throw ConfigError("kid: n_subsets must be >= 1");

  Rng rng(seed);
  auto draw = [&](size_t pool, size_t want) {
    std::vector<size_t> idx(pool);
    std::iota(idx.begin(), idx.end(), 0);
    for (size_t i = 0; i < want; ++i) {
      const size_t j = i + static_cast<size_t>(rng.uniform() * static_cast<double>(pool - i));
      std::swap(idx[i], idx[std::min(j, pool - 1)]);
    }
    idx.resize(want);
    return idx;
  };

  double total = 0.0;
  for (int s = 0; s < n_subsets; ++s) {
    const std::vector<size_t> ia = draw(a.rows, subset_size);
    const std::vector<size_t> ib = a.rows == b.rows ? ia : draw(b.rows, subset_size);
    Matrix xa(subset_size, a.cols), xb(subset_size, b.cols);
    for (size_t i = 0; i < subset_size; ++i) {
      std::copy(a.row(ia[i]), a.row(ia[i]) + a.cols, xa.row(i));
      std::copy(b.row(ib[i]), b.row(ib[i]) + b.cols, xb.row(i));
    }
    total += mmd_paired_unbiased(xa, xb, degree);
  }
  return total / static_cast<double>(n_subsets);
}

// ---------------------------------------------------------------------------
// Pair evaluation
// ---------------------------------------------------------------------------

// Evaluation grid: 44.1 kHz, hop 512.
struct EvalConfig {
  int sample_rate = 44100;
  SpectralConfig spectral{1024, 512, 1024, WindowKind::hann};
  PitchConfig pitch{65.0, 800.0, 512, 0.15};
  int n_mels = 128;
  int mfcc_coeffs = 13;

  MelConfig mel_config() const {
    MelConfig mc;
    mc.spectral = spectral;
    mc.n_mels = n_mels;
    mc.f_min = 0.0;
    mc.f_max = sample_rate / 2.0;
    mc.sample_rate = sample_rate;
    return mc;
  }
};

inline MetricsReport evaluate_pair(const AudioBuffer& ref_in, const AudioBuffer& est_in,
                                   const EvalConfig& cfg = EvalConfig{}) {
  AudioBuffer ref = resample(ref_in, cfg.sample_rate);
  AudioBuffer est = resample(est_in, cfg.sample_rate);
  const size_t n = std::min(ref.samples.size(), est.samples.size());
  if (n == 0) throw ConfigError("evaluate_pair: empty input");
  if (ref.samples.size() != est.samples.size())
    log_warn("evaluate_pair: lengths differ (%zu vs %zu), cropping", ref.samples.size(),
             est.samples.size());
  ref.samples.resize(n);
  est.samples.resize(n);

  MetricsReport rep;
  const MagnitudeSpectrogram mr = magnitude_spectrogram(ref, cfg.spectral);
  const MagnitudeSpectrogram me = magnitude_spectrogram(est, cfg.spectral);
  rep.sc = spectral_convergence(mr.data, me.data);
  rep.lsd = lsd(mr.data, me.data);
  rep.si_sdr_db = si_sdr(ref, est);

  const F0Contour fr = estimate_f0(ref, cfg.pitch);
  const F0Contour fe = estimate_f0(est, cfg.pitch);
  rep.f0_rmse_cents = f0_rmse_cents(fr, fe);
  rep.log_f0_rmse = log_f0_rmse(fr, fe);
  rep.vuv_error_pct = vuv_error(fr, fe);
  rep.mfcc_l2 = mfcc_distance(ref, est, cfg.mel_config(), cfg.mfcc_coeffs);
  return rep;
}

// ---------------------------------------------------------------------------
// JSON serialization
// ---------------------------------------------------------------------------

inline nlohmann::json metrics_to_json(const MetricsReport& r) {
  auto put = [](const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  return nlohmann::json{{"sc", put(r.sc)},
                        {"lsd", put(r.lsd)},
                        {"si_sdr_db", put(r.si_sdr_db)},
                        {"f0_rmse_cents", put(r.f0_rmse_cents)},
                        {"log_f0_rmse", put(r.log_f0_rmse)},
                        {"vuv_error_pct", put(r.vuv_error_pct)},
                        {"mfcc_l2", put(r.mfcc_l2)},
                        {"mmd", put(r.mmd)},
                        {"kid", put(r.kid)}};
}

inline MetricsReport metrics_from_json(const nlohmann::json& j) {
  MetricsReport r;
  auto get = [&](const char* key) -> std::optional<double> {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<double>();
  };
  r.sc = get("sc");
  r.lsd = get("lsd");
  r.si_sdr_db = get("si_sdr_db");
  r.f0_rmse_cents = get("f0_rmse_cents");
  r.log_f0_rmse = get("log_f0_rmse");
  r.vuv_error_pct = get("vuv_error_pct");
  r.mfcc_l2 = get("mfcc_l2");
  r.mmd = get("mmd");
  r.kid = get("kid");
  return r;
}

}  // namespace reshift
