#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "reshift/common.hpp"
#include "reshift/conditioning.hpp"
#include "reshift/denoiser.hpp"
#include "reshift/dsp.hpp"
#include "reshift/rng.hpp"
#include "reshift/tensor.hpp"

// Shallow mel-space DDPM: linear-beta schedule, forward noising, x0
// inversion, deterministic DDIM stepping with arbitrary stride, shallow
// initialization from the artifact mel, the training losses, and the full
// restoration loop.

namespace reshift {

struct NoiseSchedule {
  int K = 0;
  std::vector<double> beta;       // beta[t-1] for t in [1, K]
  std::vector<double> alpha;      // 1 - beta
  std::vector<double> alpha_bar;  // alpha_bar[t] for t in [0, K], alpha_bar[0] = 1

  double abar(int t) const {
    if (t < 0 || t > K) throw ConfigError("schedule: step out of range");
    return alpha_bar[static_cast<size_t>(t)];
  }

  void validate() const {
    if (K < 1 || beta.size() != static_cast<size_t>(K) ||
        alpha_bar.size() != static_cast<size_t>(K) + 1)
      throw ConfigError("schedule: inconsistent sizes");
    if (alpha_bar[0] != 1.0) throw ConfigError("schedule: alpha_bar[0] must be 1");
    for (int t = 1; t <= K; ++t) {
      if (!(beta[static_cast<size_t>(t) - 1] > 0.0 && beta[static_cast<size_t>(t) - 1] < 1.0))
        throw ConfigError("schedule: beta out of (0,1)");
      if (!(alpha_bar[static_cast<size_t>(t)] < alpha_bar[static_cast<size_t>(t) - 1]))
        throw ConfigError("schedule: alpha_bar must strictly decrease");
    }
    if (!(alpha_bar[static_cast<size_t>(K)] > 0.0))
      throw ConfigError("schedule: alpha_bar[K] must stay positive");
  }
};

inline NoiseSchedule make_schedule(int K, double beta_start = 1e-4, double beta_end = 0.06) {
  if (K < 1) throw ConfigError("make_schedule: K must be >= 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
    throw ConfigError("make_schedule: need 0 < beta_start <= beta_end < 1");
  NoiseSchedule s;
  s.K = K;
  s.beta.resize(static_cast<size_t>(K));
  s.alpha.resize(static_cast<size_t>(K));
  s.alpha_bar.resize(static_cast<size_t>(K) + 1);
  s.alpha_bar[0] = 1.0;
  for (int t = 1; t <= K; ++t) {
    const double frac = K > 1 ? static_cast<double>(t - 1) / static_cast<double>(K - 1) : 0.0;
    const double b = beta_start + (beta_end - beta_start) * frac;
    s.beta[static_cast<size_t>(t) - 1] = b;
    s.alpha[static_cast<size_t>(t) - 1] = 1.0 - b;
    s.alpha_bar[static_cast<size_t>(t)] = s.alpha_bar[static_cast<size_t>(t) - 1] * (1.0 - b);
  }
  s.validate();
  return s;
}

// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps
inline Matrix forward_noise(const Matrix& x0, int t, const Matrix& eps, const NoiseSchedule& s) {
  if (t < 1 || t > s.K) throw ConfigError("forward_noise: step out of [1, K]");
  require_same_shape(x0, eps, "forward_noise");
  const double a = s.abar(t);
  const double sa = std::sqrt(a), sn = std::sqrt(1.0 - a);
  Matrix out(x0.rows, x0.cols);
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = sa * x0.data[i] + sn * eps.data[i];
  return out;
}

// x0_hat = (x_t - sqrt(1 - abar_t) eps_hat) / sqrt(abar_t)
inline Matrix predict_x0(const Matrix& x_t, const Matrix& eps_hat, int t,
                         const NoiseSchedule& s) {
  require_same_shape(x_t, eps_hat, "predict_x0");
  const double a = s.abar(t);
  const double sa = std::sqrt(a), sn = std::sqrt(1.0 - a);
  Matrix out(x_t.rows, x_t.cols);
  for (size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = (x_t.data[i] - sn * eps_hat.data[i]) / sa;
  return out;
}

// Deterministic (eta = 0) update toward t_prev; abar(0) = 1 makes the final
// step return x0_hat exactly. Strides larger than one are allowed.
inline Matrix ddim_step(const Matrix& x_t, const Matrix& eps_hat, int t, int t_prev,
                        const NoiseSchedule& s) {
  if (t_prev >= t) throw ConfigError("ddim_step: t_prev must be below t");
  if (t < 1 || t > s.K || t_prev < 0) throw ConfigError("ddim_step: step out of range");
  require_same_shape(x_t, eps_hat, "ddim_step");
  const double a = s.abar(t);
  const double ap = s.abar(t_prev);
  const double sa = std::sqrt(a), sn = std::sqrt(1.0 - a);
  const double sap = std::sqrt(ap), snp = std::sqrt(1.0 - ap);
  Matrix out(x_t.rows, x_t.cols);
  for (size_t i = 0; i < out.data.size(); ++i) {
    const double x0 = (x_t.data[i] - sn * eps_hat.data[i]) / sa;
    out.data[i] = sap * x0 + snp * eps_hat.data[i];
  }
  return out;
}

// x_T = sqrt(abar_T) mel + sqrt(1 - abar_T) z; same formula as
// forward_noise, applied to the artifact mel as the shallow prior.
inline Matrix shallow_init(const Matrix& mel_art, int T, const Matrix& z,
                           const NoiseSchedule& s) {
  return forward_noise(mel_art, T, z, s);
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

inline double diffusion_loss(const Matrix& eps, const Matrix& eps_hat) {
  require_same_shape(eps, eps_hat, "diffusion_loss");
  double acc = 0.0;
  for (size_t i = 0; i < eps.data.size(); ++i) {
    const double d = eps.data[i] - eps_hat.data[i];
    acc += d * d;
  }
  return acc / static_cast<double>(eps.data.size());
}

inline double total_loss(double l_diff, double l_mel, double l_f0, double lambda1,
                         double lambda2) {
  if (lambda1 < 0.0 || lambda2 < 0.0) throw ConfigError("total_loss: lambdas must be >= 0");
  return l_diff + lambda1 * l_mel + lambda2 * l_f0;
}

// ---------------------------------------------------------------------------
// f0 from mel (training-side estimator)
// ---------------------------------------------------------------------------

// Band peak frequencies of the mel filterbank, with the index range whose
// peaks lie inside the trackable f0 limits.
struct MelBandGrid {
  std::vector<double> center_hz;  // per band
  size_t lo = 0;                  // first band inside [f_lo, f_hi]
  size_t hi = 0;                  // one past the last
};

inline MelBandGrid mel_band_grid(const MelConfig& cfg, double f_lo = 65.0, double f_hi = 800.0) {
  const Matrix fb = mel_filterbank(cfg);
  MelBandGrid grid;
  grid.center_hz.resize(fb.rows);
  for (size_t m = 0; m < fb.rows; ++m) {
    size_t peak = 0;
    for (size_t k = 0; k < fb.cols; ++k)
      if (fb(m, k) > fb(m, peak)) peak = k;
    grid.center_hz[m] = static_cast<double>(peak) * cfg.sample_rate / cfg.spectral.n_fft;
  }
  grid.lo = 0;
  while (grid.lo < grid.center_hz.size() && grid.center_hz[grid.lo] < f_lo) ++grid.lo;
  grid.hi = grid.lo;
  while (grid.hi < grid.center_hz.size() && grid.center_hz[grid.hi] <= f_hi) ++grid.hi;
  if (grid.hi - grid.lo < 2) throw ConfigError("mel_band_grid: too few bands in the f0 range");
  return grid;
}

// Power-weighted average of band centers, restricted to the f0 band range.
// Smooth in the log-mel values, so the training loss can differentiate
// through it.
inline std::vector<double> f0_from_mel(const Matrix& log_mel_data, const MelBandGrid& grid) {
  std::vector<double> f0(log_mel_data.rows, 0.0);
  for (size_t f = 0; f < log_mel_data.rows; ++f) {
    const double* row = log_mel_data.row(f);
    double max_v = -1e300;
    for (size_t b = grid.lo; b < grid.hi; ++b) max_v = std::max(max_v, row[b]);
    double den = 0.0, num = 0.0;
    for (size_t b = grid.lo; b < grid.hi; ++b) {
      const double w = std::exp(row[b] - max_v);
      den += w;
      num += w * grid.center_hz[b];
    }
    f0[f] = num / den;
  }
  return f0;
}

// L1 losses on the mel estimate and its implied f0. The f0 reference is
// taken over frames voiced in the reference contour (f0 > 0).
struct AuxLosses {
  double l_mel = 0.0;
  double l_f0 = 0.0;
};

inline AuxLosses aux_losses(const Matrix& mel_hat, const Matrix& mel_ref,
                            const std::vector<double>& f0_hat,
                            const std::vector<double>& f0_ref) {
  require_same_shape(mel_hat, mel_ref, "aux_losses");
  if (f0_hat.size() != mel_hat.rows || f0_ref.size() != mel_hat.rows)
    throw ConfigError("aux_losses: f0 length does not match mel frames");
  AuxLosses out;
  for (size_t i = 0; i < mel_hat.data.size(); ++i)
    out.l_mel += std::fabs(mel_hat.data[i] - mel_ref.data[i]);
  out.l_mel /= static_cast<double>(mel_hat.data.size());
  size_t voiced = 0;
  for (size_t f = 0; f < f0_ref.size(); ++f) {
    if (f0_ref[f] <= 0.0) continue;
    out.l_f0 += std::fabs(f0_hat[f] - f0_ref[f]);
    ++voiced;
  }
  if (voiced > 0) out.l_f0 /= static_cast<double>(voiced);
  return out;
}

// ---------------------------------------------------------------------------
// Restoration
// ---------------------------------------------------------------------------

inline Matrix normalize_mel(const Matrix& log_mel_data, const DenoiserConfig& cfg) {
  Matrix out(log_mel_data.rows, log_mel_data.cols);
  for (size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = (log_mel_data.data[i] - cfg.mel_mean) / cfg.mel_scale;
  return out;
}

inline Matrix denormalize_mel(const Matrix& x, const DenoiserConfig& cfg) {
  Matrix out(x.rows, x.cols);
  for (size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = x.data[i] * cfg.mel_scale + cfg.mel_mean;
  return out;
}

inline Matrix gaussian_matrix(size_t rows, size_t cols, uint64_t seed) {
  Rng rng(seed);
  Matrix z(rows, cols);
  for (double& v : z.data) v = rng.normal();
  return z;
}

// Shallow reverse pass: noise the artifact mel to step T, then walk the
// deterministic DDIM chain down to zero with the given stride. The interim
// x0 estimate is clipped to the normalized data range (mel floor to
// mel_max) so an out-of-distribution prediction cannot run away across
// steps.
inline MelSpectrogram restore(const MelSpectrogram& mel_art, const Conditioning& cond,
                              const DenoiserParams& params, const NoiseSchedule& sched, int T,
                              int stride, uint64_t seed, double mel_max = 8.0) {
  if (T < 1 || T > sched.K) throw ConfigError("restore: T must lie in [1, K]");
  if (stride < 1) throw ConfigError("restore: stride must be >= 1");
  if (cond.frames() != mel_art.data.rows)
    throw ConfigError("restore: conditioning frames do not match mel frames");

  const double x0_lo = (std::log(mel_art.config.log_floor) - params.cfg.mel_mean) / params.cfg.mel_scale;
  const double x0_hi = (mel_max - params.cfg.mel_mean) / params.cfg.mel_scale;

  const Matrix norm = normalize_mel(mel_art.data, params.cfg);
  const Matrix z = gaussian_matrix(norm.rows, norm.cols, seed);
  Matrix x = shallow_init(norm, T, z, sched);
  int t = T;
  while (t > 0) {
    const Matrix eps_hat = denoiser_forward(x, cond, t, params);
    const int t_prev = std::max(0, t - stride);
    const double a = sched.abar(t);
    const double ap = sched.abar(t_prev);
    const double sa = std::sqrt(a), sn = std::sqrt(1.0 - a);
    const double sap = std::sqrt(ap), snp = std::sqrt(1.0 - ap);
    for (size_t i = 0; i < x.data.size(); ++i) {
      const double x0 = std::clamp((x.data[i] - sn * eps_hat.data[i]) / sa, x0_lo, x0_hi);
      x.data[i] = sap * x0 + snp * eps_hat.data[i];
    }
    t = t_prev;
  }

  MelSpectrogram out;
  out.config = mel_art.config;
  out.data = denormalize_mel(x, params.cfg);
  const double floor_log = std::log(out.config.log_floor);
  for (double& v : out.data.data) {
    if (!std::isfinite(v)) throw RuntimeError("restore: non-finite output");
    v = std::max(v, floor_log);
  }
  return out;
}

}  // namespace reshift
