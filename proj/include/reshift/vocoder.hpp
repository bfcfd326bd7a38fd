#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "reshift/audio.hpp"
#include "reshift/common.hpp"
#include "reshift/dsp.hpp"
#include "reshift/pitch.hpp"
#include "reshift/rng.hpp"

// Simplified source-filter analysis/synthesis vocoder: decomposition into
// (f0, spectral envelope, band aperiodicity), pitch-shifted resynthesis as
// harmonic excitation plus envelope-filtered noise, and the forward+backward
// artifact-pair generator.

namespace reshift {

struct ShiftSpec {
  double semitones = 0.0;

  void validate() const {
    if (std::fabs(semitones) > 12.0)
      throw ConfigError("shift: semitones must lie in [-12, 12]");
  }

  double ratio() const { return std::exp2(semitones / 12.0); }
};

struct VocoderConfig {
  PitchConfig pitch;
  SpectralConfig spectral;
  int cepstrum_bins = 60;        // quefrency cutoff of the envelope smoother
  int envelope_smooth_bins = 3;  // half-width of the linear-power pre-smoother
  int n_aperiodicity_bands = 8;
};

struct VocoderParams {
  F0Contour f0;
  Matrix envelope;       // frames x bins, smoothed linear magnitude
  Matrix aperiodicity;   // frames x n_bands, noise energy fraction in [0,1]

  size_t frames() const { return f0.frames(); }
};

namespace vocoder_detail {

// Log-spaced aperiodicity band edges; band 0 absorbs everything below 80 Hz.
inline std::vector<double> band_edges(int n_bands, double nyquist) {
  std::vector<double> e(static_cast<size_t>(n_bands) + 1);
  e[0] = 0.0;
  const double lo = 80.0;
  for (int i = 1; i <= n_bands; ++i)
    e[static_cast<size_t>(i)] = lo * std::pow(nyquist / lo, (i - 1) / static_cast<double>(n_bands - 1));
  e[static_cast<size_t>(n_bands)] = nyquist;
  return e;
}

inline int band_of(const std::vector<double>& edges, double f) {
  int b = 0;
  for (size_t i = 1; i + 1 < edges.size(); ++i)
    if (f >= edges[i]) b = static_cast<int>(i);
  return b;
}

}  // namespace vocoder_detail

// Spectral envelope per frame: the power spectrum is first averaged in the
// linear domain over +-smooth_bins (log-domain smoothing alone would sink
// the envelope toward the deep valleys between harmonics), floored relative
// to the frame peak, then cepstrally liftered: keep the first cepstrum_bins
// quefrency coefficients and their mirror, zero the rest. Returns smoothed
// log power.
inline Matrix cepstral_envelope_log_power(const Matrix& power, int n_fft, int cepstrum_bins,
                                          int smooth_bins) {
  const size_t bins = power.cols;
  Matrix smoothed(power.rows, bins);
  std::vector<std::complex<double>> buf(static_cast<size_t>(n_fft));
  std::vector<double> avg(bins);
  for (size_t t = 0; t < power.rows; ++t) {
    double peak = 0.0;
    for (size_t k = 0; k < bins; ++k) peak = std::max(peak, power(t, k));
    const double floor = std::max(1e-12, peak * 1e-9);
    for (size_t k = 0; k < bins; ++k) {
      double acc = 0.0;
      int count = 0;
      const long lo = static_cast<long>(k) - smooth_bins;
      const long hi = static_cast<long>(k) + smooth_bins;
      for (long j = lo; j <= hi; ++j) {
        if (j < 0 || j >= static_cast<long>(bins)) continue;
        acc += power(t, static_cast<size_t>(j));
        ++count;
      }
      avg[k] = std::max(acc / static_cast<double>(count), floor);
    }
    for (size_t k = 0; k < bins; ++k) buf[k] = std::log(avg[k]);
    for (size_t k = bins; k < static_cast<size_t>(n_fft); ++k)
      buf[k] = buf[static_cast<size_t>(n_fft) - k];
    fft_inplace(buf, false);
    for (size_t q = 0; q < static_cast<size_t>(n_fft); ++q) {
      const size_t mirror = q == 0 ? 0 : static_cast<size_t>(n_fft) - q;
      const size_t quef = std::min(q, mirror);
      if (quef >= static_cast<size_t>(cepstrum_bins)) buf[q] = 0.0;
    }
    fft_inplace(buf, true);
    for (size_t k = 0; k < bins; ++k) smoothed(t, k) = buf[k].real();
  }
  return smoothed;
}

inline VocoderParams analyze(const AudioBuffer& audio, const VocoderConfig& cfg) {
  audio.validate("vocoder analyze");
  cfg.spectral.validate();

  VocoderParams params;
  params.f0 = estimate_f0(audio, cfg.pitch);

  const ComplexSpectrogram spec = stft(audio, cfg.spectral);
  Matrix power(spec.rows, spec.cols);
  for (size_t i = 0; i < spec.data.size(); ++i) power.data[i] = std::norm(spec.data[i]);

  const Matrix smoothed_log = cepstral_envelope_log_power(
      power, cfg.spectral.n_fft, cfg.cepstrum_bins, cfg.envelope_smooth_bins);
  params.envelope = Matrix(spec.rows, spec.cols);
  for (size_t i = 0; i < smoothed_log.data.size(); ++i)
    params.envelope.data[i] = std::exp(0.5 * smoothed_log.data[i]);

  // Band aperiodicity: fraction of band energy outside a comb mask around
  // the harmonics of f0. Unvoiced frames are fully aperiodic.
  const double sr = static_cast<double>(audio.sample_rate);
  const double nyq = sr / 2.0;
  const auto edges = vocoder_detail::band_edges(cfg.n_aperiodicity_bands, nyq);
  const double bin_hz = sr / cfg.spectral.n_fft;
  params.aperiodicity = Matrix(spec.rows, static_cast<size_t>(cfg.n_aperiodicity_bands), 1.0);

  for (size_t t = 0; t < spec.rows; ++t) {
    if (!params.f0.voiced[t]) continue;
    const double f0 = params.f0.f0[t];
    const double spacing_bins = f0 / bin_hz;
    const double half_width = std::max(1.6, 0.12 * spacing_bins);
    std::vector<double> band_total(static_cast<size_t>(cfg.n_aperiodicity_bands), 0.0);
    std::vector<double> band_harm(static_cast<size_t>(cfg.n_aperiodicity_bands), 0.0);
    for (size_t k = 1; k < spec.cols; ++k) {
      const double f = static_cast<double>(k) * bin_hz;
      const int b = vocoder_detail::band_of(edges, f);
      const double p = power(t, k);
      band_total[static_cast<size_t>(b)] += p;
      const double harmonic_index = f / f0;
      const double nearest = std::max(1.0, std::round(harmonic_index));
      const double dist_bins = std::fabs(f - nearest * f0) / bin_hz;
      if (dist_bins <= half_width) band_harm[static_cast<size_t>(b)] += p;
    }
    for (int b = 0; b < cfg.n_aperiodicity_bands; ++b) {
      const double total = band_total[static_cast<size_t>(b)];
      const double ap = total > 0.0 ? 1.0 - band_harm[static_cast<size_t>(b)] / total : 1.0;
      params.aperiodicity(t, static_cast<size_t>(b)) = std::clamp(ap, 0.0, 1.0);
    }
  }
  return params;
}

// Harmonic excitation plus filtered noise, overlap-added with a Hann
// crossfade at the hop. Both components are linear in the envelope. Output
// is peak-limited to 0.99 (attenuation only).
inline AudioBuffer synthesize(const VocoderParams& params, int sample_rate,
                              const SpectralConfig& cfg = SpectralConfig{}, uint64_t seed = 0,
                              size_t out_len = 0, int envelope_smooth_bins = 3) {
  cfg.validate();
  const size_t frames = params.frames();
  if (frames == 0) throw ConfigError("synthesize: empty parameters");
  if (params.envelope.rows != frames || params.aperiodicity.rows != frames)
    throw ConfigError("synthesize: frame counts disagree");

  const int hop = params.f0.hop;
  const double sr = static_cast<double>(sample_rate);
  const double nyq = sr / 2.0;
  const size_t n = out_len > 0 ? out_len : (frames - 1) * static_cast<size_t>(hop);
  const std::vector<double> window = make_window(cfg);
  double wsum = 0.0, wsq = 0.0;
  for (double w : window) {
    wsum += w;
    wsq += w * w;
  }

  // per-sample f0 track for phase accumulation (holds through unvoiced)
  std::vector<double> f0_track(n, 0.0);
  double last_f0 = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double pos = static_cast<double>(i) / hop;
    const size_t t0 = std::min(static_cast<size_t>(pos), frames - 1);
    const size_t t1 = std::min(t0 + 1, frames - 1);
    const double frac = pos - static_cast<double>(t0);
    const bool v0 = params.f0.voiced[t0], v1 = params.f0.voiced[t1];
    double f = 0.0;
    if (v0 && v1)
      f = (1.0 - frac) * params.f0.f0[t0] + frac * params.f0.f0[t1];
    else if (v0)
      f = params.f0.f0[t0];
    else if (v1)
      f = params.f0.f0[t1];
    if (f > 0.0) last_f0 = f;
    f0_track[i] = last_f0;
  }
  std::vector<double> phase(n, 0.0);
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) {
    acc += 2.0 * kPi * f0_track[i] / sr;
    if (acc > 1e9) acc = std::fmod(acc, 2.0 * kPi);
    phase[i] = acc;
  }

  const auto edges = vocoder_detail::band_edges(static_cast<int>(params.aperiodicity.cols), nyq);
  const double bin_hz = sr / cfg.n_fft;
  const size_t bins = params.envelope.cols;
  // Inverts the analysis calibration: a sine of amplitude A leaves lobe
  // energy N*A^2*sum(w^2)/4 spread over the 2*smooth+1 bin average.
  const double smooth_width = 2.0 * envelope_smooth_bins + 1.0;
  const double harm_gain = 2.0 * std::sqrt(smooth_width / (cfg.n_fft * std::max(wsq, 1e-12)));
  (void)wsum;

  // grain window: Hann of length 2*hop, COLA at the hop
  const size_t grain = 2 * static_cast<size_t>(hop);
  std::vector<double> gw(grain);
  for (size_t i = 0; i < grain; ++i)
    gw[i] = 0.5 * (1.0 - std::cos(2.0 * kPi * i / static_cast<double>(grain)));

  std::vector<double> out(n, 0.0);
  for (size_t t = 0; t < frames; ++t) {
    if (!params.f0.voiced[t]) continue;
    const double f0 = params.f0.f0[t];
    const int harmonics = std::max(1, static_cast<int>(0.95 * nyq / f0));
    std::vector<double> amp(static_cast<size_t>(harmonics) + 1, 0.0);
    for (int k = 1; k <= harmonics; ++k) {
      const double fk = k * f0;
      if (fk >= nyq) break;
      const double b = fk / bin_hz;
      const size_t b0 = std::min(static_cast<size_t>(b), bins - 2);
      const double frac = b - static_cast<double>(b0);
      const double env =
          (1.0 - frac) * params.envelope(t, b0) + frac * params.envelope(t, b0 + 1);
      const double ap = params.aperiodicity(t, static_cast<size_t>(vocoder_detail::band_of(edges, fk)));
      amp[static_cast<size_t>(k)] = env * (1.0 - ap) * harm_gain;
    }
    const long start = static_cast<long>(t) * hop - hop;
    for (size_t g = 0; g < grain; ++g) {
      const long idx = start + static_cast<long>(g);
      if (idx < 0 || idx >= static_cast<long>(n)) continue;
      const double ph = phase[static_cast<size_t>(idx)];
      // Chebyshev recurrence over harmonics of the accumulated phase
      const double c1 = std::cos(ph);
      double ck_prev = 1.0, ck = c1, sum = 0.0;
      for (int k = 1; k <= harmonics; ++k) {
        sum += amp[static_cast<size_t>(k)] * ck;
        const double next = 2.0 * c1 * ck - ck_prev;
        ck_prev = ck;
        ck = next;
      }
      out[static_cast<size_t>(idx)] += gw[g] * sum;
    }
  }

  // noise component: unit white noise shaped per frame by envelope and
  // aperiodicity, scaled back to unit-variance calibration
  Rng rng(seed);
  std::vector<double> noise(n);
  for (size_t i = 0; i < n; ++i) noise[i] = rng.normal();
  AudioBuffer noise_buf(std::move(noise), sample_rate);
  ComplexSpectrogram nspec = stft(noise_buf, cfg);
  const double noise_gain = 1.0 / std::sqrt(std::max(wsq, 1e-12));
  const size_t shape_frames = std::min(nspec.rows, frames);
  for (size_t t = 0; t < nspec.rows; ++t) {
    const size_t tf = std::min(t, shape_frames - 1);
    const bool voiced = params.f0.voiced[tf] != 0;
    for (size_t k = 0; k < nspec.cols; ++k) {
      const double f = static_cast<double>(k) * bin_hz;
      double ap =
          voiced ? params.aperiodicity(tf, static_cast<size_t>(vocoder_detail::band_of(edges, f)))
                 : 1.0;
      if (voiced) {
        // The smoothed envelope keeps near-fundamental level below f0
        // (lobe skirt); unchecked noise there buries the periodicity.
        const double knee = 0.8 * params.f0.f0[tf];
        if (f < knee) {
          const double r = f / knee;
          ap *= r * r;
        }
      }
      nspec(t, k) *= params.envelope(tf, std::min(k, bins - 1)) * ap * noise_gain;
    }
  }
  const AudioBuffer shaped = istft(nspec, cfg, sample_rate, n);
  for (size_t i = 0; i < n && i < shaped.samples.size(); ++i) out[i] += shaped.samples[i];

  double peak = peak_abs(out);
  if (peak > 0.99)
    for (double& v : out) v *= 0.99 / peak;
  return AudioBuffer(std::move(out), sample_rate);
}

// Formant-preserving shift: the contour moves, the envelope does not.
inline AudioBuffer pitch_shift(const AudioBuffer& audio, const ShiftSpec& shift,
                               const VocoderConfig& cfg = VocoderConfig{}, uint64_t seed = 0) {
  shift.validate();
  VocoderParams params = analyze(audio, cfg);
  params.f0 = shift_f0(params.f0, shift.semitones);
  return synthesize(params, audio.sample_rate, cfg.spectral, seed, audio.samples.size(),
                    cfg.envelope_smooth_bins);
}

inline AudioBuffer pitch_shift(const AudioBuffer& audio, const ShiftSpec& shift,
                               const PitchConfig& pitch_cfg, uint64_t seed = 0) {
  VocoderConfig cfg;
  cfg.pitch = pitch_cfg;
  return pitch_shift(audio, shift, cfg, seed);
}

// Forward+backward shift under the same configuration: the artifact keeps
// the pitch, volume and timing of the clean signal while its spectrum
// carries two generations of vocoder degradation.
inline std::pair<AudioBuffer, AudioBuffer> make_artifact_pair(const AudioBuffer& audio,
                                                              const ShiftSpec& shift,
                                                              const VocoderConfig& cfg = VocoderConfig{},
                                                              uint64_t seed = 0) {
  shift.validate();
  const AudioBuffer up = pitch_shift(audio, shift, cfg, mix_seed(seed, 1));
  ShiftSpec back{-shift.semitones};
  AudioBuffer artifact = pitch_shift(up, back, cfg, mix_seed(seed, 2));
  return {std::move(artifact), audio};
}

}  // namespace reshift
