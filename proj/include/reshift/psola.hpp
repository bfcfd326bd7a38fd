#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "reshift/audio.hpp"
#include "reshift/common.hpp"
#include "reshift/pitch.hpp"
#include "reshift/vocoder.hpp"

// TD-PSOLA baseline: pitch marks at waveform maxima near predicted period
// positions, two-period grains re-spaced by the shift ratio, duration
// preserved by reusing or dropping source grains. Unvoiced spans pass
// through untouched.

namespace reshift {

struct PitchMarks {
  std::vector<long> positions;  // strictly increasing sample indices
};

namespace psola_detail {

inline double period_at(const F0Contour& c, double sample) {
  const double pos = sample / static_cast<double>(c.hop);
  const size_t t0 = std::min(static_cast<size_t>(std::max(0.0, pos)), c.frames() - 1);
  const size_t t1 = std::min(t0 + 1, c.frames() - 1);
  const double frac = std::clamp(pos - static_cast<double>(t0), 0.0, 1.0);
  double f = 0.0;
  if (c.voiced[t0] && c.voiced[t1])
    f = (1.0 - frac) * c.f0[t0] + frac * c.f0[t1];
  else if (c.voiced[t0])
    f = c.f0[t0];
  else if (c.voiced[t1])
    f = c.f0[t1];
  if (f <= 0.0) return 0.0;
  return static_cast<double>(c.sample_rate) / f;
}

// Marks per contiguous voiced region.
inline std::vector<std::vector<long>> mark_regions(const AudioBuffer& audio,
                                                   const F0Contour& contour) {
  std::vector<std::vector<long>> regions;
  const long n = static_cast<long>(audio.samples.size());
  const int hop = contour.hop;
  size_t t = 0;
  while (t < contour.frames()) {
    if (!contour.voiced[t]) {
      ++t;
      continue;
    }
    size_t end = t;
    while (end + 1 < contour.frames() && contour.voiced[end + 1]) ++end;

    const long region_start = std::max(0L, static_cast<long>(t) * hop - hop / 2);
    const long region_end = std::min(n - 1, static_cast<long>(end) * hop + hop / 2);
    std::vector<long> marks;

    double period = period_at(contour, static_cast<double>(region_start));
    if (period > 0.0 && region_end - region_start > static_cast<long>(period)) {
      // first mark: strongest sample in one period
      long best = region_start;
      for (long i = region_start; i < std::min(region_end, region_start + static_cast<long>(period));
           ++i)
        if (audio.samples[static_cast<size_t>(i)] > audio.samples[static_cast<size_t>(best)])
          best = i;
      marks.push_back(best);

      while (true) {
        const double p = period_at(contour, static_cast<double>(marks.back()));
        if (p <= 0.0) break;
        const long predicted = marks.back() + static_cast<long>(std::lround(p));
        if (predicted > region_end) break;
        const long radius = static_cast<long>(std::lround(0.25 * p));
        long lo = std::max(marks.back() + 1, predicted - radius);
        long hi = std::min(n - 1, predicted + radius);
        if (lo > hi) break;
        long best_pos = predicted;
        double best_val = -1e300;
        for (long i = lo; i <= hi; ++i) {
          const double v = audio.samples[static_cast<size_t>(i)];
          if (v > best_val) {
            best_val = v;
            best_pos = i;
          }
        }
        marks.push_back(best_pos);
      }
    }
    if (marks.size() >= 2) regions.push_back(std::move(marks));
    t = end + 1;
  }
  return regions;
}

}  // namespace psola_detail

inline PitchMarks detect_pitch_marks(const AudioBuffer& audio, const F0Contour& contour) {
  audio.validate("detect_pitch_marks");
  if (contour.frames() == 0) throw ConfigError("detect_pitch_marks: empty contour");
  PitchMarks out;
  for (const auto& region : psola_detail::mark_regions(audio, contour))
    for (long m : region)
      if (out.positions.empty() || m > out.positions.back()) out.positions.push_back(m);
  return out;
}

inline AudioBuffer psola_shift(const AudioBuffer& audio, const ShiftSpec& shift,
                               const PitchConfig& cfg = PitchConfig{}) {
  shift.validate();
  audio.validate("psola_shift");
  const F0Contour contour = estimate_f0(audio, cfg);
  const auto regions = psola_detail::mark_regions(audio, contour);

  const long n = static_cast<long>(audio.samples.size());
  const double ratio = shift.ratio();
  std::vector<double> synth(audio.samples.size(), 0.0);
  std::vector<double> weight(audio.samples.size(), 0.0);
  std::vector<uint8_t> inside(audio.samples.size(), 0);

  for (const auto& marks : regions) {
    const size_t count = marks.size();
    // asymmetric two-period windows: rise spans the gap to the previous
    // mark, fall the gap to the next; adjacent windows sum to one
    std::vector<long> rise(count), fall(count);
    for (size_t k = 0; k < count; ++k) {
      rise[k] = k > 0 ? marks[k] - marks[k - 1] : marks[1] - marks[0];
      fall[k] = k + 1 < count ? marks[k + 1] - marks[k] : marks[count - 1] - marks[count - 2];
    }
    for (long i = marks.front(); i <= marks.back() && i < n; ++i)
      inside[static_cast<size_t>(i)] = 1;

    double out_pos = static_cast<double>(marks.front());
    size_t nearest = 0;
    while (out_pos <= static_cast<double>(marks.back())) {
      while (nearest + 1 < count &&
             std::fabs(static_cast<double>(marks[nearest + 1]) - out_pos) <
                 std::fabs(static_cast<double>(marks[nearest]) - out_pos))
        ++nearest;
      const long center = static_cast<long>(std::llround(out_pos));
      const long lr = rise[nearest], lf = fall[nearest];
      for (long d = -lr; d <= lf; ++d) {
        const long src = marks[nearest] + d;
        const long dst = center + d;
        if (src < 0 || src >= n || dst < 0 || dst >= n) continue;
        const double u = d < 0 ? static_cast<double>(d) / static_cast<double>(lr)
                               : static_cast<double>(d) / static_cast<double>(lf);
        const double w = 0.5 + 0.5 * std::cos(kPi * u);
        synth[static_cast<size_t>(dst)] += w * audio.samples[static_cast<size_t>(src)];
        weight[static_cast<size_t>(dst)] += w;
      }
      out_pos += static_cast<double>(fall[nearest]) / ratio;
    }
  }

  std::vector<double> out(audio.samples.size());
  for (long i = 0; i < n; ++i) {
    const size_t u = static_cast<size_t>(i);
    if (inside[u]) {
      out[u] = synth[u] / std::max(weight[u], 1.0);
    } else {
      out[u] = synth[u] + std::max(0.0, 1.0 - weight[u]) * audio.samples[u];
    }
  }
  return AudioBuffer(std::move(out), audio.sample_rate);
}

}  // namespace reshift
