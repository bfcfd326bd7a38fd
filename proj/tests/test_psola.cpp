#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "reshift/psola.hpp"
#include "helpers.hpp"

using namespace reshift;
using Catch::Approx;

TEST_CASE("pitch marks on a 220 Hz sine are one period apart") {
  const auto audio = testsig::sine(220.0, 0.5, 44100);
  const auto contour = estimate_f0(audio, PitchConfig{});
  const PitchMarks marks = detect_pitch_marks(audio, contour);
  REQUIRE(marks.positions.size() > 50);
  const double period = 44100.0 / 220.0;  // 200.45
  for (size_t i = 1; i < marks.positions.size(); ++i) {
    const double spacing = static_cast<double>(marks.positions[i] - marks.positions[i - 1]);
    REQUIRE(spacing == Approx(period).margin(2.0));
  }
}

TEST_CASE("pitch marks on silence are empty") {
  const auto audio = testsig::silence(0.3, 44100);
  const auto contour = estimate_f0(audio, PitchConfig{});
  REQUIRE(detect_pitch_marks(audio, contour).positions.empty());
}

TEST_CASE("mark spacing follows a rising f0 ramp") {
  const int sr = 44100;
  const size_t n = static_cast<size_t>(0.8 * sr);
  std::vector<double> f0(n);
  for (size_t i = 0; i < n; ++i)
    f0[i] = 180.0 + 80.0 * static_cast<double>(i) / static_cast<double>(n);
  const auto audio = testsig::sawtooth_traj(f0, sr);
  const auto contour = estimate_f0(audio, PitchConfig{});
  const PitchMarks marks = detect_pitch_marks(audio, contour);
  REQUIRE(marks.positions.size() > 100);

  // spacing matches the local period predicted by the contour
  for (size_t i = 1; i < marks.positions.size(); ++i) {
    const double spacing = static_cast<double>(marks.positions[i] - marks.positions[i - 1]);
    const double period = psola_detail::period_at(contour, static_cast<double>(marks.positions[i - 1]));
    if (period <= 0.0) continue;
    REQUIRE(spacing == Approx(period).margin(3.0));
  }
  // and decreases across the ramp
  const double first = static_cast<double>(marks.positions[3] - marks.positions[2]);
  const double last = static_cast<double>(marks.positions[marks.positions.size() - 2] -
                                          marks.positions[marks.positions.size() - 3]);
  REQUIRE(last < first * 0.85);
}

TEST_CASE("psola zero shift is a pass-through on voiced spans") {
  const auto audio = testsig::sawtooth(220.0, 0.5, 44100);
  const AudioBuffer out = psola_shift(audio, ShiftSpec{0.0});
  REQUIRE(out.samples.size() == audio.samples.size());
  const size_t guard = 2048;
  REQUIRE(testsig::rel_l2_error(audio.samples, out.samples, guard,
                                audio.samples.size() - guard) < 1e-3);
}

TEST_CASE("psola shifts a 220 Hz sawtooth up an octave") {
  const auto audio = testsig::sawtooth(220.0, 0.6, 44100);
  const AudioBuffer out = psola_shift(audio, ShiftSpec{12.0});
  REQUIRE(out.samples.size() == audio.samples.size());
  const auto contour = estimate_f0(out, PitchConfig{});
  REQUIRE(std::fabs(cents_between(440.0, contour.median_voiced_f0())) < 15.0);
}

TEST_CASE("psola reaches the lower range edge") {
  const auto audio = testsig::sawtooth(130.0, 0.6, 44100);
  const AudioBuffer out = psola_shift(audio, ShiftSpec{-12.0});
  const auto contour = estimate_f0(out, PitchConfig{});
  REQUIRE(contour.voiced_count() > 0);
  REQUIRE(std::fabs(cents_between(65.0, contour.median_voiced_f0())) < 20.0);
}

TEST_CASE("psola preserves duration exactly across the shift range") {
  const auto audio = testsig::sawtooth_vibrato(200.0, 0.4, 44100);
  for (double shift : {-12.0, -7.3, -3.0, 0.0, 2.5, 6.0, 12.0}) {
    const AudioBuffer out = psola_shift(audio, ShiftSpec{shift});
    REQUIRE(out.samples.size() == audio.samples.size());
  }
}

TEST_CASE("psola passes fully unvoiced audio through untouched") {
  const auto noise = testsig::white_noise(0.4, 44100, 31);
  const AudioBuffer out = psola_shift(noise, ShiftSpec{5.0});
  REQUIRE(out.samples == noise.samples);
}

TEST_CASE("psola rejects out-of-range shifts") {
  const auto audio = testsig::sawtooth(220.0, 0.2, 44100);
  REQUIRE_THROWS_AS(psola_shift(audio, ShiftSpec{-12.01}), ConfigError);
}
