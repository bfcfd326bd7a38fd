#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>

#include "reshift/pitch.hpp"
#include "helpers.hpp"

using namespace reshift;
using Catch::Approx;

TEST_CASE("estimate_f0 on a 220 Hz sawtooth") {
  const auto audio = testsig::sawtooth(220.0, 0.5, 44100);
  PitchConfig cfg;
  const auto c = estimate_f0(audio, cfg);
  REQUIRE(c.frames() == audio.samples.size() / 256 + 1);
  REQUIRE(c.voiced_count() > c.frames() / 2);
  REQUIRE(std::fabs(cents_between(220.0, c.median_voiced_f0())) < 5.0);
  for (size_t t = 0; t < c.frames(); ++t) {
    if (c.voiced[t]) {
      REQUIRE(c.f0[t] >= cfg.f_min);
      REQUIRE(c.f0[t] <= cfg.f_max);
    } else {
      REQUIRE(c.f0[t] == 0.0);
    }
  }
}

TEST_CASE("estimate_f0 marks white noise unvoiced") {
  const auto noise = testsig::white_noise(0.5, 44100, 11);
  const auto c = estimate_f0(noise, PitchConfig{});
  const double unvoiced =
      static_cast<double>(c.frames() - c.voiced_count()) / static_cast<double>(c.frames());
  REQUIRE(unvoiced >= 0.9);
}

TEST_CASE("estimate_f0 marks silence unvoiced") {
  const auto c = estimate_f0(testsig::silence(0.3, 44100), PitchConfig{});
  REQUIRE(c.voiced_count() == 0);
  for (double v : c.f0) REQUIRE(v == 0.0);
}

TEST_CASE("estimate_f0 rejects audio shorter than one analysis window") {
  AudioBuffer tiny(std::vector<double>(100, 0.1), 44100);
  REQUIRE_THROWS_AS(estimate_f0(tiny, PitchConfig{}), ConfigError);
}

TEST_CASE("estimate_f0 is shift-consistent on synthetic harmonics") {
  PitchConfig cfg;
  const auto base = estimate_f0(testsig::sawtooth(220.0, 0.5, 44100), cfg);
  const double base_f0 = base.median_voiced_f0();
  for (double shift : {-12.0, -6.0, -3.0, 3.0, 6.0, 12.0}) {
    const double target = 220.0 * std::exp2(shift / 12.0);
    const auto c = estimate_f0(testsig::sawtooth(target, 0.5, 44100), cfg);
    const double want = base_f0 * std::exp2(shift / 12.0);
    REQUIRE(std::fabs(cents_between(want, c.median_voiced_f0())) < 5.0);
  }
}

TEST_CASE("contour length is a pure function of audio length and hop") {
  PitchConfig cfg;
  for (size_t len : {20000u, 30011u, 44100u}) {
    AudioBuffer a(std::vector<double>(len, 0.0), 44100);
    const auto c = estimate_f0(a, cfg);
    REQUIRE(c.frames() == len / static_cast<size_t>(cfg.hop) + 1);
  }
}

TEST_CASE("shift_f0") {
  F0Contour c;
  c.f0 = {220.0, 0.0, 220.0};
  c.voiced = {1, 0, 1};

  SECTION("zero shift is the identity") {
    const auto s = shift_f0(c, 0.0);
    REQUIRE(s.f0 == c.f0);
    REQUIRE(s.voiced == c.voiced);
  }

  SECTION("an octave doubles voiced frames") {
    const auto s = shift_f0(c, 12.0);
    REQUIRE(s.f0[0] == Approx(440.0).epsilon(1e-12));
    REQUIRE(s.f0[1] == 0.0);
    REQUIRE(s.voiced == c.voiced);
  }

  SECTION("+3 semitones lands on 261.6256 Hz") {
    const auto s = shift_f0(c, 3.0);
    REQUIRE(s.f0[0] == Approx(261.6256).margin(1e-3));
  }

  SECTION("round trip is the identity within 1e-9 relative") {
    Rng rng(77);
    F0Contour r;
    for (int i = 0; i < 200; ++i) {
      const bool v = rng.uniform() < 0.7;
      r.voiced.push_back(v ? 1 : 0);
      r.f0.push_back(v ? rng.uniform(65.0, 800.0) : 0.0);
    }
    for (double shift : {0.37, 3.0, -7.5, 11.99}) {
      const auto back = shift_f0(shift_f0(r, shift), -shift);
      for (size_t t = 0; t < r.f0.size(); ++t) {
        if (r.voiced[t])
          REQUIRE(back.f0[t] == Approx(r.f0[t]).epsilon(1e-9));
        else
          REQUIRE(back.f0[t] == 0.0);
      }
    }
  }
}

TEST_CASE("cents_between") {
  REQUIRE(cents_between(220.0, 220.0) == 0.0);
  REQUIRE(cents_between(220.0, 440.0) == Approx(1200.0).epsilon(1e-12));
  REQUIRE(cents_between(440.0, 441.0) == Approx(3.93).margin(0.01));
  REQUIRE_THROWS_AS(cents_between(0.0, 440.0), ConfigError);
  REQUIRE_THROWS_AS(cents_between(440.0, -1.0), ConfigError);
}

TEST_CASE("contour serialization round trips through PSRT") {
  const auto audio = testsig::sawtooth(180.0, 0.3, 44100);
  const auto c = estimate_f0(audio, PitchConfig{});
  const auto path = std::filesystem::temp_directory_path() / "reshift_test_f0.psrt";
  f0_write_psrt(path, c);
  const auto back = f0_read_psrt(path, c.hop, c.sample_rate);
  REQUIRE(back.frames() == c.frames());
  for (size_t t = 0; t < c.frames(); ++t) {
    REQUIRE(back.voiced[t] == c.voiced[t]);
    REQUIRE(back.f0[t] == Approx(c.f0[t]).margin(1e-4));  // stored as f32
  }
  std::filesystem::remove(path);
}

TEST_CASE("contour CSV export") {
  F0Contour c;
  c.f0 = {220.0, 0.0};
  c.voiced = {1, 0};
  const std::string csv = f0_to_csv(c);
  REQUIRE(csv.find("frame,f0_hz,voiced") == 0);
  REQUIRE(csv.find("0,220.000000,1") != std::string::npos);
  REQUIRE(csv.find("1,0.000000,0") != std::string::npos);
}
