#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "reshift/metrics.hpp"
#include "helpers.hpp"

using namespace reshift;
using Catch::Approx;

namespace {

// Brute-force double-sum oracle for the unbiased two-sample MMD^2.
double mmd_rbf_oracle(const Matrix& a, const Matrix& b, double sigma) {
  const double m = static_cast<double>(a.rows), n = static_cast<double>(b.rows);
  double kaa = 0.0, kbb = 0.0, kab = 0.0;
  for (size_t i = 0; i < a.rows; ++i)
    for (size_t j = 0; j < a.rows; ++j)
      if (i != j) kaa += rbf_kernel(a.row(i), a.row(j), a.cols, sigma);
  for (size_t i = 0; i < b.rows; ++i)
    for (size_t j = 0; j < b.rows; ++j)
      if (i != j) kbb += rbf_kernel(b.row(i), b.row(j), b.cols, sigma);
  for (size_t i = 0; i < a.rows; ++i)
    for (size_t j = 0; j < b.rows; ++j) kab += rbf_kernel(a.row(i), b.row(j), a.cols, sigma);
  return kaa / (m * (m - 1.0)) + kbb / (n * (n - 1.0)) - 2.0 * kab / (m * n);
}

Matrix random_embeddings(size_t rows, size_t cols, uint64_t seed) {
  Rng rng(seed);
  Matrix m(rows, cols);
  for (double& v : m.data) v = rng.normal();
  return m;
}

}  // namespace

TEST_CASE("spectral convergence") {
  Matrix r(3, 4, 0.0);
  Rng rng(1);
  for (double& v : r.data) v = std::fabs(rng.normal());

  SECTION("identical inputs give zero") {
    REQUIRE(spectral_convergence(r, r).value() == Approx(0.0).margin(1e-15));
  }
  SECTION("all-zero estimate gives one") {
    Matrix zero(3, 4, 0.0);
    REQUIRE(spectral_convergence(r, zero).value() == Approx(1.0).epsilon(1e-12));
  }
  SECTION("hand case [[3,4]] vs [[0,0]]") {
    Matrix ref(1, 2, 0.0), est(1, 2, 0.0);
    ref(0, 0) = 3.0;
    ref(0, 1) = 4.0;
    REQUIRE(spectral_convergence(ref, est).value() == Approx(1.0).epsilon(1e-12));
  }
  SECTION("zero reference is undefined") {
    Matrix zero(3, 4, 0.0);
    REQUIRE_FALSE(spectral_convergence(zero, r).has_value());
  }
}

TEST_CASE("log-spectral distance") {
  Matrix r(2, 8, 0.0);
  Rng rng(2);
  for (double& v : r.data) v = 0.1 + std::fabs(rng.normal());

  SECTION("identical inputs give zero") { REQUIRE(lsd(r, r) == Approx(0.0).margin(1e-15)); }

  SECTION("a factor of 10 everywhere gives exactly 2") {
    Matrix e = r;
    for (double& v : e.data) v *= 10.0;
    REQUIRE(lsd(r, e) == Approx(2.0).epsilon(1e-12));
  }

  SECTION("symmetric in its arguments") {
    Matrix e = random_embeddings(2, 8, 3);
    for (double& v : e.data) v = std::fabs(v) + 0.05;
    REQUIRE(lsd(r, e) == Approx(lsd(e, r)).epsilon(1e-12));
  }
}

TEST_CASE("si-sdr") {
  SECTION("scaled copies hit the +100 dB cap") {
    const auto ref = testsig::sine(220.0, 0.2, 44100);
    AudioBuffer est = ref;
    for (double& v : est.samples) v *= 0.37;
    REQUIRE(si_sdr(ref, est).value() == Approx(100.0));
  }

  SECTION("orthogonal noise of equal power gives 0 dB") {
    // ref alternates +1,0,-1,0; noise 0,+1,0,-1: orthogonal, equal power
    std::vector<double> r, e;
    for (int i = 0; i < 1000; ++i) {
      const int phase = i % 4;
      const double rv = phase == 0 ? 1.0 : (phase == 2 ? -1.0 : 0.0);
      const double nv = phase == 1 ? 1.0 : (phase == 3 ? -1.0 : 0.0);
      r.push_back(rv);
      e.push_back(rv + nv);
    }
    const auto got = si_sdr(AudioBuffer(r, 44100), AudioBuffer(e, 44100));
    REQUIRE(got.value() == Approx(0.0).margin(1e-9));
  }

  SECTION("exactly invariant to scaling the estimate") {
    const auto ref = testsig::sawtooth(150.0, 0.2, 44100);
    auto est = testsig::white_noise(0.2, 44100, 4);
    for (size_t i = 0; i < est.samples.size(); ++i) est.samples[i] += ref.samples[i];
    AudioBuffer est2 = est;
    for (double& v : est2.samples) v *= 2.0;
    REQUIRE(si_sdr(ref, est).value() == si_sdr(ref, est2).value());
  }

  SECTION("silent reference is undefined") {
    const auto ref = testsig::silence(0.1, 44100);
    const auto est = testsig::sine(220.0, 0.1, 44100);
    REQUIRE_FALSE(si_sdr(ref, est).has_value());
  }
}

TEST_CASE("f0 rmse in cents") {
  F0Contour a, b;
  for (int i = 0; i < 10; ++i) {
    a.f0.push_back(220.0);
    a.voiced.push_back(1);
    b.f0.push_back(233.082);
    b.voiced.push_back(1);
  }

  SECTION("identical contours give zero") {
    REQUIRE(f0_rmse_cents(a, a).value() == Approx(0.0).margin(1e-12));
  }
  SECTION("one semitone is 100 cents") {
    REQUIRE(f0_rmse_cents(a, b).value() == Approx(100.0).margin(0.01));
  }
  SECTION("no commonly voiced frames is undefined") {
    F0Contour c = b;
    for (auto& v : c.voiced) v = 0;
    for (auto& v : c.f0) v = 0.0;
    REQUIRE_FALSE(f0_rmse_cents(a, c).has_value());
  }
}

TEST_CASE("log f0 rmse") {
  F0Contour a, b;
  for (int i = 0; i < 6; ++i) {
    a.f0.push_back(220.0);
    a.voiced.push_back(1);
    b.f0.push_back(440.0);
    b.voiced.push_back(1);
  }
  REQUIRE(log_f0_rmse(a, a).value() == Approx(0.0).margin(1e-12));
  REQUIRE(log_f0_rmse(a, b).value() == Approx(std::log(2.0)).epsilon(1e-12));

  SECTION("invariant under common scaling") {
    F0Contour a2 = a, b2 = b;
    for (auto& v : a2.f0) v *= 3.7;
    for (auto& v : b2.f0) v *= 3.7;
    REQUIRE(log_f0_rmse(a2, b2).value() == Approx(log_f0_rmse(a, b).value()).epsilon(1e-12));
  }
}

TEST_CASE("v/uv error") {
  F0Contour a, b;
  a.f0 = {220.0, 0.0, 220.0, 0.0};
  a.voiced = {1, 0, 1, 0};
  b = a;

  REQUIRE(vuv_error(a, b) == 0.0);

  SECTION("complementary flags give 100%") {
    F0Contour c;
    c.f0 = {0.0, 220.0, 0.0, 220.0};
    c.voiced = {0, 1, 0, 1};
    REQUIRE(vuv_error(a, c) == 100.0);
  }

  SECTION("one mismatch in four frames is 25%") {
    b.voiced[3] = 1;
    b.f0[3] = 200.0;
    REQUIRE(vuv_error(a, b) == 25.0);
  }

  SECTION("empty contours are an error") {
    F0Contour e;
    REQUIRE_THROWS_AS(vuv_error(e, e), ConfigError);
  }
}

TEST_CASE("mfcc distance") {
  MelConfig cfg;
  cfg.spectral = SpectralConfig{1024, 512, 1024, WindowKind::hann};
  const auto a = testsig::sawtooth(200.0, 0.4, 44100);

  SECTION("identical audio gives zero") {
    REQUIRE(mfcc_distance(a, a, cfg) == Approx(0.0).margin(1e-12));
  }

  SECTION("time-reversed estimate matches the frame-loop oracle") {
    AudioBuffer rev = a;
    std::reverse(rev.samples.begin(), rev.samples.end());
    const double got = mfcc_distance(a, rev, cfg);

    const Matrix ma = mfcc(a, cfg, 13);
    const Matrix mb = mfcc(rev, cfg, 13);
    double want = 0.0;
    const size_t frames = std::min(ma.rows, mb.rows);
    for (size_t t = 0; t < frames; ++t) {
      double acc = 0.0;
      for (size_t k = 0; k < 13; ++k) {
        const double d = ma(t, k) - mb(t, k);
        acc += d * d;
      }
      want += std::sqrt(acc);
    }
    want /= static_cast<double>(frames);
    REQUIRE(got == Approx(want).epsilon(1e-12));
  }

  SECTION("per-frame triangle inequality") {
    const auto b = testsig::sine(300.0, 0.4, 44100);
    const auto c = testsig::white_noise(0.4, 44100, 9, 0.2);
    const double ab = mfcc_distance(a, b, cfg);
    const double ac = mfcc_distance(a, c, cfg);
    const double cb = mfcc_distance(c, b, cfg);
    REQUIRE(ab <= ac + cb + 1e-9);
  }
}

TEST_CASE("mmd with rbf kernel") {
  SECTION("biased estimator is exactly zero for identical sets") {
    const Matrix a = random_embeddings(12, 6, 5);
    REQUIRE(std::fabs(mmd_rbf(a, a, 1.0, true)) < 1e-12);
  }

  SECTION("unbiased estimator matches the double-sum oracle") {
    for (uint64_t seed : {1ull, 2ull, 3ull}) {
      const Matrix a = random_embeddings(15, 8, seed);
      Matrix b = random_embeddings(11, 8, seed + 100);
      for (double& v : b.data) v += 0.3;
      REQUIRE(mmd_rbf(a, b, 1.5) == Approx(mmd_rbf_oracle(a, b, 1.5)).margin(1e-12));
    }
  }

  SECTION("huge sigma drives the divergence to zero") {
    const Matrix a = random_embeddings(10, 4, 6);
    const Matrix b = random_embeddings(10, 4, 7);
    REQUIRE(std::fabs(mmd_rbf(a, b, 1e9)) < 1e-9);
  }

  SECTION("two point-masses match the closed form") {
    Matrix a(3, 2, 0.0), b(3, 2, 0.0);
    const double d = 1.7;
    for (size_t i = 0; i < 3; ++i) b(i, 0) = d;
    const double want = 2.0 - 2.0 * std::exp(-d * d / 2.0);
    REQUIRE(mmd_rbf(a, b, 1.0, true) == Approx(want).epsilon(1e-12));
  }

  SECTION("dimension mismatch is an error") {
    const Matrix a = random_embeddings(5, 4, 8);
    const Matrix b = random_embeddings(5, 3, 9);
    REQUIRE_THROWS_AS(mmd_rbf(a, b, 1.0), ConfigError);
  }
}

TEST_CASE("kid with polynomial kernel") {
  SECTION("identical sets give exactly zero") {
    Matrix a(6, 6, 0.0);
    for (size_t i = 0; i < 6; ++i) a(i, i) = 1.0;  // orthonormal
    REQUIRE(std::fabs(kid_poly(a, a, 3, 6, 1, 42)) < 1e-12);
    REQUIRE(std::fabs(kid_poly(a, a, 3, 4, 8, 42)) < 1e-12);
  }

  SECTION("full-set single subset matches the paired double-sum oracle") {
    const Matrix a = random_embeddings(10, 5, 11);
    Matrix b = random_embeddings(10, 5, 12);
    const double got = kid_poly(a, b, 3, 10, 1, 7);
    // Full-set subsets apply the same permutation to both sides, so the
    // paired statistic over the permuted sets equals the one over the
    // original order.
    const double want = mmd_paired_unbiased(a, b, 3);
    REQUIRE(got == Approx(want).margin(1e-12));
  }

  SECTION("deterministic across runs given a seed") {
    const Matrix a = random_embeddings(20, 5, 13);
    const Matrix b = random_embeddings(18, 5, 14);
    REQUIRE(kid_poly(a, b, 3, 8, 10, 99) == kid_poly(a, b, 3, 8, 10, 99));
  }

  SECTION("oversized subsets are rejected") {
    const Matrix a = random_embeddings(6, 4, 15);
    const Matrix b = random_embeddings(5, 4, 16);
    REQUIRE_THROWS_AS(kid_poly(a, b, 3, 6, 1, 1), ConfigError);
  }
}

TEST_CASE("evaluate_pair") {
  SECTION("self comparison hits the ideal values") {
    const auto x = testsig::sawtooth(220.0, 0.7, 44100);
    const MetricsReport r = evaluate_pair(x, x);
    REQUIRE(r.sc.value() == Approx(0.0).margin(1e-12));
    REQUIRE(r.lsd.value() == Approx(0.0).margin(1e-12));
    REQUIRE(r.si_sdr_db.value() == Approx(100.0));
    REQUIRE(r.f0_rmse_cents.value() == Approx(0.0).margin(1e-12));
    REQUIRE(r.vuv_error_pct.value() == 0.0);
    REQUIRE(r.mfcc_l2.value() == Approx(0.0).margin(1e-12));
  }

  SECTION("against silence") {
    const auto x = testsig::sawtooth(220.0, 0.7, 44100);
    const auto zero = testsig::silence(0.7, 44100);
    const MetricsReport r = evaluate_pair(x, zero);
    REQUIRE(r.sc.value() == Approx(1.0).epsilon(1e-9));
    if (r.si_sdr_db) REQUIRE(r.si_sdr_db.value() <= -100.0 + 1e-9);

    EvalConfig cfg;
    const auto contour = estimate_f0(resample(x, cfg.sample_rate), cfg.pitch);
    const double want_vuv =
        100.0 * static_cast<double>(contour.voiced_count()) / contour.frames();
    REQUIRE(r.vuv_error_pct.value() == Approx(want_vuv).margin(1e-9));
  }

  SECTION("report serializes and re-parses losslessly") {
    const auto x = testsig::sawtooth(220.0, 0.5, 44100);
    const MetricsReport r = evaluate_pair(x, testsig::white_noise(0.5, 44100, 3));
    const auto j = metrics_to_json(r);
    const MetricsReport back = metrics_from_json(nlohmann::json::parse(j.dump()));
    REQUIRE(back.sc == r.sc);
    REQUIRE(back.lsd == r.lsd);
    REQUIRE(back.si_sdr_db == r.si_sdr_db);
    REQUIRE(back.f0_rmse_cents == r.f0_rmse_cents);
    REQUIRE(back.log_f0_rmse == r.log_f0_rmse);
    REQUIRE(back.vuv_error_pct == r.vuv_error_pct);
    REQUIRE(back.mfcc_l2 == r.mfcc_l2);
    REQUIRE_FALSE(back.mmd.has_value());
  }
}
