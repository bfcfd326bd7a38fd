// Acceptance suite: runs every criterion at its stated tolerance and prints
// one PASS/FAIL line per criterion. Returns the number of failures.
//
// Usage: acceptance [path-to-reshift-cli] [work-dir]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "reshift/checkpoint.hpp"
#include "reshift/dataset.hpp"
#include "reshift/diffusion.hpp"
#include "reshift/dsp.hpp"
#include "reshift/metrics.hpp"
#include "reshift/pitch.hpp"
#include "reshift/psola.hpp"
#include "reshift/train.hpp"
#include "reshift/vocoder.hpp"
#include "reshift/wav.hpp"
#include "helpers.hpp"

namespace fs = std::filesystem;
using namespace reshift;

namespace {

std::string g_cli = "reshift";
fs::path g_work;

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

bool run_cli(const std::string& args) {
  const std::string cmd = g_cli + " " + args;
  const int rc = std::system(cmd.c_str());
  if (rc != 0) std::printf("    command failed (%d): %s\n", rc, cmd.c_str());
  return rc == 0;
}

bool same_bytes(const fs::path& a, const fs::path& b) {
  const auto ba = read_file_bytes(a);
  const auto bb = read_file_bytes(b);
  if (ba != bb) {
    std::printf("    byte mismatch: %s vs %s\n", a.string().c_str(), b.string().c_str());
    return false;
  }
  return true;
}

Matrix random_matrix(size_t rows, size_t cols, uint64_t seed) {
  Rng rng(seed);
  Matrix m(rows, cols);
  for (double& v : m.data) v = rng.normal();
  return m;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  double m = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::fabs(a.data[i] - b.data[i]));
  return m;
}

AudioBuffer test_vocal(double mean_f0, double seconds, double vib_cents, double vib_hz,
                       int sr = 44100) {
  return testsig::sawtooth_vibrato(mean_f0, seconds, sr, vib_cents, vib_hz, 0.4);
}

// ---------------------------------------------------------------------------
// A1: sampler exactness
// ---------------------------------------------------------------------------

bool criterion_a1() {
  Timer timer;
  const NoiseSchedule s = make_schedule(100, 1e-4, 0.06);

  double worst_inversion = 0.0;
  Rng rng(101);
  for (int i = 0; i < 100; ++i) {
    const Matrix x0 = random_matrix(4, 32, 1000 + i);
    const Matrix eps = random_matrix(4, 32, 2000 + i);
    int t = 1 + static_cast<int>(rng.uniform() * 100.0);
    t = std::min(t, 100);
    const Matrix xt = forward_noise(x0, t, eps, s);
    worst_inversion = std::max(worst_inversion, max_abs_diff(predict_x0(xt, eps, t, s), x0));
  }

  double worst_reverse = 0.0;
  const Matrix x0 = random_matrix(8, 32, 7);
  for (int stride : {1, 2, 5, 10}) {
    for (int T : {40, 100}) {
      const Matrix z = random_matrix(8, 32, 8);
      Matrix x = shallow_init(x0, T, z, s);
      int t = T;
      while (t > 0) {
        Matrix eps_true(x.rows, x.cols);
        const double sa = std::sqrt(s.abar(t)), sn = std::sqrt(1.0 - s.abar(t));
        for (size_t i = 0; i < x.data.size(); ++i)
          eps_true.data[i] = (x.data[i] - sa * x0.data[i]) / sn;
        const int t_prev = std::max(0, t - stride);
        x = ddim_step(x, eps_true, t, t_prev, s);
        t = t_prev;
      }
      worst_reverse = std::max(worst_reverse, max_abs_diff(x, x0));
    }
  }

  const double secs = timer.seconds();
  std::printf("    inversion max abs %.3g (< 1e-9), oracle reverse max abs %.3g (< 1e-6), %.1f s (< 5)\n",
              worst_inversion, worst_reverse, secs);
  return worst_inversion < 1e-9 && worst_reverse < 1e-6 && secs < 5.0;
}

// ---------------------------------------------------------------------------
// A2: gradient correctness
// ---------------------------------------------------------------------------

bool criterion_a2() {
  Timer timer;
  DenoiserConfig dcfg;
  dcfg.n_mels = 8;
  dcfg.channels = 6;
  dcfg.cond_dim = 2;
  DenoiserParams params = denoiser_init(dcfg, 21);

  MelConfig micro;
  micro.spectral = SpectralConfig{64, 16, 64, WindowKind::hann};
  micro.n_mels = 8;
  micro.f_max = 8000.0;
  micro.sample_rate = 16000;

  TrainContext ctx;
  ctx.sched = make_schedule(5, 0.01, 0.2);
  ctx.band_grid = mel_band_grid(micro, 60.0, 4000.0);
  ctx.lambda_mel = 0.9;
  ctx.lambda_f0 = 0.03;

  std::vector<TrainItem> batch;
  {
    TrainItem item;
    item.x0_norm = random_matrix(2, 8, 31);
    for (double& v : item.x0_norm.data) v *= 0.5;
    item.eps = random_matrix(2, 8, 32);
    item.t = 3;
    item.cond.f0 = {220.0, 180.0};
    item.cond.volume = {0.4, 0.3};
    batch.push_back(std::move(item));
  }

  std::vector<Tensor> grads = make_gradients(params);
  train_detail::item_pass(batch[0], ctx, params, &grads, 1.0);

  auto loss_of = [&]() { return compute_losses(batch, ctx, params).total; };
  const double h = 1e-5;
  double worst = 0.0;
  std::string worst_name;
  size_t checked = 0;
  for (size_t ti = 0; ti < params.tensors.size(); ++ti) {
    Tensor& tensor = params.tensors[ti];
    for (size_t j = 0; j < tensor.v.size(); ++j) {
      const double keep = tensor.v[j];
      tensor.v[j] = keep + h;
      const double up = loss_of();
      tensor.v[j] = keep - h;
      const double down = loss_of();
      tensor.v[j] = keep;
      const double fd = (up - down) / (2.0 * h);
      const double an = grads[ti].v[j];
      const double rel = std::fabs(fd - an) / std::max({std::fabs(fd), std::fabs(an), 1e-8});
      if (rel > worst) {
        worst = rel;
        worst_name = tensor.name + "[" + std::to_string(j) + "]";
      }
      ++checked;
    }
  }
  const double secs = timer.seconds();
  std::printf("    %zu parameters swept, worst rel err %.3g at %s (< 1e-3), %.1f s (< 30)\n",
              checked, worst, worst_name.c_str(), secs);
  return worst < 1e-3 && secs < 30.0;
}

// ---------------------------------------------------------------------------
// A3: pitch-shift fidelity
// ---------------------------------------------------------------------------

bool criterion_a3() {
  Timer timer;
  const VocoderConfig vcfg;
  bool ok = true;

  // vocoder lane: log-f0 RMSE of the shifted output against the ideally
  // shifted source contour
  for (double shift : {-12.0, -6.0, -3.0, 3.0, 6.0, 12.0}) {
    double worst = 0.0;
    for (double mean_f0 : {150.0, 220.0, 320.0}) {
      const AudioBuffer vocal = test_vocal(mean_f0, 0.6, 25.0, 5.0);
      const F0Contour source = estimate_f0(vocal, vcfg.pitch);
      const F0Contour target = shift_f0(source, shift);
      const AudioBuffer out = pitch_shift(vocal, ShiftSpec{shift}, vcfg, 5);
      const F0Contour measured = estimate_f0(out, vcfg.pitch);
      const auto rmse = log_f0_rmse(target, measured);
      if (!rmse) {
        worst = 1e9;
        continue;
      }
      worst = std::max(worst, *rmse);
    }
    const double limit = std::fabs(shift) > 6.0 ? 0.05 : 0.02;
    std::printf("    world shift %+5.1f: worst log-f0 RMSE %.4f (< %.2f)\n", shift, worst, limit);
    ok = ok && worst < limit;
  }

  // psola lane at +-12
  for (double shift : {-12.0, 12.0}) {
    double worst = 0.0;
    for (double mean_f0 : {150.0, 220.0, 320.0}) {
      const AudioBuffer vocal = test_vocal(mean_f0, 0.6, 25.0, 5.0);
      const double base = estimate_f0(vocal, vcfg.pitch).median_voiced_f0();
      const AudioBuffer out = psola_shift(vocal, ShiftSpec{shift}, vcfg.pitch);
      const double measured = estimate_f0(out, vcfg.pitch).median_voiced_f0();
      if (measured <= 0.0) {
        worst = 1e9;
        continue;
      }
      worst = std::max(worst,
                       std::fabs(cents_between(base * std::exp2(shift / 12.0), measured)));
    }
    std::printf("    psola shift %+5.1f: worst median error %.2f cents (< 15)\n", shift, worst);
    ok = ok && worst < 15.0;
  }

  const double secs = timer.seconds();
  std::printf("    %.1f s (< 60)\n", secs);
  return ok && secs < 60.0;
}

// ---------------------------------------------------------------------------
// A4: pair-generation premise
// ---------------------------------------------------------------------------

bool criterion_a4() {
  Timer timer;
  const VocoderConfig vcfg;
  const SpectralConfig eval_cfg{1024, 512, 1024, WindowKind::hann};
  bool ok = true;

  for (double shift : {-12.0, -6.0, -3.0, 3.0, 6.0, 12.0}) {
    const AudioBuffer vocal = test_vocal(210.0, 0.6, 25.0, 5.0);
    const auto [artifact, clean] = make_artifact_pair(vocal, ShiftSpec{shift}, vcfg, 17);
    const F0Contour fc = estimate_f0(clean, vcfg.pitch);
    const F0Contour fa = estimate_f0(artifact, vcfg.pitch);
    const double cents = std::fabs(cents_between(fc.median_voiced_f0(), fa.median_voiced_f0()));
    const double agreement = 100.0 - vuv_error(fc, fa);
    const double distance = lsd(magnitude_spectrogram(clean, eval_cfg).data,
                                magnitude_spectrogram(artifact, eval_cfg).data);
    std::printf("    shift %+5.1f: f0 drift %.2f cents (< 20), voicing agreement %.1f%% (>= 90), "
                "LSD %.3f (> 0.1)\n",
                shift, cents, agreement, distance);
    ok = ok && cents < 20.0 && agreement >= 90.0 && distance > 0.1;
  }
  const double secs = timer.seconds();
  std::printf("    %.1f s (< 60)\n", secs);
  return ok && secs < 60.0;
}

// ---------------------------------------------------------------------------
// A5: end-to-end restoration at toy scale
// ---------------------------------------------------------------------------

bool criterion_a5() {
  Timer timer;
  const fs::path corpus = g_work / "a5_corpus";
  const fs::path data = g_work / "a5_data";
  fs::remove_all(corpus);
  fs::remove_all(data);
  fs::create_directories(corpus);

  // 50 training clips spread over the vocal range
  for (int i = 0; i < 50; ++i) {
    const double mean_f0 = 150.0 + 170.0 * (i % 10) / 9.0;
    char name[64];
    std::snprintf(name, sizeof(name), "train_%03d.wav", i);
    write_wav(corpus / name,
              test_vocal(mean_f0, 1.5, 18.0 + 2.0 * (i % 5), 4.2 + 0.35 * (i % 4)));
  }

  BuildConfig bcfg;
  bcfg.per_file_shifts = 1;
  bcfg.seed = 505;
  bcfg.jobs = 0;
  const CorpusManifest manifest = build_pairs(corpus, data, bcfg);
  std::printf("    corpus built: %zu records (%.0f s)\n", manifest.records.size(),
              timer.seconds());

  TrainingConfig tcfg;
  tcfg.steps = 2000;
  tcfg.batch_size = 16;
  tcfg.block_frames = 64;
  tcfg.seed = 606;
  tcfg.val_interval = 500;
  const MelConfig mel_cfg = mel_from_json(manifest.config.at("mel"));
  const PitchConfig pitch_cfg = pitch_from_json(manifest.config.at("pitch"));
  const TrainRunResult run = train_run(manifest, data, tcfg, mel_cfg, pitch_cfg);
  std::printf("    trained %d steps: first-10 mean loss %.3f, last-10 mean %.3f (%.0f s)\n",
              tcfg.steps, run.first_window_mean, run.last_window_mean, timer.seconds());

  // 10 held-out clips at unseen pitches, one artifact pair each
  const NoiseSchedule sched = make_schedule(tcfg.K, tcfg.beta_start, tcfg.beta_end);
  const double shifts[10] = {3.0, -3.0, 6.0, -6.0, 9.0, -9.0, 12.0, -12.0, 4.5, -7.5};
  int sc_improved = 0;
  std::vector<double> mfcc_art, mfcc_rest;
  VocoderConfig vcfg;
  vcfg.pitch = pitch_cfg;
  vcfg.spectral = mel_cfg.spectral;
  for (int i = 0; i < 10; ++i) {
    const double mean_f0 = 160.0 + 15.5 * i;
    const AudioBuffer vocal = test_vocal(mean_f0, 1.5, 21.0, 4.8);
    const auto [artifact, clean] =
        make_artifact_pair(vocal, ShiftSpec{shifts[i]}, vcfg, 707 + i);
    const MelSpectrogram clean_mel = log_mel(clean, mel_cfg);
    MelSpectrogram art_mel = log_mel(artifact, mel_cfg);
    const Conditioning cond = extract_conditioning(artifact, mel_cfg, pitch_cfg);
    const MelSpectrogram restored =
        restore(art_mel, cond, run.checkpoint.params, sched, tcfg.T, tcfg.stride, 808 + i);

    // SC and MFCC in the mel domain
    Matrix clean_pow(clean_mel.data.rows, clean_mel.data.cols);
    Matrix art_pow = clean_pow, rest_pow = clean_pow;
    for (size_t k = 0; k < clean_pow.data.size(); ++k) {
      clean_pow.data[k] = std::exp(clean_mel.data.data[k]);
      art_pow.data[k] = std::exp(art_mel.data.data[k]);
      rest_pow.data[k] = std::exp(restored.data.data[k]);
    }
    const double sc_art = spectral_convergence(clean_pow, art_pow).value_or(1e9);
    const double sc_rest = spectral_convergence(clean_pow, rest_pow).value_or(1e9);
    if (sc_rest < sc_art) ++sc_improved;

    const Matrix mf_clean = mfcc_from_log_mel(clean_mel.data, 13);
    const Matrix mf_art = mfcc_from_log_mel(art_mel.data, 13);
    const Matrix mf_rest = mfcc_from_log_mel(restored.data, 13);
    auto mfcc_dist = [](const Matrix& a, const Matrix& b) {
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
      return total / static_cast<double>(frames);
    };
    mfcc_art.push_back(mfcc_dist(mf_clean, mf_art));
    mfcc_rest.push_back(mfcc_dist(mf_clean, mf_rest));
    std::printf("    clip %d (shift %+.1f): SC %.4f -> %.4f, MFCC %.2f -> %.2f\n", i, shifts[i],
                sc_art, sc_rest, mfcc_art.back(), mfcc_rest.back());
  }
  std::sort(mfcc_art.begin(), mfcc_art.end());
  std::sort(mfcc_rest.begin(), mfcc_rest.end());
  const double med_art = 0.5 * (mfcc_art[4] + mfcc_art[5]);
  const double med_rest = 0.5 * (mfcc_rest[4] + mfcc_rest[5]);
  const double secs = timer.seconds();
  std::printf("    SC improved on %d/10 clips (>= 7); median MFCC %.3f -> %.3f (<= %.3f); "
              "%.0f s (< 900)\n",
              sc_improved, med_art, med_rest, 0.9 * med_art, secs);
  return sc_improved >= 7 && med_rest <= 0.9 * med_art && secs < 900.0;
}

// ---------------------------------------------------------------------------
// A6: metric suite correctness
// ---------------------------------------------------------------------------

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

double kid_paired_oracle(const Matrix& x, const Matrix& y, int degree) {
  const size_t m = x.rows;
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

bool criterion_a6() {
  Timer timer;
  bool ok = true;

  // SC hand case
  {
    Matrix ref(1, 2, 0.0), est(1, 2, 0.0);
    ref(0, 0) = 3.0;
    ref(0, 1) = 4.0;
    ok = ok && std::fabs(spectral_convergence(ref, est).value() - 1.0) < 1e-12;
  }
  // LSD factor of 10
  {
    Matrix r = random_matrix(3, 6, 61);
    for (double& v : r.data) v = std::fabs(v) + 0.1;
    Matrix e = r;
    for (double& v : e.data) v *= 10.0;
    ok = ok && std::fabs(lsd(r, e) - 2.0) < 1e-12;
  }
  // SI-SDR: exact scale invariance and the 0 dB orthogonal construction
  {
    const AudioBuffer ref = testsig::sawtooth(180.0, 0.2, 44100);
    AudioBuffer est = testsig::white_noise(0.2, 44100, 3);
    for (size_t i = 0; i < est.samples.size(); ++i) est.samples[i] += ref.samples[i];
    AudioBuffer est2 = est;
    for (double& v : est2.samples) v *= 2.0;  // power-of-two scale, exact in fp
    ok = ok && si_sdr(ref, est).value() == si_sdr(ref, est2).value();

    std::vector<double> r, e;
    for (int i = 0; i < 4000; ++i) {
      const int phase = i % 4;
      const double rv = phase == 0 ? 1.0 : (phase == 2 ? -1.0 : 0.0);
      const double nv = phase == 1 ? 1.0 : (phase == 3 ? -1.0 : 0.0);
      r.push_back(rv);
      e.push_back(rv + nv);
    }
    const double db = si_sdr(AudioBuffer(r, 44100), AudioBuffer(e, 44100)).value();
    ok = ok && std::fabs(db) < 1e-9;
  }
  // one semitone is 100 cents
  {
    F0Contour a, b;
    for (int i = 0; i < 8; ++i) {
      a.f0.push_back(220.0);
      a.voiced.push_back(1);
      b.f0.push_back(233.082);
      b.voiced.push_back(1);
    }
    const double cents = f0_rmse_cents(a, b).value();
    std::printf("    f0_rmse(220, 233.082) = %.4f cents (100 +- 0.01)\n", cents);
    ok = ok && std::fabs(cents - 100.0) < 0.01;
  }
  // MMD and KID against O(n^2) double-sum oracles at n <= 50
  {
    double worst = 0.0;
    for (uint64_t seed : {1ull, 2ull, 3ull}) {
      const size_t m = 30 + 7 * seed;
      Matrix a = random_matrix(m, 12, 100 + seed);
      Matrix b = random_matrix(m + 5, 12, 200 + seed);
      for (double& v : b.data) v += 0.2;
      worst = std::max(worst, std::fabs(mmd_rbf(a, b, 1.3) - mmd_rbf_oracle(a, b, 1.3)));
    }
    // KID with full-set single subset on equal sizes applies the identity
    // permutation to both sides
    const Matrix a = random_matrix(50, 10, 301);
    Matrix b = random_matrix(50, 10, 302);
    for (double& v : b.data) v += 0.1;
    worst = std::max(worst, std::fabs(kid_poly(a, b, 3, 50, 1, 1) - kid_paired_oracle(a, b, 3)));
    worst = std::max(worst, std::fabs(kid_poly(a, a, 3, 50, 1, 9)));
    std::printf("    MMD/KID worst deviation from oracles %.3g (< 1e-12)\n", worst);
    ok = ok && worst < 1e-12;
  }
  // MFCC distance against the frame-loop oracle
  {
    MelConfig cfg;
    cfg.spectral = SpectralConfig{1024, 512, 1024, WindowKind::hann};
    const AudioBuffer x = testsig::sawtooth(200.0, 0.3, 44100);
    AudioBuffer rev = x;
    std::reverse(rev.samples.begin(), rev.samples.end());
    const Matrix ma = mfcc(x, cfg, 13);
    const Matrix mb = mfcc(rev, cfg, 13);
    double want = 0.0;
    for (size_t t = 0; t < ma.rows; ++t) {
      double acc = 0.0;
      for (size_t k = 0; k < 13; ++k) {
        const double d = ma(t, k) - mb(t, k);
        acc += d * d;
      }
      want += std::sqrt(acc);
    }
    want /= static_cast<double>(ma.rows);
    ok = ok && std::fabs(mfcc_distance(x, rev, cfg) - want) < 1e-12;
  }

  const double secs = timer.seconds();
  std::printf("    %.1f s (< 10)\n", secs);
  return ok && secs < 10.0;
}

// ---------------------------------------------------------------------------
// A7: determinism through the CLI
// ---------------------------------------------------------------------------

bool criterion_a7() {
  Timer timer;
  const fs::path root = g_work / "a7";
  fs::remove_all(root);
  const fs::path corpus = root / "corpus";
  fs::create_directories(corpus);
  for (int i = 0; i < 6; ++i) {
    char name[64];
    std::snprintf(name, sizeof(name), "clip_%02d.wav", i);
    write_wav(corpus / name, test_vocal(165.0 + 22.0 * i, 1.0, 20.0, 4.5));
  }

  bool ok = true;
  const std::string c = corpus.string();
  auto p = [&](const char* s) { return (root / s).string(); };

  // pairs, twice with the same seed (different job counts)
  ok = ok && run_cli("pairs " + c + " " + p("d1") + " --seed 11 --jobs 4 --out-report " + p("r1.json"));
  ok = ok && run_cli("pairs " + c + " " + p("d2") + " --seed 11 --jobs 1 --out-report " + p("r2.json"));
  if (!ok) return false;
  ok = ok && same_bytes(root / "d1/manifest.json", root / "d2/manifest.json");
  const CorpusManifest manifest = load_manifest(root / "d1/manifest.json");
  for (const auto& rec : manifest.records) {
    ok = ok && same_bytes(root / "d1" / rec.clean_mel_path, root / "d2" / rec.clean_mel_path);
    ok = ok && same_bytes(root / "d1" / rec.artifact_mel_path, root / "d2" / rec.artifact_mel_path);
    ok = ok && same_bytes(root / "d1" / rec.f0_path, root / "d2" / rec.f0_path);
    ok = ok && same_bytes(root / "d1" / rec.volume_path, root / "d2" / rec.volume_path);
  }
  std::printf("    pairs reruns byte-identical: %s\n", ok ? "yes" : "NO");

  // train, twice
  const std::string topts = " --steps 40 --batch-size 4 --block-frames 64 --seed 13 --val-interval 20";
  ok = ok && run_cli("train " + p("d1/manifest.json") + " " + p("ck1.psra") + topts +
                     " --out " + p("t1.json"));
  ok = ok && run_cli("train " + p("d2/manifest.json") + " " + p("ck2.psra") + topts +
                     " --out " + p("t2.json"));
  if (!ok) return false;
  ok = ok && same_bytes(root / "ck1.psra", root / "ck2.psra");
  ok = ok && same_bytes(root / "ck1.psra.loss.csv", root / "ck2.psra.loss.csv");
  std::printf("    train reruns byte-identical: %s\n", ok ? "yes" : "NO");

  // restore, twice (WAV plus the restored mel PSRT)
  const fs::path in_wav = corpus / "clip_00.wav";
  ok = ok && run_cli("restore " + in_wav.string() + " " + p("ck1.psra") + " " + p("w1.wav") +
                     " --seed 17 --gl-iters 12 --out " + p("rr1.json"));
  ok = ok && run_cli("restore " + in_wav.string() + " " + p("ck2.psra") + " " + p("w2.wav") +
                     " --seed 17 --gl-iters 12 --out " + p("rr2.json"));
  if (!ok) return false;
  ok = ok && same_bytes(root / "w1.wav", root / "w2.wav");
  ok = ok && same_bytes(root / "w1.wav.mel.psrt", root / "w2.wav.mel.psrt");
  std::printf("    restore reruns byte-identical: %s\n", ok ? "yes" : "NO");

  // eval, twice over the same directories
  fs::create_directories(root / "est");
  fs::copy_file(root / "w1.wav", root / "est/clip_00.wav");
  ok = ok && run_cli("eval " + c + " " + p("est") + " --jobs 2 --seed 19 --out " + p("e1.json"));
  ok = ok && run_cli("eval " + c + " " + p("est") + " --jobs 1 --seed 19 --out " + p("e2.json"));
  if (!ok) return false;
  ok = ok && same_bytes(root / "e1.json", root / "e2.json");
  std::printf("    eval reruns byte-identical: %s\n", ok ? "yes" : "NO");

  std::printf("    %.0f s\n", timer.seconds());
  return ok;
}

}  // namespace

int main(int argc, char** argv) {
  g_cli = argc > 1 ? argv[1] : "reshift";
  g_work = argc > 2 ? fs::path(argv[2]) : fs::temp_directory_path() / "reshift_acceptance";
  fs::create_directories(g_work);

  struct Criterion {
    const char* name;
    bool (*fn)();
  };
  const Criterion criteria[] = {
      {"A1 sampler exactness", criterion_a1},
      {"A2 gradient correctness", criterion_a2},
      {"A3 pitch-shift fidelity", criterion_a3},
      {"A4 pair-generation premise", criterion_a4},
      {"A5 end-to-end restoration", criterion_a5},
      {"A6 metric suite correctness", criterion_a6},
      {"A7 determinism", criterion_a7},
  };

  int failures = 0;
  for (const auto& criterion : criteria) {
    std::printf("[ RUN  ] %s\n", criterion.name);
    std::fflush(stdout);
    bool pass = false;
    try {
      pass = criterion.fn();
    } catch (const std::exception& e) {
      std::printf("    exception: %s\n", e.what());
    }
    std::printf("[ %s ] %s\n", pass ? "PASS" : "FAIL", criterion.name);
    std::fflush(stdout);
    if (!pass) ++failures;
  }
  std::printf("%d/7 criteria passed\n", 7 - failures);
  return failures;
}
