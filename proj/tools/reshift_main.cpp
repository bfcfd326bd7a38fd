// reshift: batch pitch shifting, artifact-pair generation, shallow
// diffusion training/restoration, and objective evaluation.

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "reshift/checkpoint.hpp"
#include "reshift/config_json.hpp"
#include "reshift/dataset.hpp"
#include "reshift/diffusion.hpp"
#include "reshift/dsp.hpp"
#include "reshift/metrics.hpp"
#include "reshift/pitch.hpp"
#include "reshift/psola.hpp"
#include "reshift/train.hpp"
#include "reshift/vocoder.hpp"
#include "reshift/wav.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace reshift;

namespace {

void emit_report(const json& report, const std::string& out_path) {
  const std::string text = report.dump(2) + "\n";
  if (out_path.empty()) {
    std::fwrite(text.data(), 1, text.size(), stdout);
  } else {
    write_file_bytes(out_path, std::vector<uint8_t>(text.begin(), text.end()));
  }
}

AudioBuffer load_audio_at(const fs::path& path, int rate) {
  AudioBuffer audio = read_wav(path);
  if (audio.sample_rate != rate) audio = resample(audio, rate);
  return audio;
}

// ---------------------------------------------------------------------------
// shift
// ---------------------------------------------------------------------------

int cmd_shift(const std::string& in_path, const std::string& out_path, double semitones,
              const std::string& method, uint64_t seed, const std::string& report_path) {
  const ShiftSpec shift{semitones};
  shift.validate();
  VocoderConfig vcfg;
  const AudioBuffer audio = load_audio_at(in_path, 44100);

  AudioBuffer shifted;
  if (method == "world") {
    shifted = pitch_shift(audio, shift, vcfg, seed);
  } else if (method == "psola") {
    shifted = psola_shift(audio, shift, vcfg.pitch);
  } else {
    throw ConfigError("shift: method must be world or psola");
  }
  write_wav(out_path, shifted);

  const F0Contour contour = estimate_f0(shifted, vcfg.pitch);
  json report = {{"command", "shift"},
                 {"seed", seed},
                 {"method", method},
                 {"semitones", semitones},
                 {"in", in_path},
                 {"out", out_path},
                 {"median_f0_hz", contour.median_voiced_f0()},
                 {"voiced_frames", contour.voiced_count()},
                 {"frames", contour.frames()}};
  emit_report(report, report_path);
  return 0;
}

// ---------------------------------------------------------------------------
// pairs
// ---------------------------------------------------------------------------

int cmd_pairs(const std::string& corpus_dir, const std::string& out_dir, int per_file_shifts,
              double split_ratio, double max_shift, double min_abs_shift, uint64_t seed, int jobs,
              const std::string& report_path) {
  BuildConfig cfg;
  cfg.per_file_shifts = per_file_shifts;
  cfg.split_ratio = split_ratio;
  cfg.shift_max = max_shift;
  cfg.shift_min_abs = min_abs_shift;
  cfg.seed = seed;
  cfg.jobs = jobs;
  const CorpusManifest manifest = build_pairs(corpus_dir, out_dir, cfg);
  json report = {{"command", "pairs"},
                 {"seed", seed},
                 {"corpus", corpus_dir},
                 {"out", out_dir},
                 {"records", manifest.records.size()},
                 {"train_records", manifest.count_split("train")},
                 {"val_records", manifest.count_split("val")}};
  emit_report(report, report_path);
  return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

int cmd_train(const std::string& manifest_path, const std::string& out_ckpt,
              const std::string& config_path, const std::string& resume_path,
              const std::string& loss_csv_path, const json& overrides,
              const std::string& report_path) {
  TrainingConfig cfg;
  if (!config_path.empty()) {
    const auto bytes = read_file_bytes(config_path);
    cfg = training_from_json(json::parse(bytes.begin(), bytes.end()));
  }
  // flags win over the config file
  json merged = training_to_json(cfg);
  for (auto it = overrides.begin(); it != overrides.end(); ++it) {
    if (it.key() == "K" || it.key() == "beta_start" || it.key() == "beta_end")
      merged["schedule"][it.key()] = it.value();
    else
      merged[it.key()] = it.value();
  }
  cfg = training_from_json(merged);

  const CorpusManifest manifest = load_manifest(manifest_path);
  const fs::path data_dir = fs::path(manifest_path).parent_path();
  MelConfig mel_cfg;
  PitchConfig pitch_cfg;
  if (manifest.config.contains("mel")) mel_cfg = mel_from_json(manifest.config.at("mel"));
  if (manifest.config.contains("pitch")) pitch_cfg = pitch_from_json(manifest.config.at("pitch"));

  std::optional<Checkpoint> resume;
  if (!resume_path.empty()) {
    if (!fs::exists(resume_path)) throw ConfigError("train: checkpoint not found: " + resume_path);
    resume = load_checkpoint(resume_path);
    if (resume->params.cfg.n_mels != mel_cfg.n_mels)
      throw ConfigError("train: resume checkpoint mel bands do not match the corpus");
  }

  const TrainRunResult result = train_run(manifest, data_dir, cfg, mel_cfg, pitch_cfg,
                                          resume ? &*resume : nullptr);
  save_checkpoint(out_ckpt, result.checkpoint);
  const std::string csv_path = loss_csv_path.empty() ? out_ckpt + ".loss.csv" : loss_csv_path;
  write_file_bytes(csv_path,
                   std::vector<uint8_t>(result.loss_csv.begin(), result.loss_csv.end()));

  json report = {{"command", "train"},
                 {"seed", cfg.seed},
                 {"manifest", manifest_path},
                 {"checkpoint", out_ckpt},
                 {"loss_csv", csv_path},
                 {"steps", cfg.steps},
                 {"adam_step", result.checkpoint.adam.step},
                 {"first_window_mean_loss", result.first_window_mean},
                 {"last_window_mean_loss", result.last_window_mean}};
  emit_report(report, report_path);
  return 0;
}

// ---------------------------------------------------------------------------
// restore
// ---------------------------------------------------------------------------

// Volume proxy when only a mel is available: RMS of the linear mel power.
std::vector<double> volume_from_mel(const Matrix& log_mel_data) {
  std::vector<double> vol(log_mel_data.rows, 0.0);
  for (size_t t = 0; t < log_mel_data.rows; ++t) {
    double acc = 0.0;
    for (size_t m = 0; m < log_mel_data.cols; ++m) acc += std::exp(log_mel_data(t, m));
    vol[t] = std::sqrt(acc / static_cast<double>(log_mel_data.cols));
  }
  return vol;
}

int cmd_restore(const std::string& in_path, const std::string& ckpt_path,
                const std::string& out_path, int T, int stride, uint64_t seed, int gl_iters,
                const std::string& f0_path, const std::string& out_mel_path,
                const std::string& report_path) {
  if (!fs::exists(ckpt_path)) throw ConfigError("restore: checkpoint not found: " + ckpt_path);
  const Checkpoint cp = load_checkpoint(ckpt_path);
  const MelConfig& mel_cfg = cp.mel;
  const NoiseSchedule sched = make_schedule(cp.train.K, cp.train.beta_start, cp.train.beta_end);
  const int use_T = T > 0 ? T : cp.train.T;
  const int use_stride = stride > 0 ? stride : cp.train.stride;

  MelSpectrogram mel_art;
  Conditioning cond;
  const bool is_psrt = fs::path(in_path).extension() == ".psrt";
  if (is_psrt) {
    mel_art.config = mel_cfg;
    mel_art.data = psrt_read_matrix(in_path);
    if (mel_art.data.cols != static_cast<size_t>(mel_cfg.n_mels))
      throw ConfigError("restore: input mel has " + std::to_string(mel_art.data.cols) +
                        " bands, checkpoint expects " + std::to_string(mel_cfg.n_mels));
    if (!f0_path.empty()) {
      const F0Contour fc = f0_read_psrt(f0_path, mel_cfg.spectral.hop, mel_cfg.sample_rate);
      if (fc.frames() != mel_art.data.rows)
        throw ConfigError("restore: f0 sidecar frames do not match the mel");
      cond.f0.assign(fc.f0.begin(), fc.f0.end());
    } else {
      const MelBandGrid grid = mel_band_grid(mel_cfg, cp.pitch.f_min, cp.pitch.f_max);
      cond.f0 = f0_from_mel(mel_art.data, grid);
    }
    cond.volume = volume_from_mel(mel_art.data);
  } else {
    const AudioBuffer audio = load_audio_at(in_path, mel_cfg.sample_rate);
    mel_art = log_mel(audio, mel_cfg);
    cond = extract_conditioning(audio, mel_cfg, cp.pitch);
  }

  if (static_cast<int>(cond.width()) != cp.params.cfg.cond_dim)
    throw ConfigError("restore: conditioning width " + std::to_string(cond.width()) +
                      " does not match the checkpoint (" +
                      std::to_string(cp.params.cfg.cond_dim) +
                      "); content features may be required");

  const MelSpectrogram restored =
      restore(mel_art, cond, cp.params, sched, use_T, use_stride, seed);

  const std::string mel_out = out_mel_path.empty() ? out_path + ".mel.psrt" : out_mel_path;
  psrt_write_matrix(mel_out, restored.data);
  const AudioBuffer rendered = griffin_lim(restored, gl_iters, mix_seed(seed, 0x61));
  write_wav(out_path, rendered);

  json report = {{"command", "restore"}, {"seed", seed},
                 {"in", in_path},        {"checkpoint", ckpt_path},
                 {"out", out_path},      {"out_mel", mel_out},
                 {"T", use_T},           {"stride", use_stride},
                 {"gl_iters", gl_iters}, {"frames", restored.data.rows}};
  emit_report(report, report_path);
  return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

json aggregate_metric(const std::vector<json>& pairs, const char* key) {
  std::vector<double> values;
  for (const auto& p : pairs) {
    const auto& v = p.at("metrics").at(key);
    if (!v.is_null()) values.push_back(v.get<double>());
  }
  if (values.empty()) return {{"mean", nullptr}, {"median", nullptr}, {"count", 0}};
  std::sort(values.begin(), values.end());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  const size_t n = values.size();
  const double median = n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
  return {{"mean", mean}, {"median", median}, {"count", n}};
}

int cmd_eval(const std::string& ref_dir, const std::string& est_dir, int jobs, uint64_t seed,
             const std::string& report_path) {
  if (!fs::is_directory(ref_dir)) throw ConfigError("eval: not a directory: " + ref_dir);
  if (!fs::is_directory(est_dir)) throw ConfigError("eval: not a directory: " + est_dir);

  std::vector<std::string> ref_stems, est_stems;
  for (const auto& e : fs::directory_iterator(ref_dir))
    if (e.is_regular_file() && e.path().extension() == ".wav")
      ref_stems.push_back(e.path().stem().string());
  for (const auto& e : fs::directory_iterator(est_dir))
    if (e.is_regular_file() && e.path().extension() == ".wav")
      est_stems.push_back(e.path().stem().string());
  std::sort(ref_stems.begin(), ref_stems.end());
  std::sort(est_stems.begin(), est_stems.end());

  std::vector<std::string> matched, unmatched_ref, unmatched_est;
  for (const auto& s : ref_stems) {
    if (std::binary_search(est_stems.begin(), est_stems.end(), s))
      matched.push_back(s);
    else
      unmatched_ref.push_back(s);
  }
  for (const auto& s : est_stems)
    if (!std::binary_search(ref_stems.begin(), ref_stems.end(), s)) unmatched_est.push_back(s);

  const EvalConfig eval_cfg;
  std::vector<json> pair_reports(matched.size());
  std::atomic<size_t> next{0};
  auto worker = [&] {
    while (true) {
      const size_t i = next.fetch_add(1);
      if (i >= matched.size()) break;
      const fs::path ref_path = fs::path(ref_dir) / (matched[i] + ".wav");
      const fs::path est_path = fs::path(est_dir) / (matched[i] + ".wav");
      const AudioBuffer ref = read_wav(ref_path);
      const AudioBuffer est = read_wav(est_path);
      const MetricsReport rep = evaluate_pair(ref, est, eval_cfg);
      pair_reports[i] = {{"ref", ref_path.string()},
                         {"est", est_path.string()},
                         {"metrics", metrics_to_json(rep)}};
    }
  };
  const int n_threads =
      jobs > 0 ? jobs : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  if (n_threads <= 1 || matched.size() <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < n_threads; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  json aggregate;
  for (const char* key : {"sc", "lsd", "si_sdr_db", "f0_rmse_cents", "log_f0_rmse",
                          "vuv_error_pct", "mfcc_l2"})
    aggregate[key] = aggregate_metric(pair_reports, key);

  json report = {{"command", "eval"},
                 {"seed", seed},
                 {"ref_dir", ref_dir},
                 {"est_dir", est_dir},
                 {"config",
                  {{"sample_rate", eval_cfg.sample_rate},
                   {"hop", eval_cfg.spectral.hop},
                   {"n_fft", eval_cfg.spectral.n_fft},
                   {"n_mels", eval_cfg.n_mels},
                   {"mfcc_coeffs", eval_cfg.mfcc_coeffs}}},
                 {"pairs", pair_reports},
                 {"unmatched_ref", unmatched_ref},
                 {"unmatched_est", unmatched_est},
                 {"aggregate", aggregate}};
  emit_report(report, report_path);
  return 0;
}

// ---------------------------------------------------------------------------
// features
// ---------------------------------------------------------------------------

int cmd_features(const std::string& in_path, const std::string& out_dir,
                 const std::string& content_path, uint64_t seed,
                 const std::string& report_path) {
  const MelConfig mel_cfg;
  const PitchConfig pitch_cfg;
  const AudioBuffer audio = load_audio_at(in_path, mel_cfg.sample_rate);
  fs::create_directories(out_dir);
  const std::string stem = fs::path(in_path).stem().string();

  const MelSpectrogram mel = log_mel(audio, mel_cfg);
  const Conditioning cond = extract_conditioning(
      audio, mel_cfg, pitch_cfg, content_path.empty() ? fs::path{} : fs::path(content_path));

  const fs::path mel_out = fs::path(out_dir) / (stem + ".mel.psrt");
  const fs::path f0_out = fs::path(out_dir) / (stem + ".f0.psrt");
  const fs::path f0_csv_out = fs::path(out_dir) / (stem + ".f0.csv");
  const fs::path vol_out = fs::path(out_dir) / (stem + ".vol.psrt");
  psrt_write_matrix(mel_out, mel.data);
  F0Contour fc;
  fc.f0 = cond.f0;
  fc.voiced.resize(cond.f0.size());
  for (size_t i = 0; i < cond.f0.size(); ++i) fc.voiced[i] = cond.f0[i] > 0.0 ? 1 : 0;
  fc.hop = pitch_cfg.hop;
  fc.sample_rate = mel_cfg.sample_rate;
  f0_write_psrt(f0_out, fc);
  const std::string csv = f0_to_csv(fc);
  write_file_bytes(f0_csv_out, std::vector<uint8_t>(csv.begin(), csv.end()));
  psrt_write(vol_out, {static_cast<uint32_t>(cond.volume.size())}, cond.volume, PsrtDtype::f32);

  json report = {{"command", "features"},
                 {"seed", seed},
                 {"in", in_path},
                 {"mel", mel_out.string()},
                 {"f0", f0_out.string()},
                 {"f0_csv", f0_csv_out.string()},
                 {"volume", vol_out.string()},
                 {"frames", mel.data.rows}};
  if (cond.has_content()) {
    const fs::path content_out = fs::path(out_dir) / (stem + ".content.psrt");
    psrt_write_matrix(content_out, cond.content);
    report["content"] = content_out.string();
  }
  emit_report(report, report_path);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pitch shifting for singing voice: classical shifters, artifact-pair "
               "generation, shallow mel diffusion restoration, and objective evaluation"};
  app.require_subcommand(1);

  // shift
  auto* shift = app.add_subcommand("shift", "pitch-shift one WAV with a classical method");
  std::string sh_in, sh_out, sh_method = "world", sh_report;
  double sh_semitones = 0.0;
  uint64_t sh_seed = 0;
  shift->add_option("input", sh_in, "input WAV")->required();
  shift->add_option("output", sh_out, "output WAV")->required();
  shift->add_option("--semitones", sh_semitones, "shift in semitones, [-12, 12]")
      ->required()
      ->check(CLI::Range(-12.0, 12.0));
  shift->add_option("--method", sh_method, "world | psola")->capture_default_str();
  shift->add_option("--seed", sh_seed, "rng seed")->capture_default_str();
  shift->add_option("--out", sh_report, "write the JSON report here instead of stdout");

  // pairs
  auto* pairs = app.add_subcommand("pairs", "build the self-supervised artifact-pair corpus");
  std::string pa_corpus, pa_out, pa_report;
  int pa_shifts = 2, pa_jobs = 0;
  double pa_split = 0.95, pa_max = 12.0, pa_min_abs = 0.5;
  uint64_t pa_seed = 0;
  pairs->add_option("corpus", pa_corpus, "directory of WAV files")->required();
  pairs->add_option("out", pa_out, "output directory")->required();
  pairs->add_option("--per-file-shifts", pa_shifts, "shift draws per file")->capture_default_str();
  pairs->add_option("--split-ratio", pa_split, "train fraction")->capture_default_str();
  pairs->add_option("--max-shift", pa_max, "largest |shift| in semitones")->capture_default_str();
  pairs->add_option("--min-abs-shift", pa_min_abs, "smallest |shift| in semitones")
      ->capture_default_str();
  pairs->add_option("--seed", pa_seed, "rng seed")->capture_default_str();
  pairs->add_option("--jobs", pa_jobs, "worker threads (0 = all cores)")->capture_default_str();
  pairs->add_option("--out-report", pa_report, "write the JSON report here instead of stdout");

  // train
  auto* train = app.add_subcommand("train", "train the denoiser on a pair corpus");
  std::string tr_manifest, tr_ckpt, tr_config, tr_resume, tr_csv, tr_report;
  train->add_option("manifest", tr_manifest, "manifest.json from pairs")->required();
  train->add_option("checkpoint", tr_ckpt, "output checkpoint path")->required();
  train->add_option("--config", tr_config, "training config JSON");
  train->add_option("--resume", tr_resume, "checkpoint to continue from");
  train->add_option("--loss-csv", tr_csv, "loss curve CSV path (default <checkpoint>.loss.csv)");
  train->add_option("--out", tr_report, "write the JSON report here instead of stdout");
  // flag overrides; only flags the user sets are applied over the config file
  std::map<std::string, double> tr_num;
  std::map<std::string, long> tr_int;
  auto add_num = [&](const char* flag, const char* key, const char* help) {
    train->add_option_function<double>(
        flag, [&tr_num, key](double v) { tr_num[key] = v; }, help);
  };
  auto add_int = [&](const char* flag, const char* key, const char* help) {
    train->add_option_function<long>(
        flag, [&tr_int, key](long v) { tr_int[key] = v; }, help);
  };
  add_int("--steps", "steps", "training steps");
  add_int("--batch-size", "batch_size", "items per step");
  add_int("--block-frames", "block_frames", "mel frames per item");
  add_int("--K", "K", "diffusion steps");
  add_int("--T", "T", "shallow depth");
  add_int("--stride", "stride", "DDIM stride");
  add_int("--val-interval", "val_interval", "steps between validation passes");
  add_int("--channels", "channels", "denoiser channel width");
  add_int("--seed", "seed", "rng seed");
  add_int("--lr-decay-every", "lr_decay_every", "steps between halvings of the rate");
  add_num("--lr", "lr", "Adam learning rate");
  add_num("--lambda-mel", "lambda1", "weight of the mel L1 term");
  add_num("--lambda-f0", "lambda2", "weight of the f0 L1 term");
  add_num("--beta-start", "beta_start", "first beta of the schedule");
  add_num("--beta-end", "beta_end", "last beta of the schedule");
  add_num("--mel-mean", "mel_mean", "mel normalization mean");
  add_num("--mel-scale", "mel_scale", "mel normalization scale");

  // restore
  auto* rest = app.add_subcommand("restore", "denoise a shifted input through the checkpoint");
  std::string re_in, re_ckpt, re_out, re_f0, re_mel_out, re_report;
  int re_T = 0, re_stride = 0, re_gl = 60;
  uint64_t re_seed = 0;
  rest->add_option("input", re_in, "input WAV or mel PSRT")->required();
  rest->add_option("checkpoint", re_ckpt, "trained checkpoint")->required();
  rest->add_option("output", re_out, "output WAV")->required();
  rest->add_option("--T", re_T, "shallow depth (0 = checkpoint default)")->capture_default_str();
  rest->add_option("--stride", re_stride, "DDIM stride (0 = checkpoint default)")
      ->capture_default_str();
  rest->add_option("--seed", re_seed, "rng seed")->capture_default_str();
  rest->add_option("--gl-iters", re_gl, "Griffin-Lim iterations")->capture_default_str();
  rest->add_option("--f0", re_f0, "f0 PSRT sidecar for mel inputs");
  rest->add_option("--out-mel", re_mel_out, "restored mel PSRT path (default <output>.mel.psrt)");
  rest->add_option("--out", re_report, "write the JSON report here instead of stdout");

  // eval
  auto* eval = app.add_subcommand("eval", "pair reference/estimate WAVs by stem and score them");
  std::string ev_ref, ev_est, ev_report;
  int ev_jobs = 0;
  uint64_t ev_seed = 0;
  eval->add_option("ref", ev_ref, "reference directory")->required();
  eval->add_option("est", ev_est, "estimate directory")->required();
  eval->add_option("--jobs", ev_jobs, "worker threads (0 = all cores)")->capture_default_str();
  eval->add_option("--seed", ev_seed, "rng seed")->capture_default_str();
  eval->add_option("--out", ev_report, "write the JSON report here instead of stdout");

  // features
  auto* feat = app.add_subcommand("features", "extract mel, f0, and volume caches for one WAV");
  std::string fe_in, fe_out, fe_content, fe_report;
  uint64_t fe_seed = 0;
  feat->add_option("input", fe_in, "input WAV")->required();
  feat->add_option("out_dir", fe_out, "output directory")->required();
  feat->add_option("--content", fe_content, "content embedding PSRT sidecar");
  feat->add_option("--seed", fe_seed, "rng seed")->capture_default_str();
  feat->add_option("--out", fe_report, "write the JSON report here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (app.got_subcommand(shift))
      return cmd_shift(sh_in, sh_out, sh_semitones, sh_method, sh_seed, sh_report);
    if (app.got_subcommand(pairs))
      return cmd_pairs(pa_corpus, pa_out, pa_shifts, pa_split, pa_max, pa_min_abs, pa_seed,
                       pa_jobs, pa_report);
    if (app.got_subcommand(train)) {
      json overrides;
      for (const auto& [k, v] : tr_int) overrides[k] = v;
      for (const auto& [k, v] : tr_num) overrides[k] = v;
      return cmd_train(tr_manifest, tr_ckpt, tr_config, tr_resume, tr_csv, overrides, tr_report);
    }
    if (app.got_subcommand(rest))
      return cmd_restore(re_in, re_ckpt, re_out, re_T, re_stride, re_seed, re_gl, re_f0,
                         re_mel_out, re_report);
    if (app.got_subcommand(eval)) return cmd_eval(ev_ref, ev_est, ev_jobs, ev_seed, ev_report);
    if (app.got_subcommand(feat))
      return cmd_features(fe_in, fe_out, fe_content, fe_seed, fe_report);
  } catch (const ConfigError& e) {
    log_error("%s", e.what());
    return 2;
  } catch (const std::exception& e) {
    log_error("%s", e.what());
    return 1;
  }
  return 2;
}
