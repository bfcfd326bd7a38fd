#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "reshift/checkpoint.hpp"
#include "reshift/common.hpp"
#include "reshift/config_json.hpp"
#include "reshift/dataset.hpp"
#include "reshift/denoiser.hpp"
#include "reshift/diffusion.hpp"
#include "reshift/rng.hpp"

// Training: batch assembly from the pair corpus, one Adam step on the
// combined objective (eps MSE plus L1 mel and f0 terms evaluated on the
// single-step x0 estimate), and the seeded driver loop.

namespace reshift {

struct TrainItem {
  Matrix x0_norm;       // clean mel segment, normalized
  Matrix mel_art_norm;  // artifact mel segment, normalized
  Conditioning cond;    // artifact-side features
  int t = 1;
  Matrix eps;
};

struct TrainContext {
  NoiseSchedule sched;
  MelBandGrid band_grid;
  double lambda_mel = 1.0;
  double lambda_f0 = 0.1;
  AdamConfig adam_cfg;
};

struct LossParts {
  double total = 0.0;
  double diff = 0.0;
  double mel = 0.0;
  double f0 = 0.0;
};

namespace train_detail {

struct ItemLoss {
  double l_diff = 0.0, l_mel = 0.0, l_f0 = 0.0;
};

// Forward pass plus, when grads is non-null, the full analytic gradient of
// total_loss for this item accumulated into grads (scaled by weight).
//
// The chain is noised from the ARTIFACT mel (matching the shallow
// initialization used at inference) while the noise target is defined
// against the CLEAN mel, so a perfect prediction maps x_t back to the clean
// segment: eps* = (x_t - sqrt(abar) x0) / sqrt(1 - abar).
inline ItemLoss item_pass(const TrainItem& item, const TrainContext& ctx,
                          const DenoiserParams& params, std::vector<Tensor>* grads,
                          double weight) {
  const NoiseSchedule& s = ctx.sched;
  if (!item.mel_art_norm.same_shape(item.x0_norm))
    throw ConfigError("train: artifact and clean segments differ in shape");
  const Matrix x_t = forward_noise(item.mel_art_norm, item.t, item.eps, s);
  DenoiserTrace trace;
  const Matrix eps_hat =
      denoiser_forward_traced(x_t, item.cond, item.t, params, grads ? &trace : nullptr);

  const size_t F = x_t.rows, M = x_t.cols;
  const double n = static_cast<double>(F * M);
  const double a = s.abar(item.t);
  const double sa = std::sqrt(a), sn = std::sqrt(1.0 - a);
  const double scale = params.cfg.mel_scale;

  Matrix eps_target(F, M), mel_hat(F, M), mel_ref(F, M);
  for (size_t i = 0; i < mel_hat.data.size(); ++i) {
    eps_target.data[i] = (x_t.data[i] - sa * item.x0_norm.data[i]) / sn;
    const double x0n = (x_t.data[i] - sn * eps_hat.data[i]) / sa;
    mel_hat.data[i] = x0n * scale + params.cfg.mel_mean;
    mel_ref.data[i] = item.x0_norm.data[i] * scale + params.cfg.mel_mean;
  }

  ItemLoss loss;
  loss.l_diff = diffusion_loss(eps_target, eps_hat);
  for (size_t i = 0; i < mel_hat.data.size(); ++i)
    loss.l_mel += std::fabs(mel_hat.data[i] - mel_ref.data[i]);
  loss.l_mel /= n;

  // f0 estimate from the mel estimate: power-weighted band centers
  const MelBandGrid& grid = ctx.band_grid;
  std::vector<double> f0_hat(F, 0.0);
  Matrix band_w(F, grid.hi - grid.lo);  // softmax weights, kept for the gradient
  for (size_t f = 0; f < F; ++f) {
    const double* row = mel_hat.row(f);
    double max_v = -1e300;
    for (size_t b = grid.lo; b < grid.hi; ++b) max_v = std::max(max_v, row[b]);
    double den = 0.0;
    for (size_t b = grid.lo; b < grid.hi; ++b) {
      const double w = std::exp(row[b] - max_v);
      band_w(f, b - grid.lo) = w;
      den += w;
    }
    double num = 0.0;
    for (size_t b = grid.lo; b < grid.hi; ++b) {
      band_w(f, b - grid.lo) /= den;
      num += band_w(f, b - grid.lo) * grid.center_hz[b];
    }
    f0_hat[f] = num;
  }
  size_t voiced = 0;
  for (size_t f = 0; f < F; ++f) {
    if (item.cond.f0[f] <= 0.0) continue;
    loss.l_f0 += std::fabs(f0_hat[f] - item.cond.f0[f]);
    ++voiced;
  }
  if (voiced > 0) loss.l_f0 /= static_cast<double>(voiced);

  if (grads) {
    // d total / d eps_hat, then one reverse pass
    Matrix d_eps(F, M);
    const double chain = -(sn / sa) * scale;  // d mel_hat / d eps_hat
    for (size_t f = 0; f < F; ++f) {
      const double sgn_f0 = (voiced > 0 && item.cond.f0[f] > 0.0)
                                ? (f0_hat[f] > item.cond.f0[f] ? 1.0 : -1.0) /
                                      static_cast<double>(voiced)
                                : 0.0;
      for (size_t m = 0; m < M; ++m) {
        const size_t i = f * M + m;
        double g = 2.0 * (eps_hat.data[i] - eps_target.data[i]) / n;
        double d_mel = ctx.lambda_mel *
                       (mel_hat.data[i] > mel_ref.data[i] ? 1.0 : -1.0) / n;
        if (sgn_f0 != 0.0 && m >= grid.lo && m < grid.hi) {
          d_mel += ctx.lambda_f0 * sgn_f0 * band_w(f, m - grid.lo) *
                   (grid.center_hz[m] - f0_hat[f]);
        }
        g += d_mel * chain;
        d_eps.data[i] = g * weight;
      }
    }
    denoiser_backward(trace, d_eps, params, *grads);
  }
  return loss;
}

}  // namespace train_detail

inline LossParts compute_losses(const std::vector<TrainItem>& batch, const TrainContext& ctx,
                                const DenoiserParams& params) {
  LossParts out;
  for (const TrainItem& item : batch) {
    const auto l = train_detail::item_pass(item, ctx, params, nullptr, 0.0);
    out.diff += l.l_diff;
    out.mel += l.l_mel;
    out.f0 += l.l_f0;
  }
  const double b = static_cast<double>(std::max<size_t>(1, batch.size()));
  out.diff /= b;
  out.mel /= b;
  out.f0 /= b;
  out.total = total_loss(out.diff, out.mel, out.f0, ctx.lambda_mel, ctx.lambda_f0);
  return out;
}

// One Adam step on the batch-mean total loss. Throws if gradients go
// non-finite, naming the step.
inline LossParts train_step(const std::vector<TrainItem>& batch, const TrainContext& ctx,
                            DenoiserParams& params, AdamState& adam) {
  if (batch.empty()) throw ConfigError("train_step: empty batch");
  std::vector<Tensor> grads = make_gradients(params);
  const double weight = 1.0 / static_cast<double>(batch.size());
  LossParts out;
  for (const TrainItem& item : batch) {
    const auto l = train_detail::item_pass(item, ctx, params, &grads, weight);
    out.diff += l.l_diff;
    out.mel += l.l_mel;
    out.f0 += l.l_f0;
  }
  out.diff *= weight;
  out.mel *= weight;
  out.f0 *= weight;
  out.total = total_loss(out.diff, out.mel, out.f0, ctx.lambda_mel, ctx.lambda_f0);

  for (const Tensor& g : grads)
    for (double v : g.v)
      if (!std::isfinite(v))
        throw RuntimeError("train_step: non-finite gradient at step " +
                           std::to_string(adam.step));
  adam_update(params, grads, adam, ctx.adam_cfg);
  return out;
}

// ---------------------------------------------------------------------------
// Corpus-backed training driver
// ---------------------------------------------------------------------------

struct LoadedRecord {
  std::string id;
  Matrix clean_mel;     // log domain
  Matrix artifact_mel;  // log domain
  Conditioning cond;
};

inline LoadedRecord load_record(const std::filesystem::path& data_dir, const PairRecord& rec) {
  LoadedRecord out;
  out.id = rec.id;
  out.clean_mel = psrt_read_matrix(data_dir / rec.clean_mel_path);
  out.artifact_mel = psrt_read_matrix(data_dir / rec.artifact_mel_path);
  if (!out.artifact_mel.same_shape(out.clean_mel))
    throw RuntimeError("record " + rec.id + ": artifact and clean mel shapes differ");
  const PsrtTensor f0t = psrt_read(data_dir / rec.f0_path);
  if (f0t.dims.size() != 2 || f0t.dims[0] != 2)
    throw RuntimeError("record " + rec.id + ": bad f0 tensor");
  const size_t frames = f0t.dims[1];
  out.cond.f0.resize(frames);
  for (size_t i = 0; i < frames; ++i)
    out.cond.f0[i] = f0t.values[frames + i] > 0.5 ? f0t.values[i] : 0.0;
  const PsrtTensor vt = psrt_read(data_dir / rec.volume_path);
  out.cond.volume = vt.values;
  if (!rec.content_path.empty())
    out.cond.content = psrt_read_matrix(data_dir / rec.content_path);
  if (out.cond.volume.size() != frames || out.clean_mel.rows != frames)
    throw RuntimeError("record " + rec.id + ": misaligned feature frames");
  out.cond.validate();
  return out;
}

inline Conditioning slice_conditioning(const Conditioning& cond, size_t begin, size_t len) {
  Conditioning out;
  out.f0.assign(cond.f0.begin() + static_cast<long>(begin),
                cond.f0.begin() + static_cast<long>(begin + len));
  out.volume.assign(cond.volume.begin() + static_cast<long>(begin),
                    cond.volume.begin() + static_cast<long>(begin + len));
  if (cond.has_content()) {
    out.content = Matrix(len, cond.content.cols);
    for (size_t i = 0; i < len; ++i)
      std::copy(cond.content.row(begin + i), cond.content.row(begin + i) + cond.content.cols,
                out.content.row(i));
  }
  return out;
}

inline Matrix slice_rows(const Matrix& m, size_t begin, size_t len) {
  Matrix out(len, m.cols);
  for (size_t i = 0; i < len; ++i)
    std::copy(m.row(begin + i), m.row(begin + i) + m.cols, out.row(i));
  return out;
}

struct TrainRunResult {
  Checkpoint checkpoint;
  std::string loss_csv;
  double first_window_mean = 0.0;  // mean loss of the first 10 steps
  double last_window_mean = 0.0;   // running mean of the final 10 steps
};

// Deterministic batch assembly: every draw flows from one per-step RNG
// seeded by (run seed, global step index), so a resumed run replays the
// same stream as an uninterrupted one.
inline std::vector<TrainItem> assemble_batch(const std::vector<LoadedRecord>& records,
                                             const std::vector<size_t>& usable,
                                             const TrainingConfig& cfg,
                                             const DenoiserConfig& dcfg, long step,
                                             uint64_t stream) {
  Rng rng(mix_seed(cfg.seed, stream + 0x9e37 * static_cast<uint64_t>(step)));
  const size_t block = static_cast<size_t>(cfg.block_frames);
  std::vector<TrainItem> batch;
  for (int b = 0; b < cfg.batch_size; ++b) {
    const LoadedRecord& rec =
        records[usable[static_cast<size_t>(rng.uniform() * static_cast<double>(usable.size()))]];
    const size_t max_off = rec.clean_mel.rows - block;
    const size_t off =
        max_off > 0 ? static_cast<size_t>(rng.uniform() * static_cast<double>(max_off + 1)) : 0;
    TrainItem item;
    item.x0_norm = slice_rows(rec.clean_mel, off, block);
    for (double& v : item.x0_norm.data) v = (v - dcfg.mel_mean) / dcfg.mel_scale;
    item.mel_art_norm = slice_rows(rec.artifact_mel, off, block);
    for (double& v : item.mel_art_norm.data) v = (v - dcfg.mel_mean) / dcfg.mel_scale;
    item.cond = slice_conditioning(rec.cond, off, block);
    const int t_lo = std::min(cfg.t_min, cfg.K);
    item.t = t_lo + static_cast<int>(rng.uniform() * static_cast<double>(cfg.K - t_lo + 1));
    item.t = std::min(item.t, cfg.K);
    item.eps = Matrix(block, static_cast<size_t>(dcfg.n_mels));
    for (double& v : item.eps.data) v = rng.normal();
    batch.push_back(std::move(item));
  }
  return batch;
}

inline TrainRunResult train_run(const CorpusManifest& manifest,
                                const std::filesystem::path& data_dir, const TrainingConfig& cfg,
                                const MelConfig& mel_cfg, const PitchConfig& pitch_cfg,
                                const Checkpoint* resume = nullptr,
                                const std::function<void(long, const LossParts&)>& on_step = {}) {
  cfg.validate();
  std::vector<LoadedRecord> train_records, val_records;
  for (const PairRecord& rec : manifest.records) {
    LoadedRecord lr = load_record(data_dir, rec);
    if (lr.clean_mel.rows < static_cast<size_t>(cfg.block_frames)) {
      log_warn("record %s shorter than one block, skipped", rec.id.c_str());
      continue;
    }
    (rec.split == "val" ? val_records : train_records).push_back(std::move(lr));
  }
  if (train_records.empty()) throw RuntimeError("train_run: no usable training records");

  DenoiserConfig dcfg;
  dcfg.n_mels = static_cast<int>(train_records.front().clean_mel.cols);
  dcfg.channels = cfg.channels;
  dcfg.cond_dim = static_cast<int>(train_records.front().cond.width());
  dcfg.mel_mean = cfg.mel_mean;
  dcfg.mel_scale = cfg.mel_scale;
  for (const auto& r : train_records)
    if (static_cast<int>(r.cond.width()) != dcfg.cond_dim)
      throw RuntimeError("train_run: inconsistent conditioning width across records");

  TrainContext ctx;
  ctx.sched = make_schedule(cfg.K, cfg.beta_start, cfg.beta_end);
  ctx.band_grid = mel_band_grid(mel_cfg, pitch_cfg.f_min, pitch_cfg.f_max);
  ctx.lambda_mel = cfg.lambda_mel;
  ctx.lambda_f0 = cfg.lambda_f0;
  ctx.adam_cfg.lr = cfg.lr;
  ctx.adam_cfg.lr_decay_every = cfg.lr_decay_every;

  TrainRunResult result;
  if (resume) {
    result.checkpoint = *resume;
  } else {
    result.checkpoint.params = denoiser_init(dcfg, mix_seed(cfg.seed, 0x1717));
    result.checkpoint.adam = make_adam_state(result.checkpoint.params);
  }
  result.checkpoint.train = cfg;
  result.checkpoint.mel = mel_cfg;
  result.checkpoint.pitch = pitch_cfg;

  std::vector<size_t> usable_train(train_records.size());
  std::iota(usable_train.begin(), usable_train.end(), 0);
  std::vector<size_t> usable_val(val_records.size());
  std::iota(usable_val.begin(), usable_val.end(), 0);

  std::string csv = "step,split,loss,l_diff,l_mel,l_f0,lr\n";
  std::vector<double> first_losses, window;
  const long start_step = result.checkpoint.adam.step;
  for (long s = start_step; s < start_step + cfg.steps; ++s) {
    const auto batch = assemble_batch(train_records, usable_train, cfg, dcfg, s, 0xB01);
    const LossParts loss =
        train_step(batch, ctx, result.checkpoint.params, result.checkpoint.adam);
    char line[160];
    std::snprintf(line, sizeof(line), "%ld,train,%.10g,%.10g,%.10g,%.10g,%.10g\n", s, loss.total,
                  loss.diff, loss.mel, loss.f0,
                  adam_effective_lr(ctx.adam_cfg, result.checkpoint.adam.step - 1));
    csv += line;
    if (first_losses.size() < 10) first_losses.push_back(loss.total);
    window.push_back(loss.total);
    if (window.size() > 10) window.erase(window.begin());
    if (on_step) on_step(s, loss);

    if (!val_records.empty() && (s + 1) % cfg.val_interval == 0) {
      TrainingConfig vcfg = cfg;
      vcfg.batch_size = std::min(cfg.batch_size, static_cast<int>(val_records.size()) * 4);
      const auto vbatch = assemble_batch(val_records, usable_val, vcfg, dcfg, 0, 0xFACE);
      const LossParts vloss = compute_losses(vbatch, ctx, result.checkpoint.params);
      std::snprintf(line, sizeof(line), "%ld,val,%.10g,%.10g,%.10g,%.10g,%.10g\n", s, vloss.total,
                    vloss.diff, vloss.mel, vloss.f0,
                    adam_effective_lr(ctx.adam_cfg, result.checkpoint.adam.step));
      csv += line;
    }
  }

  result.loss_csv = std::move(csv);
  for (double v : first_losses) result.first_window_mean += v;
  if (!first_losses.empty()) result.first_window_mean /= static_cast<double>(first_losses.size());
  for (double v : window) result.last_window_mean += v;
  if (!window.empty()) result.last_window_mean /= static_cast<double>(window.size());
  return result;
}

}  // namespace reshift
