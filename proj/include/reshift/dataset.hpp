#pragma once

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "reshift/audio.hpp"
#include "reshift/common.hpp"
#include "reshift/conditioning.hpp"
#include "reshift/config_json.hpp"
#include "reshift/dsp.hpp"
#include "reshift/pitch.hpp"
#include "reshift/psrt.hpp"
#include "reshift/rng.hpp"
#include "reshift/vocoder.hpp"
#include "reshift/wav.hpp"

// Corpus ingestion: segmentation, conditioning extraction, artifact-pair
// manufacturing, and the on-disk feature cache with its manifest.

namespace reshift {

// Non-overlapping blocks of exactly block_frames*hop samples; the trailing
// remainder is dropped.
inline std::vector<AudioBuffer> segment(const AudioBuffer& audio, int block_frames, int hop) {
  if (block_frames < 1 || hop < 1) throw ConfigError("segment: block_frames and hop must be >= 1");
  const size_t block = static_cast<size_t>(block_frames) * static_cast<size_t>(hop);
  std::vector<AudioBuffer> out;
  for (size_t start = 0; start + block <= audio.samples.size(); start += block) {
    std::vector<double> s(audio.samples.begin() + static_cast<long>(start),
                          audio.samples.begin() + static_cast<long>(start + block));
    out.emplace_back(std::move(s), audio.sample_rate);
  }
  return out;
}

// Linear time interpolation of an external embedding grid (source_rate,
// source_hop) onto the mel frame grid.
inline Matrix resample_content(const Matrix& content, size_t mel_frames, int mel_hop,
                               int mel_rate, int source_hop = 320, int source_rate = 16000) {
  Matrix out(mel_frames, content.cols);
  const double src_dt = static_cast<double>(source_hop) / source_rate;
  const double dst_dt = static_cast<double>(mel_hop) / mel_rate;
  for (size_t t = 0; t < mel_frames; ++t) {
    const double pos = t * dst_dt / src_dt;
    const size_t i0 = std::min(static_cast<size_t>(std::max(0.0, pos)), content.rows - 1);
    const size_t i1 = std::min(i0 + 1, content.rows - 1);
    const double frac = std::clamp(pos - static_cast<double>(i0), 0.0, 1.0);
    for (size_t j = 0; j < content.cols; ++j)
      out(t, j) = (1.0 - frac) * content(i0, j) + frac * content(i1, j);
  }
  return out;
}

// Frame-level conditioning for one clip. The optional content sidecar is a
// 2-D PSRT on the 16 kHz / hop-320 grid and is checked against the expected
// frame count before interpolation.
inline Conditioning extract_conditioning(const AudioBuffer& audio, const MelConfig& mel_cfg,
                                         const PitchConfig& pitch_cfg,
                                         const std::filesystem::path& content_sidecar = {}) {
  if (pitch_cfg.hop != mel_cfg.spectral.hop)
    throw ConfigError("extract_conditioning: pitch hop must match mel hop");
  Conditioning cond;
  const F0Contour contour = estimate_f0(audio, pitch_cfg);
  cond.f0.assign(contour.f0.begin(), contour.f0.end());
  cond.volume = rms_envelope(audio, mel_cfg.spectral).values;

  if (!content_sidecar.empty()) {
    const Matrix raw = psrt_read_matrix(content_sidecar);
    const long expected =
        static_cast<long>(audio.samples.size()) * 16000 / (audio.sample_rate * 320L) + 1;
    if (std::labs(static_cast<long>(raw.rows) - expected) > 2)
      throw ConfigError("content sidecar " + content_sidecar.string() + " has " +
                        std::to_string(raw.rows) + " frames, expected about " +
                        std::to_string(expected));
    cond.content = resample_content(raw, cond.f0.size(), mel_cfg.spectral.hop,
                                    mel_cfg.sample_rate);
  }
  cond.validate();
  return cond;
}

// ---------------------------------------------------------------------------
// Pair corpus
// ---------------------------------------------------------------------------

struct PairRecord {
  std::string id;
  std::string clean_mel_path;
  std::string artifact_mel_path;
  std::string f0_path;
  std::string volume_path;
  std::string content_path;  // empty when absent
  double shift_semitones = 0.0;
  uint64_t seed = 0;
  std::string split;  // "train" or "val"
};

struct CorpusManifest {
  int version = 1;
  std::vector<PairRecord> records;
  nlohmann::json config;

  size_t count_split(const std::string& s) const {
    size_t n = 0;
    for (const auto& r : records)
      if (r.split == s) ++n;
    return n;
  }
};

struct BuildConfig {
  double shift_max = 12.0;
  double shift_min_abs = 0.5;  // near-zero shifts produce weak artifacts
  int per_file_shifts = 2;
  double split_ratio = 0.95;
  uint64_t seed = 0;
  int jobs = 0;  // 0 = hardware concurrency
  MelConfig mel;
  PitchConfig pitch;

  void validate() const {
    if (!(shift_max > 0.0 && shift_max <= 12.0 && shift_min_abs >= 0.0 &&
          shift_min_abs < shift_max))
      throw ConfigError("build config: bad shift range");
    if (per_file_shifts < 1) throw ConfigError("build config: per_file_shifts must be >= 1");
    if (!(split_ratio > 0.0 && split_ratio < 1.0))
      throw ConfigError("build config: split_ratio must lie in (0,1)");
    mel.validate();
    pitch.validate(mel.sample_rate);
  }
};

// Uniform over [-max, -min_abs] U [min_abs, max].
inline double draw_shift(Rng& rng, double min_abs, double max) {
  const double magnitude = rng.uniform(min_abs, max);
  return rng.uniform() < 0.5 ? -magnitude : magnitude;
}

inline nlohmann::json manifest_to_json(const CorpusManifest& m) {
  nlohmann::json recs = nlohmann::json::array();
  for (const auto& r : m.records) {
    recs.push_back({{"id", r.id},
                    {"clean_mel", r.clean_mel_path},
                    {"artifact_mel", r.artifact_mel_path},
                    {"f0", r.f0_path},
                    {"volume", r.volume_path},
                    {"content", r.content_path},
                    {"shift_semitones", r.shift_semitones},
                    {"seed", r.seed},
                    {"split", r.split}});
  }
  return nlohmann::json{{"version", m.version}, {"records", recs}, {"config", m.config}};
}

inline CorpusManifest manifest_from_json(const nlohmann::json& j) {
  CorpusManifest m;
  m.version = j.at("version").get<int>();
  if (m.version != 1)
    throw ConfigError("manifest: unsupported version " + std::to_string(m.version));
  m.config = j.value("config", nlohmann::json::object());
  for (const auto& rj : j.at("records")) {
    PairRecord r;
    r.id = rj.at("id").get<std::string>();
    r.clean_mel_path = rj.at("clean_mel").get<std::string>();
    r.artifact_mel_path = rj.at("artifact_mel").get<std::string>();
    r.f0_path = rj.at("f0").get<std::string>();
    r.volume_path = rj.at("volume").get<std::string>();
    r.content_path = rj.value("content", std::string());
    r.shift_semitones = rj.at("shift_semitones").get<double>();
    r.seed = rj.at("seed").get<uint64_t>();
    r.split = rj.at("split").get<std::string>();
    m.records.push_back(std::move(r));
  }
  return m;
}

inline CorpusManifest load_manifest(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return manifest_from_json(nlohmann::json::parse(bytes.begin(), bytes.end()));
}

// Builds the forward+backward artifact corpus. Deterministic given the
// seed: per-record seeds derive from (seed, file stem, draw index), file
// scanning order is lexicographic, and output files are written atomically.
inline CorpusManifest build_pairs(const std::filesystem::path& corpus_dir,
                                  const std::filesystem::path& out_dir, const BuildConfig& cfg) {
  cfg.validate();
  namespace fs = std::filesystem;
  if (!fs::is_directory(corpus_dir))
    throw ConfigError("build_pairs: not a directory: " + corpus_dir.string());

  std::vector<fs::path> wavs;
  for (const auto& entry : fs::directory_iterator(corpus_dir))
    if (entry.is_regular_file() && entry.path().extension() == ".wav")
      wavs.push_back(entry.path());
  std::sort(wavs.begin(), wavs.end());
  if (wavs.empty()) throw ConfigError("build_pairs: no .wav files in " + corpus_dir.string());

  for (const char* sub : {"mels", "artifacts", "f0", "vol", "content"})
    fs::create_directories(out_dir / sub);

  struct Job {
    fs::path wav;
    std::string id;
    uint64_t seed;
    int draw_index;
  };
  std::vector<Job> jobs_list;
  for (const auto& wav : wavs) {
    const std::string stem = wav.stem().string();
    for (int k = 0; k < cfg.per_file_shifts; ++k) {
      Job job;
      job.wav = wav;
      job.id = stem + "_" + std::to_string(k);
      job.seed = mix_seed(mix_seed(cfg.seed, hash_string(stem)), static_cast<uint64_t>(k));
      job.draw_index = k;
      jobs_list.push_back(std::move(job));
    }
  }

  std::vector<PairRecord> records(jobs_list.size());
  std::vector<uint8_t> ok(jobs_list.size(), 0);

  VocoderConfig vcfg;
  vcfg.pitch = cfg.pitch;
  vcfg.spectral = cfg.mel.spectral;

  auto process = [&](size_t idx) {
    const Job& job = jobs_list[idx];
    AudioBuffer audio;
    try {
      audio = read_wav(job.wav);
    } catch (const std::exception& e) {
      log_warn("skipping unreadable file %s: %s", job.wav.string().c_str(), e.what());
      return;
    }
    try {
      if (audio.sample_rate != cfg.mel.sample_rate)
        audio = resample(audio, cfg.mel.sample_rate);
      const double peak = peak_abs(audio.samples);
      if (peak > 0.95)
        for (double& v : audio.samples) v *= 0.95 / peak;

      Rng rng(job.seed);
      const double shift = draw_shift(rng, cfg.shift_min_abs, cfg.shift_max);
      const auto [artifact, clean] =
          make_artifact_pair(audio, ShiftSpec{shift}, vcfg, job.seed);

      const MelSpectrogram clean_mel = log_mel(clean, cfg.mel);
      const MelSpectrogram art_mel = log_mel(artifact, cfg.mel);
      if (clean_mel.data.rows != art_mel.data.rows)
        throw RuntimeError("pair frame counts diverged");

      const fs::path content_sidecar = job.wav.parent_path() / (job.wav.stem().string() + ".content.psrt");
      const Conditioning cond = extract_conditioning(
          artifact, cfg.mel, cfg.pitch, fs::exists(content_sidecar) ? content_sidecar : fs::path{});

      PairRecord rec;
      rec.id = job.id;
      rec.shift_semitones = shift;
      rec.seed = job.seed;
      rec.clean_mel_path = "mels/" + job.id + ".psrt";
      rec.artifact_mel_path = "artifacts/" + job.id + ".psrt";
      rec.f0_path = "f0/" + job.id + ".psrt";
      rec.volume_path = "vol/" + job.id + ".psrt";

      psrt_write_matrix(out_dir / rec.clean_mel_path, clean_mel.data);
      psrt_write_matrix(out_dir / rec.artifact_mel_path, art_mel.data);
      F0Contour fc;
      fc.f0 = cond.f0;
      fc.voiced.resize(cond.f0.size());
      for (size_t i = 0; i < cond.f0.size(); ++i) fc.voiced[i] = cond.f0[i] > 0.0 ? 1 : 0;
      fc.hop = cfg.pitch.hop;
      fc.sample_rate = cfg.mel.sample_rate;
      f0_write_psrt(out_dir / rec.f0_path, fc);
      psrt_write(out_dir / rec.volume_path, {static_cast<uint32_t>(cond.volume.size())},
                 cond.volume, PsrtDtype::f32);
      if (cond.has_content()) {
        rec.content_path = "content/" + job.id + ".psrt";
        psrt_write_matrix(out_dir / rec.content_path, cond.content);
      }
      records[idx] = std::move(rec);
      ok[idx] = 1;
    } catch (const std::exception& e) {
      log_warn("skipping %s: %s", job.wav.string().c_str(), e.what());
    }
  };

  const int n_threads = cfg.jobs > 0
                            ? cfg.jobs
                            : std::max(1u, std::thread::hardware_concurrency());
  if (n_threads <= 1 || jobs_list.size() <= 1) {
    for (size_t i = 0; i < jobs_list.size(); ++i) process(i);
  } else {
    std::atomic<size_t> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < n_threads; ++w)
      pool.emplace_back([&] {
        while (true) {
          const size_t i = next.fetch_add(1);
          if (i >= jobs_list.size()) break;
          process(i);
        }
      });
    for (auto& th : pool) th.join();
  }

  CorpusManifest manifest;
  for (size_t i = 0; i < jobs_list.size(); ++i)
    if (ok[i]) manifest.records.push_back(std::move(records[i]));
  if (manifest.records.empty()) throw RuntimeError("build_pairs: no usable records");

  // seeded split: validation gets max(1, round((1 - ratio) * n))
  const size_t n = manifest.records.size();
  const size_t n_val = std::max<size_t>(
      1, static_cast<size_t>(std::llround((1.0 - cfg.split_ratio) * static_cast<double>(n))));
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng split_rng(mix_seed(cfg.seed, 0x5917));
  for (size_t i = n; i > 1; --i) {
    const size_t j = static_cast<size_t>(split_rng.uniform() * static_cast<double>(i));
    std::swap(order[i - 1], order[std::min(j, i - 1)]);
  }
  for (size_t i = 0; i < n; ++i) manifest.records[order[i]].split = i < n_val ? "val" : "train";

  manifest.config = {{"mel", mel_to_json(cfg.mel)},
                     {"pitch", pitch_to_json(cfg.pitch)},
                     {"shift_max", cfg.shift_max},
                     {"shift_min_abs", cfg.shift_min_abs},
                     {"per_file_shifts", cfg.per_file_shifts},
                     {"split_ratio", cfg.split_ratio},
                     {"seed", cfg.seed}};

  const std::string text = manifest_to_json(manifest).dump(2) + "\n";
  write_file_bytes(out_dir / "manifest.json", std::vector<uint8_t>(text.begin(), text.end()));
  return manifest;
}

}  // namespace reshift
