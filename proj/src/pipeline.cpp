#include "ser/pipeline.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>

#include "ser/errors.hpp"

namespace fs = std::filesystem;

namespace ser {

size_t model_in_channels(const PipelineConfig& cfg) {
  return cfg.input_mode == InputMode::kPooled ? 1 : cfg.dsp.n_coeff;
}

size_t model_input_len(const PipelineConfig& cfg) {
  if (cfg.input_mode == InputMode::kPooled) return cfg.dsp.n_coeff;
  const auto samples = static_cast<size_t>(
      std::llround(cfg.ingest.target_duration * cfg.ingest.target_rate));
  if (samples < cfg.dsp.frame_len) {
    throw ConfigError("standardized clip is shorter than one analysis frame");
  }
  return 1 + (samples - cfg.dsp.frame_len) / cfg.dsp.hop;
}

uint64_t feature_cache_key(const std::vector<uint8_t>& wav_bytes,
                           const ManifestRow& row, const PipelineConfig& cfg) {
  std::ostringstream meta;
  meta.precision(17);
  meta << "ingest:" << cfg.ingest.target_rate << ',' << cfg.ingest.target_duration
       << ',' << static_cast<int>(cfg.ingest.pad_mode) << ','
       << static_cast<int>(cfg.ingest.trim_anchor)
       << ";dsp:" << cfg.dsp.preemph_alpha << ',' << cfg.dsp.frame_len << ','
       << cfg.dsp.hop << ',' << cfg.dsp.hamming_a << ',' << cfg.dsp.n_mels
       << ',' << cfg.dsp.n_coeff << ',' << cfg.dsp.fmin << ',' << cfg.dsp.fmax
       << ";mfcc:" << cfg.use_mfcc << ";tag:" << to_string(row.augment_tag);
  if (row.augment_tag != AugmentTag::kNone) {
    meta << ";aug:" << cfg.augment.noise_scale << ',' << cfg.augment.semitones
         << ',' << cfg.augment.rng_seed << ',' << fnv1a64(row.path);
  }
  uint64_t h = fnv1a64(wav_bytes.data(), wav_bytes.size());
  return fnv1a64(meta.str(), h);
}

std::string feature_cache_path(const std::string& cache_dir, uint64_t key) {
  char name[32];
  std::snprintf(name, sizeof(name), "%016llx.mfcc",
                static_cast<unsigned long long>(key));
  return (fs::path(cache_dir) / name).string();
}

MfccFeatures features_for_clip(const AudioClip& raw, const ManifestRow& row,
                               const PipelineConfig& cfg) {
  const AudioClip standardized = ingest(raw, cfg.ingest);
  const AudioClip augmented = apply_augment(standardized, row, cfg.augment);
  return cfg.use_mfcc ? extract_mfcc(augmented, cfg.dsp)
                      : extract_log_energy(augmented, cfg.dsp);
}

MfccFeatures features_for_row(const ManifestRow& row,
                              const PipelineConfig& cfg,
                              const std::string& cache_dir, bool* cache_hit) {
  const std::vector<uint8_t> bytes = read_file(row.path);
  const uint64_t key = feature_cache_key(bytes, row, cfg);
  const std::string cache_path = feature_cache_path(cache_dir, key);
  if (fs::exists(cache_path)) {
    if (cache_hit) *cache_hit = true;
    return read_features(cache_path);
  }
  if (cache_hit) *cache_hit = false;

  AudioClip raw;
  try {
    raw = decode_wav(bytes);
  } catch (const DecodeError& e) {
    throw DecodeError(std::string(e.what()) + " (" + row.path + ")");
  } catch (const UnsupportedFormat& e) {
    throw UnsupportedFormat(std::string(e.what()) + " (" + row.path + ")");
  }
  raw.source_path = row.path;

  MfccFeatures feats = features_for_clip(raw, row, cfg);
  feats.clip_id = row.path + "#" + to_string(row.augment_tag);
  write_features(cache_path, feats);
  return feats;
}

Dataset assemble_dataset(const std::vector<ManifestRow>& rows,
                         const LabelScheme& scheme, const PipelineConfig& cfg,
                         const std::string& cache_dir) {
  if (rows.empty()) throw EmptyInput("no rows to assemble");
  const size_t channels = model_in_channels(cfg);
  const size_t len = model_input_len(cfg);

  Dataset set;
  set.features = Tensor({rows.size(), channels, len});
  set.labels.resize(rows.size());

  for (size_t i = 0; i < rows.size(); ++i) {
    set.labels[i] = scheme.index_of(rows[i].label);
    const MfccFeatures feats = features_for_row(rows[i], cfg, cache_dir);
    if (feats.n_coeff != cfg.dsp.n_coeff) {
      throw ShapeError("cached features for " + rows[i].path + " have " +
                       std::to_string(feats.n_coeff) + " coefficients");
    }
    if (cfg.input_mode == InputMode::kPooled) {
      if (!feats.pooled || feats.pooled->size() != len) {
        throw ShapeError("pooled feature vector missing for " + rows[i].path);
      }
      std::copy(feats.pooled->begin(), feats.pooled->end(),
                set.features.data.begin() + static_cast<long>(i * len));
    } else {
      if (feats.n_frames != len) {
        throw ShapeError("feature matrix for " + rows[i].path + " has " +
                         std::to_string(feats.n_frames) + " frames, expected " +
                         std::to_string(len));
      }
      // Coefficients become channels: transpose frames x coeff -> coeff x frames.
      for (size_t f = 0; f < feats.n_frames; ++f) {
        for (size_t c = 0; c < channels; ++c) {
          set.features.data[(i * channels + c) * len + f] = feats.at(f, c);
        }
      }
    }
  }
  return set;
}

CacheLock::CacheLock(const std::string& cache_dir) {
  fs::create_directories(cache_dir);
  lock_path_ = (fs::path(cache_dir) / ".lock").string();
  const int fd = ::open(lock_path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    throw ConfigError("feature cache '" + cache_dir +
                      "' is locked by another process (stale? remove " +
                      lock_path_ + ")");
  }
  const std::string pid = std::to_string(::getpid()) + "\n";
  const ssize_t written = ::write(fd, pid.data(), pid.size());
  (void)written;
  ::close(fd);
  held_ = true;
}

CacheLock::~CacheLock() {
  if (held_) ::unlink(lock_path_.c_str());
}

}  // namespace ser
