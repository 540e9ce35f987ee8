#pragma once

#include <string>
#include <vector>

#include "ser/augment.hpp"
#include "ser/corpus.hpp"
#include "ser/dsp.hpp"
#include "ser/learn.hpp"

namespace ser {

enum class InputMode { kPooled, kSequence };

/// Everything needed to turn a manifest row into model input.
struct PipelineConfig {
  IngestConfig ingest;
  AugmentConfig augment;
  DspConfig dsp;
  bool use_mfcc = true;  // false substitutes banded log energies
  InputMode input_mode = InputMode::kPooled;
};

/// Model input geometry implied by the pipeline configuration.
size_t model_in_channels(const PipelineConfig& cfg);
size_t model_input_len(const PipelineConfig& cfg);

/// Content-addressed cache key over the audio bytes, the ingest/DSP
/// configuration and the row's augmentation.
uint64_t feature_cache_key(const std::vector<uint8_t>& wav_bytes,
                           const ManifestRow& row, const PipelineConfig& cfg);

std::string feature_cache_path(const std::string& cache_dir, uint64_t key);

/// Loads the row's features from the cache or computes and stores them.
MfccFeatures features_for_row(const ManifestRow& row,
                              const PipelineConfig& cfg,
                              const std::string& cache_dir,
                              bool* cache_hit = nullptr);

/// Features without touching any cache (used for one-off prediction).
MfccFeatures features_for_clip(const AudioClip& raw, const ManifestRow& row,
                               const PipelineConfig& cfg);

/// Builds the [N, C, L] dataset for a set of rows.
Dataset assemble_dataset(const std::vector<ManifestRow>& rows,
                         const LabelScheme& scheme, const PipelineConfig& cfg,
                         const std::string& cache_dir);

/// Advisory single-owner lock on a feature cache directory. Creates the
/// directory if needed; throws ConfigError when another process holds it.
class CacheLock {
 public:
  explicit CacheLock(const std::string& cache_dir);
  ~CacheLock();

  CacheLock(const CacheLock&) = delete;
  CacheLock& operator=(const CacheLock&) = delete;

 private:
  std::string lock_path_;
  bool held_ = false;
};

}  // namespace ser
