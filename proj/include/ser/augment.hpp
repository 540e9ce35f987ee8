#pragma once

#include <cstdint>
#include <vector>

#include "ser/audio_io.hpp"
#include "ser/corpus.hpp"
#include "ser/rng.hpp"

namespace ser {

enum class SignPolicy { kRandom, kUp, kDown, kBoth };

struct AugmentConfig {
  double noise_scale = 0.035;  // fraction of the clip's peak amplitude
  int semitones = 4;           // shift magnitude; sign chosen per sign_policy
  uint64_t rng_seed = 0;
  SignPolicy sign_policy = SignPolicy::kRandom;
};

/// Adds Gaussian noise scaled by noise_scale times the clip's peak
/// amplitude, re-clamped to [-1, 1]. A silent clip or zero scale is returned
/// unchanged.
AudioClip add_noise(const AudioClip& clip, const AugmentConfig& cfg, Rng& rng);

/// Shifts pitch by the given number of semitones (|semitones| <= 12) while
/// preserving length and sample rate: phase-vocoder time stretch by
/// 2^(-s/12), then rate conversion back to the original length.
AudioClip pitch_shift(const AudioClip& clip, int semitones);

/// Phase-vocoder time stretch. rate > 1 shortens the signal, rate < 1
/// lengthens it; pitch is preserved. Frame 1024, hop 256, Hann windows.
std::vector<double> time_stretch(const std::vector<double>& x, double rate);

/// Expands untagged rows threefold (original, noisy, pitch-shifted); the
/// `both` policy emits both pitch directions for a fourfold expansion.
/// Already-tagged rows pass through unchanged. Originals are never modified.
std::vector<ManifestRow> expand_dataset(const std::vector<ManifestRow>& rows,
                                        const AugmentConfig& cfg);

/// Deterministic per-clip random stream derived from the seed and the row's
/// source path, so results do not depend on row order.
Rng clip_rng(const AugmentConfig& cfg, const ManifestRow& row);

/// Applies the row's tagged transform to an ingested clip.
AudioClip apply_augment(const AudioClip& clip, const ManifestRow& row,
                        const AugmentConfig& cfg);

}  // namespace ser
