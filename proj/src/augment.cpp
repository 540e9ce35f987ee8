#include "ser/augment.hpp"

#include <algorithm>
#include <cmath>
#include <complex>

#include "ser/errors.hpp"
#include "ser/fft.hpp"

namespace ser {

AudioClip add_noise(const AudioClip& clip, const AugmentConfig& cfg, Rng& rng) {
  if (clip.samples.empty()) throw EmptyInput("empty clip");
  if (cfg.noise_scale < 0.0) throw ConfigError("noise_scale must be >= 0");

  double peak = 0.0;
  for (double s : clip.samples) peak = std::max(peak, std::abs(s));
  if (cfg.noise_scale == 0.0 || peak == 0.0) return clip;

  const double sigma = cfg.noise_scale * peak;
  AudioClip out = clip;
  for (auto& s : out.samples) {
    s = std::min(1.0, std::max(-1.0, s + sigma * rng.normal()));
  }
  return out;
}

namespace {

constexpr size_t kPvFrame = 1024;
constexpr size_t kPvHop = 256;

double wrap_phase(double p) {
  // Maps to (-pi, pi].
  p = std::fmod(p + M_PI, 2.0 * M_PI);
  if (p < 0) p += 2.0 * M_PI;
  return p - M_PI;
}

std::vector<double> hann_periodic(size_t n) {
  std::vector<double> w(n);
  for (size_t i = 0; i < n; ++i) {
    w[i] = 0.5 * (1.0 - std::cos(2.0 * M_PI * static_cast<double>(i) /
                                 static_cast<double>(n)));
  }
  return w;
}

}  // namespace

std::vector<double> time_stretch(const std::vector<double>& x, double rate) {
  if (rate <= 0.0) throw ConfigError("stretch rate must be positive");
  const size_t n = kPvFrame;
  const size_t hop = kPvHop;

  // Center-pad with silence so every input sample gets full window coverage.
  std::vector<double> padded(x.size() + n, 0.0);
  for (size_t i = 0; i < x.size(); ++i) padded[n / 2 + i] = x[i];

  const std::vector<double> window = hann_periodic(n);
  const size_t n_frames = 1 + (padded.size() - n) / hop;

  // Analysis STFT.
  std::vector<std::vector<std::complex<double>>> stft(n_frames);
  std::vector<double> frame_peak(n_frames, 0.0);
  const size_t n_bins = n / 2 + 1;
  std::vector<std::complex<double>> buf(n);
  for (size_t f = 0; f < n_frames; ++f) {
    for (size_t i = 0; i < n; ++i) {
      buf[i] = {padded[f * hop + i] * window[i], 0.0};
    }
    fft_inplace(buf, false);
    stft[f] = buf;
    for (size_t k = 0; k < n_bins; ++k) {
      frame_peak[f] = std::max(frame_peak[f], std::abs(buf[k]));
    }
  }

  std::vector<double> out_steps;
  for (double t = 0.0; t < static_cast<double>(n_frames); t += rate) {
    out_steps.push_back(t);
  }

  // Synthesis frames: peak bins carry accumulated phases advanced by their
  // measured instantaneous frequency; the bins around each spectral peak are
  // locked to the peak plus the analysis frame's relative phases (identity
  // phase locking), which keeps a tone's main lobe vertically coherent at
  // any stretch rate. A bin that was effectively silent at t0 re-locks to
  // the next analysis phase instead of accumulating, so errors picked up
  // over silence cannot scramble an onset.
  std::vector<double> phase_acc(n_bins);
  for (size_t k = 0; k < n_bins; ++k) phase_acc[k] = std::arg(stft[0][k]);

  std::vector<double> out((out_steps.size() - 1) * hop + n, 0.0);
  std::vector<double> norm(out.size(), 0.0);

  std::vector<std::complex<double>> frame(n);
  std::vector<double> phase_out(n_bins);
  std::vector<size_t> peaks;
  for (size_t s = 0; s < out_steps.size(); ++s) {
    const double t = out_steps[s];
    const size_t t0 = std::min(static_cast<size_t>(t), n_frames - 1);
    const size_t t1 = std::min(t0 + 1, n_frames - 1);
    const double frac = t - static_cast<double>(t0);
    const double lock_floor = 1e-6 * frame_peak[t0];
    const auto& a0 = stft[t0];
    const auto& a1 = stft[t1];

    peaks.clear();
    for (size_t k = 1; k + 1 < n_bins; ++k) {
      const double m = std::abs(a0[k]);
      if (m > lock_floor && m > std::abs(a0[k - 1]) && m >= std::abs(a0[k + 1])) {
        peaks.push_back(k);
      }
    }

    if (peaks.empty()) {
      phase_out = phase_acc;
    } else {
      size_t pi = 0;
      for (size_t k = 0; k < n_bins; ++k) {
        // Nearest peak owns the bin; boundaries sit midway between peaks.
        while (pi + 1 < peaks.size() &&
               static_cast<long>(peaks[pi + 1]) - static_cast<long>(k) <
                   static_cast<long>(k) - static_cast<long>(peaks[pi])) {
          ++pi;
        }
        const size_t p = peaks[pi];
        phase_out[k] =
            k == p ? phase_acc[p]
                   : wrap_phase(phase_acc[p] + std::arg(a0[k]) - std::arg(a0[p]));
      }
    }

    for (size_t k = 0; k < n_bins; ++k) {
      const double mag = (1.0 - frac) * std::abs(a0[k]) + frac * std::abs(a1[k]);
      frame[k] = std::polar(mag, phase_out[k]);
    }
    for (size_t k = n_bins; k < n; ++k) frame[k] = std::conj(frame[n - k]);

    // Advance every bin from the phase just written; a bin promoted to peak
    // at the next step starts from a coherent base.
    for (size_t k = 0; k < n_bins; ++k) {
      if (std::abs(a0[k]) <= lock_floor) {
        phase_acc[k] = std::arg(a1[k]);
        continue;
      }
      const double expected =
          2.0 * M_PI * static_cast<double>(k) * static_cast<double>(hop) /
          static_cast<double>(n);
      const double measured = std::arg(a1[k]) - std::arg(a0[k]) - expected;
      phase_acc[k] =
          wrap_phase(phase_out[k] + expected + wrap_phase(measured));
    }

    fft_inplace(frame, true);
    const size_t base = s * hop;
    for (size_t i = 0; i < n; ++i) {
      out[base + i] += frame[i].real() * window[i];
      norm[base + i] += window[i] * window[i];
    }
  }

  for (size_t i = 0; i < out.size(); ++i) {
    if (norm[i] > 1e-8) out[i] /= norm[i];
  }

  // Remove the analysis padding and pin the length implied by the rate.
  const auto target_len =
      static_cast<size_t>(std::llround(static_cast<double>(x.size()) / rate));
  std::vector<double> trimmed(target_len, 0.0);
  for (size_t i = 0; i < target_len; ++i) {
    // The first synthesized sample aligned with x[0] sits at offset n/2.
    const size_t src = i + n / 2;
    if (src < out.size()) trimmed[i] = out[src];
  }
  return trimmed;
}

AudioClip pitch_shift(const AudioClip& clip, int semitones) {
  if (std::abs(semitones) > 12) {
    throw ConfigError("pitch shift must lie within +/-12 semitones, got " +
                      std::to_string(semitones));
  }
  if (clip.samples.empty()) throw EmptyInput("empty clip");

  const double rate = std::pow(2.0, -semitones / 12.0);
  const std::vector<double> stretched = time_stretch(clip.samples, rate);

  AudioClip out;
  out.sample_rate = clip.sample_rate;
  out.source_path = clip.source_path;
  const double ratio = static_cast<double>(clip.samples.size()) /
                       static_cast<double>(stretched.size());
  out.samples = resample_signal(stretched, ratio, clip.samples.size());
  return out;
}

Rng clip_rng(const AugmentConfig& cfg, const ManifestRow& row) {
  uint64_t h = fnv1a64(row.path);
  h = fnv1a64(to_string(row.augment_tag), h);
  uint64_t s = cfg.rng_seed;
  return Rng(splitmix64(s) ^ h);
}

std::vector<ManifestRow> expand_dataset(const std::vector<ManifestRow>& rows,
                                        const AugmentConfig& cfg) {
  if (cfg.semitones < 0) throw ConfigError("semitones must be >= 0");

  std::vector<ManifestRow> out;
  out.reserve(rows.size() * 3);
  for (const auto& row : rows) {
    out.push_back(row);
    if (row.augment_tag != AugmentTag::kNone) continue;

    ManifestRow noisy = row;
    noisy.augment_tag = AugmentTag::kNoise;
    out.push_back(std::move(noisy));

    if (cfg.sign_policy == SignPolicy::kBoth) {
      ManifestRow up = row, down = row;
      up.augment_tag = AugmentTag::kPitchUp;
      down.augment_tag = AugmentTag::kPitchDown;
      out.push_back(std::move(up));
      out.push_back(std::move(down));
      continue;
    }

    ManifestRow shifted = row;
    switch (cfg.sign_policy) {
      case SignPolicy::kUp:
        shifted.augment_tag = AugmentTag::kPitchUp;
        break;
      case SignPolicy::kDown:
        shifted.augment_tag = AugmentTag::kPitchDown;
        break;
      default: {
        ManifestRow probe = row;
        probe.augment_tag = AugmentTag::kNone;
        Rng rng = clip_rng(cfg, probe).split(0x70697463ULL);  // pitch stream
        shifted.augment_tag =
            rng.uniform() < 0.5 ? AugmentTag::kPitchUp : AugmentTag::kPitchDown;
        break;
      }
    }
    out.push_back(std::move(shifted));
  }
  return out;
}

AudioClip apply_augment(const AudioClip& clip, const ManifestRow& row,
                        const AugmentConfig& cfg) {
  switch (row.augment_tag) {
    case AugmentTag::kNone:
      return clip;
    case AugmentTag::kNoise: {
      Rng rng = clip_rng(cfg, row);
      return add_noise(clip, cfg, rng);
    }
    case AugmentTag::kPitchUp:
      return pitch_shift(clip, cfg.semitones);
    case AugmentTag::kPitchDown:
      return pitch_shift(clip, -cfg.semitones);
  }
  return clip;
}

}  // namespace ser
