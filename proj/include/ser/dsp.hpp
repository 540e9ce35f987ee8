#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ser/audio_io.hpp"

namespace ser {

/// Parameters of the cepstral feature chain.
struct DspConfig {
  double preemph_alpha = 0.97;  // in [0.9, 1.0]
  size_t frame_len = 512;       // samples per analysis frame
  size_t hop = 256;             // frame advance in samples
  double hamming_a = 0.54;      // window shape constant
  size_t n_mels = 40;           // triangular filters
  size_t n_coeff = 20;          // retained cepstral coefficients
  double fmin = 0.0;            // Hz, lower edge of the filter bank
  double fmax = 8000.0;         // Hz, upper edge of the filter bank

  void validate(uint32_t sample_rate) const;  // throws ConfigError
};

/// One-sided power spectrum of a single frame: |X[k]|^2 for k = 0..N/2.
struct Spectrum {
  std::vector<double> power;
  double bin_hz = 0.0;  // frequency resolution, sample_rate / N
};

/// Triangular filters on the mel scale, sampled at FFT bin frequencies.
/// Rows sum to 1 pointwise over the covered band (partition of unity).
struct MelFilterBank {
  size_t n_filters = 0;
  size_t n_bins = 0;
  std::vector<double> weights;     // n_filters x n_bins, row-major
  std::vector<double> centers_hz;  // filter apex frequencies

  double weight(size_t filter, size_t bin) const {
    return weights[filter * n_bins + bin];
  }
};

/// Cosine projection rows, entry(n, k) = cos(n * (k - 0.5) * pi / K) for
/// n = 1..n_coeff, k = 1..n_mels. The constant component is excluded, so
/// every row is orthogonal to constant vectors.
struct DctMatrix {
  size_t n_coeff = 0;
  size_t n_mels = 0;
  std::vector<double> basis;  // n_coeff x n_mels, row-major

  double entry(size_t row, size_t col) const {
    return basis[row * n_mels + col];
  }
};

/// Per-clip feature matrix plus an optional time-averaged vector.
struct MfccFeatures {
  size_t n_frames = 0;
  size_t n_coeff = 0;
  std::vector<double> matrix;  // n_frames x n_coeff, row-major
  std::optional<std::vector<double>> pooled;
  std::string clip_id;

  double at(size_t frame, size_t coeff) const {
    return matrix[frame * n_coeff + coeff];
  }
};

double hz_to_mel(double f);
double mel_to_hz(double m);

/// First-difference high-pass: out(0) = x(0), out(t) = x(t) - alpha x(t-1).
AudioClip pre_emphasize(const AudioClip& clip, double alpha);

/// Hamming window of the given length and shape constant.
std::vector<double> hamming_window(size_t n, double a);

/// Splits into overlapping frames and applies the Hamming window.
/// Frame count is 1 + floor((len - N) / H). Throws TooShort if the clip is
/// shorter than one frame.
std::vector<std::vector<double>> frame_and_window(const AudioClip& clip,
                                                  const DspConfig& cfg);

/// One-sided |X[k]|^2 of a frame. Energies satisfy Plancherel's identity
/// against the time-domain frame.
Spectrum power_spectrum(const std::vector<double>& frame,
                        uint32_t sample_rate);

MelFilterBank build_mel_bank(const DspConfig& cfg, uint32_t sample_rate);

/// Mel band energies M_k = sum_f |X[f]|^2 H_k(f).
std::vector<double> apply_mel_bank(const Spectrum& spec,
                                   const MelFilterBank& bank);

/// L_k = log(M_k + 1e-10); the floor absorbs silent frames.
std::vector<double> log_compress(const std::vector<double>& mel_energies);

DctMatrix build_dct_matrix(size_t n_coeff, size_t n_mels);

std::vector<double> dct_project(const std::vector<double>& log_mels,
                                const DctMatrix& dct);

/// Full chain per frame: pre-emphasis, framing/windowing, power spectrum,
/// mel bank, log, cosine projection. The pooled vector is the per-coefficient
/// mean over frames.
MfccFeatures extract_mfcc(const AudioClip& clip, const DspConfig& cfg);

/// Baseline features without the perceptual chain: per-frame log energies of
/// n_coeff equal-width linear bands. Same dimensionality as extract_mfcc.
MfccFeatures extract_log_energy(const AudioClip& clip, const DspConfig& cfg);

/// Spectra of a synthetic four-tone signal (100/500/1000/2000 Hz, one second
/// at 16 kHz, analyzed at 31.25 Hz/bin): raw, pre-emphasized, and
/// pre-emphasized + windowed, each averaged over frames.
struct DemoSpectra {
  Spectrum raw;
  Spectrum preemphasized;
  Spectrum windowed;
  std::vector<size_t> raw_peaks;
  std::vector<size_t> preemphasized_peaks;
  std::vector<size_t> windowed_peaks;
};

DemoSpectra demo_spectra();

/// The `count` largest local maxima, returned in ascending bin order.
std::vector<size_t> dominant_peaks(const Spectrum& spec, size_t count);

/// Binary feature-cache record I/O (magic "MFCC").
void write_features(const std::string& path, const MfccFeatures& f);
MfccFeatures read_features(const std::string& path);

}  // namespace ser
