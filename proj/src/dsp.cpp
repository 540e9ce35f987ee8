#include "ser/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "ser/errors.hpp"
#include "ser/fft.hpp"
#include "ser/parallel.hpp"

namespace ser {

namespace {
constexpr double kLogFloor = 1e-10;
}

void DspConfig::validate(uint32_t sample_rate) const {
  if (sample_rate == 0) throw ConfigError("sample rate must be positive");
  if (preemph_alpha < 0.9 || preemph_alpha > 1.0) {
    throw ConfigError("preemph_alpha must lie in [0.9, 1.0]");
  }
  if (frame_len == 0 || hop == 0 || hop > frame_len) {
    throw ConfigError("require 0 < hop <= frame_len");
  }
  if (n_mels == 0) throw ConfigError("n_mels must be positive");
  if (n_coeff < 1 || n_coeff > n_mels) {
    throw ConfigError("require 1 <= n_coeff <= n_mels");
  }
  if (!(fmin < fmax) || fmax > sample_rate / 2.0) {
    throw ConfigError("require fmin < fmax <= sample_rate/2");
  }
}

double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }

double mel_to_hz(double m) {
  return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0);
}

AudioClip pre_emphasize(const AudioClip& clip, double alpha) {
  if (alpha < 0.9 || alpha > 1.0) {
    throw ConfigError("pre-emphasis coefficient must lie in [0.9, 1.0]");
  }
  AudioClip out;
  out.sample_rate = clip.sample_rate;
  out.source_path = clip.source_path;
  out.samples.resize(clip.samples.size());
  if (clip.samples.empty()) return out;
  out.samples[0] = clip.samples[0];
  for (size_t t = 1; t < clip.samples.size(); ++t) {
    out.samples[t] = clip.samples[t] - alpha * clip.samples[t - 1];
  }
  return out;
}

std::vector<double> hamming_window(size_t n, double a) {
  std::vector<double> w(n, 1.0);
  if (n < 2) return w;
  for (size_t i = 0; i < n; ++i) {
    w[i] = a - (1.0 - a) * std::cos(2.0 * M_PI * static_cast<double>(i) /
                                    static_cast<double>(n - 1));
  }
  return w;
}

std::vector<std::vector<double>> frame_and_window(const AudioClip& clip,
                                                  const DspConfig& cfg) {
  const size_t n = cfg.frame_len;
  if (clip.samples.size() < n) {
    throw TooShort("clip of " + std::to_string(clip.samples.size()) +
                   " samples is shorter than one frame (" + std::to_string(n) +
                   ")");
  }
  const size_t n_frames = 1 + (clip.samples.size() - n) / cfg.hop;
  const std::vector<double> window = hamming_window(n, cfg.hamming_a);

  std::vector<std::vector<double>> frames(n_frames);
  for (size_t f = 0; f < n_frames; ++f) {
    frames[f].resize(n);
    const size_t base = f * cfg.hop;
    for (size_t i = 0; i < n; ++i) {
      frames[f][i] = clip.samples[base + i] * window[i];
    }
  }
  return frames;
}

Spectrum power_spectrum(const std::vector<double>& frame,
                        uint32_t sample_rate) {
  const size_t n = frame.size();
  Spectrum spec;
  spec.bin_hz = static_cast<double>(sample_rate) / static_cast<double>(n);
  spec.power.resize(n / 2 + 1);
  const auto fx = fft_real(frame);
  for (size_t k = 0; k <= n / 2; ++k) {
    spec.power[k] = fx[k].real() * fx[k].real() + fx[k].imag() * fx[k].imag();
  }
  return spec;
}

MelFilterBank build_mel_bank(const DspConfig& cfg, uint32_t sample_rate) {
  cfg.validate(sample_rate);
  const size_t n_bins = cfg.frame_len / 2 + 1;
  const double bin_hz =
      static_cast<double>(sample_rate) / static_cast<double>(cfg.frame_len);

  // K filters need K + 2 edge points, uniformly spaced on the mel scale.
  const double mel_lo = hz_to_mel(cfg.fmin);
  const double mel_hi = hz_to_mel(cfg.fmax);
  std::vector<double> edges_hz(cfg.n_mels + 2);
  for (size_t i = 0; i < edges_hz.size(); ++i) {
    const double m =
        mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                     static_cast<double>(cfg.n_mels + 1);
    edges_hz[i] = mel_to_hz(m);
  }

  for (size_t k = 0; k + 1 < cfg.n_mels; ++k) {
    const auto b0 = static_cast<long>(edges_hz[k + 1] / bin_hz);
    const auto b1 = static_cast<long>(edges_hz[k + 2] / bin_hz);
    if (b0 == b1) {
      throw ConfigError(
          "mel bank too dense for the FFT resolution: adjacent centers share "
          "bin " +
          std::to_string(b0));
    }
  }

  MelFilterBank bank;
  bank.n_filters = cfg.n_mels;
  bank.n_bins = n_bins;
  bank.weights.assign(cfg.n_mels * n_bins, 0.0);
  bank.centers_hz.assign(edges_hz.begin() + 1, edges_hz.end() - 1);

  for (size_t k = 0; k < cfg.n_mels; ++k) {
    const double f_lo = edges_hz[k];
    const double f_c = edges_hz[k + 1];
    const double f_hi = edges_hz[k + 2];
    for (size_t b = 0; b < n_bins; ++b) {
      const double f = static_cast<double>(b) * bin_hz;
      double w = 0.0;
      if (f >= f_lo && f <= f_c) {
        w = (f - f_lo) / (f_c - f_lo);
      } else if (f > f_c && f <= f_hi) {
        w = (f_hi - f) / (f_hi - f_c);
      }
      bank.weights[k * n_bins + b] = w;
    }
  }
  return bank;
}

std::vector<double> apply_mel_bank(const Spectrum& spec,
                                   const MelFilterBank& bank) {
  if (spec.power.size() != bank.n_bins) {
    throw ShapeError("spectrum has " + std::to_string(spec.power.size()) +
                     " bins, filter bank expects " +
                     std::to_string(bank.n_bins));
  }
  std::vector<double> energies(bank.n_filters, 0.0);
  for (size_t k = 0; k < bank.n_filters; ++k) {
    double acc = 0.0;
    const double* row = &bank.weights[k * bank.n_bins];
    for (size_t b = 0; b < bank.n_bins; ++b) acc += spec.power[b] * row[b];
    energies[k] = acc;
  }
  return energies;
}

std::vector<double> log_compress(const std::vector<double>& mel_energies) {
  std::vector<double> out(mel_energies.size());
  for (size_t i = 0; i < out.size(); ++i) {
    out[i] = std::log(mel_energies[i] + kLogFloor);
  }
  return out;
}

DctMatrix build_dct_matrix(size_t n_coeff, size_t n_mels) {
  if (n_coeff < 1 || n_coeff > n_mels) {
    throw ConfigError("require 1 <= n_coeff <= n_mels");
  }
  DctMatrix dct;
  dct.n_coeff = n_coeff;
  dct.n_mels = n_mels;
  dct.basis.resize(n_coeff * n_mels);
  for (size_t n = 1; n <= n_coeff; ++n) {
    for (size_t k = 1; k <= n_mels; ++k) {
      dct.basis[(n - 1) * n_mels + (k - 1)] =
          std::cos(static_cast<double>(n) * (static_cast<double>(k) - 0.5) *
                   M_PI / static_cast<double>(n_mels));
    }
  }
  return dct;
}

std::vector<double> dct_project(const std::vector<double>& log_mels,
                                const DctMatrix& dct) {
  if (log_mels.size() != dct.n_mels) {
    throw ShapeError("log-mel vector length " +
                     std::to_string(log_mels.size()) + " does not match DCT (" +
                     std::to_string(dct.n_mels) + ")");
  }
  std::vector<double> out(dct.n_coeff, 0.0);
  for (size_t n = 0; n < dct.n_coeff; ++n) {
    double acc = 0.0;
    const double* row = &dct.basis[n * dct.n_mels];
    for (size_t k = 0; k < dct.n_mels; ++k) acc += log_mels[k] * row[k];
    out[n] = acc;
  }
  return out;
}

MfccFeatures extract_mfcc(const AudioClip& clip, const DspConfig& cfg) {
  cfg.validate(clip.sample_rate);
  const AudioClip emphasized = pre_emphasize(clip, cfg.preemph_alpha);
  const auto frames = frame_and_window(emphasized, cfg);
  const MelFilterBank bank = build_mel_bank(cfg, clip.sample_rate);
  const DctMatrix dct = build_dct_matrix(cfg.n_coeff, cfg.n_mels);

  MfccFeatures feats;
  feats.n_frames = frames.size();
  feats.n_coeff = cfg.n_coeff;
  feats.matrix.resize(frames.size() * cfg.n_coeff);
  feats.clip_id = clip.source_path;

  parallel_for(frames.size(), [&](size_t begin, size_t end) {
    for (size_t f = begin; f < end; ++f) {
      const Spectrum spec = power_spectrum(frames[f], clip.sample_rate);
      const auto coeffs = dct_project(log_compress(apply_mel_bank(spec, bank)), dct);
      std::copy(coeffs.begin(), coeffs.end(),
                feats.matrix.begin() + static_cast<long>(f * cfg.n_coeff));
    }
  });

  std::vector<double> pooled(cfg.n_coeff, 0.0);
  for (size_t f = 0; f < feats.n_frames; ++f) {
    for (size_t c = 0; c < cfg.n_coeff; ++c) pooled[c] += feats.at(f, c);
  }
  for (auto& v : pooled) v /= static_cast<double>(feats.n_frames);
  feats.pooled = std::move(pooled);
  return feats;
}

MfccFeatures extract_log_energy(const AudioClip& clip, const DspConfig& cfg) {
  cfg.validate(clip.sample_rate);
  const auto frames = frame_and_window(clip, cfg);
  const size_t n_bins = cfg.frame_len / 2 + 1;

  MfccFeatures feats;
  feats.n_frames = frames.size();
  feats.n_coeff = cfg.n_coeff;
  feats.matrix.resize(frames.size() * cfg.n_coeff);
  feats.clip_id = clip.source_path;

  for (size_t f = 0; f < frames.size(); ++f) {
    const Spectrum spec = power_spectrum(frames[f], clip.sample_rate);
    for (size_t c = 0; c < cfg.n_coeff; ++c) {
      const size_t b0 = c * n_bins / cfg.n_coeff;
      const size_t b1 = (c + 1) * n_bins / cfg.n_coeff;
      double acc = 0.0;
      for (size_t b = b0; b < b1; ++b) acc += spec.power[b];
      feats.matrix[f * cfg.n_coeff + c] = std::log(acc + kLogFloor);
    }
  }

  std::vector<double> pooled(cfg.n_coeff, 0.0);
  for (size_t f = 0; f < feats.n_frames; ++f) {
    for (size_t c = 0; c < cfg.n_coeff; ++c) pooled[c] += feats.at(f, c);
  }
  for (auto& v : pooled) v /= static_cast<double>(feats.n_frames);
  feats.pooled = std::move(pooled);
  return feats;
}

namespace {

// Average of per-frame power spectra, framed with hop cfg.hop. Frames are
// taken as-is (rectangular) unless a window is supplied.
Spectrum averaged_spectrum(const std::vector<double>& samples,
                           uint32_t sample_rate, size_t frame_len, size_t hop,
                           const std::vector<double>* window) {
  const size_t n_frames = 1 + (samples.size() - frame_len) / hop;
  Spectrum avg;
  avg.bin_hz = static_cast<double>(sample_rate) / static_cast<double>(frame_len);
  avg.power.assign(frame_len / 2 + 1, 0.0);
  std::vector<double> frame(frame_len);
  for (size_t f = 0; f < n_frames; ++f) {
    for (size_t i = 0; i < frame_len; ++i) {
      frame[i] = samples[f * hop + i] * (window ? (*window)[i] : 1.0);
    }
    const Spectrum s = power_spectrum(frame, sample_rate);
    for (size_t k = 0; k < avg.power.size(); ++k) avg.power[k] += s.power[k];
  }
  for (auto& p : avg.power) p /= static_cast<double>(n_frames);
  return avg;
}

}  // namespace

std::vector<size_t> dominant_peaks(const Spectrum& spec, size_t count) {
  std::vector<size_t> maxima;
  for (size_t i = 1; i + 1 < spec.power.size(); ++i) {
    if (spec.power[i] > spec.power[i - 1] && spec.power[i] >= spec.power[i + 1]) {
      maxima.push_back(i);
    }
  }
  std::sort(maxima.begin(), maxima.end(), [&](size_t a, size_t b) {
    return spec.power[a] > spec.power[b];
  });
  if (maxima.size() > count) maxima.resize(count);
  std::sort(maxima.begin(), maxima.end());
  return maxima;
}

DemoSpectra demo_spectra() {
  constexpr uint32_t kRate = 16000;
  constexpr size_t kLen = 16000;
  constexpr size_t kFrame = 512;  // 31.25 Hz per bin at 16 kHz
  constexpr size_t kHop = 256;

  // Equal-amplitude tones at 100, 500, 1000 and 2000 Hz, peak-normalized.
  std::vector<double> x(kLen);
  double peak = 0.0;
  for (size_t t = 0; t < kLen; ++t) {
    const double u = static_cast<double>(t) / kRate;
    x[t] = std::sin(200.0 * M_PI * u) + std::sin(1000.0 * M_PI * u) +
           std::sin(2000.0 * M_PI * u) + std::sin(4000.0 * M_PI * u);
    peak = std::max(peak, std::abs(x[t]));
  }
  for (auto& v : x) v /= peak;

  AudioClip clip;
  clip.sample_rate = kRate;
  clip.samples = x;

  DspConfig cfg;
  const AudioClip emphasized = pre_emphasize(clip, cfg.preemph_alpha);
  const std::vector<double> window = hamming_window(kFrame, cfg.hamming_a);

  DemoSpectra demo;
  demo.raw = averaged_spectrum(clip.samples, kRate, kFrame, kHop, nullptr);
  demo.preemphasized =
      averaged_spectrum(emphasized.samples, kRate, kFrame, kHop, nullptr);
  demo.windowed =
      averaged_spectrum(emphasized.samples, kRate, kFrame, kHop, &window);
  demo.raw_peaks = dominant_peaks(demo.raw, 4);
  demo.preemphasized_peaks = dominant_peaks(demo.preemphasized, 4);
  demo.windowed_peaks = dominant_peaks(demo.windowed, 4);
  return demo;
}

namespace {

void put_u16(std::ofstream& out, uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>(v >> 8)};
  out.write(reinterpret_cast<char*>(b), 2);
}

void put_u32(std::ofstream& out, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<char*>(b), 4);
}

void put_f64(std::ofstream& out, double v) {
  uint64_t u;
  std::memcpy(&u, &v, sizeof(u));
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((u >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<char*>(b), 8);
}

uint16_t get_u16(std::ifstream& in) {
  unsigned char b[2];
  in.read(reinterpret_cast<char*>(b), 2);
  return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

uint32_t get_u32(std::ifstream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(std::ifstream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= static_cast<uint64_t>(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &u, sizeof(v));
  return v;
}

constexpr uint16_t kCacheVersion = 1;

}  // namespace

void write_features(const std::string& path, const MfccFeatures& f) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.write("MFCC", 4);
  put_u16(out, kCacheVersion);
  put_u32(out, static_cast<uint32_t>(f.n_frames));
  put_u32(out, static_cast<uint32_t>(f.n_coeff));
  for (double v : f.matrix) put_f64(out, v);
  if (!out) throw IoError("write failed: " + path);
}

MfccFeatures read_features(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "MFCC", 4) != 0) {
    throw IoError("bad feature record magic: " + path);
  }
  const uint16_t version = get_u16(in);
  if (version != kCacheVersion) {
    throw IoError("unsupported feature record version " +
                  std::to_string(version) + ": " + path);
  }
  MfccFeatures f;
  f.n_frames = get_u32(in);
  f.n_coeff = get_u32(in);
  f.matrix.resize(f.n_frames * f.n_coeff);
  for (auto& v : f.matrix) v = get_f64(in);
  if (!in) throw IoError("truncated feature record: " + path);

  std::vector<double> pooled(f.n_coeff, 0.0);
  if (f.n_frames > 0) {
    for (size_t fr = 0; fr < f.n_frames; ++fr) {
      for (size_t c = 0; c < f.n_coeff; ++c) pooled[c] += f.at(fr, c);
    }
    for (auto& v : pooled) v /= static_cast<double>(f.n_frames);
  }
  f.pooled = std::move(pooled);
  return f;
}

}  // namespace ser
