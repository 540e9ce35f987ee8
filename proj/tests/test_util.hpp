#pragma once

// Shared fixtures and the measurement oracles the tests rely on. The DFT
// here is the direct O(n^2) definition, independent of the library's FFT.

#include <unistd.h>

#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "ser/audio_io.hpp"

namespace test_util {

inline std::vector<double> sine(double freq_hz, uint32_t rate, size_t n,
                                double amplitude = 1.0, double phase = 0.0) {
  std::vector<double> x(n);
  for (size_t t = 0; t < n; ++t) {
    x[t] = amplitude * std::sin(2.0 * M_PI * freq_hz * t / rate + phase);
  }
  return x;
}

inline ser::AudioClip tone_clip(double freq_hz, uint32_t rate, double seconds,
                                double amplitude = 0.8) {
  ser::AudioClip clip;
  clip.sample_rate = rate;
  clip.samples = sine(freq_hz, rate, static_cast<size_t>(seconds * rate),
                      amplitude);
  return clip;
}

// Direct one-sided DFT power, |X[k]|^2 for k = 0..n/2.
inline std::vector<double> direct_power_spectrum(const std::vector<double>& x) {
  const size_t n = x.size();
  std::vector<double> power(n / 2 + 1);
  for (size_t k = 0; k <= n / 2; ++k) {
    double re = 0.0, im = 0.0;
    for (size_t t = 0; t < n; ++t) {
      const double ang = -2.0 * M_PI * static_cast<double>(k) * t / n;
      re += x[t] * std::cos(ang);
      im += x[t] * std::sin(ang);
    }
    power[k] = re * re + im * im;
  }
  return power;
}

// Dominant-frequency bin over a leading window of the signal. Window length
// caps the O(n^2) cost; bin width is rate / window.
struct PeakMeasurement {
  size_t bin;
  double bin_hz;
};

inline PeakMeasurement measure_peak(const std::vector<double>& x,
                                    uint32_t rate, size_t window = 4096) {
  const size_t n = std::min(window, x.size());
  const std::vector<double> head(x.begin(), x.begin() + static_cast<long>(n));
  const auto power = direct_power_spectrum(head);
  size_t best = 1;
  for (size_t k = 1; k < power.size(); ++k) {
    if (power[k] > power[best]) best = k;
  }
  return {best, static_cast<double>(rate) / static_cast<double>(n)};
}

inline size_t expected_bin(double freq_hz, uint32_t rate, size_t window = 4096) {
  return static_cast<size_t>(
      std::llround(freq_hz * static_cast<double>(window) / rate));
}

inline double rms(const std::vector<double>& x) {
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return std::sqrt(acc / static_cast<double>(x.size()));
}

inline double rms_diff(const std::vector<double>& a,
                       const std::vector<double>& b) {
  double acc = 0.0;
  const size_t n = std::min(a.size(), b.size());
  for (size_t i = 0; i < n; ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(acc / static_cast<double>(n));
}

inline double energy(const std::vector<double>& x) {
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return acc;
}

// Self-cleaning unique temporary directory.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<uint64_t> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("ser_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter.fetch_add(1)));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }

  const std::filesystem::path& path() const { return path_; }
  std::string str(const std::string& child = "") const {
    return child.empty() ? path_.string() : (path_ / child).string();
  }

 private:
  std::filesystem::path path_;
};

}  // namespace test_util
