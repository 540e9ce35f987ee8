#include "ser/audio_io.hpp"

#include <cstring>

#include "doctest.h"
#include "ser/errors.hpp"
#include "ser/rng.hpp"
#include "test_util.hpp"

using namespace ser;

namespace {

// Minimal hand-rolled PCM16 WAV so the decoder is not tested against our own
// encoder alone.
std::vector<uint8_t> raw_pcm16_wav(const std::vector<int16_t>& samples,
                                   uint16_t channels, uint32_t rate) {
  std::vector<uint8_t> b;
  auto u16 = [&](uint16_t v) {
    b.push_back(v & 0xff);
    b.push_back(v >> 8);
  };
  auto u32 = [&](uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back((v >> (8 * i)) & 0xff);
  };
  auto tag = [&](const char* t) { b.insert(b.end(), t, t + 4); };
  const uint32_t data_size = static_cast<uint32_t>(samples.size() * 2);
  tag("RIFF");
  u32(36 + data_size);
  tag("WAVE");
  tag("fmt ");
  u32(16);
  u16(1);  // PCM
  u16(channels);
  u32(rate);
  u32(rate * channels * 2);
  u16(channels * 2);
  u16(16);
  tag("data");
  u32(data_size);
  for (int16_t s : samples) u16(static_cast<uint16_t>(s));
  return b;
}

}  // namespace

TEST_CASE("decode_wav scales 16-bit PCM by 1/32768") {
  const auto bytes = raw_pcm16_wav({0, 16384, -32768}, 1, 16000);
  const AudioClip clip = decode_wav(bytes);
  REQUIRE(clip.samples.size() == 3);
  CHECK(clip.sample_rate == 16000);
  CHECK(clip.samples[0] == doctest::Approx(0.0));
  CHECK(clip.samples[1] == doctest::Approx(0.5));
  CHECK(clip.samples[2] == doctest::Approx(-1.0));
}

TEST_CASE("decode_wav downmixes stereo by channel mean") {
  // One frame: L = 0.2, R = 0.6.
  const auto l = static_cast<int16_t>(std::lrint(0.2 * 32768.0));
  const auto r = static_cast<int16_t>(std::lrint(0.6 * 32768.0));
  const AudioClip clip = decode_wav(raw_pcm16_wav({l, r}, 2, 44100));
  REQUIRE(clip.samples.size() == 1);
  CHECK(clip.samples[0] == doctest::Approx(0.4).epsilon(1e-4));
}

TEST_CASE("decode_wav rejects malformed and unsupported input") {
  auto bytes = raw_pcm16_wav({0, 0, 0, 0}, 1, 8000);

  SUBCASE("truncated data chunk") {
    bytes.resize(bytes.size() - 3);
    CHECK_THROWS_AS(decode_wav(bytes), DecodeError);
  }
  SUBCASE("not RIFF at all") {
    bytes[0] = 'X';
    CHECK_THROWS_AS(decode_wav(bytes), DecodeError);
  }
  SUBCASE("8-bit PCM is unsupported") {
    bytes[34] = 8;  // bits-per-sample field
    CHECK_THROWS_AS(decode_wav(bytes), UnsupportedFormat);
  }
  SUBCASE("three channels are unsupported") {
    bytes[22] = 3;
    CHECK_THROWS_AS(decode_wav(bytes), UnsupportedFormat);
  }
}

TEST_CASE("decode_wav reads float32 payloads") {
  AudioClip clip;
  clip.sample_rate = 22050;
  clip.samples = {0.25, -0.75, 1.0};
  const auto bytes = encode_wav(clip, WavFormat::kFloat32);
  const AudioClip back = decode_wav(bytes);
  REQUIRE(back.samples.size() == 3);
  for (size_t i = 0; i < 3; ++i) {
    CHECK(back.samples[i] == doctest::Approx(clip.samples[i]).epsilon(1e-7));
  }
}

TEST_CASE("PCM16 encode/decode round trip stays within one quantization step") {
  Rng rng(7);
  AudioClip clip;
  clip.sample_rate = 16000;
  clip.samples.resize(2048);
  for (auto& s : clip.samples) s = rng.uniform(-1.0, 1.0);

  const AudioClip back = decode_wav(encode_wav(clip));
  REQUIRE(back.samples.size() == clip.samples.size());
  for (size_t i = 0; i < clip.samples.size(); ++i) {
    CHECK(std::abs(back.samples[i] - clip.samples[i]) <= 1.0 / 32768.0);
  }
}

TEST_CASE("resample at the identity rate returns identical samples") {
  const auto clip = test_util::tone_clip(440.0, 16000, 0.25);
  const AudioClip out = resample(clip, 16000);
  CHECK(out.samples == clip.samples);
}

TEST_CASE("resample preserves a 440 Hz tone from 48 kHz to 16 kHz") {
  const auto clip = test_util::tone_clip(440.0, 48000, 1.0);
  const AudioClip out = resample(clip, 16000);
  const auto peak = test_util::measure_peak(out.samples, 16000);
  const size_t expected = test_util::expected_bin(440.0, 16000);
  CHECK(peak.bin >= expected - 1);
  CHECK(peak.bin <= expected + 1);
}

TEST_CASE("resample 44.1 kHz -> 16 kHz lands within one sample of 1 s") {
  const auto clip = test_util::tone_clip(440.0, 44100, 1.0);
  const AudioClip out = resample(clip, 16000);
  CHECK(out.samples.size() >= 15999);
  CHECK(out.samples.size() <= 16001);
  CHECK(out.sample_rate == 16000);
}

TEST_CASE("resample tone preservation holds across rates and frequencies") {
  const uint32_t rates[2][2] = {{48000, 16000}, {16000, 44100}};
  const double freqs[] = {200.0, 440.0, 1000.0, 3000.0};
  for (const auto& pair : rates) {
    for (double f : freqs) {
      const auto clip = test_util::tone_clip(f, pair[0], 0.5);
      const AudioClip out = resample(clip, pair[1]);
      const auto peak = test_util::measure_peak(out.samples, pair[1]);
      const size_t expected = test_util::expected_bin(f, pair[1]);
      CHECK(peak.bin >= expected - 1);
      CHECK(peak.bin <= expected + 1);
    }
  }
}

TEST_CASE("resample rejects a zero target rate") {
  const auto clip = test_util::tone_clip(440.0, 16000, 0.1);
  CHECK_THROWS_AS(resample(clip, 0), ConfigError);
}

TEST_CASE("standardize_duration pads short clips with trailing zeros") {
  IngestConfig cfg;  // 16 kHz, 3 s
  auto clip = test_util::tone_clip(440.0, 16000, 2.0);
  const AudioClip out = standardize_duration(clip, cfg);
  REQUIRE(out.samples.size() == 48000);
  for (size_t i = 0; i < 32000; ++i) {
    REQUIRE(out.samples[i] == clip.samples[i]);
  }
  for (size_t i = 32000; i < 48000; ++i) {
    REQUIRE(out.samples[i] == 0.0);
  }
}

TEST_CASE("standardize_duration center-trims long clips") {
  IngestConfig cfg;
  cfg.trim_anchor = TrimAnchor::kCenter;
  auto clip = test_util::tone_clip(440.0, 16000, 4.0);
  const AudioClip out = standardize_duration(clip, cfg);
  REQUIRE(out.samples.size() == 48000);
  // Middle 3 s: offset (64000 - 48000) / 2 = 8000.
  for (size_t i = 0; i < out.samples.size(); i += 997) {
    REQUIRE(out.samples[i] == clip.samples[i + 8000]);
  }
}

TEST_CASE("standardize_duration start-anchor trim keeps the head") {
  IngestConfig cfg;
  cfg.trim_anchor = TrimAnchor::kStart;
  auto clip = test_util::tone_clip(440.0, 16000, 4.0);
  const AudioClip out = standardize_duration(clip, cfg);
  REQUIRE(out.samples.size() == 48000);
  CHECK(out.samples[0] == clip.samples[0]);
  CHECK(out.samples[47999] == clip.samples[47999]);
}

TEST_CASE("standardize_duration is exact and idempotent") {
  IngestConfig cfg;
  auto clip = test_util::tone_clip(440.0, 16000, 3.0);
  const AudioClip once = standardize_duration(clip, cfg);
  CHECK(once.samples == clip.samples);  // already the right length
  const AudioClip twice = standardize_duration(once, cfg);
  CHECK(twice.samples == once.samples);

  cfg.pad_mode = PadMode::kReflect;
  auto shorter = test_util::tone_clip(440.0, 16000, 1.7);
  const AudioClip padded = standardize_duration(shorter, cfg);
  const AudioClip padded_again = standardize_duration(padded, cfg);
  CHECK(padded_again.samples == padded.samples);
}

TEST_CASE("standardize_duration rejects empty clips") {
  AudioClip clip;
  clip.sample_rate = 16000;
  CHECK_THROWS_AS(standardize_duration(clip, IngestConfig{}), EmptyInput);
}

TEST_CASE("reflect padding mirrors the tail") {
  IngestConfig cfg;
  cfg.target_rate = 10;
  cfg.target_duration = 1.0;
  cfg.pad_mode = PadMode::kReflect;
  AudioClip clip;
  clip.sample_rate = 10;
  clip.samples = {1.0, 2.0, 3.0, 4.0, 5.0};
  const AudioClip out = standardize_duration(clip, cfg);
  const std::vector<double> expected = {1, 2, 3, 4, 5, 4, 3, 2, 1, 2};
  CHECK(out.samples == expected);
}
