#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ser {

/// Mono audio buffer. Samples are finite and lie in [-1, 1].
struct AudioClip {
  std::vector<double> samples;
  uint32_t sample_rate = 0;  // Hz
  std::string source_path;   // provenance; may be empty

  double duration_s() const {
    return sample_rate == 0
               ? 0.0
               : static_cast<double>(samples.size()) / sample_rate;
  }
};

enum class PadMode { kZero, kReflect };
enum class TrimAnchor { kStart, kCenter };

/// How ingested clips are brought to a common rate and length.
struct IngestConfig {
  uint32_t target_rate = 16000;  // Hz
  double target_duration = 3.0;  // seconds
  PadMode pad_mode = PadMode::kZero;
  TrimAnchor trim_anchor = TrimAnchor::kCenter;
};

enum class WavFormat { kPcm16, kFloat32 };

/// Decodes a RIFF/WAVE byte stream (PCM 16-bit or IEEE float 32-bit,
/// 1-2 channels). Stereo is downmixed by channel mean; integer samples are
/// scaled by 1/32768.
/// Throws DecodeError on malformed input, UnsupportedFormat on other codecs.
AudioClip decode_wav(const std::vector<uint8_t>& bytes);

/// Reads and decodes a WAV file; records the path as provenance.
AudioClip decode_wav_file(const std::string& path);

/// Serializes a clip as a RIFF/WAVE stream. Multi-channel input is not
/// produced here; use encode_wav_frames for stereo test fixtures.
std::vector<uint8_t> encode_wav(const AudioClip& clip,
                                WavFormat format = WavFormat::kPcm16);

/// Serializes interleaved frames with the given channel count.
std::vector<uint8_t> encode_wav_frames(const std::vector<double>& interleaved,
                                       uint16_t channels, uint32_t sample_rate,
                                       WavFormat format = WavFormat::kPcm16);

void write_file(const std::string& path, const std::vector<uint8_t>& bytes);
std::vector<uint8_t> read_file(const std::string& path);

/// Band-limited (windowed-sinc) rate conversion. Output duration matches the
/// input within one sample period.
AudioClip resample(const AudioClip& clip, uint32_t target_rate);

/// Windowed-sinc interpolation core: produces out_len samples where output
/// position i reads input position i / ratio. Cutoff sits at the smaller of
/// the two Nyquist frequencies.
std::vector<double> resample_signal(const std::vector<double>& x, double ratio,
                                    size_t out_len);

/// Pads or trims to exactly round(target_duration * target_rate) samples.
/// Shorter clips are padded at the tail, longer ones trimmed per trim_anchor.
AudioClip standardize_duration(const AudioClip& clip, const IngestConfig& cfg);

/// decode -> resample -> standardize_duration, the standard ingestion chain.
AudioClip ingest(const AudioClip& clip, const IngestConfig& cfg);

}  // namespace ser
