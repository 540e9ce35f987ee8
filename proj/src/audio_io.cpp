#include "ser/audio_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "ser/errors.hpp"

namespace ser {

namespace {

constexpr uint16_t kFormatPcm = 0x0001;
constexpr uint16_t kFormatFloat = 0x0003;
constexpr uint16_t kFormatExtensible = 0xFFFE;

uint16_t read_u16(const std::vector<uint8_t>& b, size_t off) {
  return static_cast<uint16_t>(b[off] | (b[off + 1] << 8));
}

uint32_t read_u32(const std::vector<uint8_t>& b, size_t off) {
  return static_cast<uint32_t>(b[off]) | (static_cast<uint32_t>(b[off + 1]) << 8) |
         (static_cast<uint32_t>(b[off + 2]) << 16) |
         (static_cast<uint32_t>(b[off + 3]) << 24);
}

void push_u16(std::vector<uint8_t>& b, uint16_t v) {
  b.push_back(static_cast<uint8_t>(v & 0xff));
  b.push_back(static_cast<uint8_t>(v >> 8));
}

void push_u32(std::vector<uint8_t>& b, uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}

bool chunk_id_is(const std::vector<uint8_t>& b, size_t off, const char* id) {
  return std::memcmp(b.data() + off, id, 4) == 0;
}

double clamp_unit(double v) { return std::min(1.0, std::max(-1.0, v)); }

struct FmtInfo {
  uint16_t format = 0;
  uint16_t channels = 0;
  uint32_t sample_rate = 0;
  uint16_t bits = 0;
};

FmtInfo parse_fmt(const std::vector<uint8_t>& bytes, size_t off, uint32_t size) {
  if (size < 16) throw DecodeError("fmt chunk too small");
  FmtInfo f;
  f.format = read_u16(bytes, off);
  f.channels = read_u16(bytes, off + 2);
  f.sample_rate = read_u32(bytes, off + 4);
  f.bits = read_u16(bytes, off + 14);
  if (f.format == kFormatExtensible) {
    // Actual codec lives in the first two bytes of the SubFormat GUID.
    if (size < 40) throw DecodeError("extensible fmt chunk too small");
    f.format = read_u16(bytes, off + 24);
  }
  return f;
}

}  // namespace

AudioClip decode_wav(const std::vector<uint8_t>& bytes) {
  if (bytes.size() < 12 || !chunk_id_is(bytes, 0, "RIFF") ||
      !chunk_id_is(bytes, 8, "WAVE")) {
    throw DecodeError("not a RIFF/WAVE stream");
  }

  FmtInfo fmt;
  bool have_fmt = false;
  size_t data_off = 0, data_size = 0;
  bool have_data = false;

  size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const uint32_t chunk_size = read_u32(bytes, pos + 4);
    const size_t body = pos + 8;
    if (body + chunk_size > bytes.size()) {
      throw DecodeError("truncated chunk at offset " + std::to_string(pos));
    }
    if (chunk_id_is(bytes, pos, "fmt ")) {
      fmt = parse_fmt(bytes, body, chunk_size);
      have_fmt = true;
    } else if (chunk_id_is(bytes, pos, "data")) {
      data_off = body;
      data_size = chunk_size;
      have_data = true;
    }
    pos = body + chunk_size + (chunk_size & 1);  // chunks are 2-byte aligned
  }

  if (!have_fmt) throw DecodeError("missing fmt chunk");
  if (!have_data) throw DecodeError("missing data chunk");
  if (fmt.sample_rate == 0) throw DecodeError("zero sample rate");
  if (fmt.channels < 1 || fmt.channels > 2) {
    throw UnsupportedFormat(std::to_string(fmt.channels) + " channels");
  }

  size_t bytes_per_sample;
  if (fmt.format == kFormatPcm && fmt.bits == 16) {
    bytes_per_sample = 2;
  } else if (fmt.format == kFormatFloat && fmt.bits == 32) {
    bytes_per_sample = 4;
  } else {
    throw UnsupportedFormat("format tag " + std::to_string(fmt.format) + ", " +
                            std::to_string(fmt.bits) + " bits");
  }

  const size_t frame_bytes = bytes_per_sample * fmt.channels;
  const size_t n_frames = data_size / frame_bytes;

  AudioClip clip;
  clip.sample_rate = fmt.sample_rate;
  clip.samples.resize(n_frames);

  for (size_t i = 0; i < n_frames; ++i) {
    double acc = 0.0;
    for (uint16_t c = 0; c < fmt.channels; ++c) {
      const size_t off = data_off + i * frame_bytes + c * bytes_per_sample;
      if (bytes_per_sample == 2) {
        const auto raw = static_cast<int16_t>(read_u16(bytes, off));
        acc += static_cast<double>(raw) / 32768.0;
      } else {
        uint32_t u = read_u32(bytes, off);
        float f;
        std::memcpy(&f, &u, sizeof(f));
        acc += clamp_unit(static_cast<double>(f));
      }
    }
    clip.samples[i] = acc / fmt.channels;
  }
  return clip;
}

AudioClip decode_wav_file(const std::string& path) {
  AudioClip clip = decode_wav(read_file(path));
  clip.source_path = path;
  return clip;
}

std::vector<uint8_t> encode_wav(const AudioClip& clip, WavFormat format) {
  return encode_wav_frames(clip.samples, 1, clip.sample_rate, format);
}

std::vector<uint8_t> encode_wav_frames(const std::vector<double>& interleaved,
                                       uint16_t channels, uint32_t sample_rate,
                                       WavFormat format) {
  if (channels < 1 || channels > 2) throw ConfigError("channels must be 1 or 2");
  if (sample_rate == 0) throw ConfigError("sample rate must be positive");

  const uint16_t bits = format == WavFormat::kPcm16 ? 16 : 32;
  const uint16_t block_align = static_cast<uint16_t>(channels * bits / 8);
  const uint32_t data_size =
      static_cast<uint32_t>(interleaved.size() * bits / 8);

  std::vector<uint8_t> out;
  out.reserve(44 + data_size);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  push_u32(out, 36 + data_size);
  out.insert(out.end(), {'W', 'A', 'V', 'E'});
  out.insert(out.end(), {'f', 'm', 't', ' '});
  push_u32(out, 16);
  push_u16(out, format == WavFormat::kPcm16 ? kFormatPcm : kFormatFloat);
  push_u16(out, channels);
  push_u32(out, sample_rate);
  push_u32(out, sample_rate * block_align);
  push_u16(out, block_align);
  push_u16(out, bits);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  push_u32(out, data_size);

  for (double s : interleaved) {
    if (format == WavFormat::kPcm16) {
      // Same 1/32768 scale as the decoder; +1.0 saturates at 32767.
      const long q = std::lrint(clamp_unit(s) * 32768.0);
      const auto clamped = static_cast<int16_t>(std::min(32767L, std::max(-32768L, q)));
      push_u16(out, static_cast<uint16_t>(clamped));
    } else {
      const float f = static_cast<float>(s);
      uint32_t u;
      std::memcpy(&u, &f, sizeof(u));
      push_u32(out, u);
    }
  }
  return out;
}

void write_file(const std::string& path, const std::vector<uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path);
}

std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("cannot open: " + path);
  const auto size = in.tellg();
  in.seekg(0);
  std::vector<uint8_t> bytes(static_cast<size_t>(size));
  in.read(reinterpret_cast<char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!in) throw IoError("read failed: " + path);
  return bytes;
}

namespace {

double sinc(double t) {
  if (std::abs(t) < 1e-12) return 1.0;
  const double pt = M_PI * t;
  return std::sin(pt) / pt;
}

}  // namespace

std::vector<double> resample_signal(const std::vector<double>& x, double ratio,
                                    size_t out_len) {
  const auto in_len = static_cast<long>(x.size());
  const double scale = std::min(1.0, ratio);
  constexpr int kZeroCrossings = 16;
  const double support = kZeroCrossings / scale;

  std::vector<double> out(out_len);
  for (size_t i = 0; i < out_len; ++i) {
    const double center = static_cast<double>(i) / ratio;
    const auto j0 = static_cast<long>(std::ceil(center - support));
    const auto j1 = static_cast<long>(std::floor(center + support));
    double acc = 0.0;
    for (long j = std::max(0L, j0); j <= std::min(in_len - 1, j1); ++j) {
      const double d = static_cast<double>(j) - center;
      const double window = 0.5 * (1.0 + std::cos(M_PI * d / support));
      acc += x[static_cast<size_t>(j)] * scale * sinc(scale * d) * window;
    }
    out[i] = clamp_unit(acc);
  }
  return out;
}

AudioClip resample(const AudioClip& clip, uint32_t target_rate) {
  if (target_rate == 0) throw ConfigError("target rate must be positive");
  if (target_rate == clip.sample_rate || clip.samples.empty()) {
    AudioClip out = clip;
    out.sample_rate = target_rate;
    return out;
  }

  const double ratio =
      static_cast<double>(target_rate) / static_cast<double>(clip.sample_rate);
  const auto out_len =
      static_cast<size_t>(std::llround(clip.samples.size() * ratio));

  AudioClip out;
  out.sample_rate = target_rate;
  out.source_path = clip.source_path;
  out.samples = resample_signal(clip.samples, ratio, out_len);
  return out;
}

AudioClip standardize_duration(const AudioClip& clip, const IngestConfig& cfg) {
  if (clip.samples.empty()) throw EmptyInput("empty clip");
  if (cfg.target_rate == 0 || cfg.target_duration <= 0.0) {
    throw ConfigError("target rate and duration must be positive");
  }

  const auto target =
      static_cast<size_t>(std::llround(cfg.target_duration * cfg.target_rate));
  const size_t n = clip.samples.size();

  AudioClip out;
  out.sample_rate = clip.sample_rate;
  out.source_path = clip.source_path;

  if (n == target) {
    out.samples = clip.samples;
  } else if (n > target) {
    const size_t start =
        cfg.trim_anchor == TrimAnchor::kCenter ? (n - target) / 2 : 0;
    out.samples.assign(clip.samples.begin() + static_cast<long>(start),
                       clip.samples.begin() + static_cast<long>(start + target));
  } else {
    out.samples = clip.samples;
    out.samples.resize(target, 0.0);
    if (cfg.pad_mode == PadMode::kReflect && n > 1) {
      // Mirror extension without repeating the edge sample, bouncing at ends.
      const size_t period = 2 * (n - 1);
      for (size_t i = n; i < target; ++i) {
        const size_t m = i % period;
        out.samples[i] = clip.samples[m < n ? m : period - m];
      }
    }
  }
  return out;
}

AudioClip ingest(const AudioClip& clip, const IngestConfig& cfg) {
  return standardize_duration(resample(clip, cfg.target_rate), cfg);
}

}  // namespace ser
