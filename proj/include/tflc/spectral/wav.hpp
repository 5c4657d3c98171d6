#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "tflc/spectral/types.hpp"

namespace tflc::spectral {

enum class SampleFormat { float32, pcm16 };

namespace detail {

inline std::uint32_t read_u32(const unsigned char* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
         (std::uint32_t(p[3]) << 24);
}
inline std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
inline void put_u32(std::vector<unsigned char>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<unsigned char>(v >> (8 * i)));
}
inline void put_u16(std::vector<unsigned char>& b, std::uint16_t v) {
  b.push_back(static_cast<unsigned char>(v & 0xff));
  b.push_back(static_cast<unsigned char>(v >> 8));
}
inline void put_tag(std::vector<unsigned char>& b, const char* tag) { b.insert(b.end(), tag, tag + 4); }

}  // namespace detail

/// Decodes a RIFF/WAVE byte buffer (PCM16 or IEEE float32, any channel count).
inline Waveform decode_wav(const std::vector<unsigned char>& bytes) {
  using detail::read_u16;
  using detail::read_u32;
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw ParseError("wav: missing RIFF/WAVE header");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  const unsigned char* data = nullptr;
  std::size_t data_len = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t len = read_u32(chunk + 4);
    const std::size_t body = pos + 8;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (len < 16 || body + len > bytes.size()) throw ParseError("wav: truncated fmt chunk");
      format = read_u16(bytes.data() + body);
      channels = read_u16(bytes.data() + body + 2);
      rate = read_u32(bytes.data() + body + 4);
      bits = read_u16(bytes.data() + body + 14);
      if (format == 0xFFFE) {
        if (len < 26) throw ParseError("wav: truncated extensible fmt chunk");
        format = read_u16(bytes.data() + body + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (body + len > bytes.size()) throw ParseError("wav: truncated data chunk");
      data = bytes.data() + body;
      data_len = len;
      break;
    }
    pos = body + len + (len & 1u);
  }
  if (!have_fmt) throw ParseError("wav: missing fmt chunk");
  if (data == nullptr) throw ParseError("wav: missing data chunk");
  if (channels == 0 || rate == 0) throw ParseError("wav: invalid channel count or rate");

  const bool is_pcm16 = format == 1 && bits == 16;
  const bool is_f32 = format == 3 && bits == 32;
  if (!is_pcm16 && !is_f32)
    throw ParseError("wav: unsupported codec (format " + std::to_string(format) + ", " +
                     std::to_string(bits) + " bits)");

  const std::size_t bytes_per = bits / 8;
  const std::size_t frames = data_len / (bytes_per * channels);
  Waveform w(channels, frames, static_cast<double>(rate));
  for (std::size_t i = 0; i < frames; ++i) {
    for (std::size_t m = 0; m < channels; ++m) {
      const unsigned char* p = data + (i * channels + m) * bytes_per;
      if (is_pcm16) {
        const auto v = static_cast<std::int16_t>(read_u16(p));
        w[m][i] = static_cast<double>(v) / 32768.0;
      } else {
        const std::uint32_t u = read_u32(p);
        float f;
        std::memcpy(&f, &u, 4);
        w[m][i] = static_cast<double>(f);
      }
    }
  }
  return w;
}

inline std::vector<unsigned char> encode_wav(const Waveform& w, SampleFormat fmt = SampleFormat::float32) {
  using namespace detail;
  w.validate();
  const std::uint16_t channels = static_cast<std::uint16_t>(w.num_channels());
  const std::uint16_t bits = fmt == SampleFormat::pcm16 ? 16 : 32;
  const std::uint32_t rate = static_cast<std::uint32_t>(std::lround(w.sample_rate));
  const std::uint32_t block = channels * (bits / 8);
  const std::uint32_t data_len = static_cast<std::uint32_t>(w.length() * block);

  std::vector<unsigned char> b;
  b.reserve(44 + data_len);
  put_tag(b, "RIFF");
  put_u32(b, 36 + data_len);
  put_tag(b, "WAVE");
  put_tag(b, "fmt ");
  put_u32(b, 16);
  put_u16(b, fmt == SampleFormat::pcm16 ? 1 : 3);
  put_u16(b, channels);
  put_u32(b, rate);
  put_u32(b, rate * block);
  put_u16(b, static_cast<std::uint16_t>(block));
  put_u16(b, bits);
  put_tag(b, "data");
  put_u32(b, data_len);
  for (std::size_t i = 0; i < w.length(); ++i) {
    for (std::size_t m = 0; m < channels; ++m) {
      const double v = w[m][i];
      if (fmt == SampleFormat::pcm16) {
        const double q = std::clamp(std::round(v * 32768.0), -32768.0, 32767.0);
        put_u16(b, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
      } else {
        const float f = static_cast<float>(v);
        std::uint32_t u;
        std::memcpy(&u, &f, 4);
        put_u32(b, u);
      }
    }
  }
  return b;
}

inline Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_wav(bytes);
}

inline void write_wav(const std::filesystem::path& path, const Waveform& w,
                      SampleFormat fmt = SampleFormat::float32) {
  const auto bytes = encode_wav(w, fmt);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace tflc::spectral
