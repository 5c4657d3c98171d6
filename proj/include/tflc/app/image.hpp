#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <zlib.h>

#include "tflc/combination/combination.hpp"
#include "tflc/common/error.hpp"
#include "tflc/spectral/types.hpp"

namespace tflc::app {

/// 8-bit grayscale, row-major, row 0 at the top.
struct GrayImage {
  std::size_t width = 0, height = 0;
  std::vector<std::uint8_t> pixels;

  GrayImage() = default;
  GrayImage(std::size_t w, std::size_t h) : width(w), height(h), pixels(w * h, 0) {}
  std::uint8_t& at(std::size_t x, std::size_t y) { return pixels[y * width + x]; }
  std::uint8_t at(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }
};

inline std::uint8_t to_gray(double v01) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v01, 0.0, 1.0) * 255.0));
}

/// Weight map of beam j: time along x, frequency up the y-axis, alpha in [0, 1] linear.
inline GrayImage weight_image(const combination::WeightField& w, std::size_t j) {
  require(j < w.J, "weight_image: beam index out of range");
  GrayImage img(w.T, w.F);
  for (std::size_t f = 0; f < w.F; ++f)
    for (std::size_t t = 0; t < w.T; ++t) img.at(t, w.F - 1 - f) = to_gray(w(j, f, t));
  return img;
}

/// Log-magnitude of one channel. Levels are dB relative to the maximum bin;
/// at or below floor_db maps to 0, the maximum to 255.
inline GrayImage spectrogram_image(const spectral::MultichannelSpectrogram& s, std::size_t channel,
                                   double floor_db = -60.0) {
  require(channel < s.channels(), "spectrogram_image: channel out of range");
  require(floor_db < 0.0, "spectrogram_image: floor must be negative dB");
  const std::size_t F = s.bins(), T = s.frames();
  double peak = 0.0;
  for (std::size_t f = 0; f < F; ++f)
    for (std::size_t t = 0; t < T; ++t) peak = std::max(peak, std::norm(s(channel, f, t)));
  GrayImage img(T, F);
  if (peak <= 0.0) return img;
  for (std::size_t f = 0; f < F; ++f)
    for (std::size_t t = 0; t < T; ++t) {
      const double p = std::norm(s(channel, f, t));
      const double db = p > 0.0 ? 10.0 * std::log10(p / peak) : floor_db;
      img.at(t, F - 1 - f) = db <= floor_db ? 0 : to_gray(1.0 - db / floor_db);
    }
  return img;
}

inline std::vector<unsigned char> encode_pgm(const GrayImage& img) {
  const std::string head = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<unsigned char> out(head.begin(), head.end());
  out.insert(out.end(), img.pixels.begin(), img.pixels.end());
  return out;
}

namespace detail {

inline void put_be32(std::vector<unsigned char>& b, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<unsigned char>(v >> s));
}

inline void png_chunk(std::vector<unsigned char>& out, const char* type, const std::vector<unsigned char>& data) {
  put_be32(out, static_cast<std::uint32_t>(data.size()));
  const std::size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  const auto crc = crc32(0L, out.data() + start, static_cast<uInt>(out.size() - start));
  put_be32(out, static_cast<std::uint32_t>(crc));
}

}  // namespace detail

inline std::vector<unsigned char> encode_png(const GrayImage& img) {
  require(img.width > 0 && img.height > 0, "encode_png: empty image");
  std::vector<unsigned char> out{0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  std::vector<unsigned char> ihdr;
  detail::put_be32(ihdr, static_cast<std::uint32_t>(img.width));
  detail::put_be32(ihdr, static_cast<std::uint32_t>(img.height));
  ihdr.insert(ihdr.end(), {8, 0, 0, 0, 0});  // 8-bit grayscale, no interlace
  detail::png_chunk(out, "IHDR", ihdr);

  std::vector<unsigned char> raw;
  raw.reserve((img.width + 1) * img.height);
  for (std::size_t y = 0; y < img.height; ++y) {
    raw.push_back(0);  // filter: none
    raw.insert(raw.end(), img.pixels.begin() + static_cast<std::ptrdiff_t>(y * img.width),
               img.pixels.begin() + static_cast<std::ptrdiff_t>((y + 1) * img.width));
  }
  uLongf len = compressBound(static_cast<uLong>(raw.size()));
  std::vector<unsigned char> z(len);
  if (compress2(z.data(), &len, raw.data(), static_cast<uLong>(raw.size()), 9) != Z_OK)
    throw Error("encode_png: deflate failed");
  z.resize(len);
  detail::png_chunk(out, "IDAT", z);
  detail::png_chunk(out, "IEND", {});
  return out;
}

/// Format chosen by extension: .png or .pgm.
inline void write_image(const std::filesystem::path& path, const GrayImage& img) {
  const auto ext = path.extension().string();
  std::vector<unsigned char> bytes;
  if (ext == ".png")
    bytes = encode_png(img);
  else if (ext == ".pgm")
    bytes = encode_pgm(img);
  else
    throw UsageError("image output must end in .png or .pgm: " + path.string());
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace tflc::app
