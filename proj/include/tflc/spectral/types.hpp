#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <string>
#include <vector>

#include "tflc/common/error.hpp"

namespace tflc::spectral {

using cplx = std::complex<double>;

enum class WindowKind { hann };

struct StftConfig {
  std::size_t window_len = 1024;
  std::size_t hop = 256;
  WindowKind window = WindowKind::hann;
  double sample_rate = 16000.0;

  std::size_t num_bins() const { return window_len / 2 + 1; }

  /// Frame count for a signal of `len` samples under centre padding.
  std::size_t num_frames(std::size_t len) const { return (len + hop - 1) / hop + 1; }

  void validate() const {
    require(window_len >= 4 && (window_len & (window_len - 1)) == 0,
            "StftConfig: window_len must be a power of two");
    require(hop > 0 && window_len % hop == 0, "StftConfig: hop must divide window_len");
    require(sample_rate > 0, "StftConfig: sample_rate must be positive");
  }
};

/// Multichannel real signal; every channel has the same length.
struct Waveform {
  std::vector<std::vector<double>> channels;
  double sample_rate = 16000.0;

  Waveform() = default;
  Waveform(std::size_t num_channels, std::size_t len, double fs)
      : channels(num_channels, std::vector<double>(len, 0.0)), sample_rate(fs) {}
  static Waveform mono(std::vector<double> samples, double fs) {
    Waveform w;
    w.channels.push_back(std::move(samples));
    w.sample_rate = fs;
    return w;
  }

  std::size_t num_channels() const { return channels.size(); }
  std::size_t length() const { return channels.empty() ? 0 : channels.front().size(); }
  bool empty() const { return length() == 0; }

  std::vector<double>& operator[](std::size_t m) { return channels[m]; }
  const std::vector<double>& operator[](std::size_t m) const { return channels[m]; }

  void validate() const {
    require(!channels.empty(), "Waveform: no channels");
    for (const auto& c : channels) {
      require(c.size() == channels.front().size(), "Waveform: channel lengths differ");
      for (double v : c) require(std::isfinite(v), "Waveform: non-finite sample");
    }
  }
};

/// Complex STFT coefficients, indexed (channel, frequency bin, frame).
class MultichannelSpectrogram {
 public:
  MultichannelSpectrogram() = default;
  MultichannelSpectrogram(std::size_t channels, std::size_t bins, std::size_t frames)
      : channels_(channels), bins_(bins), frames_(frames), data_(channels * bins * frames) {}

  std::size_t channels() const { return channels_; }
  std::size_t bins() const { return bins_; }
  std::size_t frames() const { return frames_; }

  cplx& operator()(std::size_t m, std::size_t f, std::size_t t) {
    return data_[(m * bins_ + f) * frames_ + t];
  }
  const cplx& operator()(std::size_t m, std::size_t f, std::size_t t) const {
    return data_[(m * bins_ + f) * frames_ + t];
  }

  /// Contiguous frame sequence of one (channel, bin) pair.
  cplx* row(std::size_t m, std::size_t f) { return data_.data() + (m * bins_ + f) * frames_; }
  const cplx* row(std::size_t m, std::size_t f) const {
    return data_.data() + (m * bins_ + f) * frames_;
  }

  std::vector<cplx>& data() { return data_; }
  const std::vector<cplx>& data() const { return data_; }

  bool same_shape(const MultichannelSpectrogram& o) const {
    return channels_ == o.channels_ && bins_ == o.bins_ && frames_ == o.frames_;
  }

  /// Single-channel view copy of channel m.
  MultichannelSpectrogram channel(std::size_t m) const {
    MultichannelSpectrogram out(1, bins_, frames_);
    std::copy(row(m, 0), row(m, 0) + bins_ * frames_, out.data_.begin());
    return out;
  }

  MultichannelSpectrogram& operator+=(const MultichannelSpectrogram& o) {
    require_dims(same_shape(o), "spectrogram shapes differ");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  MultichannelSpectrogram& operator*=(double s) {
    for (auto& v : data_) v *= s;
    return *this;
  }

 private:
  std::size_t channels_ = 0, bins_ = 0, frames_ = 0;
  std::vector<cplx> data_;
};

}  // namespace tflc::spectral
