#pragma once

#include <complex>
#include <cstddef>
#include <vector>

#include <unsupported/Eigen/FFT>

namespace tflc::spectral {

namespace detail {
inline Eigen::FFT<double>& half_spectrum_fft() {
  thread_local Eigen::FFT<double> fft = [] {
    Eigen::FFT<double> f;
    f.SetFlag(Eigen::FFT<double>::HalfSpectrum);
    return f;
  }();
  return fft;
}
}  // namespace detail

/// One-sided DFT of a real sequence: returns n/2 + 1 bins, no scaling.
inline std::vector<std::complex<double>> rfft(const std::vector<double>& x) {
  std::vector<std::complex<double>> out;
  detail::half_spectrum_fft().fwd(out, x);
  out.resize(x.size() / 2 + 1);
  return out;
}

/// Inverse of rfft for a length-n real sequence, scaled by 1/n.
inline std::vector<double> irfft(const std::vector<std::complex<double>>& spec, std::size_t n) {
  std::vector<double> out;
  detail::half_spectrum_fft().inv(out, spec, static_cast<int>(n));
  out.resize(n);
  return out;
}

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

/// Linear convolution via zero-padded FFT. Output length a.size() + b.size() - 1.
inline std::vector<double> fft_convolve(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.empty() || b.empty()) return {};
  const std::size_t out_len = a.size() + b.size() - 1;
  const std::size_t n = next_pow2(out_len);
  std::vector<double> pa(a), pb(b);
  pa.resize(n, 0.0);
  pb.resize(n, 0.0);
  auto fa = rfft(pa);
  auto fb = rfft(pb);
  for (std::size_t k = 0; k < fa.size(); ++k) fa[k] *= fb[k];
  auto y = irfft(fa, n);
  y.resize(out_len);
  return y;
}

}  // namespace tflc::spectral
