#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "tflc/neural/tensor.hpp"
#include "tflc/spectral/stft.hpp"

namespace tflc::neural {

/// Differentiable inverse STFT of a [2, F, T] (real, imaginary) tensor.
/// The map is linear; its adjoint runs each frame gradient through rfft and
/// weights bin k by c_k / N (c = 1 at DC and Nyquist, 2 elsewhere).
template <class S>
Tensor<S> istft_op(const Tensor<S>& spec, const spectral::StftConfig& cfg, std::size_t out_len) {
  require_dims(spec.shape().size() == 3 && spec.dim(0) == 2 && spec.dim(1) == cfg.num_bins(),
               "istft_op: expected [2, F, T] with F matching the window");
  const std::size_t F = spec.dim(1), T = spec.dim(2), P = F * T;
  spectral::MultichannelSpectrogram s(1, F, T);
  for (std::size_t p = 0; p < P; ++p) s.data()[p] = {double(spec.data()[p]), double(spec.data()[P + p])};
  const auto wave = spectral::istft(s, cfg, out_len);
  auto out = make_output<S>({out_len}, {spec});
  for (std::size_t i = 0; i < out_len; ++i) out.data()[i] = S(wave[0][i]);
  if (out.requires_grad()) {
    auto* o = out.node();
    auto sn = spec.ptr();
    o->backward = [=] {
      const std::size_t N = cfg.window_len;
      const auto w = spectral::analysis_window(cfg);
      const auto env = spectral::synthesis_envelope(cfg, T, out_len);
      const long half = static_cast<long>(N / 2);
      std::vector<double> frame(N);
      S* g = sn->g();
      for (std::size_t t = 0; t < T; ++t) {
        const long start = static_cast<long>(t * cfg.hop) - half;
        for (std::size_t n = 0; n < N; ++n) {
          const long idx = start + static_cast<long>(n);
          const bool in = idx >= 0 && idx < static_cast<long>(out_len) && env[idx] > 1e-12;
          frame[n] = in ? double(o->grad[idx]) * w[n] / env[idx] : 0.0;
        }
        const auto G = spectral::rfft(frame);
        for (std::size_t k = 0; k < F; ++k) {
          const bool edge = k == 0 || k == F - 1;
          const double c = (edge ? 1.0 : 2.0) / double(N);
          g[k * T + t] += S(c * G[k].real());
          if (!edge) g[P + k * T + t] += S(c * G[k].imag());
        }
      }
    };
  }
  return out;
}

constexpr double kSdrClampDb = 60.0;

/// Negative SI-SDR in dB against a constant reference, with the SDR clamped
/// to [-60, 60] (zero gradient outside).
template <class S>
Tensor<S> si_sdr_loss(const Tensor<S>& est, const std::vector<double>& ref) {
  require_dims(est.size() == ref.size(), "si_sdr_loss: length mismatch");
  double rr = 0.0, er = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) rr += ref[i] * ref[i], er += double(est.data()[i]) * ref[i];
  require(rr > 0.0, "si_sdr_loss: silent reference");
  const double beta = er / rr;
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const double s = beta * ref[i], e = s - double(est.data()[i]);
    num += s * s;
    den += e * e;
  }
  double sdr;
  bool clamped = false;
  if (den <= 0.0 || num <= 0.0) {
    sdr = den <= 0.0 ? kSdrClampDb : -kSdrClampDb;
    clamped = true;
  } else {
    sdr = 10.0 * std::log10(num / den);
    if (sdr > kSdrClampDb || sdr < -kSdrClampDb) clamped = true;
    sdr = std::clamp(sdr, -kSdrClampDb, kSdrClampDb);
  }
  auto out = make_output<S>({1}, {est});
  out.data()[0] = S(-sdr);
  if (out.requires_grad() && !clamped) {
    auto* o = out.node();
    auto en = est.ptr();
    o->backward = [=] {
      // num = a^2 / R, den = |e|^2 - a^2 / R with a = <est, ref>, R = |ref|^2.
      const double k = -10.0 / std::log(10.0) * double(o->grad[0]);
      S* g = en->g();
      for (std::size_t i = 0; i < ref.size(); ++i) {
        const double dnum = 2.0 * er * ref[i] / rr;
        const double dden = 2.0 * double(en->value[i]) - dnum;
        g[i] += S(k * (dnum / num - dden / den));
      }
    };
  }
  return out;
}

/// -(1 / (J F T)) * sum alpha * ln(alpha + eps) over a [J, F, T] weight tensor.
template <class S>
Tensor<S> entropy_loss(const Tensor<S>& alpha, double eps = 1e-8) {
  require(eps > 0.0, "entropy_loss: eps must be positive");
  const double inv = 1.0 / double(alpha.size());
  auto out = make_output<S>({1}, {alpha});
  double acc = 0.0;
  for (S a : alpha.values()) acc += double(a) * std::log(double(a) + eps);
  out.data()[0] = S(-acc * inv);
  if (out.requires_grad()) {
    auto* o = out.node();
    auto an = alpha.ptr();
    o->backward = [=] {
      S* g = an->g();
      for (std::size_t i = 0; i < an->value.size(); ++i) {
        const double a = an->value[i];
        g[i] += S(-inv * (std::log(a + eps) + a / (a + eps)) * double(o->grad[0]));
      }
    };
  }
  return out;
}

/// Mean per-bin entropy sum_j -alpha ln alpha (nats), a diagnostic only.
template <class S>
double mean_bin_entropy(const Tensor<S>& alpha) {
  const std::size_t J = alpha.dim(0), P = alpha.size() / J;
  double acc = 0.0;
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    const double a = alpha.data()[i];
    if (a > 0.0) acc -= a * std::log(a);
  }
  return acc / double(P);
}

/// L = L_sisdr + lambda * sum of the entropy terms of the given weight fields.
template <class S>
Tensor<S> total_loss(const Tensor<S>& est, const std::vector<double>& ref, const std::vector<Tensor<S>>& alphas,
                     double lambda, double eps = 1e-8) {
  require(lambda >= 0.0, "total_loss: lambda must be non-negative");
  Tensor<S> L = si_sdr_loss(est, ref);
  if (lambda == 0.0) return L;
  for (const auto& a : alphas) L = add(L, scale(entropy_loss(a, eps), S(lambda)));
  return L;
}

}  // namespace tflc::neural
