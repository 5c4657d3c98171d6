#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "tflc/beamforming/types.hpp"
#include "tflc/common/random.hpp"
#include "tflc/scene/scene_spec.hpp"
#include "tflc/spectral/types.hpp"

namespace tflc::beamforming {

/// Free-field steering vector of a uniform linear array; element k is
/// exp(-j 2 pi f k d cos(theta) / c), so element 0 is 1.
inline Eigen::VectorXcd steering_vector(double theta_deg, double freq_hz, double spacing, std::size_t channels,
                                        double c = scene::kSpeedOfSound) {
  require(theta_deg >= 0.0 && theta_deg <= 180.0, "steering_vector: theta must be in [0, 180]");
  Eigen::VectorXcd v(static_cast<Eigen::Index>(channels));
  const double tau = spacing * std::cos(theta_deg * std::numbers::pi / 180.0) / c;
  for (std::size_t k = 0; k < channels; ++k)
    v(static_cast<Eigen::Index>(k)) = std::polar(1.0, -2.0 * std::numbers::pi * freq_hz * double(k) * tau);
  return v;
}

inline double bin_frequency(std::size_t f, std::size_t window_len, double fs) {
  return double(f) * fs / double(window_len);
}

/// Array and STFT geometry needed to turn DOAs into per-bin steering vectors.
struct ArrayGeometry {
  double spacing = 0.02;
  double sample_rate = 16000.0;
  std::size_t window_len = 1024;
  double speed_of_sound = scene::kSpeedOfSound;
};

/// Steering vectors at every STFT bin, as an M x F matrix.
inline Eigen::MatrixXcd steering_matrix(double theta_deg, std::size_t channels, std::size_t bins,
                                        const ArrayGeometry& g) {
  Eigen::MatrixXcd out(static_cast<Eigen::Index>(channels), static_cast<Eigen::Index>(bins));
  for (std::size_t f = 0; f < bins; ++f)
    out.col(static_cast<Eigen::Index>(f)) =
        steering_vector(theta_deg, bin_frequency(f, g.window_len, g.sample_rate), g.spacing, channels, g.speed_of_sound);
  return out;
}

inline Rtf steering_rtf(double theta_deg, std::size_t channels, std::size_t bins, const ArrayGeometry& g) {
  Rtf r;
  r.a = steering_matrix(theta_deg, channels, bins, g);
  r.fallback.assign(bins, false);
  return r;
}

/// Time-averaged spatial covariance (1/T) sum_t x x^H of one bin.
inline Eigen::MatrixXcd bin_covariance(const spectral::MultichannelSpectrogram& x, std::size_t f) {
  const auto M = static_cast<Eigen::Index>(x.channels());
  Eigen::MatrixXcd r = Eigen::MatrixXcd::Zero(M, M);
  const std::size_t T = x.frames();
  for (Eigen::Index i = 0; i < M; ++i) {
    const cplx* xi = x.row(static_cast<std::size_t>(i), f);
    for (Eigen::Index k = i; k < M; ++k) {
      const cplx* xk = x.row(static_cast<std::size_t>(k), f);
      cplx acc = 0.0;
      for (std::size_t t = 0; t < T; ++t) acc += xi[t] * std::conj(xk[t]);
      r(i, k) = acc / double(T);
      r(k, i) = std::conj(r(i, k));
    }
  }
  return r;
}

/// RTF as the principal eigenvector of the target covariance at each bin,
/// normalized to the reference channel. Bins whose energy falls below
/// 1e-12 of the band average fall back to the steering vector at
/// `fallback_doa` and are flagged.
inline Rtf estimate_rtf(const spectral::MultichannelSpectrogram& target, std::size_t ref,
                        double fallback_doa = 90.0, const ArrayGeometry& g = {}) {
  require(target.frames() >= 10, "estimate_rtf: need at least 10 frames");
  require(ref < target.channels(), "estimate_rtf: reference channel out of range");
  const std::size_t F = target.bins();
  const auto M = static_cast<Eigen::Index>(target.channels());
  std::vector<Eigen::MatrixXcd> cov(F);
  std::vector<double> energy(F);
  double mean_energy = 0.0;
  for (std::size_t f = 0; f < F; ++f) {
    cov[f] = bin_covariance(target, f);
    energy[f] = cov[f].trace().real();
    mean_energy += energy[f] / double(F);
  }
  Rtf rtf;
  rtf.reference = ref;
  rtf.a.resize(M, static_cast<Eigen::Index>(F));
  rtf.fallback.assign(F, false);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig;
  for (std::size_t f = 0; f < F; ++f) {
    const auto col = static_cast<Eigen::Index>(f);
    bool degenerate = !(energy[f] > 1e-12 * mean_energy);
    Eigen::VectorXcd v;
    if (!degenerate) {
      eig.compute(cov[f]);
      v = eig.eigenvectors().col(M - 1);
      degenerate = std::abs(v(static_cast<Eigen::Index>(ref))) < 1e-12;
    }
    if (degenerate) {
      rtf.fallback[f] = true;
      v = steering_vector(fallback_doa, bin_frequency(f, g.window_len, g.sample_rate), g.spacing,
                          static_cast<std::size_t>(M), g.speed_of_sound);
    }
    rtf.a.col(col) = v / v(static_cast<Eigen::Index>(ref));
  }
  return rtf;
}

/// Two-constraint beamformer: unit response to the RTF and a null toward
/// `null_doa`. Bins where the constraint matrix has condition number above
/// `max_condition` keep only the distortionless constraint (minimum-norm
/// solution a / (a^H a)) and are flagged.
inline Beamformer null_beamformer(const Rtf& rtf, double null_doa, const ArrayGeometry& g,
                                  double max_condition = 1e8) {
  require(rtf.channels() == 2, "null_beamformer: requires M = 2");
  const std::size_t F = rtf.bins();
  Beamformer bf;
  bf.kind = BeamformerKind::initial_null;
  bf.null_doa = null_doa;
  bf.w.resize(2, static_cast<Eigen::Index>(F));
  bf.flagged.assign(F, false);
  Eigen::Matrix2cd A;
  const Eigen::Vector2cd rhs(1.0, 0.0);
  for (std::size_t f = 0; f < F; ++f) {
    const auto col = static_cast<Eigen::Index>(f);
    const Eigen::Vector2cd a = rtf.a.col(col);
    const Eigen::Vector2cd v =
        steering_vector(null_doa, bin_frequency(f, g.window_len, g.sample_rate), g.spacing, 2, g.speed_of_sound);
    A.col(0) = a;
    A.col(1) = v;
    const Eigen::JacobiSVD<Eigen::Matrix2cd> svd(A);
    const auto sv = svd.singularValues();
    const double cond = sv(1) > 0 ? sv(0) / sv(1) : std::numeric_limits<double>::infinity();
    if (cond > max_condition) {
      bf.flagged[f] = true;
      bf.w.col(col) = a / a.squaredNorm();
      continue;
    }
    // A^H w = [1, 0]^T
    bf.w.col(col) = A.adjoint().partialPivLu().solve(rhs);
  }
  return bf;
}

/// Fixed evaluation nulls: two beams for 2I mixtures, four otherwise.
inline std::vector<double> default_null_doas(std::size_t n_interferers) {
  if (n_interferers <= 2) return {32.5, 147.5};
  return {16.25, 48.75, 131.25, 163.75};
}

/// Training-time nulls, one uniform draw per sector.
inline std::vector<double> random_null_doas(Rng& rng, std::size_t beams) {
  std::vector<std::pair<double, double>> sectors;
  if (beams == 2)
    sectors = {{10.0, 55.0}, {125.0, 170.0}};
  else if (beams == 4)
    sectors = {{10.0, 30.0}, {35.0, 55.0}, {125.0, 145.0}, {150.0, 170.0}};
  else
    throw PreconditionError("random_null_doas: beam count must be 2 or 4");
  std::vector<double> out;
  for (auto [lo, hi] : sectors) out.push_back(uniform(rng, lo, hi));
  return out;
}

inline BeamformerSet initial_beamformers(const Rtf& rtf, const std::vector<double>& null_doas,
                                         const ArrayGeometry& g = {}) {
  require(!null_doas.empty(), "initial_beamformers: no null directions");
  BeamformerSet out;
  for (double th : null_doas) out.push_back(null_beamformer(rtf, th, g));
  return out;
}

/// Reference-channel selector as a beamformer (distortionless for any RTF
/// normalized to that channel).
inline Beamformer reference_selector(std::size_t channels, std::size_t bins, std::size_t ref) {
  Beamformer bf;
  bf.kind = BeamformerKind::matched;
  bf.w = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(channels), static_cast<Eigen::Index>(bins));
  bf.w.row(static_cast<Eigen::Index>(ref)).setOnes();
  bf.flagged.assign(bins, false);
  return bf;
}

/// y_{f,t} = w_f^H x_{f,t}, returned as a one-channel spectrogram.
inline spectral::MultichannelSpectrogram apply_beamformer(const Beamformer& bf,
                                                          const spectral::MultichannelSpectrogram& x) {
  require_dims(bf.channels() == x.channels() && bf.bins() == x.bins(), "apply_beamformer: dimension mismatch");
  spectral::MultichannelSpectrogram y(1, x.bins(), x.frames());
  const std::size_t T = x.frames();
  for (std::size_t f = 0; f < x.bins(); ++f) {
    cplx* out = y.row(0, f);
    for (std::size_t m = 0; m < x.channels(); ++m) {
      const cplx wc = std::conj(bf.w(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(f)));
      const cplx* in = x.row(m, f);
      for (std::size_t t = 0; t < T; ++t) out[t] += wc * in[t];
    }
  }
  return y;
}

/// Phi_f = (1/T) sum_t alpha_{f,t}^2 x_{f,t} x_{f,t}^H. `alpha` is F x T,
/// row-major; no normalization by sum(alpha^2).
inline CovarianceField masked_covariance(const spectral::MultichannelSpectrogram& x,
                                         const std::vector<double>& alpha) {
  require_dims(alpha.size() == x.bins() * x.frames(), "masked_covariance: weight shape mismatch");
  const std::size_t M = x.channels(), T = x.frames();
  CovarianceField out;
  out.phi.resize(x.bins());
  std::vector<double> a2(T);
  for (std::size_t f = 0; f < x.bins(); ++f) {
    for (std::size_t t = 0; t < T; ++t) {
      const double a = alpha[f * T + t];
      require(a >= 0.0 && a <= 1.0, "masked_covariance: weights must lie in [0, 1]");
      a2[t] = a * a;
    }
    Eigen::MatrixXcd phi(static_cast<Eigen::Index>(M), static_cast<Eigen::Index>(M));
    for (std::size_t i = 0; i < M; ++i) {
      const cplx* xi = x.row(i, f);
      for (std::size_t k = i; k < M; ++k) {
        const cplx* xk = x.row(k, f);
        cplx acc = 0.0;
        for (std::size_t t = 0; t < T; ++t) acc += a2[t] * (xi[t] * std::conj(xk[t]));
        const auto ii = static_cast<Eigen::Index>(i), kk = static_cast<Eigen::Index>(k);
        phi(ii, kk) = acc / double(T);
        phi(kk, ii) = std::conj(phi(ii, kk));
      }
      phi(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) =
          cplx(phi(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)).real(), 0.0);
    }
    out.phi[f] = std::move(phi);
  }
  return out;
}

inline CovarianceField sample_covariance(const spectral::MultichannelSpectrogram& x) {
  return masked_covariance(x, std::vector<double>(x.bins() * x.frames(), 1.0));
}

struct LoadingConfig {
  double relative = 1e-6;
  double floor = 1e-12;
};

/// w_f = Phi^-1 a / (a^H Phi^-1 a) with trace-relative diagonal loading
/// Phi + relative * (tr(Phi)/M + floor) * I. MPDR when Phi comes from the
/// mixture, MVDR when it comes from noise only.
inline Beamformer mpdr_update(const CovarianceField& cov, const Rtf& rtf,
                              BeamformerKind kind = BeamformerKind::mpdr, const LoadingConfig& load = {}) {
  require_dims(cov.bins() == rtf.bins(), "mpdr_update: bin count mismatch");
  const auto M = static_cast<Eigen::Index>(rtf.channels());
  Beamformer bf;
  bf.kind = kind;
  bf.w.resize(M, static_cast<Eigen::Index>(rtf.bins()));
  bf.flagged.assign(rtf.bins(), false);
  for (std::size_t f = 0; f < rtf.bins(); ++f) {
    const auto col = static_cast<Eigen::Index>(f);
    const Eigen::MatrixXcd& phi = cov.phi[f];
    require_dims(phi.rows() == M && phi.cols() == M, "mpdr_update: covariance size mismatch");
    Eigen::MatrixXcd loaded = phi;
    const double mu = load.relative * (phi.trace().real() / double(M) + load.floor);
    loaded.diagonal().array() += mu;
    const Eigen::VectorXcd a = rtf.a.col(col);
    const Eigen::VectorXcd pa = loaded.ldlt().solve(a);
    const cplx denom = a.dot(pa);  // a^H Phi^-1 a
    bf.w.col(col) = pa / denom;
  }
  return bf;
}

}  // namespace tflc::beamforming
