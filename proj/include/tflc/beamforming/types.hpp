#pragma once

#include <complex>
#include <cstddef>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "tflc/common/error.hpp"

namespace tflc::beamforming {

using cplx = std::complex<double>;

/// Relative transfer function of the target: one complex M-vector per
/// frequency bin (columns of `a`), equal to 1 at the reference channel.
struct Rtf {
  Eigen::MatrixXcd a;  // M x F
  std::size_t reference = 0;
  /// Bins where the target carried no energy and a steering vector was used.
  std::vector<bool> fallback;

  std::size_t channels() const { return static_cast<std::size_t>(a.rows()); }
  std::size_t bins() const { return static_cast<std::size_t>(a.cols()); }
};

enum class BeamformerKind { initial_null, mpdr, mvdr, matched };

struct Beamformer {
  Eigen::MatrixXcd w;  // M x F
  std::optional<double> null_doa;
  BeamformerKind kind = BeamformerKind::initial_null;
  /// Bins where the null constraint was dropped (ill-conditioned solve).
  std::vector<bool> flagged;

  std::size_t channels() const { return static_cast<std::size_t>(w.rows()); }
  std::size_t bins() const { return static_cast<std::size_t>(w.cols()); }
};

using BeamformerSet = std::vector<Beamformer>;

/// Per-frequency spatial covariance, Hermitian positive semidefinite.
struct CovarianceField {
  std::vector<Eigen::MatrixXcd> phi;

  std::size_t bins() const { return phi.size(); }
};

/// Largest |w_f^H a_f - 1| over frequency.
inline double distortion_error(const Beamformer& bf, const Rtf& rtf) {
  require_dims(bf.w.rows() == rtf.a.rows() && bf.w.cols() == rtf.a.cols(), "beamformer/RTF shape mismatch");
  double worst = 0.0;
  for (Eigen::Index f = 0; f < bf.w.cols(); ++f)
    worst = std::max(worst, std::abs(bf.w.col(f).dot(rtf.a.col(f)) - cplx(1.0, 0.0)));
  return worst;
}

}  // namespace tflc::beamforming
