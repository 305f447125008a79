#pragma once

#include <string>

#include <Eigen/Dense>

namespace escape {

/// Full-covariance Gaussian summarizing one clip's frames. Immutable once
/// built; the constructor validates symmetry and positive definiteness and
/// keeps the Cholesky factor for divergence evaluations.
class GaussianSignature {
 public:
  /// Throws ConfigError on shape mismatch or non-finite entries,
  /// FactorizationError when the covariance is not symmetric positive definite.
  GaussianSignature(std::string clip_id, Eigen::VectorXd mean, Eigen::MatrixXd covariance);

  const std::string& clip_id() const noexcept { return clip_id_; }
  const Eigen::VectorXd& mean() const noexcept { return mean_; }
  const Eigen::MatrixXd& covariance() const noexcept { return cov_; }
  Eigen::Index dim() const noexcept { return mean_.size(); }

  /// Lower-triangular L with L L^T = covariance.
  const Eigen::MatrixXd& cholesky() const noexcept { return chol_; }
  double log_det() const noexcept { return log_det_; }

 private:
  std::string clip_id_;
  Eigen::VectorXd mean_;
  Eigen::MatrixXd cov_;
  Eigen::MatrixXd chol_;
  double log_det_ = 0.0;
};

/// Column means and biased (1/L) covariance plus epsilon * I.
/// Throws TooShortError with fewer than two frames.
GaussianSignature fit_gaussian(const std::string& clip_id, const Eigen::MatrixXd& frames,
                               double epsilon = 1e-6);

/// D(p || q) = 1/2 (tr(Sq^-1 Sp) + (mq - mp)^T Sq^-1 (mq - mp) - k + ln det Sq - ln det Sp),
/// evaluated with triangular solves against the stored Cholesky factors.
double kl_divergence(const GaussianSignature& p, const GaussianSignature& q);

/// D(a || b) + D(b || a).
double sym_kl(const GaussianSignature& a, const GaussianSignature& b);

}  // namespace escape
