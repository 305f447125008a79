#include "escape/gaussian.hpp"

#include <algorithm>
#include <cmath>

#include "escape/error.hpp"

namespace escape {

GaussianSignature::GaussianSignature(std::string clip_id, Eigen::VectorXd mean, Eigen::MatrixXd covariance)
    : clip_id_(std::move(clip_id)), mean_(std::move(mean)), cov_(std::move(covariance)) {
  const auto k = mean_.size();
  if (k == 0 || cov_.rows() != k || cov_.cols() != k) {
    throw ConfigError("gaussian '" + clip_id_ + "': mean/covariance shape mismatch");
  }
  if (!mean_.allFinite() || !cov_.allFinite()) {
    throw ConfigError("gaussian '" + clip_id_ + "': non-finite parameters");
  }
  const double scale = std::max(1.0, cov_.cwiseAbs().maxCoeff());
  if ((cov_ - cov_.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw FactorizationError("gaussian '" + clip_id_ + "': covariance is not symmetric");
  }
  cov_ = 0.5 * (cov_ + cov_.transpose());
  Eigen::LLT<Eigen::MatrixXd> llt(cov_);
  if (llt.info() != Eigen::Success) {
    throw FactorizationError("gaussian '" + clip_id_ + "': covariance is not positive definite");
  }
  chol_ = llt.matrixL();
  log_det_ = 2.0 * chol_.diagonal().array().log().sum();
  if (!std::isfinite(log_det_)) {
    throw FactorizationError("gaussian '" + clip_id_ + "': covariance is numerically singular");
  }
}

GaussianSignature fit_gaussian(const std::string& clip_id, const Eigen::MatrixXd& frames, double epsilon) {
  if (frames.rows() < 2) {
    throw TooShortError("fit_gaussian '" + clip_id + "': need at least 2 frames, got " +
                        std::to_string(frames.rows()));
  }
  if (!(epsilon >= 0)) throw ConfigError("fit_gaussian: epsilon must be non-negative");
  const Eigen::VectorXd mean = frames.colwise().mean().transpose();
  const Eigen::MatrixXd centered = frames.rowwise() - mean.transpose();
  Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(frames.rows());
  cov.diagonal().array() += epsilon;
  return GaussianSignature(clip_id, mean, cov);
}

double kl_divergence(const GaussianSignature& p, const GaussianSignature& q) {
  if (p.dim() != q.dim()) throw ConfigError("kl_divergence: dimension mismatch");
  const auto Lq = q.cholesky().triangularView<Eigen::Lower>();
  // tr(Sq^-1 Sp) = || Lq^-1 Lp ||_F^2
  const Eigen::MatrixXd m = Lq.solve(p.cholesky());
  const Eigen::VectorXd z = Lq.solve(q.mean() - p.mean());
  const double d = 0.5 * (m.squaredNorm() + z.squaredNorm() - static_cast<double>(p.dim()) +
                          q.log_det() - p.log_det());
  return std::max(d, 0.0);
}

double sym_kl(const GaussianSignature& a, const GaussianSignature& b) {
  return kl_divergence(a, b) + kl_divergence(b, a);
}

}  // namespace escape
