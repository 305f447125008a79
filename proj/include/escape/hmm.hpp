#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace escape {

/// Gaussian HMM with diagonal emission covariances.
struct HmmModel {
  Eigen::VectorXd initial;     // n_states, sums to 1
  Eigen::MatrixXd transition;  // n_states x n_states, rows sum to 1
  Eigen::MatrixXd means;       // n_states x dim
  Eigen::MatrixXd variances;   // n_states x dim, positive

  Eigen::Index n_states() const { return initial.size(); }
  Eigen::Index dim() const { return means.cols(); }

  /// Throws ConfigError when shapes disagree, a probability row is off the
  /// simplex by more than 1e-9, a variance is non-positive, or anything is
  /// non-finite.
  void validate() const;
};

struct HmmFitOptions {
  int n_states = 5;
  std::uint64_t seed = 0;
  int max_iter = 100;
  double tol = 1e-4;  // stop when the per-frame log-likelihood gain falls below this
  /// Variance floor on the standardized scale: each state's variance in
  /// dimension d stays >= variance_floor * max(data variance in d, 1).
  double variance_floor = 1e-3;
  int kmeans_iter = 100;
};

struct HmmFitResult {
  HmmModel model;
  /// Total log-likelihood of the training sequence under each parameter set
  /// visited, starting with the initialization. Non-decreasing under EM.
  std::vector<double> log_likelihood_trace;
  int iterations = 0;  // M-steps performed
  bool converged = false;
};

/// Baum-Welch in log space. Initialization is deterministic in the seed:
/// k-means++ means, uniform initial and transition probabilities, pooled
/// per-dimension variances. Throws TooShortError when the sequence has fewer
/// frames than states, Error if EM produces non-finite values.
HmmFitResult fit_hmm(const Eigen::MatrixXd& frames, const HmmFitOptions& options = {});

/// Log emission densities, T x n_states.
Eigen::MatrixXd emission_log_densities(const HmmModel& model, const Eigen::MatrixXd& frames);

/// Marginal log P(frames | model) by the forward algorithm. Throws
/// ConfigError on a dimension mismatch or an empty sequence.
double log_likelihood(const HmmModel& model, const Eigen::MatrixXd& frames);

struct ViterbiPath {
  std::vector<int> states;
  double log_prob = 0.0;  // joint log P(frames, states)
};

/// Most probable state path; ties go to the lower state index.
ViterbiPath viterbi(const HmmModel& model, const Eigen::MatrixXd& frames);

}  // namespace escape
