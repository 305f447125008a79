#include "escape/hmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "escape/error.hpp"
#include "escape/random.hpp"

namespace escape {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_sum_exp(const double* v, Eigen::Index n) {
  double m = kNegInf;
  for (Eigen::Index i = 0; i < n; ++i) m = std::max(m, v[i]);
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) s += std::exp(v[i] - m);
  return m + std::log(s);
}

Eigen::VectorXd safe_log(const Eigen::VectorXd& p) {
  return p.unaryExpr([](double x) { return x > 0 ? std::log(x) : kNegInf; });
}

Eigen::MatrixXd safe_log(const Eigen::MatrixXd& p) {
  return p.unaryExpr([](double x) { return x > 0 ? std::log(x) : kNegInf; });
}

void check_sequence(const HmmModel& model, const Eigen::MatrixXd& frames) {
  if (frames.rows() == 0) throw ConfigError("hmm: empty sequence");
  if (frames.cols() != model.dim()) {
    throw ConfigError("hmm: sequence has " + std::to_string(frames.cols()) + " dimensions, model has " +
                      std::to_string(model.dim()));
  }
}

/// Forward pass; fills log_alpha (T x S) and returns log P(frames).
double forward(const Eigen::VectorXd& log_pi, const Eigen::MatrixXd& log_a, const Eigen::MatrixXd& log_b,
               Eigen::MatrixXd& log_alpha) {
  const Eigen::Index T = log_b.rows(), S = log_b.cols();
  log_alpha.resize(T, S);
  std::vector<double> tmp(static_cast<std::size_t>(S));
  for (Eigen::Index s = 0; s < S; ++s) log_alpha(0, s) = log_pi[s] + log_b(0, s);
  for (Eigen::Index t = 1; t < T; ++t) {
    for (Eigen::Index j = 0; j < S; ++j) {
      for (Eigen::Index i = 0; i < S; ++i) tmp[i] = log_alpha(t - 1, i) + log_a(i, j);
      log_alpha(t, j) = log_sum_exp(tmp.data(), S) + log_b(t, j);
    }
  }
  std::vector<double> last(static_cast<std::size_t>(S));
  for (Eigen::Index s = 0; s < S; ++s) last[s] = log_alpha(T - 1, s);
  return log_sum_exp(last.data(), S);
}

void backward(const Eigen::MatrixXd& log_a, const Eigen::MatrixXd& log_b, Eigen::MatrixXd& log_beta) {
  const Eigen::Index T = log_b.rows(), S = log_b.cols();
  log_beta.setZero(T, S);
  std::vector<double> tmp(static_cast<std::size_t>(S));
  for (Eigen::Index t = T - 2; t >= 0; --t) {
    for (Eigen::Index i = 0; i < S; ++i) {
      for (Eigen::Index j = 0; j < S; ++j) tmp[j] = log_a(i, j) + log_b(t + 1, j) + log_beta(t + 1, j);
      log_beta(t, i) = log_sum_exp(tmp.data(), S);
    }
  }
}

Eigen::MatrixXd kmeans_pp(const Eigen::MatrixXd& x, int k, Rng& rng, int max_iter) {
  const Eigen::Index n = x.rows();
  Eigen::MatrixXd centers(k, x.cols());
  centers.row(0) = x.row(static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::uint64_t>(n))));
  Eigen::VectorXd d2 = (x.rowwise() - centers.row(0)).rowwise().squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = d2.sum();
    Eigen::Index pick = 0;
    if (total > 0) {
      double r = uniform01(rng) * total;
      for (pick = 0; pick < n - 1; ++pick) {
        r -= d2[pick];
        if (r < 0) break;
      }
    } else {
      pick = static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::uint64_t>(n)));
    }
    centers.row(c) = x.row(pick);
    d2 = d2.cwiseMin((x.rowwise() - centers.row(c)).rowwise().squaredNorm());
  }

  std::vector<int> assign(static_cast<std::size_t>(n), -1);
  for (int it = 0; it < max_iter; ++it) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index best;
      (centers.rowwise() - x.row(i)).rowwise().squaredNorm().minCoeff(&best);
      if (assign[i] != best) {
        assign[i] = static_cast<int>(best);
        changed = true;
      }
    }
    if (!changed && it > 0) break;
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, x.cols());
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(assign[i]) += x.row(i);
      ++counts[assign[i]];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        centers.row(c) = sums.row(c) / counts[c];
      } else {
        // Empty cluster: move it to the point farthest from its center.
        Eigen::VectorXd dist(n);
        for (Eigen::Index i = 0; i < n; ++i) dist[i] = (x.row(i) - centers.row(assign[i])).squaredNorm();
        Eigen::Index far;
        dist.maxCoeff(&far);
        centers.row(c) = x.row(far);
        assign[far] = c;
      }
    }
  }
  return centers;
}

}  // namespace

void HmmModel::validate() const {
  const Eigen::Index S = n_states();
  if (S == 0 || transition.rows() != S || transition.cols() != S || means.rows() != S ||
      variances.rows() != S || variances.cols() != means.cols() || means.cols() == 0) {
    throw ConfigError("hmm: inconsistent model shapes");
  }
  if (!initial.allFinite() || !transition.allFinite() || !means.allFinite() || !variances.allFinite()) {
    throw ConfigError("hmm: non-finite parameters");
  }
  if ((initial.array() < 0).any() || std::abs(initial.sum() - 1.0) > 1e-9) {
    throw ConfigError("hmm: initial probabilities are not a distribution");
  }
  for (Eigen::Index i = 0; i < S; ++i) {
    if ((transition.row(i).array() < 0).any() || std::abs(transition.row(i).sum() - 1.0) > 1e-9) {
      throw ConfigError("hmm: transition row " + std::to_string(i) + " is not a distribution");
    }
  }
  if ((variances.array() <= 0).any()) throw ConfigError("hmm: non-positive variance");
}

Eigen::MatrixXd emission_log_densities(const HmmModel& model, const Eigen::MatrixXd& frames) {
  check_sequence(model, frames);
  const Eigen::Index T = frames.rows(), S = model.n_states();
  const double log2pi = std::log(2.0 * std::numbers::pi);
  Eigen::MatrixXd log_b(T, S);
  for (Eigen::Index s = 0; s < S; ++s) {
    const Eigen::RowVectorXd inv_var = model.variances.row(s).cwiseInverse();
    const double norm = -0.5 * (static_cast<double>(model.dim()) * log2pi +
                                model.variances.row(s).array().log().sum());
    const Eigen::MatrixXd diff = frames.rowwise() - model.means.row(s);
    log_b.col(s) = (norm - 0.5 * (diff.array().square().rowwise() * inv_var.array()).rowwise().sum()).matrix();
  }
  return log_b;
}

double log_likelihood(const HmmModel& model, const Eigen::MatrixXd& frames) {
  const Eigen::MatrixXd log_b = emission_log_densities(model, frames);
  Eigen::MatrixXd log_alpha;
  return forward(safe_log(model.initial), safe_log(model.transition), log_b, log_alpha);
}

ViterbiPath viterbi(const HmmModel& model, const Eigen::MatrixXd& frames) {
  const Eigen::MatrixXd log_b = emission_log_densities(model, frames);
  const Eigen::VectorXd log_pi = safe_log(model.initial);
  const Eigen::MatrixXd log_a = safe_log(model.transition);
  const Eigen::Index T = log_b.rows(), S = log_b.cols();

  Eigen::MatrixXd delta(T, S);
  Eigen::MatrixXi back(T, S);
  for (Eigen::Index s = 0; s < S; ++s) delta(0, s) = log_pi[s] + log_b(0, s);
  for (Eigen::Index t = 1; t < T; ++t) {
    for (Eigen::Index j = 0; j < S; ++j) {
      double best = kNegInf;
      int arg = 0;
      for (Eigen::Index i = 0; i < S; ++i) {
        const double v = delta(t - 1, i) + log_a(i, j);
        if (v > best) {
          best = v;
          arg = static_cast<int>(i);
        }
      }
      delta(t, j) = best + log_b(t, j);
      back(t, j) = arg;
    }
  }
  ViterbiPath path;
  path.states.resize(static_cast<std::size_t>(T));
  Eigen::Index last = 0;
  path.log_prob = kNegInf;
  for (Eigen::Index s = 0; s < S; ++s) {
    if (delta(T - 1, s) > path.log_prob) {
      path.log_prob = delta(T - 1, s);
      last = s;
    }
  }
  path.states[T - 1] = static_cast<int>(last);
  for (Eigen::Index t = T - 1; t > 0; --t) path.states[t - 1] = back(t, path.states[t]);
  return path;
}

HmmFitResult fit_hmm(const Eigen::MatrixXd& frames, const HmmFitOptions& opt) {
  const int S = opt.n_states;
  const Eigen::Index T = frames.rows(), D = frames.cols();
  if (S < 1) throw ConfigError("fit_hmm: n_states must be positive");
  if (D < 1) throw ConfigError("fit_hmm: sequence has no dimensions");
  if (T < S) {
    throw TooShortError("fit_hmm: sequence of " + std::to_string(T) + " frames is shorter than " +
                        std::to_string(S) + " states");
  }
  if (!frames.allFinite()) throw ConfigError("fit_hmm: non-finite frames");
  if (opt.max_iter < 0 || !(opt.tol >= 0) || !(opt.variance_floor > 0)) {
    throw ConfigError("fit_hmm: invalid options");
  }

  const Eigen::RowVectorXd data_mean = frames.colwise().mean();
  const Eigen::RowVectorXd data_var =
      (frames.rowwise() - data_mean).array().square().colwise().mean().matrix();
  const Eigen::RowVectorXd floor = opt.variance_floor * data_var.cwiseMax(1.0);

  Rng rng(opt.seed);
  HmmFitResult result;
  HmmModel& m = result.model;
  m.initial = Eigen::VectorXd::Constant(S, 1.0 / S);
  m.transition = Eigen::MatrixXd::Constant(S, S, 1.0 / S);
  m.means = kmeans_pp(frames, S, rng, opt.kmeans_iter);
  m.variances = data_var.cwiseMax(floor).replicate(S, 1);

  Eigen::MatrixXd log_alpha, log_beta;
  for (int iter = 0;; ++iter) {
    const Eigen::MatrixXd log_b = emission_log_densities(m, frames);
    const Eigen::MatrixXd log_a = safe_log(m.transition);
    const double ll = forward(safe_log(m.initial), log_a, log_b, log_alpha);
    if (!std::isfinite(ll)) throw Error("fit_hmm: non-finite log-likelihood during EM");
    result.log_likelihood_trace.push_back(ll);
    if (iter > 0) {
      const double gain = (ll - result.log_likelihood_trace[iter - 1]) / static_cast<double>(T);
      if (gain < opt.tol) {
        result.converged = true;
        break;
      }
    }
    if (iter == opt.max_iter) break;

    backward(log_a, log_b, log_beta);
    const Eigen::MatrixXd gamma = ((log_alpha + log_beta).array() - ll).exp().matrix();

    Eigen::MatrixXd xi = Eigen::MatrixXd::Zero(S, S);
    for (Eigen::Index t = 0; t + 1 < T; ++t) {
      for (int i = 0; i < S; ++i) {
        if (log_alpha(t, i) == kNegInf) continue;
        for (int j = 0; j < S; ++j) {
          const double v = log_alpha(t, i) + log_a(i, j) + log_b(t + 1, j) + log_beta(t + 1, j) - ll;
          if (v != kNegInf) xi(i, j) += std::exp(v);
        }
      }
    }

    HmmModel next = m;
    const double g0 = gamma.row(0).sum();
    if (g0 > 0) next.initial = gamma.row(0).transpose() / g0;
    for (int i = 0; i < S; ++i) {
      const double row = xi.row(i).sum();
      if (row > 0) next.transition.row(i) = xi.row(i) / row;
    }
    for (int s = 0; s < S; ++s) {
      const double w = gamma.col(s).sum();
      if (!(w > 1e-200)) continue;  // state unused: keep its emission
      const Eigen::RowVectorXd mu = (gamma.col(s).transpose() * frames) / w;
      const Eigen::RowVectorXd var =
          (gamma.col(s).transpose() * (frames.rowwise() - mu).array().square().matrix()) / w;
      next.means.row(s) = mu;
      next.variances.row(s) = var.cwiseMax(floor);
    }
    if (!next.initial.allFinite() || !next.transition.allFinite() || !next.means.allFinite() ||
        !next.variances.allFinite()) {
      throw Error("fit_hmm: EM produced non-finite parameters");
    }
    m = std::move(next);
    ++result.iterations;
  }
  return result;
}

}  // namespace escape
