#include "escape/learn.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include <fmt/format.h>

#include "escape/error.hpp"
#include "escape/random.hpp"

namespace escape {

namespace {

using Index = Eigen::Index;

struct IndexSplit {
  std::vector<Index> train;
  std::vector<Index> test;
};

std::map<int, std::vector<Index>> by_class(const std::vector<int>& labels) {
  std::map<int, std::vector<Index>> classes;
  for (std::size_t i = 0; i < labels.size(); ++i) classes[labels[i]].push_back(static_cast<Index>(i));
  return classes;
}

IndexSplit split_indices(const std::vector<int>& labels, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ConfigError("stratified_split: test_fraction must be in (0, 1)");
  }
  const auto classes = by_class(labels);
  for (const auto& [label, members] : classes) {
    if (members.size() < 2) {
      throw ConfigError("stratified_split: class " + std::to_string(label) + " has fewer than 2 members");
    }
  }
  // The epsilon absorbs representation error (0.33 * 100 must give 33).
  const auto quota = [&](std::size_t n) { return test_fraction * static_cast<double>(n) + 1e-9; };
  const auto total_test = static_cast<std::size_t>(std::floor(quota(labels.size())));

  std::vector<std::size_t> take;
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  std::size_t c = 0;
  for (const auto& [label, members] : classes) {
    const double q = quota(members.size());
    take.push_back(static_cast<std::size_t>(std::floor(q)));
    assigned += take.back();
    remainders.emplace_back(q - std::floor(q), c++);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; assigned < total_test && k < remainders.size(); ++k) {
    ++take[remainders[k].second];
    ++assigned;
  }

  Rng rng(seed);
  IndexSplit out;
  c = 0;
  std::vector<bool> is_test(labels.size(), false);
  for (const auto& [label, members] : classes) {
    auto shuffled = members;
    shuffle(shuffled, rng);
    for (std::size_t k = 0; k < take[c]; ++k) is_test[static_cast<std::size_t>(shuffled[k])] = true;
    ++c;
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    (is_test[i] ? out.test : out.train).push_back(static_cast<Index>(i));
  }
  return out;
}

std::vector<IndexSplit> kfold_indices(const std::vector<int>& labels, int folds, std::uint64_t seed) {
  if (folds < 2) throw ConfigError("stratified_kfold: need at least 2 folds");
  if (labels.size() < static_cast<std::size_t>(folds)) {
    throw ConfigError("stratified_kfold: fewer rows than folds");
  }
  Rng rng(seed);
  std::vector<int> fold_of(labels.size());
  std::size_t offset = 0;
  for (const auto& [label, members] : by_class(labels)) {
    auto shuffled = members;
    shuffle(shuffled, rng);
    for (std::size_t p = 0; p < shuffled.size(); ++p) {
      fold_of[static_cast<std::size_t>(shuffled[p])] = static_cast<int>((offset + p) % folds);
    }
    offset += shuffled.size();
  }
  std::vector<IndexSplit> out(static_cast<std::size_t>(folds));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (int f = 0; f < folds; ++f) {
      (fold_of[i] == f ? out[f].test : out[f].train).push_back(static_cast<Index>(i));
    }
  }
  return out;
}

std::vector<std::string> pick(const std::vector<std::string>& ids, const std::vector<Index>& idx) {
  std::vector<std::string> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(ids[static_cast<std::size_t>(i)]);
  return out;
}

std::vector<int> pick(const std::vector<int>& v, const std::vector<Index>& idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(v[static_cast<std::size_t>(i)]);
  return out;
}

Eigen::VectorXd to_vector(const std::vector<int>& labels) {
  Eigen::VectorXd y(static_cast<Index>(labels.size()));
  for (std::size_t i = 0; i < labels.size(); ++i) y[static_cast<Index>(i)] = labels[i];
  return y;
}

double accuracy(const RidgeSolution& sol, const Eigen::MatrixXd& x, const std::vector<int>& labels) {
  if (labels.empty()) return 0.0;
  std::size_t correct = 0;
  for (Index i = 0; i < x.rows(); ++i) {
    if (decision_label(sol.decision(x.row(i))) == labels[static_cast<std::size_t>(i)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

void check_labels(const std::vector<std::string>& ids, const std::vector<int>& labels, const char* who) {
  if (ids.size() != labels.size()) throw ConfigError(std::string(who) + ": ids and labels differ in length");
  std::unordered_set<std::string> seen;
  bool pos = false, neg = false;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!seen.insert(ids[i]).second) throw ConfigError(std::string(who) + ": duplicate id '" + ids[i] + "'");
    if (labels[i] == 1) {
      pos = true;
    } else if (labels[i] == -1) {
      neg = true;
    } else {
      throw ConfigError(std::string(who) + ": labels must be +1 or -1");
    }
  }
  if (!pos || !neg) throw ConfigError(std::string(who) + ": labels must cover both classes");
}

void check_grid(const std::vector<double>& grid) {
  if (grid.empty()) throw ConfigError("alpha grid is empty");
  for (double a : grid) {
    if (!(a >= 0.0) || !std::isfinite(a)) throw ConfigError("alpha grid values must be finite and >= 0");
  }
}

std::vector<Index> indices_of(const SimilarityMatrix& m, const std::vector<std::string>& ids) {
  std::unordered_map<std::string, Index> where;
  for (std::size_t i = 0; i < m.clip_ids.size(); ++i) where.emplace(m.clip_ids[i], static_cast<Index>(i));
  std::vector<Index> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    auto it = where.find(id);
    if (it == where.end()) throw ConfigError("similarity matrix has no clip '" + id + "'");
    out.push_back(it->second);
  }
  return out;
}

SplitReport run_repeat(const SimilarityMatrix& sim, const std::vector<int>& labels, const NestedCvOptions& opt,
                       int repeat) {
  const std::uint64_t seed = mix_seed(opt.seed, static_cast<std::uint64_t>(repeat));
  const IndexSplit split = split_indices(labels, opt.test_fraction, seed);

  SplitReport rep;
  rep.split_index = repeat;
  rep.train_ids = pick(sim.clip_ids, split.train);
  rep.test_ids = pick(sim.clip_ids, split.test);

  const FeatureTable features = drop_test_columns(sim, rep.test_ids);
  rep.feature_column_ids = features.column_ids;
  const Eigen::MatrixXd x_train = features.values(split.train, Eigen::all);
  const Eigen::MatrixXd x_test = features.values(split.test, Eigen::all);
  const auto y_train = pick(labels, split.train);
  const auto y_test = pick(labels, split.test);

  const Scaler scaler = standardize_fit(x_train);
  const Eigen::MatrixXd z_train = standardize_apply(scaler, x_train);
  const Eigen::MatrixXd z_test = standardize_apply(scaler, x_test);

  const auto sel = select_alpha(z_train, y_train, opt.alpha_grid, opt.inner_folds, mix_seed(seed, 0x5eed));
  const RidgeSolution sol = RidgePath(z_train, to_vector(y_train)).solve(sel.alpha);
  rep.chosen_alpha = sel.alpha;
  rep.train_accuracy = accuracy(sol, z_train, y_train);
  rep.test_accuracy = accuracy(sol, z_test, y_test);
  return rep;
}

SimilarityMatrix prepare_nested(const SimilarityMatrix& similarity, const std::vector<std::string>& ids,
                                const std::vector<int>& labels, const NestedCvOptions& opt) {
  check_labels(ids, labels, "nested_cv_evaluate");
  check_grid(opt.alpha_grid);
  if (opt.n_repeats < 1) throw ConfigError("nested_cv_evaluate: n_repeats must be positive");
  if (opt.inner_folds < 2) throw ConfigError("nested_cv_evaluate: inner_folds must be at least 2");
  const auto idx = indices_of(similarity, ids);
  return SimilarityMatrix{ids, similarity.scores(idx, idx)};
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

Scaler standardize_fit(const Eigen::MatrixXd& x, std::span<const Index> fit_rows) {
  if (fit_rows.empty()) throw ConfigError("standardize_fit: no rows to fit on");
  const std::vector<Index> rows(fit_rows.begin(), fit_rows.end());
  const Eigen::MatrixXd sub = x(rows, Eigen::all);
  Scaler s;
  s.mean = sub.colwise().mean();
  s.scale = (sub.rowwise() - s.mean).array().square().colwise().mean().sqrt().matrix();
  s.scale = s.scale.cwiseMax(kMinScale);
  return s;
}

Scaler standardize_fit(const Eigen::MatrixXd& x) {
  std::vector<Index> rows(static_cast<std::size_t>(x.rows()));
  std::iota(rows.begin(), rows.end(), Index{0});
  return standardize_fit(x, rows);
}

Eigen::MatrixXd standardize_apply(const Scaler& scaler, const Eigen::MatrixXd& x) {
  if (x.cols() != scaler.mean.size()) throw ConfigError("standardize_apply: column count mismatch");
  return ((x.rowwise() - scaler.mean).array().rowwise() / scaler.scale.array()).matrix();
}

PcaResult pca(const Eigen::MatrixXd& x, int n_components) {
  if (n_components < 1 || n_components > std::min(x.rows(), x.cols())) {
    throw ConfigError("pca: n_components must be in [1, min(rows, cols)]");
  }
  PcaResult r;
  r.mean = x.colwise().mean();
  const Eigen::MatrixXd centered = x.rowwise() - r.mean;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
  const Eigen::VectorXd s2 = svd.singularValues().array().square();
  const double total = s2.sum();
  r.components = svd.matrixV().leftCols(n_components);
  for (int k = 0; k < n_components; ++k) {
    Index arg;
    r.components.col(k).cwiseAbs().maxCoeff(&arg);
    if (r.components(arg, k) < 0) r.components.col(k) *= -1.0;
  }
  r.explained_variance_ratio =
      total > 0 ? Eigen::VectorXd(s2.head(n_components) / total) : Eigen::VectorXd::Zero(n_components);
  r.projections = centered * r.components;
  return r;
}

RidgePath::RidgePath(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  if (x.rows() != y.size() || x.rows() == 0) throw ConfigError("ridge: design and label sizes differ");
  x_mean_ = x.colwise().mean();
  y_mean_ = y.mean();
  const Eigen::MatrixXd xc = x.rowwise() - x_mean_;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(xc, Eigen::ComputeThinU | Eigen::ComputeThinV);
  v_ = svd.matrixV();
  s_ = svd.singularValues();
  uty_ = svd.matrixU().transpose() * (y.array() - y_mean_).matrix();
  const double smax = s_.size() ? s_[0] : 0.0;
  rank_tol_ = static_cast<double>(std::max(x.rows(), x.cols())) * std::numeric_limits<double>::epsilon() * smax;
}

RidgeSolution RidgePath::solve(double alpha) const {
  if (!(alpha >= 0.0)) throw ConfigError("ridge: alpha must be non-negative");
  Eigen::VectorXd shrink(s_.size());
  for (Index k = 0; k < s_.size(); ++k) {
    const double s = s_[k];
    shrink[k] = (s > rank_tol_) ? s / (s * s + alpha) : 0.0;
  }
  RidgeSolution sol;
  sol.alpha = alpha;
  sol.weights = v_ * shrink.cwiseProduct(uty_);
  sol.intercept = y_mean_ - x_mean_.dot(sol.weights);
  return sol;
}

RidgeSolution ridge_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& labels, double alpha) {
  bool pos = false, neg = false;
  for (Index i = 0; i < labels.size(); ++i) {
    if (labels[i] == 1.0) {
      pos = true;
    } else if (labels[i] == -1.0) {
      neg = true;
    } else {
      throw ConfigError("ridge_fit: labels must be +1 or -1");
    }
  }
  if (!pos || !neg) throw ConfigError("ridge_fit: need at least one example of each class");
  return RidgePath(x, labels).solve(alpha);
}

std::vector<int> ridge_predict(const RidgeSolution& model, const Eigen::MatrixXd& x) {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(x.rows()));
  for (Index i = 0; i < x.rows(); ++i) out.push_back(decision_label(model.decision(x.row(i))));
  return out;
}

Split stratified_split(const std::vector<std::string>& ids, const std::vector<int>& labels, double test_fraction,
                       std::uint64_t seed) {
  if (ids.size() != labels.size()) throw ConfigError("stratified_split: ids and labels differ in length");
  const auto s = split_indices(labels, test_fraction, seed);
  return {pick(ids, s.train), pick(ids, s.test)};
}

std::vector<Split> stratified_kfold(const std::vector<std::string>& ids, const std::vector<int>& labels, int folds,
                                    std::uint64_t seed) {
  if (ids.size() != labels.size()) throw ConfigError("stratified_kfold: ids and labels differ in length");
  std::vector<Split> out;
  for (const auto& s : kfold_indices(labels, folds, seed)) out.push_back({pick(ids, s.train), pick(ids, s.test)});
  return out;
}

FeatureTable drop_test_columns(const SimilarityMatrix& similarity, const std::vector<std::string>& test_ids) {
  (void)indices_of(similarity, test_ids);  // unknown ids are an error
  const std::unordered_set<std::string> drop(test_ids.begin(), test_ids.end());
  FeatureTable t;
  t.row_ids = similarity.clip_ids;
  std::vector<Index> keep;
  for (std::size_t j = 0; j < similarity.clip_ids.size(); ++j) {
    if (!drop.contains(similarity.clip_ids[j])) {
      keep.push_back(static_cast<Index>(j));
      t.column_ids.push_back(similarity.clip_ids[j]);
    }
  }
  t.values = similarity.scores(Eigen::all, keep);
  return t;
}

std::vector<double> default_alpha_grid() {
  std::vector<double> grid;
  for (int e = -10; e <= 10; ++e) grid.push_back(std::pow(10.0, e));
  return grid;
}

AlphaSelection select_alpha(const Eigen::MatrixXd& x, const std::vector<int>& labels,
                            const std::vector<double>& alpha_grid, int folds, std::uint64_t seed) {
  check_grid(alpha_grid);
  if (x.rows() != static_cast<Index>(labels.size())) throw ConfigError("select_alpha: row/label mismatch");
  AlphaSelection sel;
  sel.mean_accuracy.assign(alpha_grid.size(), 0.0);
  const auto splits = kfold_indices(labels, folds, seed);
  for (const auto& fold : splits) {
    const Eigen::MatrixXd xt = x(fold.train, Eigen::all);
    const Eigen::MatrixXd xv = x(fold.test, Eigen::all);
    const auto yv = pick(labels, fold.test);
    const RidgePath path(xt, to_vector(pick(labels, fold.train)));
    for (std::size_t a = 0; a < alpha_grid.size(); ++a) {
      sel.mean_accuracy[a] += accuracy(path.solve(alpha_grid[a]), xv, yv);
    }
  }
  for (auto& m : sel.mean_accuracy) m /= static_cast<double>(splits.size());

  std::vector<std::size_t> order(alpha_grid.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return alpha_grid[a] < alpha_grid[b]; });
  double best = -1.0;
  for (auto k : order) {
    if (sel.mean_accuracy[k] > best) {
      best = sel.mean_accuracy[k];
      sel.alpha = alpha_grid[k];
    }
  }
  return sel;
}

std::vector<SplitReport> nested_cv_evaluate(const SimilarityMatrix& similarity,
                                            const std::vector<std::string>& labeled_ids,
                                            const std::vector<int>& labels, const NestedCvOptions& options) {
  const SimilarityMatrix sim = prepare_nested(similarity, labeled_ids, labels, options);
  std::vector<SplitReport> reports(static_cast<std::size_t>(options.n_repeats));
  std::vector<std::exception_ptr> errors(reports.size());
#pragma omp parallel for schedule(dynamic)
  for (int r = 0; r < options.n_repeats; ++r) {
    try {
      reports[static_cast<std::size_t>(r)] = run_repeat(sim, labels, options, r);
    } catch (...) {
      errors[static_cast<std::size_t>(r)] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return reports;
}

std::vector<SplitReport> nested_cv_evaluate_serial(const SimilarityMatrix& similarity,
                                                   const std::vector<std::string>& labeled_ids,
                                                   const std::vector<int>& labels,
                                                   const NestedCvOptions& options) {
  const SimilarityMatrix sim = prepare_nested(similarity, labeled_ids, labels, options);
  std::vector<SplitReport> reports;
  for (int r = 0; r < options.n_repeats; ++r) reports.push_back(run_repeat(sim, labels, options, r));
  return reports;
}

EvaluationSummary summarize(const std::vector<SplitReport>& reports) {
  EvaluationSummary s;
  s.n_repeats = static_cast<int>(reports.size());
  std::vector<double> train, test;
  for (const auto& r : reports) {
    train.push_back(r.train_accuracy);
    test.push_back(r.test_accuracy);
    s.perfect_train_splits += r.train_accuracy == 1.0;
    s.perfect_test_splits += r.test_accuracy == 1.0;
  }
  s.median_train_accuracy = median(train);
  s.median_test_accuracy = median(test);
  if (!reports.empty()) {
    s.mean_train_accuracy = std::accumulate(train.begin(), train.end(), 0.0) / static_cast<double>(train.size());
    s.mean_test_accuracy = std::accumulate(test.begin(), test.end(), 0.0) / static_cast<double>(test.size());
  }
  return s;
}

void write_evaluation_csv(const std::filesystem::path& path, const std::vector<SplitReport>& reports) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << "split_index,chosen_alpha,train_accuracy,test_accuracy\n";
  for (const auto& r : reports) {
    out << fmt::format("{},{:.17g},{:.17g},{:.17g}\n", r.split_index, r.chosen_alpha, r.train_accuracy,
                       r.test_accuracy);
  }
}

void write_summary_csv(const std::filesystem::path& path, const EvaluationSummary& s) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << "metric,value\n"
      << fmt::format("n_repeats,{}\n", s.n_repeats)
      << fmt::format("median_train_accuracy,{:.17g}\n", s.median_train_accuracy)
      << fmt::format("median_test_accuracy,{:.17g}\n", s.median_test_accuracy)
      << fmt::format("mean_train_accuracy,{:.17g}\n", s.mean_train_accuracy)
      << fmt::format("mean_test_accuracy,{:.17g}\n", s.mean_test_accuracy)
      << fmt::format("perfect_train_splits,{}\n", s.perfect_train_splits)
      << fmt::format("perfect_test_splits,{}\n", s.perfect_test_splits);
}

FinalClassification train_final_and_classify(const SimilarityMatrix& similarity,
                                              const std::vector<std::string>& labeled_ids,
                                              const std::vector<int>& labels,
                                              const std::vector<std::string>& unlabeled_ids,
                                              const std::vector<double>& alpha_grid, int inner_folds,
                                              std::uint64_t seed) {
  check_labels(labeled_ids, labels, "train_final_and_classify");
  check_grid(alpha_grid);
  const std::unordered_set<std::string> labeled(labeled_ids.begin(), labeled_ids.end());
  for (const auto& id : unlabeled_ids) {
    if (labeled.contains(id)) throw ConfigError("train_final_and_classify: '" + id + "' is both labeled and unlabeled");
  }
  const auto cols = indices_of(similarity, labeled_ids);
  const auto rows_u = indices_of(similarity, unlabeled_ids);

  const Eigen::MatrixXd x_l = similarity.scores(cols, cols);
  FinalClassification out;
  out.model.column_ids = labeled_ids;
  out.model.scaler = standardize_fit(x_l);
  const Eigen::MatrixXd z_l = standardize_apply(out.model.scaler, x_l);
  const auto sel = select_alpha(z_l, labels, alpha_grid, inner_folds, seed);
  out.alpha_cv_accuracy = sel.mean_accuracy;
  out.model.solution = RidgePath(z_l, to_vector(labels)).solve(sel.alpha);

  if (rows_u.empty()) return out;
  const Eigen::MatrixXd z_u = standardize_apply(out.model.scaler, similarity.scores(rows_u, cols));
  for (std::size_t i = 0; i < rows_u.size(); ++i) {
    const double d = out.model.solution.decision(z_u.row(static_cast<Index>(i)));
    out.predictions.push_back({unlabeled_ids[i], decision_label(d), d});
  }
  return out;
}

}  // namespace escape
