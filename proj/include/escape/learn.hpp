#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "escape/similarity.hpp"

namespace escape {

// ---------------------------------------------------------------------------
// Standardization

/// Per-column mean and biased standard deviation (floored at 1e-12).
struct Scaler {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd scale;
};

inline constexpr double kMinScale = 1e-12;

/// Statistics over the given rows only. Throws ConfigError for an empty row set.
Scaler standardize_fit(const Eigen::MatrixXd& x, std::span<const Eigen::Index> fit_rows);
Scaler standardize_fit(const Eigen::MatrixXd& x);
/// (x - mean) / scale, column-wise. Not idempotent: applying twice re-centers.
Eigen::MatrixXd standardize_apply(const Scaler& scaler, const Eigen::MatrixXd& x);

// ---------------------------------------------------------------------------
// PCA

struct PcaResult {
  Eigen::MatrixXd projections;               // rows x k
  Eigen::MatrixXd components;                // cols x k, orthonormal columns
  Eigen::VectorXd explained_variance_ratio;  // k, non-increasing
  Eigen::RowVectorXd mean;
};

/// Principal components by thin SVD of the centered data. Each component's
/// largest-magnitude loading is made positive. Throws ConfigError when
/// n_components exceeds min(rows, cols).
PcaResult pca(const Eigen::MatrixXd& x, int n_components = 3);

// ---------------------------------------------------------------------------
// Ridge classifier

struct RidgeSolution {
  Eigen::VectorXd weights;
  double intercept = 0.0;
  double alpha = 0.0;

  double decision(const Eigen::RowVectorXd& x) const { return x.dot(weights) + intercept; }
};

/// +1 for a non-negative decision value, -1 otherwise.
inline int decision_label(double v) { return v >= 0.0 ? 1 : -1; }

/// Thin SVD of the column-centered design, reused across alphas:
///   w(alpha) = V diag(s / (s^2 + alpha)) U^T (y - mean y),
/// with singular values below rank tolerance dropped (the minimum-norm
/// least-squares solution at alpha = 0). Intercept = mean(y) - mean(x) . w.
class RidgePath {
 public:
  RidgePath(const Eigen::MatrixXd& x, const Eigen::VectorXd& y);
  RidgeSolution solve(double alpha) const;

 private:
  Eigen::RowVectorXd x_mean_;
  double y_mean_ = 0.0;
  Eigen::MatrixXd v_;
  Eigen::VectorXd s_;
  Eigen::VectorXd uty_;
  double rank_tol_ = 0.0;
};

/// Labels must be +1/-1 with at least one of each. Throws ConfigError otherwise
/// or for a negative alpha.
RidgeSolution ridge_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& labels, double alpha);

std::vector<int> ridge_predict(const RidgeSolution& model, const Eigen::MatrixXd& x);

/// A fitted classifier over similarity features: columns are the scores
/// under the models of `column_ids`, standardized by `scaler`.
struct RidgeModel {
  RidgeSolution solution;
  std::vector<std::string> column_ids;
  Scaler scaler;
};

// ---------------------------------------------------------------------------
// Splits

struct Split {
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
};

/// Stratified train/test split. |test| = floor(test_fraction * n); per-class
/// test counts are floor(test_fraction * class size) topped up by largest
/// remainder. Ids keep their input order inside each side. Throws ConfigError
/// for a class with fewer than 2 members.
Split stratified_split(const std::vector<std::string>& ids, const std::vector<int>& labels,
                       double test_fraction, std::uint64_t seed);

/// Stratified k-fold partition; fold f's test side is returned in split f.
std::vector<Split> stratified_kfold(const std::vector<std::string>& ids, const std::vector<int>& labels,
                                    int folds, std::uint64_t seed);

struct FeatureTable {
  std::vector<std::string> row_ids;
  std::vector<std::string> column_ids;
  Eigen::MatrixXd values;
};

/// All rows, only the columns of clips not in test_ids (in clip order).
/// Throws ConfigError for an id the matrix does not know.
FeatureTable drop_test_columns(const SimilarityMatrix& similarity, const std::vector<std::string>& test_ids);

// ---------------------------------------------------------------------------
// Nested cross-validation

/// 10^-10 ... 10^10, 21 values.
std::vector<double> default_alpha_grid();

struct NestedCvOptions {
  int n_repeats = 100;
  int inner_folds = 3;
  double test_fraction = 0.33;
  std::vector<double> alpha_grid = default_alpha_grid();
  std::uint64_t seed = 0;
};

struct SplitReport {
  int split_index = 0;
  double chosen_alpha = 0.0;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
  /// Similarity columns the repeat's models saw; never intersects test_ids.
  std::vector<std::string> feature_column_ids;
};

struct AlphaSelection {
  double alpha = 0.0;
  std::vector<double> mean_accuracy;  // per grid value, grid order
};

/// Stratified k-fold CV over the rows of x; returns the alpha with the
/// highest mean validation accuracy, ties to the smallest alpha.
AlphaSelection select_alpha(const Eigen::MatrixXd& x, const std::vector<int>& labels,
                            const std::vector<double>& alpha_grid, int folds, std::uint64_t seed);

/// Per repeat: stratified split, drop test columns, scale on train rows,
/// inner CV for alpha, refit on all train rows, score both sides. Only the
/// labeled ids' rows and columns of `similarity` take part. Repeats run in
/// parallel; results are in repeat order and independent of thread count.
std::vector<SplitReport> nested_cv_evaluate(const SimilarityMatrix& similarity,
                                            const std::vector<std::string>& labeled_ids,
                                            const std::vector<int>& labels, const NestedCvOptions& options);

/// Single-threaded reference; identical output.
std::vector<SplitReport> nested_cv_evaluate_serial(const SimilarityMatrix& similarity,
                                                   const std::vector<std::string>& labeled_ids,
                                                   const std::vector<int>& labels,
                                                   const NestedCvOptions& options);

struct EvaluationSummary {
  int n_repeats = 0;
  double median_train_accuracy = 0.0;
  double median_test_accuracy = 0.0;
  double mean_train_accuracy = 0.0;
  double mean_test_accuracy = 0.0;
  int perfect_train_splits = 0;
  int perfect_test_splits = 0;
};

EvaluationSummary summarize(const std::vector<SplitReport>& reports);

/// split_index,chosen_alpha,train_accuracy,test_accuracy
void write_evaluation_csv(const std::filesystem::path& path, const std::vector<SplitReport>& reports);
/// metric,value rows for the summary block.
void write_summary_csv(const std::filesystem::path& path, const EvaluationSummary& summary);

// ---------------------------------------------------------------------------
// Final classifier

struct Classification {
  std::string clip_id;
  int label = 0;  // +1 / -1
  double decision = 0.0;
};

struct FinalClassification {
  RidgeModel model;
  std::vector<double> alpha_cv_accuracy;
  std::vector<Classification> predictions;  // unlabeled_ids order
};

/// Alpha by k-fold CV on all labeled rows, features restricted to labeled
/// columns, then every unlabeled row is classified. An empty unlabeled set
/// gives an empty prediction list.
FinalClassification train_final_and_classify(const SimilarityMatrix& similarity,
                                              const std::vector<std::string>& labeled_ids,
                                              const std::vector<int>& labels,
                                              const std::vector<std::string>& unlabeled_ids,
                                              const std::vector<double>& alpha_grid, int inner_folds,
                                              std::uint64_t seed);

}  // namespace escape
