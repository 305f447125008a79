#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "escape/hmm.hpp"
#include "escape/mfcc.hpp"

namespace escape {

/// scores(i, j) = log-likelihood of clip i's sequence under clip j's model.
/// The diagonal (self-scores) is kept.
struct SimilarityMatrix {
  std::vector<std::string> clip_ids;
  Eigen::MatrixXd scores;

  Eigen::Index size() const { return static_cast<Eigen::Index>(clip_ids.size()); }
  /// Index of an id, or -1.
  Eigen::Index index_of(const std::string& id) const;
  /// Square sub-matrix restricted to `ids` (rows and columns), in that order.
  /// Throws ConfigError for an unknown id.
  SimilarityMatrix restrict_to(const std::vector<std::string>& ids) const;
};

enum class SeedPolicy {
  kPerClip,  // seed = mix(run seed, stable hash of clip id)
  kShared,   // every model uses the run seed
};

struct SimilarityOptions {
  HmmFitOptions fit;  // fit.seed is ignored; seeds come from run_seed + policy
  std::uint64_t run_seed = 0;
  SeedPolicy seed_policy = SeedPolicy::kPerClip;
};

std::uint64_t clip_seed(const std::string& clip_id, std::uint64_t run_seed, SeedPolicy policy);

/// Fits one HMM per sequence and scores every sequence under every model.
/// Throws ConfigError for fewer than 2 sequences or duplicate ids and
/// ClipError naming the first clip (in input order) whose fit or score failed.
SimilarityMatrix similarity_matrix(const std::vector<MfccMatrix>& sequences, const SimilarityOptions& options);

/// Single-threaded reference for similarity_matrix; identical output.
SimilarityMatrix similarity_matrix_serial(const std::vector<MfccMatrix>& sequences,
                                          const SimilarityOptions& options);

/// Audit export: header row "clip_id,<id...>", then one row per clip.
void write_similarity_csv(const std::filesystem::path& path, const SimilarityMatrix& m);
SimilarityMatrix read_similarity_csv(const std::filesystem::path& path);

}  // namespace escape
