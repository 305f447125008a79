#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "escape/mfcc.hpp"
#include "escape/similarity.hpp"

namespace escape {

// Binary matrix bundle, little-endian:
//   "ESCMATB\0"               8-byte magic
//   u32 version               currently 1
//   u32 kind_len, kind bytes  e.g. "mfcc", "similarity"
//   u64 count
//   count x { u32 name_len, name bytes, u64 rows, u64 cols, rows*cols f64 row-major }
//
// MFCC caches store one entry per clip. A similarity matrix stores one 1 x N
// entry per clip (its row); column order equals entry order.

inline constexpr std::uint32_t kMatrixBundleVersion = 1;

struct NamedMatrix {
  std::string name;
  Eigen::MatrixXd values;
};

struct MatrixBundle {
  std::string kind;
  std::vector<NamedMatrix> entries;
};

void write_matrix_bundle(const std::filesystem::path& path, const MatrixBundle& bundle);
/// Throws Error on a bad magic, unknown version or truncation.
MatrixBundle read_matrix_bundle(const std::filesystem::path& path);

void write_mfcc_cache(const std::filesystem::path& path, const std::vector<MfccMatrix>& features);
std::vector<MfccMatrix> read_mfcc_cache(const std::filesystem::path& path);

void write_similarity_bin(const std::filesystem::path& path, const SimilarityMatrix& m);
SimilarityMatrix read_similarity_bin(const std::filesystem::path& path);

}  // namespace escape
