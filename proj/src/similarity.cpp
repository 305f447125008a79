#include "escape/similarity.hpp"

#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <unordered_set>

#include <fmt/format.h>

#include "escape/error.hpp"
#include "escape/random.hpp"

namespace escape {

namespace {

void check_inputs(const std::vector<MfccMatrix>& seqs) {
  if (seqs.size() < 2) throw ConfigError("similarity_matrix: need at least 2 sequences");
  std::unordered_set<std::string> ids;
  for (const auto& s : seqs) {
    if (!ids.insert(s.clip_id).second) {
      throw ConfigError("similarity_matrix: duplicate clip id '" + s.clip_id + "'");
    }
  }
}

HmmFitOptions options_for(const SimilarityOptions& o, const std::string& id) {
  HmmFitOptions f = o.fit;
  f.seed = clip_seed(id, o.run_seed, o.seed_policy);
  return f;
}

struct Slot {
  std::optional<HmmModel> model;
  std::string error;
};

void raise_first(const std::vector<MfccMatrix>& seqs, const std::vector<std::string>& errors) {
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (!errors[i].empty()) throw ClipError(seqs[i].clip_id, errors[i]);
  }
}

double score(const HmmModel& model, const MfccMatrix& seq, std::string& error) {
  try {
    const double v = log_likelihood(model, seq.frames);
    if (!std::isfinite(v)) error = "non-finite log-likelihood";
    return v;
  } catch (const std::exception& e) {
    error = e.what();
    return 0.0;
  }
}

}  // namespace

Eigen::Index SimilarityMatrix::index_of(const std::string& id) const {
  for (std::size_t i = 0; i < clip_ids.size(); ++i) {
    if (clip_ids[i] == id) return static_cast<Eigen::Index>(i);
  }
  return -1;
}

SimilarityMatrix SimilarityMatrix::restrict_to(const std::vector<std::string>& ids) const {
  std::vector<Eigen::Index> idx;
  idx.reserve(ids.size());
  for (const auto& id : ids) {
    const auto k = index_of(id);
    if (k < 0) throw ConfigError("similarity matrix has no clip '" + id + "'");
    idx.push_back(k);
  }
  SimilarityMatrix out{ids, scores(idx, idx)};
  return out;
}

std::uint64_t clip_seed(const std::string& clip_id, std::uint64_t run_seed, SeedPolicy policy) {
  return policy == SeedPolicy::kShared ? run_seed : mix_seed(run_seed, stable_hash(clip_id));
}

SimilarityMatrix similarity_matrix(const std::vector<MfccMatrix>& seqs, const SimilarityOptions& opt) {
  check_inputs(seqs);
  const auto n = static_cast<std::ptrdiff_t>(seqs.size());
  std::vector<Slot> slots(seqs.size());

#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t j = 0; j < n; ++j) {
    auto& slot = slots[static_cast<std::size_t>(j)];
    const auto& seq = seqs[static_cast<std::size_t>(j)];
    try {
      slot.model = fit_hmm(seq.frames, options_for(opt, seq.clip_id)).model;
    } catch (const std::exception& e) {
      slot.error = std::string("model fit failed: ") + e.what();
    }
  }
  std::vector<std::string> errors(seqs.size());
  for (std::size_t i = 0; i < slots.size(); ++i) errors[i] = slots[i].error;
  raise_first(seqs, errors);

  SimilarityMatrix out{{}, Eigen::MatrixXd(n, n)};
  for (const auto& s : seqs) out.clip_ids.push_back(s.clip_id);
  std::vector<std::string> cell_errors(static_cast<std::size_t>(n * n));
#pragma omp parallel for collapse(2) schedule(dynamic, 8)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    for (std::ptrdiff_t j = 0; j < n; ++j) {
      out.scores(i, j) = score(*slots[static_cast<std::size_t>(j)].model, seqs[static_cast<std::size_t>(i)],
                               cell_errors[static_cast<std::size_t>(i * n + j)]);
    }
  }
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    for (std::ptrdiff_t j = 0; j < n; ++j) {
      const auto& e = cell_errors[static_cast<std::size_t>(i * n + j)];
      if (!e.empty()) throw ClipError(seqs[static_cast<std::size_t>(i)].clip_id, "scoring under model of '" +
                                                                        seqs[static_cast<std::size_t>(j)].clip_id + "': " + e);
    }
  }
  return out;
}

SimilarityMatrix similarity_matrix_serial(const std::vector<MfccMatrix>& seqs, const SimilarityOptions& opt) {
  check_inputs(seqs);
  std::vector<HmmModel> models;
  models.reserve(seqs.size());
  for (const auto& seq : seqs) {
    try {
      models.push_back(fit_hmm(seq.frames, options_for(opt, seq.clip_id)).model);
    } catch (const std::exception& e) {
      throw ClipError(seq.clip_id, std::string("model fit failed: ") + e.what());
    }
  }
  const auto n = static_cast<Eigen::Index>(seqs.size());
  SimilarityMatrix out{{}, Eigen::MatrixXd(n, n)};
  for (const auto& s : seqs) out.clip_ids.push_back(s.clip_id);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      std::string err;
      out.scores(i, j) = score(models[j], seqs[i], err);
      if (!err.empty()) throw ClipError(seqs[i].clip_id, "scoring under model of '" + seqs[j].clip_id + "': " + err);
    }
  }
  return out;
}

void write_similarity_csv(const std::filesystem::path& path, const SimilarityMatrix& m) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << "clip_id";
  for (const auto& id : m.clip_ids) out << ',' << id;
  out << '\n';
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    out << m.clip_ids[i];
    for (Eigen::Index j = 0; j < m.size(); ++j) out << ',' << fmt::format("{:.17g}", m.scores(i, j));
    out << '\n';
  }
}

SimilarityMatrix read_similarity_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  const auto split = [](const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    return cells;
  };
  std::string line;
  if (!std::getline(in, line)) throw Error(path.string() + ": empty similarity file");
  auto header = split(line);
  if (header.empty() || header[0] != "clip_id") throw Error(path.string() + ": bad header");
  SimilarityMatrix m;
  m.clip_ids.assign(header.begin() + 1, header.end());
  const auto n = m.size();
  m.scores.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!std::getline(in, line)) throw Error(path.string() + ": truncated");
    auto cells = split(line);
    if (static_cast<Eigen::Index>(cells.size()) != n + 1 || cells[0] != m.clip_ids[i]) {
      throw Error(path.string() + ": malformed row " + std::to_string(i + 2));
    }
    for (Eigen::Index j = 0; j < n; ++j) m.scores(i, j) = std::stod(cells[j + 1]);
  }
  return m;
}

}  // namespace escape
