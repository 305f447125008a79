#include "escape/matrix_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "escape/error.hpp"

namespace escape {

namespace {

constexpr char kMagic[8] = {'E', 'S', 'C', 'M', 'A', 'T', 'B', '\0'};

static_assert(std::endian::native == std::endian::little, "matrix bundles assume a little-endian host");

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  Reader(std::string bytes, std::string where) : b_(std::move(bytes)), where_(std::move(where)) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, b_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string str(std::size_t n) {
    need(n);
    std::string s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == b_.size(); }

 private:
  void need(std::size_t n) const {
    if (b_.size() - pos_ < n) throw Error(where_ + ": truncated matrix bundle");
  }
  std::string b_;
  std::string where_;
  std::size_t pos_ = 0;
};

}  // namespace

void write_matrix_bundle(const std::filesystem::path& path, const MatrixBundle& bundle) {
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kMatrixBundleVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(bundle.kind.size()));
  out += bundle.kind;
  put<std::uint64_t>(out, bundle.entries.size());
  for (const auto& e : bundle.entries) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
    out += e.name;
    put<std::uint64_t>(out, static_cast<std::uint64_t>(e.values.rows()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(e.values.cols()));
    for (Eigen::Index r = 0; r < e.values.rows(); ++r) {
      for (Eigen::Index c = 0; c < e.values.cols(); ++c) put<double>(out, e.values(r, c));
    }
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot write " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw Error("write failed for " + path.string());
}

MatrixBundle read_matrix_bundle(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot read " + path.string());
  Reader r(std::string{std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()}, path.string());
  if (r.str(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) {
    throw Error(path.string() + ": not a matrix bundle");
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kMatrixBundleVersion) {
    throw Error(path.string() + ": unsupported bundle version " + std::to_string(version));
  }
  MatrixBundle b;
  b.kind = r.str(r.get<std::uint32_t>());
  const auto count = r.get<std::uint64_t>();
  for (std::uint64_t k = 0; k < count; ++k) {
    NamedMatrix e;
    e.name = r.str(r.get<std::uint32_t>());
    const auto rows = r.get<std::uint64_t>();
    const auto cols = r.get<std::uint64_t>();
    e.values.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index i = 0; i < e.values.rows(); ++i) {
      for (Eigen::Index j = 0; j < e.values.cols(); ++j) e.values(i, j) = r.get<double>();
    }
    b.entries.push_back(std::move(e));
  }
  if (!r.done()) throw Error(path.string() + ": trailing bytes after matrix bundle");
  return b;
}

void write_mfcc_cache(const std::filesystem::path& path, const std::vector<MfccMatrix>& features) {
  MatrixBundle b{"mfcc", {}};
  for (const auto& f : features) b.entries.push_back({f.clip_id, f.frames});
  write_matrix_bundle(path, b);
}

std::vector<MfccMatrix> read_mfcc_cache(const std::filesystem::path& path) {
  auto b = read_matrix_bundle(path);
  if (b.kind != "mfcc") throw Error(path.string() + ": expected an mfcc bundle, found '" + b.kind + "'");
  std::vector<MfccMatrix> out;
  for (auto& e : b.entries) out.push_back({std::move(e.name), std::move(e.values)});
  return out;
}

void write_similarity_bin(const std::filesystem::path& path, const SimilarityMatrix& m) {
  MatrixBundle b{"similarity", {}};
  for (Eigen::Index i = 0; i < m.size(); ++i) b.entries.push_back({m.clip_ids[i], m.scores.row(i)});
  write_matrix_bundle(path, b);
}

SimilarityMatrix read_similarity_bin(const std::filesystem::path& path) {
  auto b = read_matrix_bundle(path);
  if (b.kind != "similarity") {
    throw Error(path.string() + ": expected a similarity bundle, found '" + b.kind + "'");
  }
  const auto n = static_cast<Eigen::Index>(b.entries.size());
  SimilarityMatrix m{{}, Eigen::MatrixXd(n, n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& e = b.entries[i];
    if (e.values.rows() != 1 || e.values.cols() != n) throw Error(path.string() + ": similarity row shape");
    m.clip_ids.push_back(e.name);
    m.scores.row(i) = e.values.row(0);
  }
  return m;
}

}  // namespace escape
