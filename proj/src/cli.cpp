#include "escape/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <map>
#include <optional>
#include <set>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>
#include <omp.h>

#include "escape/archive.hpp"
#include "escape/error.hpp"
#include "escape/gaussian.hpp"
#include "escape/label_server.hpp"
#include "escape/labels.hpp"
#include "escape/learn.hpp"
#include "escape/matrix_io.hpp"
#include "escape/mfcc.hpp"
#include "escape/report.hpp"
#include "escape/scrape.hpp"
#include "escape/similarity.hpp"
#include "escape/wav.hpp"

#ifndef ESCAPE_VERSION
#define ESCAPE_VERSION "0.0.0"
#endif

namespace escape {

namespace fs = std::filesystem;
using nlohmann::json;

std::string version() { return ESCAPE_VERSION; }

void write_metadata(const fs::path& artifact, const std::string& command, const json& config) {
  const json meta{{"tool", "escape"}, {"version", version()}, {"command", command}, {"config", config}};
  const fs::path path = artifact.string() + ".meta.json";
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot write " + path.string());
  f << meta.dump(2) << '\n';
}

namespace {

constexpr const char* kMfccFile = "mfcc.bin";
constexpr const char* kSimilarityFile = "similarity.bin";
constexpr const char* kSimilarityCsv = "similarity.csv";
constexpr const char* kClassifiedFile = "classified.csv";

std::string num(double v) { return fmt::format("{:.17g}", v); }

std::ofstream open_out(const fs::path& p) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot write " + p.string());
  return f;
}

struct CommonOpts {
  std::string archive;
  std::string out;  // derived artifacts; default <archive>/derived
  int jobs = 0;

  fs::path derived() const { return out.empty() ? fs::path(archive) / "derived" : fs::path(out); }
};

void apply_jobs(int jobs) {
  if (jobs > 0) omp_set_num_threads(jobs);
}

void add_common(CLI::App* cmd, CommonOpts& o, bool with_out = true) {
  cmd->add_option("--archive,-a", o.archive, "Archive directory")->required();
  if (with_out) cmd->add_option("--out,-o", o.out, "Directory for derived artifacts (default <archive>/derived)");
  cmd->add_option("--jobs,-j", o.jobs, "Worker threads (0 = runtime default)")->check(CLI::NonNegativeNumber);
}

json mfcc_json(const MfccParams& p) {
  return json{{"window_length", p.window_length}, {"window_step", p.window_step}, {"n_filters", p.n_filters},
              {"n_cepstra", p.n_cepstra},         {"fft_size", p.fft_size},       {"pre_emphasis", p.pre_emphasis},
              {"lifter", p.lifter},               {"energy_floor", p.energy_floor}, {"max_duration", p.max_duration},
              {"sample_rate", p.sample_rate}};
}

// ---------------------------------------------------------------------------
// Labeled set helpers

struct LabeledSplit {
  std::vector<std::string> ids;
  std::vector<int> classes;
  std::vector<std::string> unlabeled;
};

/// Manual and propagated labels count as ground truth; classified ones do not.
LabeledSplit split_by_label(const SimilarityMatrix& sim, const LabelStore& store, const LabelSet& labels) {
  LabeledSplit s;
  for (const auto& id : sim.clip_ids) {
    const auto* r = store.find(id);
    if (!r || r->source == LabelSource::kClassified) {
      s.unlabeled.push_back(id);
      continue;
    }
    if (!labels.contains(r->label)) {
      throw ConfigError("clip '" + id + "' carries label '" + r->label + "' outside the label set");
    }
    s.ids.push_back(id);
    s.classes.push_back(labels.to_class(r->label));
  }
  return s;
}

std::vector<GaussianSignature> load_signatures(const fs::path& mfcc_path, const Archive& archive, std::ostream& err) {
  std::vector<GaussianSignature> out;
  for (const auto& m : read_mfcc_cache(mfcc_path)) {
    if (!archive.contains(m.clip_id)) {
      fmt::print(err, "warning: {} holds clip '{}' that is not in the archive; ignored\n", mfcc_path.string(),
                 m.clip_id);
      continue;
    }
    try {
      out.push_back(fit_gaussian(m.clip_id, m.frames));
    } catch (const Error& e) {
      fmt::print(err, "warning: no signature for '{}': {}\n", m.clip_id, e.what());
    }
  }
  return out;
}

fs::path require_file(const fs::path& p, const std::string& hint) {
  if (!fs::exists(p)) throw ConfigError(p.string() + " not found; " + hint);
  return p;
}

// ---------------------------------------------------------------------------
// scrape

struct ScrapeOpts {
  CommonOpts common;
  std::string base_url;
  std::string cookie_file;
  std::size_t page_size = 50;
  std::string list_template = ScrapeConfig{}.list_template;
  std::string audio_template = ScrapeConfig{}.audio_template;
  int max_retries = 3;
  int backoff_ms = 250;
  int timeout_s = 30;
};

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

int cmd_scrape(const ScrapeOpts& o, std::ostream& out, std::ostream& err) {
  std::string cookie;
  if (!o.cookie_file.empty()) {
    std::ifstream f(o.cookie_file, std::ios::binary);
    if (!f) throw ConfigError("cannot read cookie file " + o.cookie_file);
    cookie = trim(std::string{std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()});
  } else if (const char* env = std::getenv("ESCAPE_COOKIE")) {
    cookie = trim(env);
  }
  if (cookie.empty()) throw ConfigError("no cookie: set ESCAPE_COOKIE or pass --cookie-file");

  ScrapeConfig cfg;
  cfg.base_url = o.base_url;
  cfg.cookie = cookie;
  cfg.page_size = o.page_size;
  cfg.list_template = o.list_template;
  cfg.audio_template = o.audio_template;
  cfg.max_retries = o.max_retries;
  cfg.backoff_ms = o.backoff_ms;
  cfg.timeout_s = o.timeout_s;
  if (o.common.jobs > 0) cfg.jobs = o.common.jobs;
  cfg.log = [&err](const std::string& m) { err << m << '\n'; };

  const auto r = scrape(cfg, o.common.archive);
  fmt::print(out, "scrape: {} new records, {} audio files, {} malformed skipped, {} audio unavailable, {} pages\n",
             r.new_records, r.audio_files, r.skipped_malformed, r.audio_unavailable, r.pages);

  const auto dir = o.common.derived();
  fs::create_directories(dir);
  write_metadata(dir / "scrape", "scrape",
                 json{{"archive", o.common.archive},
                      {"base_url", cfg.base_url},
                      {"page_size", cfg.page_size},
                      {"list_template", cfg.list_template},
                      {"audio_template", cfg.audio_template},
                      {"max_retries", cfg.max_retries},
                      {"backoff_ms", cfg.backoff_ms},
                      {"jobs", cfg.jobs}});
  return kExitOk;
}

// ---------------------------------------------------------------------------
// features

struct FeaturesOpts {
  CommonOpts common;
  MfccParams mfcc;
  HmmFitOptions hmm;
  std::uint64_t seed = 0;
  bool strict = false;
};

int cmd_features(const FeaturesOpts& o, std::ostream& out, std::ostream& err) {
  apply_jobs(o.common.jobs);
  o.mfcc.validate();
  const auto archive = open_archive(o.common.archive);

  std::map<std::string, std::string> failures;
  std::vector<AudioClip> clips;
  for (const auto& r : archive.records()) {
    const auto path = archive.audio_path(r);
    if (!path) continue;
    try {
      auto clip = read_wav(*path);
      clip.id = r.id;
      clips.push_back(std::move(clip));
    } catch (const Error& e) {
      failures[r.id] = e.what();
    }
  }

  std::vector<MfccMatrix> features;
  for (auto& oc : compute_mfcc_batch(clips, o.mfcc)) {
    if (!oc.mfcc) {
      failures[oc.clip_id] = oc.error;
    } else if (oc.mfcc->length() < o.hmm.n_states) {
      failures[oc.clip_id] =
          fmt::format("{} frames, fewer than the {} HMM states", oc.mfcc->length(), o.hmm.n_states);
    } else {
      features.push_back(std::move(*oc.mfcc));
    }
  }

  const auto report_failures = [&] {
    for (const auto& [id, why] : failures) fmt::print(err, "  failed {}: {}\n", id, why);
  };
  if (features.empty()) {
    fmt::print(err, "features: no clip produced features ({} failed)\n", failures.size());
    report_failures();
    return kExitError;
  }

  const auto dir = o.common.derived();
  fs::create_directories(dir);
  const json config{{"archive", o.common.archive}, {"out", dir.string()},   {"seed", o.seed},
                    {"jobs", o.common.jobs},       {"mfcc", mfcc_json(o.mfcc)},
                    {"hmm",
                     {{"n_states", o.hmm.n_states},
                      {"max_iter", o.hmm.max_iter},
                      {"tol", o.hmm.tol},
                      {"variance_floor", o.hmm.variance_floor}}}};

  // A clip whose model cannot be fitted is reported and dropped; the rest are rescored.
  std::optional<SimilarityMatrix> sim;
  while (features.size() >= 2 && !sim) {
    try {
      sim = similarity_matrix(features, SimilarityOptions{o.hmm, o.seed, SeedPolicy::kPerClip});
    } catch (const ClipError& e) {
      failures[e.clip_id()] = e.what();
      std::erase_if(features, [&](const MfccMatrix& m) { return m.clip_id == e.clip_id(); });
    }
  }

  write_mfcc_cache(dir / kMfccFile, features);
  write_metadata(dir / kMfccFile, "features", config);
  if (sim) {
    write_similarity_bin(dir / kSimilarityFile, *sim);
    write_similarity_csv(dir / kSimilarityCsv, *sim);
    write_metadata(dir / kSimilarityFile, "features", config);
    write_metadata(dir / kSimilarityCsv, "features", config);
  } else {
    fmt::print(err, "warning: fewer than 2 usable clips; no similarity matrix written\n");
  }

  fmt::print(out, "features: {} clips ok, {} failed\n", features.size(), failures.size());
  report_failures();
  return !failures.empty() && o.strict ? kExitPartial : kExitOk;
}

// ---------------------------------------------------------------------------
// label

struct LabelOpts {
  CommonOpts common;
  double threshold = kDefaultKlThreshold;
  std::vector<std::string> labels{"Male", "Female"};
  bool propagate_only = false;
  std::string serve;
  std::vector<std::string> assign;
  std::string import_classified;
  std::string static_dir;
};

std::vector<std::vector<std::string>> read_csv_rows(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw ConfigError("cannot read " + p.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::size_t start = 0;
    for (;;) {
      const auto comma = line.find(',', start);
      cells.push_back(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    rows.push_back(std::move(cells));
  }
  return rows;
}

int cmd_label(const LabelOpts& o, std::ostream& out, std::ostream& err) {
  apply_jobs(o.common.jobs);
  if (!(o.threshold > 0)) throw ConfigError("--threshold must be positive");
  const auto archive = open_archive(o.common.archive);
  const LabelSet label_set(o.labels);
  LabelStore store(archive.labels_path());
  const auto dir = o.common.derived();
  const json config{{"archive", o.common.archive}, {"out", dir.string()}, {"threshold", o.threshold},
                    {"labels", o.labels}};

  if (!o.import_classified.empty()) {
    const auto rows = read_csv_rows(o.import_classified);
    if (rows.empty() || rows[0].size() < 2 || rows[0][0] != "clip_id" || rows[0][1] != "label") {
      throw ConfigError(o.import_classified + ": expected a clip_id,label,... header");
    }
    std::size_t imported = 0, kept_manual = 0;
    for (std::size_t i = 1; i < rows.size(); ++i) {
      const auto& row = rows[i];
      if (row.size() < 2) throw ConfigError(fmt::format("{} line {}: too few fields", o.import_classified, i + 1));
      if (!archive.contains(row[0])) throw UnknownClip(row[0]);
      if (!label_set.contains(row[1])) throw UnknownLabel(row[1]);
      if (store.put(LabelRecord{row[0], row[1], LabelSource::kClassified, {}, std::nullopt})) {
        ++imported;
      } else {
        ++kept_manual;
      }
    }
    fmt::print(out, "label: imported {} classified labels, {} clips kept their manual label\n", imported,
               kept_manual);
    return kExitOk;
  }

  const auto mfcc_path = require_file(dir / kMfccFile, "run `escape features` first");
  auto signatures = load_signatures(mfcc_path, archive, err);

  if (o.propagate_only) {
    try {
      const auto r = propagate(signatures, store, o.threshold);
      fmt::print(out, "label: propagated {}, queued {}\n", r.newly_propagated, r.queued_ids.size());
    } catch (const BootstrapRequired& e) {
      fmt::print(err, "label: {}\n", e.what());
      return kExitError;
    }
    fs::create_directories(dir);
    write_metadata(dir / "label", "label", config);
    return kExitOk;
  }

  LabelSession session(archive, std::move(signatures), store, label_set, o.threshold);
  for (const auto& a : o.assign) {
    const auto colon = a.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == a.size()) {
      throw ConfigError("--assign expects <clip_id>:<label>, got '" + a + "'");
    }
    const auto r = session.submit_label(a.substr(0, colon), a.substr(colon + 1));
    fmt::print(out, "label: {} -> {}; auto-propagated {}, {} queued\n", a.substr(0, colon), a.substr(colon + 1),
               r.auto_propagated, r.remaining);
  }

  if (!o.serve.empty()) {
    const auto [host, port] = parse_bind_address(o.serve);
    std::optional<fs::path> static_dir;
    if (!o.static_dir.empty()) {
      static_dir = o.static_dir;
    } else if (const char* env = std::getenv("ESCAPE_UI_DIR"); env && fs::is_directory(env)) {
      static_dir = env;
    }
    LabelServer server(session, static_dir);
    const int bound = server.bind(host, port);
    fmt::print(out, "label: serving http://{}:{}/ ({} queued)\n", host, bound, session.stats().queued);
    out.flush();
    server.serve();
  }

  const auto s = session.stats();
  fmt::print(out, "label: manual {}, propagated {}, classified {}, queued {}, total {}\n", s.manual, s.propagated,
             s.classified, s.queued, s.total);
  fs::create_directories(dir);
  write_metadata(dir / "label", "label", config);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateOpts {
  CommonOpts common;
  int splits = 100;
  std::uint64_t seed = 0;
  double test_fraction = 0.33;
  int inner_folds = 3;
  std::vector<double> alpha_grid = default_alpha_grid();
  std::vector<std::string> labels{"Male", "Female"};
  int pca_components = 3;
};

int cmd_evaluate(const EvaluateOpts& o, std::ostream& out, std::ostream&) {
  apply_jobs(o.common.jobs);
  const auto archive = open_archive(o.common.archive);
  const LabelSet label_set(o.labels);
  const LabelStore store(archive.labels_path());
  const auto dir = o.common.derived();
  const auto sim = read_similarity_bin(require_file(dir / kSimilarityFile, "run `escape features` first"));
  const auto split = split_by_label(sim, store, label_set);

  NestedCvOptions cv;
  cv.n_repeats = o.splits;
  cv.inner_folds = o.inner_folds;
  cv.test_fraction = o.test_fraction;
  cv.alpha_grid = o.alpha_grid;
  cv.seed = o.seed;
  const auto reports = nested_cv_evaluate(sim, split.ids, split.classes, cv);

  for (const auto& r : reports) {
    const std::set<std::string> test(r.test_ids.begin(), r.test_ids.end());
    for (const auto& c : r.feature_column_ids) {
      if (test.contains(c)) throw Error(fmt::format("split {} used test column '{}'", r.split_index, c));
    }
  }

  const auto summary = summarize(reports);
  const json config{{"archive", o.common.archive}, {"out", dir.string()},
                    {"splits", o.splits},          {"seed", o.seed},
                    {"test_fraction", o.test_fraction}, {"inner_folds", o.inner_folds},
                    {"alpha_grid", o.alpha_grid},  {"labels", o.labels},
                    {"jobs", o.common.jobs},       {"labeled_clips", split.ids.size()}};
  fs::create_directories(dir);
  write_evaluation_csv(dir / "evaluation.csv", reports);
  write_summary_csv(dir / "evaluation_summary.csv", summary);
  write_metadata(dir / "evaluation.csv", "evaluate", config);
  write_metadata(dir / "evaluation_summary.csv", "evaluate", config);

  // Projection of the standardized labeled block, for plotting.
  const auto block = sim.restrict_to(split.ids);
  const int k = std::min<int>(o.pca_components, static_cast<int>(std::min(block.scores.rows(), block.scores.cols())));
  if (k > 0) {
    const auto p = pca(standardize_apply(standardize_fit(block.scores), block.scores), k);
    auto f = open_out(dir / "pca.csv");
    f << "clip_id,label";
    for (int c = 0; c < k; ++c) f << ",pc" << c + 1;
    f << '\n';
    for (std::size_t i = 0; i < split.ids.size(); ++i) {
      f << split.ids[i] << ',' << label_set.from_class(split.classes[i]);
      for (int c = 0; c < k; ++c) f << ',' << num(p.projections(static_cast<Eigen::Index>(i), c));
      f << '\n';
    }
    f << "# explained_variance_ratio";
    for (int c = 0; c < k; ++c) f << ',' << num(p.explained_variance_ratio(c));
    f << '\n';
    f.close();
    write_metadata(dir / "pca.csv", "evaluate", config);
  }

  fmt::print(out, "evaluate: {} labeled clips, {} repeats\n", split.ids.size(), summary.n_repeats);
  fmt::print(out, "  median train accuracy {:.4f}, median test accuracy {:.4f}\n", summary.median_train_accuracy,
             summary.median_test_accuracy);
  fmt::print(out, "  mean train accuracy {:.4f}, mean test accuracy {:.4f}\n", summary.mean_train_accuracy,
             summary.mean_test_accuracy);
  fmt::print(out, "  perfect test splits {}/{}\n", summary.perfect_test_splits, summary.n_repeats);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// classify

struct ClassifyOpts {
  CommonOpts common;
  std::uint64_t seed = 0;
  int inner_folds = 3;
  std::vector<double> alpha_grid = default_alpha_grid();
  std::vector<std::string> labels{"Male", "Female"};
};

int cmd_classify(const ClassifyOpts& o, std::ostream& out, std::ostream&) {
  apply_jobs(o.common.jobs);
  const auto archive = open_archive(o.common.archive);
  const LabelSet label_set(o.labels);
  const LabelStore store(archive.labels_path());
  const auto dir = o.common.derived();
  const auto sim = read_similarity_bin(require_file(dir / kSimilarityFile, "run `escape features` first"));
  const auto split = split_by_label(sim, store, label_set);

  const auto fc =
      train_final_and_classify(sim, split.ids, split.classes, split.unlabeled, o.alpha_grid, o.inner_folds, o.seed);

  const json config{{"archive", o.common.archive}, {"out", dir.string()},       {"seed", o.seed},
                    {"inner_folds", o.inner_folds}, {"alpha_grid", o.alpha_grid}, {"labels", o.labels},
                    {"jobs", o.common.jobs}};
  fs::create_directories(dir);
  {
    auto f = open_out(dir / kClassifiedFile);
    f << "clip_id,label,decision\n";
    for (const auto& c : fc.predictions) f << c.clip_id << ',' << label_set.from_class(c.label) << ',' << num(c.decision) << '\n';
  }
  {
    auto f = open_out(dir / "classify_summary.csv");
    f << "metric,value\n";
    f << "chosen_alpha," << num(fc.model.solution.alpha) << '\n';
    f << "labeled_clips," << split.ids.size() << '\n';
    f << "classified_clips," << fc.predictions.size() << '\n';
    for (std::size_t i = 0; i < o.alpha_grid.size(); ++i) {
      f << "cv_accuracy_alpha_" << num(o.alpha_grid[i]) << ',' << num(fc.alpha_cv_accuracy[i]) << '\n';
    }
  }
  write_metadata(dir / kClassifiedFile, "classify", config);
  write_metadata(dir / "classify_summary.csv", "classify", config);

  std::map<std::string, std::size_t> per_label;
  for (const auto& c : fc.predictions) ++per_label[label_set.from_class(c.label)];
  fmt::print(out, "classify: {} clips classified with alpha {} ({} labeled)\n", fc.predictions.size(),
             num(fc.model.solution.alpha), split.ids.size());
  for (const auto& [l, n] : per_label) fmt::print(out, "  {} {}\n", l, n);
  fmt::print(out, "  import with: escape label --archive {} --import-classified {}\n", o.common.archive,
             (dir / kClassifiedFile).string());
  return kExitOk;
}

// ---------------------------------------------------------------------------
// report

struct ReportOpts {
  CommonOpts common;
  std::string speaker;
  std::string format = "table";
  std::vector<std::string> labels{"Male", "Female"};
};

int cmd_report(const ReportOpts& o, std::ostream& out, std::ostream&) {
  const auto archive = open_archive(o.common.archive);
  const LabelSet label_set(o.labels);
  const LabelStore store(archive.labels_path());
  const std::optional<std::string> speaker = o.speaker.empty() ? std::nullopt : std::optional(o.speaker);
  const auto rep = usage_report(archive, store, label_set, speaker);
  if (o.format == "table") {
    print_report(out, rep);
    return kExitOk;
  }
  const auto dir = o.common.out.empty() ? fs::path(o.common.archive) / "derived" / "report" : fs::path(o.common.out);
  const json config{{"archive", o.common.archive}, {"out", dir.string()}, {"speaker", o.speaker},
                    {"format", o.format},          {"labels", o.labels}};
  for (const auto& p : write_report_csv(dir, rep)) {
    write_metadata(p, "report", config);
    fmt::print(out, "{}\n", p.string());
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// validate

struct ValidateOpts {
  CommonOpts common;
  std::vector<std::string> labels{"Male", "Female"};
  int sample_rate = 16000;
};

int cmd_validate(const ValidateOpts& o, std::ostream& out, std::ostream& err) {
  const auto archive = open_archive(o.common.archive);
  const LabelSet label_set(o.labels);
  const LabelStore store(archive.labels_path());
  std::size_t problems = 0, audio = 0, rate_mismatch = 0;
  for (const auto& r : archive.records()) {
    const auto path = archive.audio_path(r);
    if (!path) continue;
    ++audio;
    try {
      const auto clip = read_wav(*path);
      if (clip.sample_rate != o.sample_rate) {
        ++rate_mismatch;
        fmt::print(err, "warning: {} is {} Hz, features expect {} Hz\n", r.id, clip.sample_rate, o.sample_rate);
      }
    } catch (const Error& e) {
      ++problems;
      fmt::print(err, "error: audio of {}: {}\n", r.id, e.what());
    }
  }
  for (const auto& [id, rec] : store.records()) {
    if (!archive.contains(id)) {
      ++problems;
      fmt::print(err, "error: label for unknown clip '{}'\n", id);
    }
    if (!label_set.contains(rec.label)) {
      ++problems;
      fmt::print(err, "error: clip '{}' has label '{}' outside the label set\n", id, rec.label);
    }
  }
  fmt::print(out, "validate: {} records, {} audio files, {} labels, {} rate warnings, {} problems\n",
             archive.size(), audio, store.records().size(), rate_mismatch, problems);
  return problems ? kExitError : kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Voice-assistant interaction archive toolkit", "escape"};
  app.set_version_flag("--version", version());
  app.require_subcommand(1);

  ScrapeOpts scrape_o;
  auto* scrape_cmd = app.add_subcommand("scrape", "Page through the activity listing and fill the archive");
  add_common(scrape_cmd, scrape_o.common);
  scrape_cmd->add_option("--base-url", scrape_o.base_url, "Service root, http(s)://host[:port][/prefix]")->required();
  scrape_cmd->add_option("--cookie-file", scrape_o.cookie_file, "File holding the Cookie header (else $ESCAPE_COOKIE)");
  scrape_cmd->add_option("--page-size", scrape_o.page_size)->check(CLI::PositiveNumber);
  scrape_cmd->add_option("--list-template", scrape_o.list_template, "Listing path with {offset} and {size}");
  scrape_cmd->add_option("--audio-template", scrape_o.audio_template, "Audio path with {id}");
  scrape_cmd->add_option("--max-retries", scrape_o.max_retries)->check(CLI::NonNegativeNumber);
  scrape_cmd->add_option("--backoff-ms", scrape_o.backoff_ms)->check(CLI::NonNegativeNumber);
  scrape_cmd->add_option("--timeout", scrape_o.timeout_s, "Per-request timeout, seconds")->check(CLI::PositiveNumber);

  FeaturesOpts feat_o;
  auto* feat_cmd = app.add_subcommand("features", "MFCC cache and HMM similarity matrix");
  add_common(feat_cmd, feat_o.common);
  feat_cmd->add_option("--seed", feat_o.seed, "Run-level seed for HMM initialization");
  feat_cmd->add_flag("--strict", feat_o.strict, "Nonzero exit when any clip fails");
  feat_cmd->add_option("--window-length", feat_o.mfcc.window_length, "Seconds");
  feat_cmd->add_option("--window-step", feat_o.mfcc.window_step, "Seconds");
  feat_cmd->add_option("--n-filters", feat_o.mfcc.n_filters);
  feat_cmd->add_option("--n-cepstra", feat_o.mfcc.n_cepstra);
  feat_cmd->add_option("--fft-size", feat_o.mfcc.fft_size);
  feat_cmd->add_option("--pre-emphasis", feat_o.mfcc.pre_emphasis);
  feat_cmd->add_option("--lifter", feat_o.mfcc.lifter);
  feat_cmd->add_option("--max-duration", feat_o.mfcc.max_duration, "Seconds; longer clips are truncated");
  feat_cmd->add_option("--hmm-states", feat_o.hmm.n_states)->check(CLI::PositiveNumber);
  feat_cmd->add_option("--hmm-max-iter", feat_o.hmm.max_iter)->check(CLI::PositiveNumber);
  feat_cmd->add_option("--hmm-tol", feat_o.hmm.tol)->check(CLI::PositiveNumber);

  LabelOpts label_o;
  auto* label_cmd = app.add_subcommand("label", "KL label propagation and the labeling server");
  add_common(label_cmd, label_o.common);
  label_cmd->add_option("--threshold", label_o.threshold, "Symmetric KL threshold (strict)");
  label_cmd->add_option("--labels", label_o.labels, "The two speaker labels")->delimiter(',')->expected(2);
  auto* prop_flag = label_cmd->add_flag("--propagate-only", label_o.propagate_only, "One propagation pass, then exit");
  auto* serve_opt = label_cmd->add_option("--serve", label_o.serve, "Serve the labeling API on host:port");
  auto* assign_opt = label_cmd->add_option("--assign", label_o.assign, "Manual label <clip_id>:<label>");
  auto* import_opt =
      label_cmd->add_option("--import-classified", label_o.import_classified, "Import a classify output file");
  label_cmd->add_option("--static", label_o.static_dir, "Directory of UI assets to serve at /");
  prop_flag->excludes(serve_opt)->excludes(assign_opt)->excludes(import_opt);
  import_opt->excludes(serve_opt)->excludes(assign_opt);

  EvaluateOpts eval_o;
  auto* eval_cmd = app.add_subcommand("evaluate", "Nested cross-validation over the labeled clips");
  add_common(eval_cmd, eval_o.common);
  eval_cmd->add_option("--splits", eval_o.splits, "Outer repeats")->check(CLI::PositiveNumber);
  eval_cmd->add_option("--seed", eval_o.seed);
  eval_cmd->add_option("--test-fraction", eval_o.test_fraction)->check(CLI::Range(0.0, 1.0));
  eval_cmd->add_option("--inner-folds", eval_o.inner_folds)->check(CLI::Range(2, 1000));
  eval_cmd->add_option("--alpha-grid", eval_o.alpha_grid, "Comma-separated ridge strengths")->delimiter(',');
  eval_cmd->add_option("--labels", eval_o.labels)->delimiter(',')->expected(2);

  ClassifyOpts cls_o;
  auto* cls_cmd = app.add_subcommand("classify", "Fit on labeled clips and classify the rest");
  add_common(cls_cmd, cls_o.common);
  cls_cmd->add_option("--seed", cls_o.seed);
  cls_cmd->add_option("--inner-folds", cls_o.inner_folds)->check(CLI::Range(2, 1000));
  cls_cmd->add_option("--alpha-grid", cls_o.alpha_grid)->delimiter(',');
  cls_cmd->add_option("--labels", cls_o.labels)->delimiter(',')->expected(2);

  ReportOpts rep_o;
  auto* rep_cmd = app.add_subcommand("report", "Status, device and intent counts");
  add_common(rep_cmd, rep_o.common);
  rep_cmd->add_option("--speaker", rep_o.speaker, "Restrict intent counts to one label");
  rep_cmd->add_option("--format", rep_o.format)->check(CLI::IsMember({"table", "csv"}));
  rep_cmd->add_option("--labels", rep_o.labels)->delimiter(',')->expected(2);

  ValidateOpts val_o;
  auto* val_cmd = app.add_subcommand("validate", "Check archive, audio and labels");
  add_common(val_cmd, val_o.common, false);
  val_cmd->add_option("--labels", val_o.labels)->delimiter(',')->expected(2);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*scrape_cmd) return cmd_scrape(scrape_o, out, err);
    if (*feat_cmd) return cmd_features(feat_o, out, err);
    if (*label_cmd) return cmd_label(label_o, out, err);
    if (*eval_cmd) return cmd_evaluate(eval_o, out, err);
    if (*cls_cmd) return cmd_classify(cls_o, out, err);
    if (*rep_cmd) return cmd_report(rep_o, out, err);
    if (*val_cmd) return cmd_validate(val_o, out, err);
  } catch (const std::exception& e) {
    fmt::print(err, "error: {}\n", e.what());
    return kExitError;
  }
  return kExitUsage;
}

}  // namespace escape
