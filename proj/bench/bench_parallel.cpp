// Serial reference vs OpenMP kernel for the three parallel stages.

#include <benchmark/benchmark.h>

#include <fmt/format.h>

#include "escape/learn.hpp"
#include "escape/mfcc.hpp"
#include "escape/similarity.hpp"
#include "support.hpp"

namespace {

using namespace escape;

std::vector<AudioClip> clips(int n) {
  std::vector<AudioClip> out;
  for (int i = 0; i < n; ++i) {
    const auto v = i % 2 ? testing::Voice::kFemale : testing::Voice::kMale;
    out.push_back(testing::synth_voice(v, 900 + static_cast<std::uint64_t>(i), 1.6, 16000, fmt::format("b{:03d}", i)));
  }
  return out;
}

std::vector<MfccMatrix> features(int n) {
  std::vector<MfccMatrix> out;
  for (auto& o : compute_mfcc_batch_serial(clips(n))) out.push_back(std::move(*o.mfcc));
  return out;
}

void BM_MfccBatchSerial(benchmark::State& state) {
  const auto c = clips(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(compute_mfcc_batch_serial(c));
}

void BM_MfccBatchParallel(benchmark::State& state) {
  const auto c = clips(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(compute_mfcc_batch(c));
}

void BM_SimilaritySerial(benchmark::State& state) {
  const auto f = features(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(similarity_matrix_serial(f, {}));
}

void BM_SimilarityParallel(benchmark::State& state) {
  const auto f = features(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(similarity_matrix(f, {}));
}

struct CvInput {
  SimilarityMatrix sim;
  std::vector<int> labels;
};

const CvInput& cv_input() {
  static const CvInput in = [] {
    CvInput r;
    const auto f = features(40);
    r.sim = similarity_matrix(f, {});
    for (int i = 0; i < 40; ++i) r.labels.push_back(i % 2 ? -1 : 1);
    return r;
  }();
  return in;
}

void BM_NestedCvSerial(benchmark::State& state) {
  const auto& in = cv_input();
  NestedCvOptions o;
  o.n_repeats = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(nested_cv_evaluate_serial(in.sim, in.sim.clip_ids, in.labels, o));
}

void BM_NestedCvParallel(benchmark::State& state) {
  const auto& in = cv_input();
  NestedCvOptions o;
  o.n_repeats = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(nested_cv_evaluate(in.sim, in.sim.clip_ids, in.labels, o));
}

}  // namespace

BENCHMARK(BM_MfccBatchSerial)->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MfccBatchParallel)->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SimilaritySerial)->Arg(24)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SimilarityParallel)->Arg(24)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_NestedCvSerial)->Arg(20)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_NestedCvParallel)->Arg(20)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
