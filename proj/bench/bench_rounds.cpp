// OpenMP round kernels against their serial forms on one synthetic federation.

#include <benchmark/benchmark.h>

#include <map>
#include <numeric>

#include "fedq/orchestrator.hpp"

using namespace fedq;

namespace {

struct Setup {
  std::vector<EnvironmentShard> shards;
  LearnerConfig cfg;
  FederationState state;
  std::vector<std::size_t> all;

  explicit Setup(std::size_t T) {
    auto res = synth_mixture(rotated_boundary_config(8, 10000, 1.0, 3));
    PartitionConfig pc;
    pc.num_environments = T;
    pc.seed = 3;
    shards = partition_mixture(res.dataset, res.clusters, pc);
    cfg.hidden_units = 32;
    cfg.local_steps = 10;
    state = init_federation(8, T, 2, cfg, 1);
    all.resize(T);
    std::iota(all.begin(), all.end(), 0);
  }
};

Setup& setup(std::size_t T) {
  static std::map<std::size_t, Setup> cache;
  return cache.try_emplace(T, T).first->second;
}

void BM_em_round_parallel(benchmark::State& st) {
  auto& s = setup(st.range(0));
  for (auto _ : st) {
    auto state = s.state;
    em_round(s.all, state, s.shards, s.cfg, 9, true);
    benchmark::DoNotOptimize(state.theta);
  }
}

void BM_em_round_serial(benchmark::State& st) {
  auto& s = setup(st.range(0));
  for (auto _ : st) {
    auto state = s.state;
    em_round_serial(s.all, state, s.shards, s.cfg, 9);
    benchmark::DoNotOptimize(state.theta);
  }
}

void BM_evaluate(benchmark::State& st) {
  auto& s = setup(100);
  const bool parallel = st.range(0);
  for (auto _ : st) benchmark::DoNotOptimize(evaluate(s.state.theta, s.state.pi, s.shards, 0.5, parallel));
  st.SetLabel(parallel ? "openmp" : "serial");
}

}  // namespace

BENCHMARK(BM_em_round_parallel)->Arg(20)->Arg(100)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_em_round_serial)->Arg(20)->Arg(100)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_evaluate)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
