#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedq/data.hpp"
#include "fedq/dqn.hpp"
#include "fedq/fedem.hpp"
#include "fedq/mlp.hpp"
#include "fedq/pca.hpp"

namespace fedq {

enum class StrategyKind { Fedq, Random, Full, FedAvg, LocalOnly };

struct Strategy {
  StrategyKind kind = StrategyKind::Full;
  std::size_t select_n = 0;  // fedq / random only

  /// "fedq30", "fedq:30", "random50", "full", "fedavg", "local".
  static Strategy parse(const std::string& text);
  std::string name() const;
  bool operator==(const Strategy&) const = default;
};

struct RunConfig {
  Strategy strategy;
  std::size_t rounds = 50;  // K
  std::size_t mixtures = 2;  // M; forced to 1 for fedavg and local
  double target_accuracy = 0.9;  // A
  double threshold = 0.5;
  LearnerConfig learner;
  DqnConfig dqn;
  PartitionConfig partition;
  std::uint64_t seed = 0;
  bool parallel = true;
  bool wall_clock = true;  // false reports zero elapsed times

  std::size_t effective_mixtures() const;
  void validate(std::size_t environments) const;
};

struct RoundMetrics {
  std::size_t round = 0;  // 0 is the initialisation round
  double accuracy = 0.0;
  double tpr = 0.0;
  double fpr = 0.0;
  double objective = 0.0;  // global negative log-likelihood on training data
  std::vector<std::optional<double>> per_env_accuracy;
  std::vector<std::size_t> selected;
  double elapsed_ms = 0.0;
  double cumulative_ms = 0.0;
  std::optional<double> reward;  // issued by the fedq agent only
};

struct EvalResult {
  double accuracy = 0.0;
  double tpr = 0.0;
  double fpr = 0.0;
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::vector<std::optional<double>> per_env;
};

/// Mutable federation state owned by the coordinator.
struct FederationState {
  ComponentSet theta;
  MixtureWeights pi;
  std::vector<ComponentSet> local;  // last upload (or private model) per environment
  std::size_t upload_events = 0;
  std::size_t aggregation_calls = 0;
  std::size_t rounds = 0;
};

FederationState init_federation(std::size_t d, std::size_t environments, std::size_t M, const LearnerConfig& cfg,
                                std::uint64_t learner_seed);

// Seed of the local solver for (round, environment, component).
std::uint64_t minibatch_seed(std::uint64_t root, std::size_t round, std::size_t env, std::size_t m);

struct LocalUpdate {
  std::vector<double> pi;
  ComponentSet theta;
};

/// One environment's work in a round: E-step, mixture-weight update and a
/// local solve per component, all starting from the broadcast `theta`.
LocalUpdate local_update(const EnvironmentShard& shard, const ComponentSet& theta, std::span<const double> pi,
                         const LearnerConfig& cfg, std::uint64_t root_seed, std::size_t round);

/// Local updates for the selected environments followed by per-component
/// aggregation weighted by n_t over the selection. Rows of Pi and local
/// caches outside the selection are left untouched. The parallel form fans
/// environments out with OpenMP and produces the same bits as the serial one.
void em_round(std::span<const std::size_t> selected, FederationState& state,
              const std::vector<EnvironmentShard>& shards, const LearnerConfig& cfg, std::uint64_t root_seed,
              bool parallel = true);
void em_round_serial(std::span<const std::size_t> selected, FederationState& state,
                     const std::vector<EnvironmentShard>& shards, const LearnerConfig& cfg, std::uint64_t root_seed);

/// Private training for local_only: each selected environment continues from
/// its own model with unit weights; no aggregation happens.
void local_round(std::span<const std::size_t> selected, FederationState& state,
                 const std::vector<EnvironmentShard>& shards, const LearnerConfig& cfg, std::uint64_t root_seed,
                 bool parallel = true);

/// Scores every test shard with its own Pi row; pooled confusion counts.
EvalResult evaluate(const ComponentSet& theta, const MixtureWeights& pi, const std::vector<EnvironmentShard>& shards,
                    double threshold = 0.5, bool parallel = true);
/// Same, but environment t is scored with its own components local[t].
EvalResult evaluate_local(const std::vector<ComponentSet>& local, const MixtureWeights& pi,
                          const std::vector<EnvironmentShard>& shards, double threshold = 0.5, bool parallel = true);

EvalResult confusion_metrics(std::size_t tp, std::size_t fp, std::size_t tn, std::size_t fn);

struct RunResult {
  RunConfig config;
  std::vector<RoundMetrics> metrics;
  std::optional<std::size_t> rounds_to_target;
  std::optional<double> ms_to_target;
  double max_accuracy = 0.0;
  FederationState final_state;
  std::optional<PcaProjection> projection;
  std::optional<DqnAgent> agent;
  std::vector<std::size_t> selection_counts;  // per environment, rounds 1..K
};

struct RunHooks {
  std::function<void(const RoundMetrics&, const FederationState&)> on_round;
};

/// The full procedure: initialisation round over every environment, PCA fit
/// for fedq, then K rounds of selection, EM round, evaluation and (fedq) one
/// replay-sampled TD step per round.
RunResult run(const RunConfig& cfg, const std::vector<EnvironmentShard>& shards, const RunHooks& hooks = {});

struct Quartiles {
  double q25 = 0.0, median = 0.0, q75 = 0.0;
};
/// Linear-interpolated quartiles; infinities sort last.
Quartiles quartiles(std::vector<double> values);

struct CompareRow {
  std::string strategy;
  std::size_t repeats = 0;
  Quartiles max_accuracy;
  Quartiles rounds_to_target;  // +inf when the target was not reached
  Quartiles ms_to_target;
  std::size_t target_hits = 0;
  std::vector<RunResult> runs;
};

/// Runs every config with seeds cfg.seed + r for r in [0, repeats).
std::vector<CompareRow> compare(const std::vector<RunConfig>& configs, const std::vector<EnvironmentShard>& shards,
                                std::size_t repeats);

// Output files. All writes go through a temporary and a rename.
std::string metrics_csv(const std::vector<RoundMetrics>& metrics);
std::string round_json_line(const RoundMetrics& m);
std::string summary_json(const RunResult& result);
std::string compare_csv(const std::vector<CompareRow>& rows);
/// "round accuracy tpr fpr" per line, medians across repeats, no header.
std::string series_text(const CompareRow& row);
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace fedq
