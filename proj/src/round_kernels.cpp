// Per-environment round kernels. The OpenMP paths and the serial reference
// must produce identical bits: each environment's work depends only on its
// inputs and its own seed, and every reduction runs serially in env order.

#include <exception>
#include <set>

#include "fedq/orchestrator.hpp"

namespace fedq {

namespace {

void check_selection(std::span<const std::size_t> selected, std::size_t environments) {
  if (selected.empty()) throw Error(ErrorCode::ConfigInvalid, "selection is empty");
  std::set<std::size_t> seen;
  for (auto t : selected) {
    if (t >= environments) throw Error(ErrorCode::ConfigInvalid, "selected environment id out of range");
    if (!seen.insert(t).second) throw Error(ErrorCode::ConfigInvalid, "selected environment ids repeat");
  }
}

// Runs fn(i) for i in [0, n), optionally across OpenMP threads, and rethrows
// the first failure (by index) on the calling thread.
template <typename Fn>
void for_each_env(std::size_t n, bool parallel, Fn&& fn) {
  std::vector<std::exception_ptr> errors(n);
  if (parallel) {
#pragma omp parallel for schedule(dynamic)
    for (std::size_t i = 0; i < n; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

void commit_round(std::span<const std::size_t> selected, std::vector<LocalUpdate>& updates, FederationState& state,
                  const std::vector<EnvironmentShard>& shards) {
  for (std::size_t i = 0; i < selected.size(); ++i) {
    const auto t = selected[i];
    auto row = state.pi.row(t);
    std::copy(updates[i].pi.begin(), updates[i].pi.end(), row.begin());
    state.local[t] = std::move(updates[i].theta);
    ++state.upload_events;
  }
  for (std::size_t m = 0; m < state.theta.size(); ++m) {
    std::vector<Contribution> contribs;
    contribs.reserve(selected.size());
    for (auto t : selected) contribs.push_back({t, &state.local[t][m], shards[t].n_train()});
    state.theta[m] = aggregate(std::move(contribs));
    ++state.aggregation_calls;
  }
  ++state.rounds;
}

void em_round_impl(std::span<const std::size_t> selected, FederationState& state,
                   const std::vector<EnvironmentShard>& shards, const LearnerConfig& cfg, std::uint64_t root_seed,
                   bool parallel) {
  check_selection(selected, shards.size());
  std::vector<LocalUpdate> updates(selected.size());
  const auto& theta = state.theta;
  const auto& pi = state.pi;
  const std::size_t round = state.rounds;
  for_each_env(selected.size(), parallel, [&](std::size_t i) {
    const auto t = selected[i];
    updates[i] = local_update(shards[t], theta, pi.row(t), cfg, root_seed, round);
  });
  commit_round(selected, updates, state, shards);
}

EvalResult evaluate_impl(const std::vector<EnvironmentShard>& shards, const MixtureWeights& pi, double threshold,
                         bool parallel, const std::function<const ComponentSet&(std::size_t)>& components) {
  if (pi.rows != shards.size()) throw Error(ErrorCode::DimensionMismatch, "one Pi row per environment required");
  struct Counts {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  };
  std::vector<Counts> counts(shards.size());
  for_each_env(shards.size(), parallel, [&](std::size_t t) {
    const auto& theta = components(t);
    auto& c = counts[t];
    for (const auto& r : shards[t].test) {
      const int yhat = mixture_label(r.features, theta, pi.row(t), threshold);
      if (yhat == 1) (r.label == 1 ? c.tp : c.fp)++;
      else (r.label == 1 ? c.fn : c.tn)++;
    }
  });
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::vector<std::optional<double>> per_env(shards.size());
  for (std::size_t t = 0; t < shards.size(); ++t) {
    const auto& c = counts[t];
    tp += c.tp;
    fp += c.fp;
    tn += c.tn;
    fn += c.fn;
    const auto total = c.tp + c.fp + c.tn + c.fn;
    if (total > 0) per_env[t] = static_cast<double>(c.tp + c.tn) / static_cast<double>(total);
  }
  auto out = confusion_metrics(tp, fp, tn, fn);
  out.per_env = std::move(per_env);
  return out;
}

}  // namespace

std::uint64_t minibatch_seed(std::uint64_t root, std::size_t round, std::size_t env, std::size_t m) {
  return derive_seed(stream_seed(root, SeedStream::Minibatch), round, env, m);
}

FederationState init_federation(std::size_t d, std::size_t environments, std::size_t M, const LearnerConfig& cfg,
                                std::uint64_t learner_seed) {
  FederationState s;
  s.theta = init_components(d, cfg.hidden_units, M, learner_seed);
  s.pi = MixtureWeights::uniform(environments, M);
  s.local.assign(environments, s.theta);
  return s;
}

LocalUpdate local_update(const EnvironmentShard& shard, const ComponentSet& theta, std::span<const double> pi,
                         const LearnerConfig& cfg, std::uint64_t root_seed, std::size_t round) {
  LocalUpdate out;
  const auto q = e_step(shard, theta, pi);
  out.pi = m_step_pi(q);
  out.theta.components.reserve(theta.size());
  for (std::size_t m = 0; m < theta.size(); ++m) {
    try {
      out.theta.components.push_back(
          m_step_theta(shard, q, theta[m], m, cfg, minibatch_seed(root_seed, round, shard.env_id, m)));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::ZeroTotalWeight) throw;
      out.theta.components.push_back(theta[m]);
    }
  }
  return out;
}

void em_round(std::span<const std::size_t> selected, FederationState& state,
              const std::vector<EnvironmentShard>& shards, const LearnerConfig& cfg, std::uint64_t root_seed,
              bool parallel) {
  em_round_impl(selected, state, shards, cfg, root_seed, parallel);
}

void em_round_serial(std::span<const std::size_t> selected, FederationState& state,
                     const std::vector<EnvironmentShard>& shards, const LearnerConfig& cfg, std::uint64_t root_seed) {
  check_selection(selected, shards.size());
  std::vector<LocalUpdate> updates;
  updates.reserve(selected.size());
  for (auto t : selected)
    updates.push_back(local_update(shards[t], state.theta, state.pi.row(t), cfg, root_seed, state.rounds));
  commit_round(selected, updates, state, shards);
}

void local_round(std::span<const std::size_t> selected, FederationState& state,
                 const std::vector<EnvironmentShard>& shards, const LearnerConfig& cfg, std::uint64_t root_seed,
                 bool parallel) {
  check_selection(selected, shards.size());
  const std::size_t round = state.rounds;
  for_each_env(selected.size(), parallel, [&](std::size_t i) {
    const auto t = selected[i];
    auto& model = state.local[t];
    const std::vector<double> ones(shards[t].train.size(), 1.0);
    for (std::size_t m = 0; m < model.size(); ++m)
      model[m] = local_sgd(model[m], shards[t].train, ones, cfg, minibatch_seed(root_seed, round, t, m));
  });
  ++state.rounds;
}

EvalResult confusion_metrics(std::size_t tp, std::size_t fp, std::size_t tn, std::size_t fn) {
  EvalResult r;
  r.tp = tp;
  r.fp = fp;
  r.tn = tn;
  r.fn = fn;
  const auto total = tp + fp + tn + fn;
  r.accuracy = total ? static_cast<double>(tp + tn) / static_cast<double>(total) : 0.0;
  r.tpr = (tp + fn) ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  r.fpr = (fp + tn) ? static_cast<double>(fp) / static_cast<double>(fp + tn) : 0.0;
  return r;
}

EvalResult evaluate(const ComponentSet& theta, const MixtureWeights& pi, const std::vector<EnvironmentShard>& shards,
                    double threshold, bool parallel) {
  return evaluate_impl(shards, pi, threshold, parallel, [&](std::size_t) -> const ComponentSet& { return theta; });
}

EvalResult evaluate_local(const std::vector<ComponentSet>& local, const MixtureWeights& pi,
                          const std::vector<EnvironmentShard>& shards, double threshold, bool parallel) {
  if (local.size() != shards.size()) throw Error(ErrorCode::DimensionMismatch, "one local model per environment");
  return evaluate_impl(shards, pi, threshold, parallel,
                       [&](std::size_t t) -> const ComponentSet& { return local[t]; });
}

}  // namespace fedq
