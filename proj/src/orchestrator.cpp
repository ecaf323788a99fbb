#include "fedq/orchestrator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

namespace fedq {

Strategy Strategy::parse(const std::string& text) {
  std::string s;
  for (char c : text)
    if (c != ':' && c != '_' && c != '-') s.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  auto with_n = [&](const std::string& prefix, StrategyKind kind) -> std::optional<Strategy> {
    if (s.rfind(prefix, 0) != 0) return std::nullopt;
    const auto digits = s.substr(prefix.size());
    Strategy st{kind, 0};
    if (digits.empty()) return st;
    if (!std::all_of(digits.begin(), digits.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
      throw Error(ErrorCode::ConfigInvalid, "bad strategy '" + text + "'");
    st.select_n = std::stoul(digits);
    return st;
  };
  if (s == "full") return {StrategyKind::Full, 0};
  if (s == "fedavg") return {StrategyKind::FedAvg, 0};
  if (s == "local" || s == "localonly") return {StrategyKind::LocalOnly, 0};
  if (auto st = with_n("fedq", StrategyKind::Fedq)) return *st;
  if (auto st = with_n("random", StrategyKind::Random)) return *st;
  throw Error(ErrorCode::ConfigInvalid, "unknown strategy '" + text + "'");
}

std::string Strategy::name() const {
  switch (kind) {
    case StrategyKind::Fedq: return "fedq" + std::to_string(select_n);
    case StrategyKind::Random: return "random" + std::to_string(select_n);
    case StrategyKind::Full: return "full";
    case StrategyKind::FedAvg: return "fedavg";
    case StrategyKind::LocalOnly: return "local";
  }
  return "unknown";
}

std::size_t RunConfig::effective_mixtures() const {
  return (strategy.kind == StrategyKind::FedAvg || strategy.kind == StrategyKind::LocalOnly) ? 1 : mixtures;
}

void RunConfig::validate(std::size_t environments) const {
  if (rounds < 1) throw Error(ErrorCode::ConfigInvalid, "rounds must be >= 1");
  if (mixtures < 1) throw Error(ErrorCode::ConfigInvalid, "mixtures must be >= 1");
  if (!(target_accuracy > 0.0 && target_accuracy <= 1.0))
    throw Error(ErrorCode::ConfigInvalid, "target accuracy must lie in (0, 1]");
  if (!(threshold > 0.0 && threshold < 1.0)) throw Error(ErrorCode::ConfigInvalid, "threshold must lie in (0, 1)");
  if (environments < 1) throw Error(ErrorCode::ConfigInvalid, "no environments");
  learner.validate();
  if (strategy.kind == StrategyKind::Fedq || strategy.kind == StrategyKind::Random) {
    if (strategy.select_n < 1 || strategy.select_n > environments)
      throw Error(ErrorCode::ConfigInvalid, "selection size must lie in [1, T] for " + strategy.name());
  }
  if (strategy.kind == StrategyKind::Fedq) {
    DqnConfig d = dqn;
    d.select_n = strategy.select_n;
    d.target_accuracy = target_accuracy;
    d.validate(environments);
  }
}

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

bool finite_state(const FederationState& s) {
  for (const auto& c : s.theta.components)
    if (!all_finite(c)) return false;
  return std::all_of(s.pi.data.begin(), s.pi.data.end(), [](double v) { return std::isfinite(v); });
}

double local_only_objective(const FederationState& s, const std::vector<EnvironmentShard>& shards) {
  std::size_t n = 0;
  for (const auto& sh : shards) n += sh.train.size();
  double out = 0.0;
  for (std::size_t t = 0; t < shards.size(); ++t)
    out += static_cast<double>(shards[t].train.size()) / static_cast<double>(n) *
           local_nll(shards[t], s.local[t], s.pi.row(t));
  return out;
}

}  // namespace

RunResult run(const RunConfig& cfg_in, const std::vector<EnvironmentShard>& shards, const RunHooks& hooks) {
  const std::size_t T = shards.size();
  cfg_in.validate(T);
  for (const auto& s : shards)
    if (s.train.empty()) throw Error(ErrorCode::ConfigInvalid, "environment " + std::to_string(s.env_id) + " has no training data");

  RunConfig cfg = cfg_in;
  const std::uint64_t root = cfg.seed;
  cfg.learner.seed = stream_seed(root, SeedStream::Learner);
  cfg.dqn.seed = stream_seed(root, SeedStream::Dqn);
  cfg.dqn.select_n = cfg.strategy.select_n;
  cfg.dqn.target_accuracy = cfg.target_accuracy;

  const auto kind = cfg.strategy.kind;
  const bool local_only = kind == StrategyKind::LocalOnly;
  const std::size_t M = cfg.effective_mixtures();
  const std::size_t d = shards.front().train.front().features.size();

  RunResult result;
  result.config = cfg;
  result.selection_counts.assign(T, 0);
  result.final_state = init_federation(d, T, M, cfg.learner, cfg.learner.seed);
  auto& state = result.final_state;

  std::vector<std::size_t> everyone(T);
  std::iota(everyone.begin(), everyone.end(), 0);

  double cumulative = 0.0;
  std::vector<double> dqn_state;

  auto record = [&](std::size_t round, std::vector<std::size_t> selected, double elapsed, const EvalResult& ev,
                    std::optional<double> r) {
    if (!finite_state(state)) throw Error(ErrorCode::NumericalFailure, "non-finite parameters after round " + std::to_string(round));
    RoundMetrics m;
    m.round = round;
    m.accuracy = ev.accuracy;
    m.tpr = ev.tpr;
    m.fpr = ev.fpr;
    m.objective = local_only ? local_only_objective(state, shards) : global_nll(shards, state.theta, state.pi);
    if (!std::isfinite(m.objective)) throw Error(ErrorCode::NumericalFailure, "non-finite objective");
    m.per_env_accuracy = ev.per_env;
    m.selected = std::move(selected);
    m.elapsed_ms = cfg.wall_clock ? elapsed : 0.0;
    cumulative += m.elapsed_ms;
    m.cumulative_ms = cumulative;
    m.reward = r;
    if (m.accuracy > result.max_accuracy || result.metrics.empty()) result.max_accuracy = m.accuracy;
    if (!result.rounds_to_target && m.accuracy >= cfg.target_accuracy) {
      result.rounds_to_target = round;
      result.ms_to_target = m.cumulative_ms;
    }
    result.metrics.push_back(m);
    if (hooks.on_round) hooks.on_round(result.metrics.back(), state);
  };

  auto eval = [&] {
    return local_only ? evaluate_local(state.local, state.pi, shards, cfg.threshold, cfg.parallel)
                      : evaluate(state.theta, state.pi, shards, cfg.threshold, cfg.parallel);
  };

  // Initialisation round over every environment.
  {
    const auto start = Clock::now();
    if (local_only) local_round(everyone, state, shards, cfg.learner, root, cfg.parallel);
    else em_round(everyone, state, shards, cfg.learner, root, cfg.parallel);
    if (kind == StrategyKind::Fedq) {
      std::vector<std::vector<double>> corpus;
      corpus.reserve(T * M);
      for (const auto& env : state.local)
        for (const auto& c : env.components) corpus.push_back(c.data);
      const std::size_t D = corpus.front().size();
      const std::size_t d_pca = std::min({cfg.dqn.d_pca, D, corpus.size() - 1});
      result.projection = fit_pca(corpus, d_pca);
      dqn_state = build_state(*result.projection, state.theta);
      result.agent = DqnAgent{cfg.dqn, init_qnetwork(dqn_state.size(), cfg.dqn.hidden_units, T, cfg.dqn.seed),
                              ReplayBuffer(cfg.dqn.capacity)};
    }
    const auto ev = eval();
    record(0, everyone, ms_since(start), ev, std::nullopt);
  }

  const auto selection_root = stream_seed(root, SeedStream::Selection);
  const auto replay_root = stream_seed(root, SeedStream::Replay);
  for (std::size_t k = 1; k <= cfg.rounds; ++k) {
    const auto start = Clock::now();
    std::vector<std::size_t> selected;
    switch (kind) {
      case StrategyKind::Fedq:
        selected = select_environments(result.agent->qnet, dqn_state, cfg.strategy.select_n, cfg.dqn.temperature,
                                       derive_seed(selection_root, k));
        break;
      case StrategyKind::Random: {
        Rng rng(derive_seed(selection_root, k));
        const std::vector<double> flat(T, 0.0);
        selected = sample_without_replacement(flat, cfg.strategy.select_n, rng);
        std::sort(selected.begin(), selected.end());
        break;
      }
      default:
        selected = everyone;
    }
    for (auto t : selected) ++result.selection_counts[t];

    if (local_only) local_round(selected, state, shards, cfg.learner, root, cfg.parallel);
    else em_round(selected, state, shards, cfg.learner, root, cfg.parallel);
    if (!finite_state(state)) throw Error(ErrorCode::NumericalFailure, "non-finite parameters after round " + std::to_string(k));
    const auto ev = eval();

    std::optional<double> r;
    if (kind == StrategyKind::Fedq) {
      auto& agent = *result.agent;
      const QNetwork snapshot = agent.qnet;
      auto next_state = build_state(*result.projection, state.theta);
      r = reward(ev.accuracy, cfg.target_accuracy, cfg.dqn.reward_base);
      agent.buffer.store({dqn_state, selected, *r, next_state, ev.accuracy >= cfg.target_accuracy});
      const auto batch = agent.buffer.sample_minibatch(cfg.dqn.minibatch, derive_seed(replay_root, k));
      agent.qnet = train_step(agent.qnet, snapshot, batch, cfg.dqn.gamma, cfg.dqn.q_learning_rate);
      if (!all_finite(agent.qnet)) throw Error(ErrorCode::NumericalFailure, "non-finite Q-network");
      dqn_state = std::move(next_state);
    }
    record(k, std::move(selected), ms_since(start), ev, r);
  }
  return result;
}

Quartiles quartiles(std::vector<double> values) {
  if (values.empty()) return {};
  std::sort(values.begin(), values.end());
  auto at = [&](double p) {
    const double pos = p * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = static_cast<std::size_t>(std::ceil(pos));
    if (lo == hi || values[lo] == values[hi]) return values[lo];
    if (std::isinf(values[hi])) return values[hi];
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
  };
  return {at(0.25), at(0.5), at(0.75)};
}

std::vector<CompareRow> compare(const std::vector<RunConfig>& configs, const std::vector<EnvironmentShard>& shards,
                                std::size_t repeats) {
  if (configs.size() < 2) throw Error(ErrorCode::ConfigInvalid, "compare needs at least two configurations");
  if (repeats < 1) throw Error(ErrorCode::ConfigInvalid, "repeats must be >= 1");
  std::vector<CompareRow> rows;
  for (const auto& base : configs) {
    CompareRow row;
    row.strategy = base.strategy.name();
    row.repeats = repeats;
    std::vector<double> acc, rounds, ms;
    for (std::size_t r = 0; r < repeats; ++r) {
      RunConfig c = base;
      c.seed = base.seed + r;
      auto res = run(c, shards);
      acc.push_back(res.max_accuracy);
      const double inf = std::numeric_limits<double>::infinity();
      rounds.push_back(res.rounds_to_target ? static_cast<double>(*res.rounds_to_target) : inf);
      ms.push_back(res.ms_to_target ? *res.ms_to_target : inf);
      if (res.rounds_to_target) ++row.target_hits;
      row.runs.push_back(std::move(res));
    }
    row.max_accuracy = quartiles(acc);
    row.rounds_to_target = quartiles(rounds);
    row.ms_to_target = quartiles(ms);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace fedq
