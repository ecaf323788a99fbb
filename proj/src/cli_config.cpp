#include "fedq/cli_config.hpp"

#include <set>

#include "json.hpp"

namespace fedq {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw Error(ErrorCode::ConfigInvalid, "unknown config key '" + where + key + "'");
}

template <typename T>
void take(const json& j, const char* key, T& dst) {
  if (j.contains(key)) dst = j.at(key).get<T>();
}

template <typename T>
void take_opt(const json& j, const char* key, std::optional<T>& dst) {
  if (!j.contains(key)) return;
  if (j.at(key).is_null()) dst.reset();
  else dst = j.at(key).get<T>();
}

}  // namespace

std::uint64_t partition_seed(std::uint64_t root) { return stream_seed(root, SeedStream::Partition); }

Strategy resolve_strategy(const std::string& spec, std::size_t select_n) {
  auto s = Strategy::parse(spec);
  if ((s.kind == StrategyKind::Fedq || s.kind == StrategyKind::Random) && s.select_n == 0) s.select_n = select_n;
  return s;
}

void apply_config_json(const std::string& text, CliOptions& o) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigInvalid, std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error(ErrorCode::ConfigInvalid, "config must be a JSON object");
  reject_unknown(j,
                 {"dataset", "schema", "manifest", "out", "strategy", "strategies", "select_n", "mixtures", "rounds",
                  "target_acc", "threshold", "alpha", "envs", "clusters", "train_fraction", "seed", "repeats",
                  "subsample_rows", "timing", "parallel", "learner", "dqn"},
                 "");
  try {
    take_opt(j, "dataset", o.dataset);
    take_opt(j, "schema", o.schema);
    take_opt(j, "manifest", o.manifest);
    take_opt(j, "out", o.out);
    if (j.contains("strategy")) o.strategies = {j.at("strategy").get<std::string>()};
    take(j, "strategies", o.strategies);
    take(j, "select_n", o.select_n);
    take(j, "repeats", o.repeats);
    take_opt(j, "subsample_rows", o.subsample_rows);
    auto& r = o.run;
    take(j, "mixtures", r.mixtures);
    take(j, "rounds", r.rounds);
    take(j, "target_acc", r.target_accuracy);
    take(j, "threshold", r.threshold);
    take(j, "alpha", r.partition.dirichlet_alpha);
    take(j, "envs", r.partition.num_environments);
    take(j, "clusters", r.partition.num_clusters);
    take(j, "train_fraction", r.partition.train_fraction);
    take(j, "seed", r.seed);
    take(j, "parallel", r.parallel);
    if (j.contains("timing")) {
      const auto t = j.at("timing").get<std::string>();
      if (t != "wall" && t != "off") throw Error(ErrorCode::ConfigInvalid, "timing must be 'wall' or 'off'");
      r.wall_clock = t == "wall";
    }
    if (j.contains("learner")) {
      const auto& l = j.at("learner");
      reject_unknown(l, {"hidden_units", "learning_rate", "local_steps", "batch_size", "grad_clip", "weight_norm"},
                     "learner.");
      take(l, "hidden_units", r.learner.hidden_units);
      take(l, "learning_rate", r.learner.learning_rate);
      take(l, "local_steps", r.learner.local_steps);
      take(l, "batch_size", r.learner.batch_size);
      take_opt(l, "grad_clip", r.learner.grad_clip);
      if (l.contains("weight_norm")) r.learner.weight_norm = parse_weight_norm(l.at("weight_norm").get<std::string>());
    }
    if (j.contains("dqn")) {
      const auto& d = j.at("dqn");
      reject_unknown(d,
                     {"gamma", "reward_base", "q_learning_rate", "minibatch", "capacity", "temperature",
                      "hidden_units", "d_pca"},
                     "dqn.");
      take(d, "gamma", r.dqn.gamma);
      take(d, "reward_base", r.dqn.reward_base);
      take(d, "q_learning_rate", r.dqn.q_learning_rate);
      take(d, "minibatch", r.dqn.minibatch);
      take(d, "capacity", r.dqn.capacity);
      take(d, "temperature", r.dqn.temperature);
      take(d, "hidden_units", r.dqn.hidden_units);
      take(d, "d_pca", r.dqn.d_pca);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigInvalid, std::string("bad config value: ") + e.what());
  }
}

std::string resolved_config_json(const CliOptions& o) {
  const auto& r = o.run;
  auto opt = [](const std::optional<std::string>& v) { return v ? json(*v) : json(nullptr); };
  json j;
  j["dataset"] = opt(o.dataset);
  j["schema"] = opt(o.schema);
  j["manifest"] = opt(o.manifest);
  j["out"] = opt(o.out);
  j["strategies"] = o.strategies;
  j["select_n"] = o.select_n;
  j["repeats"] = o.repeats;
  j["subsample_rows"] = o.subsample_rows ? json(*o.subsample_rows) : json(nullptr);
  j["mixtures"] = r.mixtures;
  j["rounds"] = r.rounds;
  j["target_acc"] = r.target_accuracy;
  j["threshold"] = r.threshold;
  j["alpha"] = r.partition.dirichlet_alpha;
  j["envs"] = r.partition.num_environments;
  j["clusters"] = r.partition.num_clusters;
  j["train_fraction"] = r.partition.train_fraction;
  j["seed"] = r.seed;
  j["parallel"] = r.parallel;
  j["timing"] = r.wall_clock ? "wall" : "off";
  j["learner"] = {{"hidden_units", r.learner.hidden_units},
                  {"learning_rate", r.learner.learning_rate},
                  {"local_steps", r.learner.local_steps},
                  {"batch_size", r.learner.batch_size},
                  {"grad_clip", r.learner.grad_clip ? json(*r.learner.grad_clip) : json(nullptr)},
                  {"weight_norm", to_string(r.learner.weight_norm)}};
  j["dqn"] = {{"gamma", r.dqn.gamma},
              {"reward_base", r.dqn.reward_base},
              {"q_learning_rate", r.dqn.q_learning_rate},
              {"minibatch", r.dqn.minibatch},
              {"capacity", r.dqn.capacity},
              {"temperature", r.dqn.temperature},
              {"hidden_units", r.dqn.hidden_units},
              {"d_pca", r.dqn.d_pca}};
  return j.dump(2) + "\n";
}

}  // namespace fedq
