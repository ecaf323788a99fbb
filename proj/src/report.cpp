#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "fedq/orchestrator.hpp"
#include "json.hpp"

namespace fedq {

using nlohmann::json;

namespace {

std::string num(double v) {
  if (std::isinf(v)) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string ms(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

std::string join_ids(const std::vector<std::size_t>& ids) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ';';
    out += std::to_string(ids[i]);
  }
  return out;
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json config_json(const RunConfig& c) {
  json j;
  j["strategy"] = c.strategy.name();
  j["rounds"] = c.rounds;
  j["mixtures"] = c.effective_mixtures();
  j["target_accuracy"] = c.target_accuracy;
  j["threshold"] = c.threshold;
  j["seed"] = c.seed;
  j["learner"] = {{"hidden_units", c.learner.hidden_units},
                  {"learning_rate", c.learner.learning_rate},
                  {"local_steps", c.learner.local_steps},
                  {"batch_size", c.learner.batch_size},
                  {"grad_clip", c.learner.grad_clip ? json(*c.learner.grad_clip) : json(nullptr)},
                  {"weight_norm", to_string(c.learner.weight_norm)}};
  j["dqn"] = {{"gamma", c.dqn.gamma},
              {"reward_base", c.dqn.reward_base},
              {"q_learning_rate", c.dqn.q_learning_rate},
              {"minibatch", c.dqn.minibatch},
              {"capacity", c.dqn.capacity},
              {"temperature", c.dqn.temperature},
              {"hidden_units", c.dqn.hidden_units},
              {"d_pca", c.dqn.d_pca}};
  j["partition"] = {{"num_environments", c.partition.num_environments},
                    {"num_clusters", c.partition.num_clusters},
                    {"dirichlet_alpha", c.partition.dirichlet_alpha},
                    {"train_fraction", c.partition.train_fraction},
                    {"seed", c.partition.seed}};
  return j;
}

}  // namespace

std::string metrics_csv(const std::vector<RoundMetrics>& metrics) {
  std::ostringstream out;
  out << "round,accuracy,tpr,fpr,elapsed_ms,cumulative_ms,reward,selected\n";
  for (const auto& m : metrics) {
    out << m.round << ',' << num(m.accuracy) << ',' << num(m.tpr) << ',' << num(m.fpr) << ',' << ms(m.elapsed_ms)
        << ',' << ms(m.cumulative_ms) << ',' << (m.reward ? num(*m.reward) : std::string()) << ','
        << join_ids(m.selected) << '\n';
  }
  return out.str();
}

std::string round_json_line(const RoundMetrics& m) {
  json j;
  j["round"] = m.round;
  j["accuracy"] = m.accuracy;
  j["tpr"] = m.tpr;
  j["fpr"] = m.fpr;
  j["objective"] = m.objective;
  json per = json::array();
  for (const auto& a : m.per_env_accuracy) per.push_back(optional_json(a));
  j["per_env_accuracy"] = std::move(per);
  j["selected"] = m.selected;
  j["elapsed_ms"] = m.elapsed_ms;
  j["cumulative_ms"] = m.cumulative_ms;
  j["reward"] = optional_json(m.reward);
  return j.dump();
}

std::string summary_json(const RunResult& r) {
  json j;
  j["config"] = config_json(r.config);
  j["communication_rounds"] = r.metrics.size();
  j["rounds_to_target"] = r.rounds_to_target ? json(*r.rounds_to_target) : json(nullptr);
  j["ms_to_target"] = optional_json(r.ms_to_target);
  j["max_accuracy"] = r.max_accuracy;
  if (!r.metrics.empty()) {
    const auto& last = r.metrics.back();
    j["final"] = {{"accuracy", last.accuracy}, {"tpr", last.tpr}, {"fpr", last.fpr}, {"objective", last.objective}};
    j["total_ms"] = last.cumulative_ms;
  }
  j["upload_events"] = r.final_state.upload_events;
  j["aggregation_calls"] = r.final_state.aggregation_calls;
  j["selection_counts"] = r.selection_counts;
  if (r.projection)
    j["pca"] = {{"dim", r.projection->dim},
                {"d_pca", r.projection->d_pca},
                {"rank", r.projection->rank},
                {"rank_deficient", r.projection->rank_deficient}};
  return j.dump(2);
}

std::string compare_csv(const std::vector<CompareRow>& rows) {
  std::ostringstream out;
  out << "strategy,repeats,max_acc_median,max_acc_q25,max_acc_q75,rounds_median,rounds_q25,rounds_q75,"
         "ms_median,ms_q25,ms_q75,target_hits\n";
  for (const auto& r : rows) {
    out << r.strategy << ',' << r.repeats << ',' << num(r.max_accuracy.median) << ',' << num(r.max_accuracy.q25)
        << ',' << num(r.max_accuracy.q75) << ',' << num(r.rounds_to_target.median) << ','
        << num(r.rounds_to_target.q25) << ',' << num(r.rounds_to_target.q75) << ',' << num(r.ms_to_target.median)
        << ',' << num(r.ms_to_target.q25) << ',' << num(r.ms_to_target.q75) << ',' << r.target_hits << '\n';
  }
  return out.str();
}

std::string series_text(const CompareRow& row) {
  std::ostringstream out;
  if (row.runs.empty()) return {};
  const std::size_t rounds = row.runs.front().metrics.size();
  for (std::size_t k = 0; k < rounds; ++k) {
    std::vector<double> acc, tpr, fpr;
    for (const auto& run : row.runs) {
      acc.push_back(run.metrics[k].accuracy);
      tpr.push_back(run.metrics[k].tpr);
      fpr.push_back(run.metrics[k].fpr);
    }
    out << k << ' ' << num(quartiles(acc).median) << ' ' << num(quartiles(tpr).median) << ' '
        << num(quartiles(fpr).median) << '\n';
  }
  return out.str();
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
    out << text;
    out.flush();
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace fedq
