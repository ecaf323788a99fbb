// fedq: partition datasets into environments, train one strategy, or compare
// several. Exit codes: 0 ok, 2 configuration error, 3 I/O error, 4 numerical
// failure.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "fedq/cli_config.hpp"
#include "fedq/data.hpp"
#include "fedq/orchestrator.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace fedq;

namespace {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw Error(ErrorCode::FileUnreadable, "cannot open " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Raw flag values; only those given on the command line override the config.
struct Flags {
  std::string config;
  std::string dataset, schema, manifest, out;
  std::vector<std::string> strategies;
  std::size_t select_n = 0, mixtures = 0, rounds = 0, envs = 0, clusters = 0, repeats = 0, subsample_rows = 0;
  double target_acc = 0.0, alpha = 0.0;
  std::uint64_t seed = 0;
  std::string timing;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "JSON config file");
  cmd->add_option("--seed", f.seed, "root seed");
  cmd->add_option("--out", f.out, "output directory (default $FEDQ_OUT_DIR)");
}

void add_run_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--manifest", f.manifest, "shard manifest from 'partition'");
  cmd->add_option("--dataset", f.dataset, "override the manifest's dataset path");
  cmd->add_option("--schema", f.schema, "override the manifest's schema path");
  cmd->add_option("--strategy", f.strategies, "fedq, random, full, fedavg or local (optionally with N, e.g. fedq30)")
      ->delimiter(',');
  cmd->add_option("--select-n", f.select_n, "environments per round for fedq/random");
  cmd->add_option("--mixtures", f.mixtures, "mixture components M");
  cmd->add_option("--rounds", f.rounds, "communication rounds K");
  cmd->add_option("--target-acc", f.target_acc, "target accuracy A");
  cmd->add_option("--timing", f.timing, "wall or off (off writes zero elapsed times)");
}

CliOptions resolve(const CLI::App& cmd, const Flags& f) {
  CliOptions o;
  if (cmd.count("--config")) apply_config_json(read_file(f.config), o);
  auto given = [&](const char* name) { return cmd.get_option_no_throw(name) && cmd.count(name) > 0; };
  if (given("--dataset")) o.dataset = f.dataset;
  if (given("--schema")) o.schema = f.schema;
  if (given("--manifest")) o.manifest = f.manifest;
  if (given("--out")) o.out = f.out;
  if (given("--strategy")) o.strategies = f.strategies;
  if (given("--select-n")) o.select_n = f.select_n;
  if (given("--mixtures")) o.run.mixtures = f.mixtures;
  if (given("--rounds")) o.run.rounds = f.rounds;
  if (given("--target-acc")) o.run.target_accuracy = f.target_acc;
  if (given("--envs")) o.run.partition.num_environments = f.envs;
  if (given("--clusters")) o.run.partition.num_clusters = f.clusters;
  if (given("--alpha")) o.run.partition.dirichlet_alpha = f.alpha;
  if (given("--repeats")) o.repeats = f.repeats;
  if (given("--subsample-rows")) o.subsample_rows = f.subsample_rows;
  if (given("--seed")) o.run.seed = f.seed;
  if (given("--timing")) {
    if (f.timing != "wall" && f.timing != "off") throw ConfigError("--timing must be 'wall' or 'off'");
    o.run.wall_clock = f.timing == "wall";
  }
  if (!o.out) {
    if (const char* env = std::getenv("FEDQ_OUT_DIR")) o.out = env;
  }
  return o;
}

fs::path require_out(const CliOptions& o) {
  if (!o.out) throw ConfigError("--out is required (or set FEDQ_OUT_DIR)");
  fs::create_directories(*o.out);
  return *o.out;
}

int cmd_partition(const CLI::App& cmd, const Flags& f) {
  auto o = resolve(cmd, f);
  if (!o.dataset) throw ConfigError("--dataset is required");
  if (!o.schema) throw ConfigError("--schema is required");
  const auto out = require_out(o);
  auto& pc = o.run.partition;
  pc.seed = partition_seed(o.run.seed);
  pc.validate();

  const auto schema = load_schema(*o.schema);
  LoadOptions lo{o.subsample_rows, o.run.seed};
  const auto ds = load_dataset(*o.dataset, schema, lo);
  const auto clusters = cluster_dataset(ds, pc.num_clusters, derive_seed(o.run.seed, 0x434c));
  const auto shards = partition_mixture(ds, clusters, pc);

  auto manifest = make_manifest(shards);
  manifest.dataset_path = fs::absolute(*o.dataset).string();
  manifest.schema_path = fs::absolute(*o.schema).string();
  manifest.subsample_rows = o.subsample_rows;
  manifest.load_seed = o.run.seed;
  manifest.partition = pc;
  write_manifest(out / "manifest.json", manifest);

  const auto audit = audit_shards(shards);
  nlohmann::json aj;
  aj["rows"] = ds.size();
  aj["rejected_rows"] = ds.rejected_rows;
  aj["features"] = ds.dim();
  aj["min_train"] = audit.min_train;
  aj["max_train"] = audit.max_train;
  aj["zero_positive"] = audit.zero_positive;
  aj["zero_negative"] = audit.zero_negative;
  nlohmann::json envs = nlohmann::json::array();
  for (const auto& e : audit.environments)
    envs.push_back({{"env_id", e.env_id}, {"train", e.train_size}, {"test", e.test_size},
                    {"positives", e.positives}, {"negatives", e.negatives}});
  aj["environments"] = std::move(envs);
  write_text_atomic(out / "audit.json", aj.dump(2) + "\n");
  write_text_atomic(out / "config.json", resolved_config_json(o));

  std::vector<std::size_t> sizes;
  for (const auto& e : audit.environments) sizes.push_back(e.train_size);
  std::sort(sizes.begin(), sizes.end());
  std::cout << "rows " << ds.size() << " (rejected " << ds.rejected_rows << "), features " << ds.dim() << '\n'
            << "environments " << shards.size() << ", train size min " << sizes.front() << " / median "
            << sizes[sizes.size() / 2] << " / max " << sizes.back() << '\n';
  const std::size_t edges[] = {0, 10, 50, 100, 500, 1000, 5000};
  for (std::size_t b = 0; b < std::size(edges); ++b) {
    const std::size_t lo_e = edges[b];
    const std::size_t hi_e = b + 1 < std::size(edges) ? edges[b + 1] : static_cast<std::size_t>(-1);
    const auto n = std::count_if(sizes.begin(), sizes.end(), [&](std::size_t s) { return s >= lo_e && s < hi_e; });
    if (n) std::cout << "  [" << lo_e << ", " << (b + 1 < std::size(edges) ? std::to_string(hi_e) : "inf") << "): " << n << '\n';
  }
  if (!audit.zero_positive.empty())
    std::cerr << "warning: " << audit.zero_positive.size() << " environment(s) have no positive training samples\n";
  if (!audit.zero_negative.empty())
    std::cerr << "warning: " << audit.zero_negative.size() << " environment(s) have no negative training samples\n";
  std::cout << "manifest written to " << (out / "manifest.json").string() << '\n';
  return kExitOk;
}

std::vector<EnvironmentShard> load_shards(CliOptions& o) {
  if (!o.manifest) throw ConfigError("--manifest is required");
  const auto m = read_manifest(*o.manifest);
  if (!o.dataset) o.dataset = m.dataset_path;
  if (!o.schema) o.schema = m.schema_path;
  const auto ds = load_dataset(*o.dataset, load_schema(*o.schema), LoadOptions{m.subsample_rows, m.load_seed});
  if (ds.size() != m.num_rows) throw Error(ErrorCode::SchemaMismatch, "dataset rows differ from the manifest");
  o.run.partition = m.partition;
  return apply_manifest(ds, m);
}

int cmd_train(const CLI::App& cmd, const Flags& f) {
  auto o = resolve(cmd, f);
  if (o.strategies.size() != 1) throw ConfigError("train takes exactly one --strategy");
  o.run.strategy = resolve_strategy(o.strategies.front(), o.select_n);
  const auto out = require_out(o);
  const auto shards = load_shards(o);
  o.run.validate(shards.size());
  write_text_atomic(out / "config.json", resolved_config_json(o));
  fs::create_directories(out / "checkpoints");

  std::ofstream jsonl(out / "rounds.jsonl", std::ios::trunc);
  if (!jsonl) throw Error(ErrorCode::IoError, "cannot write rounds.jsonl");
  RunHooks hooks;
  hooks.on_round = [&](const RoundMetrics& m, const FederationState& s) {
    jsonl << round_json_line(m) << '\n' << std::flush;
    char name[32];
    std::snprintf(name, sizeof name, "round_%04zu.bin", m.round);
    write_checkpoint(out / "checkpoints" / name, {m.round, s.theta, s.pi});
  };
  const auto result = run(o.run, shards, hooks);

  write_text_atomic(out / "metrics.csv", metrics_csv(result.metrics));
  write_text_atomic(out / "summary.json", summary_json(result) + "\n");
  if (result.agent) write_agent(out / "agent.bin", *result.agent);
  if (result.projection) {
    std::ostringstream buf;
    write_projection(buf, *result.projection);
    write_text_atomic(out / "pca.bin", buf.str());
  }
  std::cout << result.config.strategy.name() << ": max accuracy " << result.max_accuracy << ", rounds to target "
            << (result.rounds_to_target ? std::to_string(*result.rounds_to_target) : std::string("not reached"))
            << '\n';
  return kExitOk;
}

int cmd_compare(const CLI::App& cmd, const Flags& f) {
  auto o = resolve(cmd, f);
  if (o.strategies.size() < 2) throw ConfigError("compare needs at least two --strategy values");
  const auto out = require_out(o);
  const auto shards = load_shards(o);
  std::vector<RunConfig> configs;
  for (const auto& s : o.strategies) {
    RunConfig c = o.run;
    c.strategy = resolve_strategy(s, o.select_n);
    c.validate(shards.size());
    configs.push_back(c);
  }
  write_text_atomic(out / "config.json", resolved_config_json(o));
  const auto rows = compare(configs, shards, o.repeats);
  write_text_atomic(out / "compare.csv", compare_csv(rows));
  for (const auto& r : rows) write_text_atomic(out / ("series_" + r.strategy + ".txt"), series_text(r));
  std::cout << compare_csv(rows);
  return kExitOk;
}

int exit_code_for(ErrorCode c) {
  switch (c) {
    case ErrorCode::FileUnreadable:
    case ErrorCode::IoError:
    case ErrorCode::EmptyDataset: return kExitIo;
    case ErrorCode::NumericalFailure: return kExitNumerical;
    default: return kExitConfig;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated mixture-of-experts trust prediction simulator"};
  app.require_subcommand(1);
  Flags f;

  auto* part = app.add_subcommand("partition", "cluster and split a dataset into environments");
  add_common(part, f);
  part->add_option("--dataset", f.dataset, "delimited input file");
  part->add_option("--schema", f.schema, "JSON column schema");
  part->add_option("--envs", f.envs, "number of environments T");
  part->add_option("--alpha", f.alpha, "Dirichlet concentration");
  part->add_option("--clusters", f.clusters, "k-means clusters");
  part->add_option("--subsample-rows", f.subsample_rows, "reservoir-sample at most this many rows");

  auto* train = app.add_subcommand("train", "run one strategy on a partition");
  add_common(train, f);
  add_run_flags(train, f);

  auto* cmp = app.add_subcommand("compare", "run several strategies over repeated seeds");
  add_common(cmp, f);
  add_run_flags(cmp, f);
  cmp->add_option("--repeats", f.repeats, "seeds per strategy");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (part->parsed()) return cmd_partition(*part, f);
    if (train->parsed()) return cmd_train(*train, f);
    if (cmp->parsed()) return cmd_compare(*cmp, f);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  }
  return kExitConfig;
}
