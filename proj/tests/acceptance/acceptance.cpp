// Acceptance runner. `acceptance N` runs criterion N, no argument runs all.
// Prints one PASS/FAIL line per criterion; exit status 1 if any failed.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>
#include <vector>

#include "fedq/orchestrator.hpp"
#include "oracles.hpp"

using namespace fedq;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct Scratch {
  fs::path path;
  Scratch() {
    path = fs::temp_directory_path() / ("fedq_accept_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~Scratch() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(FEDQ_CLI_PATH) + " " + args + " >" + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// ---- fixtures --------------------------------------------------------------

// Same features, opposite labels; Dirichlet split by generating component.
std::vector<EnvironmentShard> flipped_shards(std::uint64_t seed, std::vector<int>& component) {
  auto res = synth_mixture(flipped_label_config(2, 1000, seed));
  PartitionConfig pc;
  pc.num_environments = 20;
  pc.dirichlet_alpha = 0.4;
  pc.seed = seed;
  component = res.clusters;
  return partition_mixture(res.dataset, res.clusters, pc);
}

// Test accuracy of an oracle that knows each environment's majority component
// and labels perfectly for it. No predictor sharing features across
// components can beat this on per-environment mixture weights.
double purity_ceiling(const std::vector<EnvironmentShard>& shards, const std::vector<int>& component) {
  double good = 0.0, total = 0.0;
  for (const auto& s : shards) {
    double c0 = 0.0;
    for (const auto& r : s.test) c0 += component[r.row_id] == 0;
    const double n = static_cast<double>(s.test.size());
    good += std::max(c0, n - c0);
    total += n;
  }
  return good / total;
}

// T=100; a seeded 30 environments share 90% of the rows, the other 70 the
// rest. Environment t draws a fraction `purity` from component t % 2.
std::vector<EnvironmentShard> heavy_light_shards(std::uint64_t seed, std::vector<std::size_t>& heavy) {
  const std::size_t rows = 20000, T = 100, H = 30;
  const double purity = 0.9;
  auto res = synth_mixture(rotated_boundary_config(2, rows, M_PI / 2, seed));  // headroom per component
  std::vector<std::vector<std::size_t>> pool(2);
  for (std::size_t i = 0; i < res.dataset.size(); ++i) pool[res.clusters[i]].push_back(i);
  Rng rng(derive_seed(seed, 77));
  for (auto& p : pool) std::shuffle(p.begin(), p.end(), rng);
  std::vector<std::size_t> ids(T);
  std::iota(ids.begin(), ids.end(), 0);
  std::shuffle(ids.begin(), ids.end(), rng);
  heavy.assign(ids.begin(), ids.begin() + H);
  std::sort(heavy.begin(), heavy.end());

  std::vector<EnvironmentShard> shards(T);
  std::size_t cursor[2] = {0, 0};
  for (std::size_t t = 0; t < T; ++t) {
    const bool is_heavy = std::binary_search(heavy.begin(), heavy.end(), t);
    const std::size_t n = is_heavy ? std::size_t(0.9 * rows / H) : std::size_t(0.1 * rows / (T - H));
    const int dom = static_cast<int>(t % 2);
    const std::size_t ndom = std::llround(purity * n);
    std::vector<std::size_t> mine;
    for (std::size_t i = 0; i < n; ++i) {
      const int c = i < ndom ? dom : 1 - dom;
      mine.push_back(pool[c][cursor[c]++]);
    }
    std::shuffle(mine.begin(), mine.end(), rng);
    const std::size_t ntrain = std::max<std::size_t>(1, std::llround(0.8 * n));
    shards[t].env_id = t;
    for (std::size_t i = 0; i < mine.size(); ++i)
      (i < ntrain ? shards[t].train : shards[t].test).push_back(res.dataset.samples[mine[i]]);
  }
  return shards;
}

// Stand-in for the traffic file: two feature-space clusters (mean shift on the
// last axis) with opposite labelling rules, 50k rows, 4 features.
Dataset synthetic_traffic(std::uint64_t seed) {
  const std::size_t dim = 4;
  auto sc = rotated_boundary_config(dim, 25000, M_PI, seed);
  for (std::size_t c = 0; c < 2; ++c) {
    sc.components[c].mean.assign(dim, 0.0);
    sc.components[c].mean[dim - 1] = c ? 2.0 : -2.0;
  }
  return synth_mixture(sc).dataset;
}

// ---- criteria --------------------------------------------------------------

Outcome simplex_suite() {
  Rng rng(1001);
  std::normal_distribution<double> g(0.0, 1.0);
  double worst = 0.0;
  double lowest = 1.0;
  std::size_t rows_checked = 0;
  auto check_row = [&](std::span<const double> row) {
    double s = 0.0;
    for (double v : row) {
      s += v;
      lowest = std::min(lowest, v);
    }
    worst = std::max(worst, std::abs(s - 1.0));
    ++rows_checked;
  };
  for (int call = 0; call < 1000; ++call) {
    const std::size_t M = 1 + rng() % 5, d = 1 + rng() % 3, n = 1 + rng() % 30;
    EnvironmentShard shard;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> x(d);
      for (auto& v : x) v = g(rng) * (call % 4 == 3 ? 50.0 : 1.0);
      shard.train.push_back({x, static_cast<int>(rng() % 2), i});
    }
    auto theta = init_components(d, 1 + rng() % 4, M, rng());
    if (call % 5 == 4)
      for (std::size_t m = 0; m < theta.size(); ++m)
        for (auto& v : theta[m].data) v *= 40.0;
    std::vector<double> pi(M);
    double s = 0.0;
    for (auto& v : pi) s += (v = uniform01(rng) + 1e-3);
    for (auto& v : pi) v /= s;
    auto q = e_step(shard, theta, pi);
    for (std::size_t i = 0; i < q.rows; ++i) check_row(q.row(i));
    check_row(m_step_pi(q));
  }
  return {worst <= 1e-9 && lowest >= 0.0,
          fmt("%zu rows, max |sum-1| %.2e, min entry %.3g", rows_checked, worst, lowest)};
}

Outcome gradient_oracle() {
  Rng rng(2024);
  std::normal_distribution<double> g(0.0, 1.0);
  double worst_mlp = 0.0;
  for (int net = 0; net < 20; ++net) {
    const std::size_t d = 1 + rng() % 3, H = 1 + rng() % 4;
    auto p = init_params(d, H, 100 + net);
    for (auto& v : p.b1()) v = 0.5 * g(rng);
    p.b2()[0] = 0.5 * g(rng);
    std::vector<std::vector<double>> xs;
    std::vector<int> ys;
    std::vector<double> qs;
    for (int i = 0; i < 8; ++i) {
      std::vector<double> x(d);
      for (auto& v : x) v = g(rng);
      xs.push_back(x);
      ys.push_back(static_cast<int>(rng() % 2));
      qs.push_back(uniform01(rng));
    }
    std::vector<WeightedExample> batch;
    for (std::size_t i = 0; i < xs.size(); ++i) batch.push_back({xs[i], ys[i], qs[i]});
    auto objective = [&](const Mlp& m) {
      double num = 0.0, den = 0.0;
      for (std::size_t i = 0; i < xs.size(); ++i) {
        num += qs[i] * oracle::direct_bce(m, xs[i], ys[i]);
        den += qs[i];
      }
      return num / den;
    };
    worst_mlp = std::max(worst_mlp, oracle::max_rel_error(weighted_grad(p, batch).data, oracle::finite_diff(p, objective)));
  }

  double worst_q = 0.0;
  for (int net = 0; net < 10; ++net) {
    const std::size_t S = 2 + rng() % 3, H = 2 + rng() % 4, T = 3 + rng() % 4;
    auto q = init_qnetwork(S, H, T, 300 + net);
    for (auto& v : q.b1()) v = 0.5 * g(rng);
    std::vector<Transition> batch;
    std::vector<double> y;
    for (int j = 0; j < 5; ++j) {
      Transition t;
      t.s.resize(S);
      t.s_next.resize(S);
      for (auto& v : t.s) v = g(rng);
      for (auto& v : t.s_next) v = g(rng);
      std::vector<std::size_t> ids(T);
      std::iota(ids.begin(), ids.end(), 0);
      std::shuffle(ids.begin(), ids.end(), rng);
      ids.resize(1 + rng() % T);
      std::sort(ids.begin(), ids.end());
      t.action = ids;
      batch.push_back(t);
      y.push_back(3.0 * g(rng));
    }
    // Composite loss written out: mean over the set of the raw outputs.
    auto loss = [&](const Mlp& m) {
      double acc = 0.0;
      for (std::size_t j = 0; j < batch.size(); ++j) {
        const auto& t = batch[j];
        double qhat = 0.0;
        for (auto a : t.action) {
          double z = m.data[H * S + H + H * T + a];
          for (std::size_t h = 0; h < H; ++h) {
            double u = m.data[H * S + h];
            for (std::size_t k = 0; k < S; ++k) u += m.data[h * S + k] * t.s[k];
            z += m.data[H * S + H + a * H + h] * std::max(u, 0.0);
          }
          qhat += z;
        }
        qhat /= static_cast<double>(t.action.size());
        acc += (y[j] - qhat) * (y[j] - qhat);
      }
      return acc / static_cast<double>(batch.size());
    };
    worst_q = std::max(worst_q, oracle::max_rel_error(dqn_loss_grad(q, batch, y).data, oracle::finite_diff(q, loss)));
  }
  return {worst_mlp < 1e-4 && worst_q < 1e-4,
          fmt("20 MLPs max rel err %.2e; 10 Q-nets max rel err %.2e", worst_mlp, worst_q)};
}

Outcome em_monotonicity() {
  Rng rng(31);
  std::normal_distribution<double> g(0.0, 1.0);
  EnvironmentShard shard;
  for (std::size_t i = 0; i < 48; ++i) {
    const double a = g(rng), b = g(rng);
    shard.train.push_back({{a, b}, static_cast<int>((a > 0) != (i % 2 == 1)), i});
  }
  auto theta = init_components(2, 4, 2, 17);
  std::vector<double> pi{0.5, 0.5};
  LearnerConfig cfg;
  cfg.batch_size = 0;
  cfg.local_steps = 500;
  cfg.learning_rate = 0.05;
  double prev = local_nll(shard, theta, pi), first = prev, worst = -INFINITY;
  for (int round = 0; round < 20; ++round) {
    auto q = e_step(shard, theta, pi);
    pi = m_step_pi(q);
    for (std::size_t m = 0; m < 2; ++m) theta[m] = m_step_theta(shard, q, theta[m], m, cfg, round * 2 + m);
    const double now = local_nll(shard, theta, pi);
    worst = std::max(worst, now - prev);
    prev = now;
  }
  return {worst <= 1e-6, fmt("48 samples, 20 rounds: nll %.4f -> %.4f, largest increase %.2e", first, prev, worst)};
}

Outcome aggregation_and_pca() {
  Rng rng(7);
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 1 + rng() % 12;
    std::vector<Mlp> params;
    std::vector<std::size_t> n;
    for (std::size_t t = 0; t < k; ++t) {
      params.push_back(init_params(1 + rng() % 4, 1 + rng() % 6, rng()));
      if (t) params.back() = init_params(params[0].input, params[0].hidden, rng());
      n.push_back(1 + rng() % 500);
    }
    std::vector<std::vector<double>> flats;
    for (const auto& p : params) flats.push_back(p.data);
    std::vector<Contribution> contribs;
    for (std::size_t t = 0; t < k; ++t) contribs.push_back({t, &params[t], n[t]});
    std::shuffle(contribs.begin(), contribs.end(), rng);
    if (aggregate(contribs).data != oracle::flat_weighted_mean(flats, n)) ++mismatches;
  }

  std::normal_distribution<double> g(0.0, 1.0);
  double recon = 0.0, ortho = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t D = 5 + rng() % 30, rank = 1 + rng() % 6, R = rank + 1 + rng() % 10;
    std::vector<std::vector<double>> dirs(rank, std::vector<double>(D)), rows;
    for (auto& d : dirs)
      for (auto& v : d) v = g(rng);
    std::vector<double> offset(D);
    for (auto& v : offset) v = g(rng);
    for (std::size_t r = 0; r < R; ++r) {
      auto row = offset;
      for (const auto& d : dirs) {
        const double c = g(rng);
        for (std::size_t i = 0; i < D; ++i) row[i] += c * d[i];
      }
      rows.push_back(row);
    }
    auto p = fit_pca(rows, rank);
    for (const auto& row : rows) {
      auto z = project(p, row);
      for (std::size_t i = 0; i < D; ++i) {
        double x = p.mean[i];
        for (std::size_t j = 0; j < rank; ++j) x += p.basis[j * D + i] * z[j];
        recon = std::max(recon, std::abs(x - row[i]));
      }
    }
    for (std::size_t a = 0; a < rank; ++a)
      for (std::size_t b = 0; b < rank; ++b) {
        double dot = 0.0;
        for (std::size_t i = 0; i < D; ++i) dot += p.basis[a * D + i] * p.basis[b * D + i];
        ortho = std::max(ortho, std::abs(dot - (a == b ? 1.0 : 0.0)));
      }
  }
  return {mismatches == 0 && recon <= 1e-8 && ortho <= 1e-8,
          fmt("aggregate mismatches %zu/200; PCA max reconstruction err %.2e, orthonormality err %.2e", mismatches,
              recon, ortho)};
}

Outcome reward_exactness() {
  const double at = reward(0.9, 0.9, 64.0);
  const double half = reward(0.4, 0.9, 64.0);
  const double third = reward(0.5 + 1.0 / 3.0, 0.5, 64.0);
  bool monotone = true, signs = true;
  double prev = reward(0.0, 0.9, 64.0);
  for (int i = 1; i <= 1000; ++i) {
    const double a = i / 1000.0, r = reward(a, 0.9, 64.0);
    monotone = monotone && r > prev;
    signs = signs && (a > 0.9 ? r > 0.0 : a < 0.9 ? r < 0.0 : r == 0.0);
    prev = r;
  }
  const bool ok = at == 0.0 && std::abs(half + 0.875) < 1e-12 && std::abs(third - 3.0) < 1e-12 && monotone && signs;
  return {ok, fmt("r(A)=%g r(-0.5)=%.15g r(+1/3)=%.15g monotone=%d signs=%d", at, half, third, monotone, signs)};
}

Outcome mixture_necessity() {
  std::vector<double> m2_max, m1_last, ceiling;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::vector<int> comp;
    auto shards = flipped_shards(seed, comp);
    ceiling.push_back(purity_ceiling(shards, comp));
    for (auto name : {"full", "fedavg"}) {
      RunConfig c;
      c.strategy = Strategy::parse(name);
      c.rounds = 50;
      c.mixtures = 2;
      c.seed = seed;
      c.wall_clock = false;
      c.learner.hidden_units = 16;
      auto r = run(c, shards);
      if (std::string(name) == "full")
        m2_max.push_back(r.max_accuracy);
      else
        m1_last.push_back(r.metrics.back().accuracy);
    }
  }
  const double a = median(m2_max), b = median(m1_last);
  return {a >= 0.95 && b <= 0.70,
          fmt("M=2 median max acc %.3f (need >= 0.95; purity ceiling median %.3f), M=1 median round-50 acc %.3f "
              "(need <= 0.70)",
              a, median(ceiling), b)};
}

Outcome selection_efficiency() {
  const std::size_t K = 40;
  std::vector<double> rtt_fedq, rtt_random;
  std::size_t seeds_over = 0;
  std::string freqs;
  for (std::uint64_t seed = 0; seed < 7; ++seed) {
    std::vector<std::size_t> heavy;
    auto shards = heavy_light_shards(seed, heavy);
    for (auto name : {"fedq30", "random30"}) {
      RunConfig c;
      c.strategy = Strategy::parse(name);
      c.rounds = K;
      c.mixtures = 2;
      c.seed = seed;
      c.wall_clock = false;
      c.target_accuracy = 0.9;
      c.learner.hidden_units = 16;
      auto r = run(c, shards);
      // A run that never reaches the target counts as K + 1.
      const double rtt = r.rounds_to_target ? double(*r.rounds_to_target) : double(K + 1);
      if (std::string(name) == "random30") {
        rtt_random.push_back(rtt);
        continue;
      }
      rtt_fedq.push_back(rtt);
      std::size_t hits = 0, picks = 0;
      for (std::size_t k = 11; k < r.metrics.size(); ++k)
        for (auto t : r.metrics[k].selected) {
          ++picks;
          hits += std::binary_search(heavy.begin(), heavy.end(), t);
        }
      const double f = double(hits) / double(picks);
      seeds_over += f > 0.30;
      freqs += fmt(" %.3f", f);
    }
  }
  const double a = median(rtt_fedq), b = median(rtt_random);
  return {a <= b && seeds_over >= 5,
          fmt("median rounds to 0.90: fedq30 %.0f, random30 %.0f; heavy-selection freq after round 10:%s "
              "(%zu/7 seeds > 0.30, need 5)",
              a, b, freqs.c_str(), seeds_over)};
}

Outcome baseline_ordering() {
  const char* csv = std::getenv("FEDQ_UNSW_CSV");
  const bool real = csv && fs::exists(csv);
  std::string schema_path = FEDQ_SOURCE_DIR "/data/unsw_nb15_schema.json";
  if (const char* s = std::getenv("FEDQ_UNSW_SCHEMA")) schema_path = s;
  const std::vector<std::string> names{"fedq30", "full", "fedavg", "local"};
  std::vector<std::vector<double>> acc(names.size());
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Dataset ds;
    if (real) {
      LoadOptions lo;
      lo.max_rows = 50000;
      lo.seed = seed;
      ds = load_dataset(csv, load_schema(schema_path), lo);
    } else {
      ds = synthetic_traffic(seed);
    }
    PartitionConfig pc;
    pc.num_environments = 100;
    pc.num_clusters = 2;
    pc.dirichlet_alpha = 0.4;
    pc.seed = seed;
    auto shards = partition_mixture(ds, cluster_dataset(ds, 2, seed), pc);
    for (std::size_t i = 0; i < names.size(); ++i) {
      RunConfig c;
      c.strategy = Strategy::parse(names[i]);
      c.rounds = 50;
      c.seed = seed;
      c.wall_clock = false;
      acc[i].push_back(run(c, shards).max_accuracy);
    }
  }
  std::vector<double> med;
  for (const auto& a : acc) med.push_back(median(a));
  const double gap = 0.01;
  const bool ok = med[0] - med[1] >= gap && med[1] - med[2] >= gap && med[2] - med[3] >= gap;
  return {ok, fmt("[%s] median max acc fedq30 %.4f, full %.4f, fedavg %.4f, local %.4f (each gap >= 0.01)",
                  real ? "UNSW-NB15 file" : "synthetic mixture, no dataset file", med[0], med[1], med[2], med[3])};
}

Outcome determinism_and_replay() {
  Scratch dir;
  const auto csv = dir.path / "traffic.csv", schema = dir.path / "schema.json", config = dir.path / "run.json";
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g(0.0, 1.0);
  std::string text = "dur,sbytes,rate,proto,attack_cat\n";
  for (int i = 0; i < 2000; ++i) {
    const double a = g(rng), b = g(rng), c = g(rng);
    const bool bad = i < 1000 ? a + 0.5 * b > 0 : a - b > 0.3;
    text += fmt("%.6f,%.6f,%.6f,%s,%s\n", a + (i < 1000 ? 0.0 : 3.0), b, c, i % 3 ? "tcp" : "udp",
                bad ? "Exploits" : "Normal");
  }
  spit(csv, text);
  spit(schema, R"({"label":"attack_cat","label_map":{"Normal":0},"label_default":1,
      "numeric":["dur","sbytes","rate"],"categorical":["proto"]})");
  spit(config, R"({"learner":{"hidden_units":8,"local_steps":5},"dqn":{"hidden_units":16,"d_pca":4},"timing":"off"})");

  auto partition = [&](const std::string& name) {
    return run_cli("partition --dataset " + csv.string() + " --schema " + schema.string() +
                       " --envs 100 --alpha 0.4 --clusters 2 --seed 11 --out " + (dir.path / name).string(),
                   dir.path / (name + ".log"));
  };
  if (partition("p1") != 0 || partition("p2") != 0) return {false, "partition command failed"};
  const auto m1 = slurp(dir.path / "p1" / "manifest.json");
  const bool manifest_same = m1 == slurp(dir.path / "p2" / "manifest.json");

  // Replay: rebuild shards from the manifest and re-derive it.
  auto manifest = read_manifest(dir.path / "p1" / "manifest.json");
  auto ds = load_dataset(csv, load_schema(schema));
  auto replayed = make_manifest(apply_manifest(ds, manifest));
  bool replay_same = replayed.entries.size() == manifest.entries.size();
  for (std::size_t t = 0; replay_same && t < manifest.entries.size(); ++t)
    replay_same = replayed.entries[t].env_id == manifest.entries[t].env_id &&
                  replayed.entries[t].train_rows == manifest.entries[t].train_rows &&
                  replayed.entries[t].test_rows == manifest.entries[t].test_rows;

  auto train = [&](const std::string& name) {
    return run_cli("train --manifest " + (dir.path / "p1" / "manifest.json").string() + " --config " +
                       config.string() + " --strategy fedq --select-n 30 --rounds 6 --seed 4 --out " +
                       (dir.path / name).string(),
                   dir.path / (name + ".log"));
  };
  if (train("t1") != 0 || train("t2") != 0) return {false, "train command failed"};
  const auto a = slurp(dir.path / "t1" / "metrics.csv"), b = slurp(dir.path / "t2" / "metrics.csv");
  const bool metrics_same = !a.empty() && a == b;
  return {manifest_same && replay_same && metrics_same,
          fmt("manifest bytes equal=%d, replayed assignment equal=%d, metrics.csv bytes equal=%d (%zu bytes)",
              manifest_same, replay_same, metrics_same, a.size())};
}

Outcome m1_reduction() {
  auto res = synth_mixture(rotated_boundary_config(3, 150, 1.2, 9));
  PartitionConfig pc;
  pc.num_environments = 8;
  pc.seed = 9;
  auto shards = partition_mixture(res.dataset, res.clusters, pc);
  RunConfig cfg;
  cfg.strategy = Strategy::parse("full");
  cfg.mixtures = 1;
  cfg.rounds = 10;
  cfg.seed = 5;
  cfg.wall_clock = false;
  cfg.learner.hidden_units = 6;
  cfg.learner.local_steps = 4;
  cfg.learner.batch_size = 8;
  std::vector<std::vector<double>> trace;
  run(cfg, shards, {[&](const RoundMetrics&, const FederationState& s) { trace.push_back(s.theta[0].data); }});

  // Plain federated averaging: broadcast, unweighted local SGD, n_t-weighted mean.
  const auto root = cfg.seed;
  Mlp global = init_params(3, cfg.learner.hidden_units, stream_seed(root, SeedStream::Learner));
  std::size_t equal = 0;
  for (std::size_t round = 0; round <= cfg.rounds && round < trace.size(); ++round) {
    std::vector<std::vector<double>> uploads;
    std::vector<std::size_t> n;
    for (const auto& sh : shards) {
      const std::vector<double> ones(sh.train.size(), 1.0);
      uploads.push_back(
          local_sgd(global, sh.train, ones, cfg.learner, minibatch_seed(root, round, sh.env_id, 0)).data);
      n.push_back(sh.n_train());
    }
    global.data = oracle::flat_weighted_mean(uploads, n);
    equal += trace[round] == global.data;
  }
  return {trace.size() == cfg.rounds + 1 && equal == trace.size(),
          fmt("%zu/%zu rounds bit-identical to the reference loop", equal, cfg.rounds + 1)};
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<Outcome()> fn;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {1, "simplex and normalization", 5, simplex_suite},
      {2, "gradient oracle", 30, gradient_oracle},
      {3, "EM monotonicity", 60, em_monotonicity},
      {4, "aggregation and PCA oracles", 5, aggregation_and_pca},
      {5, "reward exactness", 1, reward_exactness},
      {6, "mixture necessity", 300, mixture_necessity},
      {7, "selection efficiency", 1200, selection_efficiency},
      {8, "baseline ordering", 1800, baseline_ordering},
      {9, "determinism and replay", 120, determinism_and_replay},
      {10, "M=1 reduction", 60, m1_reduction},
  };
  std::vector<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.push_back(std::atoi(argv[i]));
  bool failed = false;
  for (const auto& c : all) {
    if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), c.id) == wanted.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.fn();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs < c.budget_s;
    const bool pass = o.pass && in_time;
    failed = failed || !pass;
    std::printf("%s  %2d %s: %s [%.1fs, budget %.0fs%s]\n", pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(),
                secs, c.budget_s, in_time ? "" : ", over budget");
    std::fflush(stdout);
  }
  return failed ? 1 : 0;
}
