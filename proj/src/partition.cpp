#include <algorithm>
#include <limits>
#include <numeric>

#include "fedq/data.hpp"

namespace fedq {

namespace {

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double t = a[i] - b[i];
    s += t * t;
  }
  return s;
}

struct KmeansRun {
  std::vector<int> assign;
  double inertia = std::numeric_limits<double>::infinity();
};

KmeansRun kmeans_once(const Dataset& ds, std::size_t k, Rng& rng, int max_iterations) {
  const std::size_t n = ds.size();
  std::vector<std::vector<double>> centers;
  centers.reserve(k);
  centers.push_back(ds.samples[std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)].features);
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  while (centers.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], sq_dist(ds.samples[i].features, centers.back()));
      total += d2[i];
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      double u = uniform01(rng) * total;
      for (pick = 0; pick + 1 < n; ++pick) {
        u -= d2[pick];
        if (u < 0.0) break;
      }
    } else {
      pick = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    }
    centers.push_back(ds.samples[pick].features);
  }

  KmeansRun run;
  run.assign.assign(n, -1);
  std::vector<double> best_d(n);
  for (int it = 0; it < max_iterations; ++it) {
    int changed = 0;
#pragma omp parallel for reduction(+ : changed) schedule(static)
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double bd = sq_dist(ds.samples[i].features, centers[0]);
      for (std::size_t c = 1; c < k; ++c) {
        const double dc = sq_dist(ds.samples[i].features, centers[c]);
        if (dc < bd) { bd = dc; best = static_cast<int>(c); }
      }
      best_d[i] = bd;
      if (run.assign[i] != best) { run.assign[i] = best; ++changed; }
    }
    if (changed == 0 && it > 0) break;

    std::vector<std::vector<double>> sums(k, std::vector<double>(ds.dim(), 0.0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = static_cast<std::size_t>(run.assign[i]);
      ++counts[c];
      for (std::size_t f = 0; f < ds.dim(); ++f) sums[c][f] += ds.samples[i].features[f];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) {
        // Empty cluster: move the worst-fit point into it.
        auto far = static_cast<std::size_t>(std::max_element(best_d.begin(), best_d.end()) - best_d.begin());
        centers[c] = ds.samples[far].features;
        best_d[far] = 0.0;
        run.assign[far] = static_cast<int>(c);
        continue;
      }
      for (std::size_t f = 0; f < ds.dim(); ++f) centers[c][f] = sums[c][f] / static_cast<double>(counts[c]);
    }
  }
  run.inertia = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    run.inertia += sq_dist(ds.samples[i].features, centers[static_cast<std::size_t>(run.assign[i])]);
  return run;
}

// Renumber clusters by order of first appearance so labels are canonical.
std::vector<int> canonical_labels(const std::vector<int>& assign, std::size_t k) {
  std::vector<int> remap(k, -1);
  int next = 0;
  std::vector<int> out(assign.size());
  for (std::size_t i = 0; i < assign.size(); ++i) {
    auto& r = remap[static_cast<std::size_t>(assign[i])];
    if (r < 0) r = next++;
    out[i] = r;
  }
  return out;
}

}  // namespace

std::vector<int> cluster_dataset(const Dataset& ds, std::size_t k, std::uint64_t seed, int restarts,
                                 int max_iterations) {
  if (k < 1) throw Error(ErrorCode::InvalidSpec, "k must be >= 1");
  if (k > ds.size()) throw Error(ErrorCode::TooFewSamples, "k exceeds the number of samples");
  const std::size_t n = ds.size();
  if (k == 1) return std::vector<int>(n, 0);
  if (k == n) {
    std::vector<int> ids(n);
    std::iota(ids.begin(), ids.end(), 0);
    return ids;
  }
  KmeansRun best;
  for (int r = 0; r < std::max(restarts, 1); ++r) {
    Rng rng(derive_seed(seed, 0x4b4d, static_cast<std::uint64_t>(r)));
    auto run = kmeans_once(ds, k, rng, max_iterations);
    if (run.inertia < best.inertia) best = std::move(run);
  }
  return canonical_labels(best.assign, k);
}

std::vector<EnvironmentShard> partition_mixture(const Dataset& ds, const std::vector<int>& clusters,
                                                const PartitionConfig& cfg) {
  cfg.validate();
  if (clusters.size() != ds.size())
    throw Error(ErrorCode::DimensionMismatch, "cluster vector length differs from dataset size");
  const std::size_t T = cfg.num_environments;
  const std::size_t K = cfg.num_clusters;

  std::vector<std::vector<std::size_t>> members(K);
  for (std::size_t i = 0; i < clusters.size(); ++i) {
    if (clusters[i] < 0 || static_cast<std::size_t>(clusters[i]) >= K)
      throw Error(ErrorCode::InvalidSpec, "cluster id outside [0, num_clusters)");
    members[static_cast<std::size_t>(clusters[i])].push_back(i);
  }
  for (std::size_t c = 0; c < K; ++c)
    if (members[c].empty()) throw Error(ErrorCode::EmptyCluster, "cluster " + std::to_string(c) + " is empty");

  Rng rng(stream_seed(cfg.seed, SeedStream::Partition));
  std::vector<std::vector<std::size_t>> pools(T);
  std::vector<double> weight(T);
  for (std::size_t c = 0; c < K; ++c) {
    std::vector<double> count(T, 0.0);
    double total = cfg.dirichlet_alpha * static_cast<double>(T);
    for (auto idx : members[c]) {
      double u = uniform01(rng) * total;
      std::size_t j = 0;
      for (; j + 1 < T; ++j) {
        u -= cfg.dirichlet_alpha + count[j];
        if (u < 0.0) break;
      }
      count[j] += 1.0;
      total += 1.0;
      pools[j].push_back(idx);
    }
  }

  // Every environment needs at least one training sample.
  for (std::size_t j = 0; j < T; ++j) {
    if (!pools[j].empty()) continue;
    std::size_t donor = 0;
    for (std::size_t t = 1; t < T; ++t)
      if (pools[t].size() > pools[donor].size()) donor = t;
    if (pools[donor].size() < 2)
      throw Error(ErrorCode::TooFewSamples, "fewer samples than environments");
    pools[j].push_back(pools[donor].back());
    pools[donor].pop_back();
  }

  std::vector<EnvironmentShard> shards(T);
  for (std::size_t j = 0; j < T; ++j) {
    auto& pool = pools[j];
    std::shuffle(pool.begin(), pool.end(), rng);
    const auto size = static_cast<long long>(pool.size());
    auto n_train = std::clamp(std::llround(cfg.train_fraction * static_cast<double>(size)), 1LL, size);
    shards[j].env_id = j;
    for (long long i = 0; i < size; ++i) {
      const auto& rec = ds.samples[pool[static_cast<std::size_t>(i)]];
      (i < n_train ? shards[j].train : shards[j].test).push_back(rec);
    }
  }
  return shards;
}

}  // namespace fedq
