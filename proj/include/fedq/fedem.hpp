#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "fedq/data.hpp"
#include "fedq/mlp.hpp"

namespace fedq {

// Dense row-major matrix used for the mixture weights and the posteriors.
struct RowMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  RowMatrix() = default;
  RowMatrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
  std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
  bool operator==(const RowMatrix&) const = default;
};

/// Pi: one simplex row per environment.
struct MixtureWeights : RowMatrix {
  using RowMatrix::RowMatrix;
  static MixtureWeights uniform(std::size_t environments, std::size_t components);
};

/// q_t: one simplex row per training sample of an environment.
struct Posteriors : RowMatrix {
  using RowMatrix::RowMatrix;
};

struct ComponentSet {
  std::vector<MlpParameters> components;

  std::size_t size() const { return components.size(); }
  const MlpParameters& operator[](std::size_t m) const { return components[m]; }
  MlpParameters& operator[](std::size_t m) { return components[m]; }
  void validate() const;
  bool operator==(const ComponentSet&) const = default;
};

/// Component m initialised from seed + m so components start distinct.
ComponentSet init_components(std::size_t d, std::size_t hidden, std::size_t M, std::uint64_t seed);

// losses(i, m) = loss(theta_m, x_i, y_i) over the given samples.
RowMatrix component_losses(std::span<const SampleRecord> samples, const ComponentSet& theta);

/// q(i, m) proportional to pi_m * exp(-losses(i, m)), evaluated as a
/// log-space softmax with ln 0 = -inf.
Posteriors responsibilities(const RowMatrix& losses, std::span<const double> pi);

Posteriors e_step(const EnvironmentShard& shard, const ComponentSet& theta, std::span<const double> pi);

/// Column means of q.
std::vector<double> m_step_pi(const Posteriors& q);

/// Local solver for one component: local SGD on the q-column-m weighted
/// cross-entropy starting from theta_m. Throws ZeroTotalWeight when the
/// column carries no mass.
MlpParameters m_step_theta(const EnvironmentShard& shard, const Posteriors& q, const MlpParameters& theta_m,
                           std::size_t m, const LearnerConfig& cfg, std::uint64_t seed);

struct Contribution {
  std::size_t env_id = 0;
  const MlpParameters* params = nullptr;
  std::size_t n = 0;
};

/// sum_t (n_t / n) theta_t with n summed over the contributions, accumulated
/// in ascending env_id order.
MlpParameters aggregate(std::vector<Contribution> contribs);

/// -(1/n_t) sum_i log sum_m pi_m exp(-l_im) over the training samples.
double local_nll(const EnvironmentShard& shard, const ComponentSet& theta, std::span<const double> pi);
double global_nll(const std::vector<EnvironmentShard>& shards, const ComponentSet& theta, const MixtureWeights& pi);

double mixture_predict(std::span<const double> x, const ComponentSet& theta, std::span<const double> pi);
int mixture_label(std::span<const double> x, const ComponentSet& theta, std::span<const double> pi,
                  double threshold = 0.5);

bool on_simplex(std::span<const double> row, double tol = 1e-9);

struct Checkpoint {
  std::size_t round = 0;
  ComponentSet theta;
  MixtureWeights pi;
};

// Header (round, M, d, hidden, T), flattened components, then Pi; all f64.
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace fedq
