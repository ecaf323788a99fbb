#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <span>
#include <vector>

#include "fedq/mlp.hpp"

namespace fedq {

struct DqnConfig {
  double gamma = 0.95;
  std::size_t select_n = 30;
  double reward_base = 64.0;  // Xi
  double target_accuracy = 0.9;
  double q_learning_rate = 1e-3;
  std::size_t minibatch = 32;
  std::size_t capacity = 1000;
  double temperature = 1.0;
  std::size_t hidden_units = 64;
  std::size_t d_pca = 16;  // per component, clamped by the fit corpus rank
  std::uint64_t seed = 0;

  void validate(std::size_t environments) const;
};

// State (M * d_pca) -> one Q-value per environment, linear head.
using QNetwork = Mlp;

QNetwork init_qnetwork(std::size_t state_dim, std::size_t hidden, std::size_t environments, std::uint64_t seed);

std::vector<double> q_values(const QNetwork& qnet, std::span<const double> state);

/// Draws n distinct indices: each draw samples from the softmax of the
/// remaining logits, so probabilities are renormalised over what is left.
std::vector<std::size_t> sample_without_replacement(std::span<const double> logits, std::size_t n, Rng& rng);

/// softmax(Q / tau) sampling of n distinct environments; ids returned sorted.
std::vector<std::size_t> select_environments(const QNetwork& qnet, std::span<const double> state, std::size_t n,
                                             double tau, std::uint64_t seed);

/// base^(accuracy - target) - 1
double reward(double accuracy, double target, double base);

struct Transition {
  std::vector<double> s;
  std::vector<std::size_t> action;  // selected environment ids
  double r = 0.0;
  std::vector<double> s_next;
  bool terminal = false;

  bool operator==(const Transition&) const = default;
};

/// Bounded FIFO experience store.
class ReplayBuffer {
public:
  explicit ReplayBuffer(std::size_t capacity);

  void store(Transition t);
  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }
  const std::deque<Transition>& entries() const { return entries_; }

  /// B uniform draws; with replacement only when the buffer holds fewer than B.
  std::vector<Transition> sample_minibatch(std::size_t B, std::uint64_t seed) const;

private:
  std::size_t capacity_;
  std::deque<Transition> entries_;
};

/// Mean of the selected environments' Q-outputs.
double composite_q(const QNetwork& qnet, std::span<const double> state, std::span<const std::size_t> action);

/// r for terminal transitions, else r + gamma * max over all T outputs at s_next.
double td_target(const Transition& t, const QNetwork& qnet, double gamma);

// (1/B) sum_j (y_j - Qhat(s_j, a_j))^2 and its gradient with y held fixed.
double dqn_loss(const QNetwork& qnet, std::span<const Transition> batch, std::span<const double> targets);
QNetwork dqn_loss_grad(const QNetwork& qnet, std::span<const Transition> batch, std::span<const double> targets);

/// One gradient step on the composite-action TD loss. Targets come from
/// `target_net` (the previous-iteration snapshot); pass qnet itself when no
/// separate snapshot exists.
QNetwork train_step(const QNetwork& qnet, const QNetwork& target_net, std::span<const Transition> batch,
                    double gamma, double learning_rate);

struct DqnAgent {
  DqnConfig config;
  QNetwork qnet;
  ReplayBuffer buffer{1};
};

void write_agent(const std::filesystem::path& path, const DqnAgent& agent);
DqnAgent read_agent(const std::filesystem::path& path);

}  // namespace fedq
