#include "fedq/dqn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "binary_io.hpp"

namespace fedq {

namespace {
constexpr double kAgentFormatVersion = 1.0;
}

void DqnConfig::validate(std::size_t environments) const {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw Error(ErrorCode::ConfigInvalid, "gamma must lie in [0, 1)");
  if (select_n < 1 || select_n > environments)
    throw Error(ErrorCode::ConfigInvalid, "selection size must lie in [1, T]");
  if (!(reward_base > 1.0)) throw Error(ErrorCode::ConfigInvalid, "reward base must be > 1");
  if (!(target_accuracy > 0.0 && target_accuracy <= 1.0))
    throw Error(ErrorCode::ConfigInvalid, "target accuracy must lie in (0, 1]");
  if (!(q_learning_rate >= 0.0)) throw Error(ErrorCode::ConfigInvalid, "q_learning_rate must be >= 0");
  if (minibatch < 1) throw Error(ErrorCode::ConfigInvalid, "minibatch must be >= 1");
  if (capacity < 1) throw Error(ErrorCode::ConfigInvalid, "replay capacity must be >= 1");
  if (!(temperature > 0.0)) throw Error(ErrorCode::ConfigInvalid, "temperature must be > 0");
  if (hidden_units < 1 || d_pca < 1) throw Error(ErrorCode::ConfigInvalid, "hidden_units and d_pca must be >= 1");
}

QNetwork init_qnetwork(std::size_t state_dim, std::size_t hidden, std::size_t environments, std::uint64_t seed) {
  return init_params(state_dim, hidden, seed, environments);
}

std::vector<double> q_values(const QNetwork& qnet, std::span<const double> state) {
  std::vector<double> out(qnet.output), z1(qnet.hidden);
  forward_linear(qnet, state, out, z1);
  return out;
}

std::vector<std::size_t> sample_without_replacement(std::span<const double> logits, std::size_t n, Rng& rng) {
  const std::size_t T = logits.size();
  n = std::min(n, T);
  std::vector<bool> taken(T, false);
  std::vector<std::size_t> out;
  std::vector<double> w(T);
  for (std::size_t k = 0; k < n; ++k) {
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < T; ++j)
      if (!taken[j]) top = std::max(top, logits[j]);
    double total = 0.0;
    for (std::size_t j = 0; j < T; ++j) {
      w[j] = taken[j] ? 0.0 : std::exp(logits[j] - top);
      total += w[j];
    }
    double u = uniform01(rng) * total;
    std::size_t pick = T;
    for (std::size_t j = 0; j < T; ++j) {
      if (taken[j]) continue;
      pick = j;
      u -= w[j];
      if (u < 0.0) break;
    }
    taken[pick] = true;
    out.push_back(pick);
  }
  return out;
}

std::vector<std::size_t> select_environments(const QNetwork& qnet, std::span<const double> state, std::size_t n,
                                             double tau, std::uint64_t seed) {
  if (n > qnet.output) throw Error(ErrorCode::ConfigInvalid, "cannot select more environments than exist");
  auto q = q_values(qnet, state);
  for (auto& v : q) v /= tau;
  Rng rng(seed);
  auto ids = sample_without_replacement(q, n, rng);
  std::sort(ids.begin(), ids.end());
  return ids;
}

double reward(double accuracy, double target, double base) { return std::pow(base, accuracy - target) - 1.0; }

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity < 1) throw Error(ErrorCode::ConfigInvalid, "replay capacity must be >= 1");
}

void ReplayBuffer::store(Transition t) {
  entries_.push_back(std::move(t));
  while (entries_.size() > capacity_) entries_.pop_front();
}

std::vector<Transition> ReplayBuffer::sample_minibatch(std::size_t B, std::uint64_t seed) const {
  if (entries_.empty()) throw Error(ErrorCode::EmptyBuffer, "replay buffer is empty");
  Rng rng(seed);
  std::vector<Transition> out;
  out.reserve(B);
  const std::size_t n = entries_.size();
  if (n < B) {
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    for (std::size_t b = 0; b < B; ++b) out.push_back(entries_[pick(rng)]);
    return out;
  }
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t b = 0; b < B; ++b) {
    std::uniform_int_distribution<std::size_t> pick(b, n - 1);
    std::swap(idx[b], idx[pick(rng)]);
    out.push_back(entries_[idx[b]]);
  }
  return out;
}

double composite_q(const QNetwork& qnet, std::span<const double> state, std::span<const std::size_t> action) {
  if (action.empty()) throw Error(ErrorCode::DimensionMismatch, "empty action");
  const auto q = q_values(qnet, state);
  double s = 0.0;
  for (auto a : action) s += q.at(a);
  return s / static_cast<double>(action.size());
}

double td_target(const Transition& t, const QNetwork& qnet, double gamma) {
  if (t.terminal || gamma == 0.0) return t.r;
  const auto q = q_values(qnet, t.s_next);
  return t.r + gamma * *std::max_element(q.begin(), q.end());
}

double dqn_loss(const QNetwork& qnet, std::span<const Transition> batch, std::span<const double> targets) {
  double s = 0.0;
  for (std::size_t j = 0; j < batch.size(); ++j) {
    const double e = targets[j] - composite_q(qnet, batch[j].s, batch[j].action);
    s += e * e;
  }
  return s / static_cast<double>(batch.size());
}

QNetwork dqn_loss_grad(const QNetwork& qnet, std::span<const Transition> batch, std::span<const double> targets) {
  if (batch.empty()) throw Error(ErrorCode::EmptyBuffer, "empty minibatch");
  if (targets.size() != batch.size()) throw Error(ErrorCode::DimensionMismatch, "one target per transition");
  QNetwork g = Mlp::zeros(qnet.input, qnet.hidden, qnet.output);
  std::vector<double> q(qnet.output), z1(qnet.hidden), dout(qnet.output);
  const double B = static_cast<double>(batch.size());
  for (std::size_t j = 0; j < batch.size(); ++j) {
    const auto& t = batch[j];
    forward_linear(qnet, t.s, q, z1);
    const double N = static_cast<double>(t.action.size());
    double qhat = 0.0;
    for (auto a : t.action) qhat += q.at(a);
    qhat /= N;
    std::fill(dout.begin(), dout.end(), 0.0);
    const double coef = -2.0 * (targets[j] - qhat) / (B * N);
    for (auto a : t.action) dout[a] += coef;
    backward_linear(qnet, t.s, z1, dout, g);
  }
  return g;
}

QNetwork train_step(const QNetwork& qnet, const QNetwork& target_net, std::span<const Transition> batch,
                    double gamma, double learning_rate) {
  if (batch.empty()) throw Error(ErrorCode::EmptyBuffer, "empty minibatch");
  std::vector<double> y(batch.size());
  for (std::size_t j = 0; j < batch.size(); ++j) y[j] = td_target(batch[j], target_net, gamma);
  return sgd_step(qnet, dqn_loss_grad(qnet, batch, y), learning_rate);
}

void write_agent(const std::filesystem::path& path, const DqnAgent& agent) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
    const auto& c = agent.config;
    for (double h : {kAgentFormatVersion, static_cast<double>(agent.qnet.input),
                     static_cast<double>(agent.qnet.hidden), static_cast<double>(agent.qnet.output), c.gamma,
                     static_cast<double>(c.select_n), c.reward_base, c.target_accuracy, c.q_learning_rate,
                     static_cast<double>(c.minibatch), static_cast<double>(c.capacity), c.temperature,
                     static_cast<double>(c.d_pca), static_cast<double>(c.seed >> 32),
                     static_cast<double>(c.seed & 0xffffffffULL)})
      io::write_f64(out, h);
    io::write_f64s(out, agent.qnet.data);
    io::write_f64(out, static_cast<double>(agent.buffer.size()));
    for (const auto& t : agent.buffer.entries()) {
      io::write_f64(out, static_cast<double>(t.action.size()));
      for (auto a : t.action) io::write_f64(out, static_cast<double>(a));
      io::write_f64(out, t.r);
      io::write_f64(out, t.terminal ? 1.0 : 0.0);
      io::write_f64s(out, t.s);
      io::write_f64s(out, t.s_next);
    }
  }
  std::filesystem::rename(tmp, path);
}

DqnAgent read_agent(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::FileUnreadable, "cannot open agent checkpoint " + path.string());
  if (io::read_f64(in) != kAgentFormatVersion) throw Error(ErrorCode::IoError, "unsupported agent checkpoint version");
  const auto input = io::read_count(in);
  const auto hidden = io::read_count(in);
  const auto output = io::read_count(in);
  DqnConfig c;
  c.gamma = io::read_f64(in);
  c.select_n = io::read_count(in);
  c.reward_base = io::read_f64(in);
  c.target_accuracy = io::read_f64(in);
  c.q_learning_rate = io::read_f64(in);
  c.minibatch = io::read_count(in);
  c.capacity = io::read_count(in);
  c.temperature = io::read_f64(in);
  c.d_pca = io::read_count(in);
  const auto hi = static_cast<std::uint64_t>(io::read_f64(in));
  const auto lo = static_cast<std::uint64_t>(io::read_f64(in));
  c.seed = (hi << 32) | lo;
  c.hidden_units = hidden;
  DqnAgent agent{c, Mlp::zeros(input, hidden, output), ReplayBuffer(c.capacity)};
  io::read_f64s(in, agent.qnet.data);
  const auto n = io::read_count(in);
  for (std::size_t i = 0; i < n; ++i) {
    Transition t;
    const auto na = io::read_count(in);
    for (std::size_t k = 0; k < na; ++k) t.action.push_back(io::read_count(in));
    t.r = io::read_f64(in);
    t.terminal = io::read_f64(in) != 0.0;
    t.s.assign(input, 0.0);
    t.s_next.assign(input, 0.0);
    io::read_f64s(in, t.s);
    io::read_f64s(in, t.s_next);
    agent.buffer.store(std::move(t));
  }
  return agent;
}

}  // namespace fedq
