#include "fedq/fedem.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "binary_io.hpp"

namespace fedq {

MixtureWeights MixtureWeights::uniform(std::size_t environments, std::size_t components) {
  return MixtureWeights(environments, components, 1.0 / static_cast<double>(components));
}

void ComponentSet::validate() const {
  if (components.empty()) throw Error(ErrorCode::ShapeMismatch, "component set is empty");
  for (const auto& c : components)
    if (!c.same_shape(components.front()) || c.output != 1)
      throw Error(ErrorCode::ShapeMismatch, "components must share (d, hidden) shape");
}

ComponentSet init_components(std::size_t d, std::size_t hidden, std::size_t M, std::uint64_t seed) {
  ComponentSet set;
  for (std::size_t m = 0; m < M; ++m) set.components.push_back(init_params(d, hidden, seed + m));
  return set;
}

bool on_simplex(std::span<const double> row, double tol) {
  double s = 0.0;
  for (double v : row) {
    if (!(v >= 0.0)) return false;
    s += v;
  }
  return std::abs(s - 1.0) <= tol;
}

RowMatrix component_losses(std::span<const SampleRecord> samples, const ComponentSet& theta) {
  RowMatrix out(samples.size(), theta.size());
  for (std::size_t i = 0; i < samples.size(); ++i)
    for (std::size_t m = 0; m < theta.size(); ++m) out(i, m) = loss(theta[m], samples[i].features, samples[i].label);
  return out;
}

Posteriors responsibilities(const RowMatrix& losses, std::span<const double> pi) {
  if (pi.size() != losses.cols) throw Error(ErrorCode::DimensionMismatch, "pi length differs from M");
  if (std::none_of(pi.begin(), pi.end(), [](double v) { return v > 0.0; }))
    throw Error(ErrorCode::AllZeroRow, "every mixture weight is zero");
  const std::size_t M = losses.cols;
  std::vector<double> log_pi(M);
  for (std::size_t m = 0; m < M; ++m)
    log_pi[m] = pi[m] > 0.0 ? std::log(pi[m]) : -std::numeric_limits<double>::infinity();

  Posteriors q(losses.rows, M);
  std::vector<double> z(M);
  for (std::size_t i = 0; i < losses.rows; ++i) {
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t m = 0; m < M; ++m) {
      z[m] = log_pi[m] - losses(i, m);
      top = std::max(top, z[m]);
    }
    double s = 0.0;
    auto row = q.row(i);
    for (std::size_t m = 0; m < M; ++m) {
      row[m] = std::exp(z[m] - top);
      s += row[m];
    }
    for (auto& v : row) v /= s;
  }
  return q;
}

Posteriors e_step(const EnvironmentShard& shard, const ComponentSet& theta, std::span<const double> pi) {
  if (pi.size() != theta.size()) throw Error(ErrorCode::DimensionMismatch, "pi length differs from M");
  return responsibilities(component_losses(shard.train, theta), pi);
}

std::vector<double> m_step_pi(const Posteriors& q) {
  if (q.rows == 0) throw Error(ErrorCode::EmptyPosteriors, "no posterior rows");
  std::vector<double> pi(q.cols, 0.0);
  for (std::size_t i = 0; i < q.rows; ++i)
    for (std::size_t m = 0; m < q.cols; ++m) pi[m] += q(i, m);
  for (auto& v : pi) v /= static_cast<double>(q.rows);
  return pi;
}

MlpParameters m_step_theta(const EnvironmentShard& shard, const Posteriors& q, const MlpParameters& theta_m,
                           std::size_t m, const LearnerConfig& cfg, std::uint64_t seed) {
  if (q.rows != shard.train.size() || m >= q.cols)
    throw Error(ErrorCode::DimensionMismatch, "posteriors do not align with the shard");
  std::vector<double> w(q.rows);
  for (std::size_t i = 0; i < q.rows; ++i) w[i] = q(i, m);
  return local_sgd(theta_m, shard.train, w, cfg, seed);
}

MlpParameters aggregate(std::vector<Contribution> contribs) {
  if (contribs.empty()) throw Error(ErrorCode::ShapeMismatch, "nothing to aggregate");
  std::stable_sort(contribs.begin(), contribs.end(),
                   [](const Contribution& a, const Contribution& b) { return a.env_id < b.env_id; });
  const auto& first = *contribs.front().params;
  std::size_t n = 0;
  for (const auto& c : contribs) {
    if (!c.params->same_shape(first)) throw Error(ErrorCode::ShapeMismatch, "contribution shapes differ");
    if (c.n < 1) throw Error(ErrorCode::ShapeMismatch, "contribution with n_t = 0");
    n += c.n;
  }
  MlpParameters out = Mlp::zeros(first.input, first.hidden, first.output);
  const double total = static_cast<double>(n);
  for (const auto& c : contribs) {
    const double w = static_cast<double>(c.n) / total;
    const auto& src = c.params->data;
    for (std::size_t k = 0; k < out.data.size(); ++k) out.data[k] += w * src[k];
  }
  return out;
}

double local_nll(const EnvironmentShard& shard, const ComponentSet& theta, std::span<const double> pi) {
  if (pi.size() != theta.size()) throw Error(ErrorCode::DimensionMismatch, "pi length differs from M");
  if (shard.train.empty()) return 0.0;
  const auto losses = component_losses(shard.train, theta);
  double acc = 0.0;
  for (std::size_t i = 0; i < losses.rows; ++i) {
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t m = 0; m < losses.cols; ++m)
      if (pi[m] > 0.0) top = std::max(top, std::log(pi[m]) - losses(i, m));
    double s = 0.0;
    for (std::size_t m = 0; m < losses.cols; ++m)
      if (pi[m] > 0.0) s += std::exp(std::log(pi[m]) - losses(i, m) - top);
    acc += top + std::log(s);
  }
  return -acc / static_cast<double>(losses.rows);
}

double global_nll(const std::vector<EnvironmentShard>& shards, const ComponentSet& theta, const MixtureWeights& pi) {
  if (pi.rows != shards.size()) throw Error(ErrorCode::DimensionMismatch, "one Pi row per environment required");
  std::size_t n = 0;
  for (const auto& s : shards) n += s.train.size();
  double out = 0.0;
  for (std::size_t t = 0; t < shards.size(); ++t)
    out += static_cast<double>(shards[t].train.size()) / static_cast<double>(n) * local_nll(shards[t], theta, pi.row(t));
  return out;
}

double mixture_predict(std::span<const double> x, const ComponentSet& theta, std::span<const double> pi) {
  if (pi.size() != theta.size()) throw Error(ErrorCode::DimensionMismatch, "pi length differs from M");
  double p = 0.0;
  for (std::size_t m = 0; m < theta.size(); ++m)
    if (pi[m] != 0.0) p += pi[m] * forward(theta[m], x);
  return p;
}

int mixture_label(std::span<const double> x, const ComponentSet& theta, std::span<const double> pi, double threshold) {
  return mixture_predict(x, theta, pi) >= threshold ? 1 : 0;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  c.theta.validate();
  const auto& first = c.theta[0];
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
    for (double h : {static_cast<double>(c.round), static_cast<double>(c.theta.size()),
                     static_cast<double>(first.input), static_cast<double>(first.hidden),
                     static_cast<double>(c.pi.rows)})
      io::write_f64(out, h);
    for (const auto& comp : c.theta.components) io::write_f64s(out, comp.data);
    io::write_f64s(out, c.pi.data);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::FileUnreadable, "cannot open checkpoint " + path.string());
  Checkpoint c;
  c.round = io::read_count(in);
  const auto M = io::read_count(in);
  const auto d = io::read_count(in);
  const auto hidden = io::read_count(in);
  const auto T = io::read_count(in);
  for (std::size_t m = 0; m < M; ++m) {
    auto p = Mlp::zeros(d, hidden, 1);
    io::read_f64s(in, p.data);
    c.theta.components.push_back(std::move(p));
  }
  c.pi = MixtureWeights(T, M);
  io::read_f64s(in, c.pi.data);
  return c;
}

}  // namespace fedq
