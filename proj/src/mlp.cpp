#include "fedq/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>

#include "binary_io.hpp"

namespace fedq {

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void check_input(const Mlp& p, std::span<const double> x) {
  if (x.size() != p.input)
    throw Error(ErrorCode::DimensionMismatch,
                "expected " + std::to_string(p.input) + " features, got " + std::to_string(x.size()));
}

// Returns the unclamped sigmoid output and fills hidden pre-activations.
double forward_unclamped(const Mlp& p, std::span<const double> x, std::span<double> z1) {
  const auto w1 = p.w1();
  const auto b1 = p.b1();
  const auto w2 = p.w2();
  double z2 = p.b2()[0];
  for (std::size_t h = 0; h < p.hidden; ++h) {
    double s = b1[h];
    const double* row = w1.data() + h * p.input;
    for (std::size_t k = 0; k < p.input; ++k) s += row[k] * x[k];
    z1[h] = s;
    if (s > 0.0) z2 += w2[h] * s;
  }
  return sigmoid(z2);
}

}  // namespace

void LearnerConfig::validate() const {
  if (hidden_units < 1) throw Error(ErrorCode::ConfigInvalid, "hidden_units must be >= 1");
  if (!(learning_rate > 0.0)) throw Error(ErrorCode::ConfigInvalid, "learning_rate must be > 0");
  if (local_steps < 1) throw Error(ErrorCode::ConfigInvalid, "local_steps must be >= 1");
  if (grad_clip && !(*grad_clip > 0.0)) throw Error(ErrorCode::ConfigInvalid, "grad_clip must be > 0");
}

const char* to_string(WeightNorm w) { return w == WeightNorm::Sample ? "sample" : "responsibility"; }

WeightNorm parse_weight_norm(const std::string& text) {
  if (text == "sample") return WeightNorm::Sample;
  if (text == "responsibility") return WeightNorm::Responsibility;
  throw Error(ErrorCode::ConfigInvalid, "weight_norm must be 'responsibility' or 'sample'");
}

Mlp Mlp::zeros(std::size_t input, std::size_t hidden, std::size_t output) {
  Mlp p;
  p.input = input;
  p.hidden = hidden;
  p.output = output;
  p.data.assign(flat_size(input, hidden, output), 0.0);
  return p;
}

Mlp init_params(std::size_t d, std::size_t hidden_units, std::uint64_t seed, std::size_t output) {
  if (d < 1 || hidden_units < 1 || output < 1) throw Error(ErrorCode::ConfigInvalid, "network dimensions must be >= 1");
  Mlp p = Mlp::zeros(d, hidden_units, output);
  Rng rng(seed);
  const double lim1 = std::sqrt(6.0 / static_cast<double>(d + hidden_units));
  const double lim2 = std::sqrt(6.0 / static_cast<double>(hidden_units + output));
  std::uniform_real_distribution<double> u1(-lim1, lim1), u2(-lim2, lim2);
  for (auto& w : p.w1()) w = u1(rng);
  for (auto& w : p.w2()) w = u2(rng);
  return p;
}

double forward(const MlpParameters& p, std::span<const double> x) {
  check_input(p, x);
  std::vector<double> z1(p.hidden);
  return std::clamp(forward_unclamped(p, x, z1), kProbFloor, 1.0 - kProbFloor);
}

double loss(const MlpParameters& p, std::span<const double> x, int y) {
  const double h = forward(p, x);
  return y == 1 ? -std::log(h) : -std::log1p(-h);
}

int predict(const MlpParameters& p, std::span<const double> x, double threshold) {
  return forward(p, x) >= threshold ? 1 : 0;
}

Mlp weighted_grad(const MlpParameters& p, std::span<const WeightedExample> batch) {
  if (batch.empty()) throw Error(ErrorCode::ZeroTotalWeight, "empty batch");
  double total = 0.0;
  for (const auto& e : batch) total += e.weight;
  if (!(total > 0.0)) throw Error(ErrorCode::ZeroTotalWeight, "batch weights sum to zero");

  Mlp g = Mlp::zeros(p.input, p.hidden, p.output);
  auto gw1 = g.w1();
  auto gb1 = g.b1();
  auto gw2 = g.w2();
  auto gb2 = g.b2();
  const auto w2 = p.w2();
  std::vector<double> z1(p.hidden);
  for (const auto& e : batch) {
    check_input(p, e.x);
    if (e.weight == 0.0) continue;
    const double s = forward_unclamped(p, e.x, z1);
    if (s < kProbFloor || s > 1.0 - kProbFloor) continue;  // clamp active: flat loss
    const double dz2 = (e.weight / total) * (s - static_cast<double>(e.y));
    gb2[0] += dz2;
    for (std::size_t h = 0; h < p.hidden; ++h) {
      if (!(z1[h] > 0.0)) continue;
      gw2[h] += dz2 * z1[h];
      const double dz1 = dz2 * w2[h];
      gb1[h] += dz1;
      double* row = gw1.data() + h * p.input;
      for (std::size_t k = 0; k < p.input; ++k) row[k] += dz1 * e.x[k];
    }
  }
  return g;
}

double global_norm(const Mlp& g) {
  double s = 0.0;
  for (double v : g.data) s += v * v;
  return std::sqrt(s);
}

bool all_finite(const Mlp& p) {
  return std::all_of(p.data.begin(), p.data.end(), [](double v) { return std::isfinite(v); });
}

Mlp sgd_step(const Mlp& p, const Mlp& g, double eta, std::optional<double> clip) {
  if (!p.same_shape(g)) throw Error(ErrorCode::ShapeMismatch, "gradient shape differs from parameters");
  double scale = eta;
  if (clip) {
    const double norm = global_norm(g);
    if (norm > *clip) scale = eta * (*clip / norm);
  }
  Mlp out = p;
  if (scale == 0.0) return out;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= scale * g.data[i];
  return out;
}

MlpParameters local_sgd(const MlpParameters& start, std::span<const SampleRecord> samples,
                        std::span<const double> weights, const LearnerConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (samples.size() != weights.size())
    throw Error(ErrorCode::DimensionMismatch, "one weight per sample required");
  double total = 0.0;
  for (double w : weights) total += w;
  if (samples.empty() || !(total > 0.0)) throw Error(ErrorCode::ZeroTotalWeight, "weights sum to zero");

  const std::size_t n = samples.size();
  const bool full = cfg.batch_size == 0 || cfg.batch_size >= n;
  const std::size_t bsz = full ? n : cfg.batch_size;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  if (!full) std::shuffle(order.begin(), order.end(), rng);

  std::vector<WeightedExample> batch;
  batch.reserve(bsz);
  MlpParameters p = start;
  std::size_t cursor = 0;
  for (std::size_t step = 0; step < cfg.local_steps; ++step) {
    batch.clear();
    double bw = 0.0;
    for (std::size_t b = 0; b < bsz; ++b) {
      if (cursor == n) {
        cursor = 0;
        if (!full) std::shuffle(order.begin(), order.end(), rng);
      }
      const auto i = order[cursor++];
      batch.push_back({samples[i].features, samples[i].label, weights[i]});
      bw += weights[i];
    }
    if (!(bw > 0.0)) continue;
    double eta = cfg.learning_rate;
    if (cfg.weight_norm == WeightNorm::Sample) eta *= bw / static_cast<double>(bsz);
    p = sgd_step(p, weighted_grad(p, batch), eta, cfg.grad_clip);
  }
  return p;
}

void forward_linear(const Mlp& p, std::span<const double> x, std::span<double> out,
                    std::span<double> hidden_pre) {
  check_input(p, x);
  const auto w1 = p.w1();
  const auto b1 = p.b1();
  const auto w2 = p.w2();
  const auto b2 = p.b2();
  for (std::size_t h = 0; h < p.hidden; ++h) {
    double s = b1[h];
    const double* row = w1.data() + h * p.input;
    for (std::size_t k = 0; k < p.input; ++k) s += row[k] * x[k];
    hidden_pre[h] = s;
  }
  for (std::size_t o = 0; o < p.output; ++o) {
    double s = b2[o];
    const double* row = w2.data() + o * p.hidden;
    for (std::size_t h = 0; h < p.hidden; ++h)
      if (hidden_pre[h] > 0.0) s += row[h] * hidden_pre[h];
    out[o] = s;
  }
}

void backward_linear(const Mlp& p, std::span<const double> x, std::span<const double> hidden_pre,
                     std::span<const double> dout, Mlp& grad) {
  const auto w2 = p.w2();
  auto gw1 = grad.w1();
  auto gb1 = grad.b1();
  auto gw2 = grad.w2();
  auto gb2 = grad.b2();
  for (std::size_t o = 0; o < p.output; ++o) {
    if (dout[o] == 0.0) continue;
    gb2[o] += dout[o];
    double* grow = gw2.data() + o * p.hidden;
    for (std::size_t h = 0; h < p.hidden; ++h)
      if (hidden_pre[h] > 0.0) grow[h] += dout[o] * hidden_pre[h];
  }
  for (std::size_t h = 0; h < p.hidden; ++h) {
    if (!(hidden_pre[h] > 0.0)) continue;
    double da = 0.0;
    for (std::size_t o = 0; o < p.output; ++o) da += dout[o] * w2[o * p.hidden + h];
    if (da == 0.0) continue;
    gb1[h] += da;
    double* row = gw1.data() + h * p.input;
    for (std::size_t k = 0; k < p.input; ++k) row[k] += da * x[k];
  }
}

std::vector<double> flatten(const Mlp& p) { return p.data; }

Mlp unflatten(std::span<const double> flat, std::size_t input, std::size_t hidden, std::size_t output) {
  if (flat.size() != Mlp::flat_size(input, hidden, output))
    throw Error(ErrorCode::DimensionMismatch, "flat vector length does not match (input, hidden, output)");
  Mlp p;
  p.input = input;
  p.hidden = hidden;
  p.output = output;
  p.data.assign(flat.begin(), flat.end());
  return p;
}

void write_params(std::ostream& out, const MlpParameters& p) {
  io::write_f64(out, static_cast<double>(p.input));
  io::write_f64(out, static_cast<double>(p.hidden));
  io::write_f64s(out, p.data);
}

MlpParameters read_params(std::istream& in) {
  const auto d = io::read_count(in);
  const auto hidden = io::read_count(in);
  Mlp p = Mlp::zeros(d, hidden, 1);
  io::read_f64s(in, p.data);
  return p;
}

}  // namespace fedq
