#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedq/common.hpp"
#include "fedq/data.hpp"

namespace fedq {

/// One-hidden-layer ReLU network stored as a single flat vector in row-major
/// (W1, b1, W2, b2) order. With output == 1 and a sigmoid head this is the
/// trust classifier; the Q-network reuses the layout with linear outputs.
struct Mlp {
  std::size_t input = 0;
  std::size_t hidden = 0;
  std::size_t output = 1;
  std::vector<double> data;

  static std::size_t flat_size(std::size_t input, std::size_t hidden, std::size_t output) {
    return hidden * input + hidden + output * hidden + output;
  }
  static Mlp zeros(std::size_t input, std::size_t hidden, std::size_t output = 1);

  std::size_t size() const { return data.size(); }
  bool same_shape(const Mlp& o) const {
    return input == o.input && hidden == o.hidden && output == o.output;
  }

  std::span<double> w1() { return {data.data(), hidden * input}; }
  std::span<double> b1() { return {data.data() + hidden * input, hidden}; }
  std::span<double> w2() { return {data.data() + hidden * input + hidden, output * hidden}; }
  std::span<double> b2() { return {data.data() + hidden * input + hidden + output * hidden, output}; }
  std::span<const double> w1() const { return {data.data(), hidden * input}; }
  std::span<const double> b1() const { return {data.data() + hidden * input, hidden}; }
  std::span<const double> w2() const { return {data.data() + hidden * input + hidden, output * hidden}; }
  std::span<const double> b2() const {
    return {data.data() + hidden * input + hidden + output * hidden, output};
  }

  bool operator==(const Mlp&) const = default;
};

// The trust classifier h_theta; output == 1.
using MlpParameters = Mlp;

inline constexpr double kProbFloor = 1e-12;

// How local_sgd scales a weighted batch. Responsibility divides the weighted
// loss by the batch's weight sum; Sample divides by the batch size, so the
// step shrinks with the responsibility mass the batch carries.
enum class WeightNorm { Responsibility, Sample };

struct LearnerConfig {
  std::size_t hidden_units = 32;
  double learning_rate = 0.05;
  std::size_t local_steps = 20;
  std::size_t batch_size = 32;  // 0 means full batch
  std::uint64_t seed = 0;
  std::optional<double> grad_clip;
  WeightNorm weight_norm = WeightNorm::Sample;

  void validate() const;
};

const char* to_string(WeightNorm w);
WeightNorm parse_weight_norm(const std::string& text);

struct WeightedExample {
  std::span<const double> x;
  int y = 0;
  double weight = 1.0;
};

/// Glorot-uniform weights, zero biases.
Mlp init_params(std::size_t d, std::size_t hidden_units, std::uint64_t seed, std::size_t output = 1);

/// sigma(W2 relu(W1 x + b1) + b2) clamped to [1e-12, 1 - 1e-12].
double forward(const MlpParameters& p, std::span<const double> x);
double loss(const MlpParameters& p, std::span<const double> x, int y);
int predict(const MlpParameters& p, std::span<const double> x, double threshold = 0.5);

/// Gradient of (1 / sum q) * sum_i q_i * loss(p, x_i, y_i). The derivative of
/// ReLU at 0 is taken as 0, and the gradient through the probability clamp is
/// 0 when the clamp is active.
Mlp weighted_grad(const MlpParameters& p, std::span<const WeightedExample> batch);

/// p - eta * g, with g first rescaled to global norm `clip` if it exceeds it.
Mlp sgd_step(const Mlp& p, const Mlp& g, double eta, std::optional<double> clip = std::nullopt);

/// Runs cfg.local_steps mini-batch steps on the weighted cross-entropy.
/// Batches walk a seeded permutation of `samples`; a batch whose weights sum
/// to zero is skipped but still counts as a step.
MlpParameters local_sgd(const MlpParameters& start, std::span<const SampleRecord> samples,
                        std::span<const double> weights, const LearnerConfig& cfg, std::uint64_t seed);

// Raw linear outputs of a multi-output network (no output activation).
void forward_linear(const Mlp& p, std::span<const double> x, std::span<double> out,
                    std::span<double> hidden_pre);
// Accumulates d(out . dout)/d(params) into grad, given the forward pass's
// hidden pre-activations.
void backward_linear(const Mlp& p, std::span<const double> x, std::span<const double> hidden_pre,
                     std::span<const double> dout, Mlp& grad);

std::vector<double> flatten(const Mlp& p);
Mlp unflatten(std::span<const double> flat, std::size_t input, std::size_t hidden, std::size_t output = 1);

double global_norm(const Mlp& g);
bool all_finite(const Mlp& p);

// Binary layout: header (input, hidden) as doubles, then the flat vector.
void write_params(std::ostream& out, const MlpParameters& p);
MlpParameters read_params(std::istream& in);

}  // namespace fedq
