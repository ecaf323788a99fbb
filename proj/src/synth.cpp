#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>

#include "fedq/data.hpp"

namespace fedq {

SynthResult synth_mixture(const SynthConfig& spec) {
  const std::size_t d = spec.dim;
  if (d == 0) throw Error(ErrorCode::InvalidSpec, "dim must be >= 1");
  std::size_t total = 0;
  for (const auto& c : spec.components) total += c.samples;
  if (total == 0) throw Error(ErrorCode::EmptyDataset, "synthetic spec declares zero samples");

  Rng rng(derive_seed(spec.seed, 0x5359));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  std::vector<int> clusters;
  rows.reserve(total);

  for (std::size_t m = 0; m < spec.components.size(); ++m) {
    const auto& comp = spec.components[m];
    if (comp.mean.size() != d || comp.rule.normal.size() != d)
      throw Error(ErrorCode::InvalidSpec, "component " + std::to_string(m) + " has wrong dimension");
    Eigen::MatrixXd chol = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    if (!comp.covariance.empty()) {
      if (comp.covariance.size() != d * d)
        throw Error(ErrorCode::InvalidSpec, "covariance must be dim x dim");
      Eigen::MatrixXd cov = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
          comp.covariance.data(), static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
      Eigen::LLT<Eigen::MatrixXd> llt(cov);
      if (llt.info() != Eigen::Success || !cov.isApprox(cov.transpose()))
        throw Error(ErrorCode::InvalidSpec, "covariance of component " + std::to_string(m) + " is not positive definite");
      chol = llt.matrixL();
    }
    double norm = 0.0;
    for (double w : comp.rule.normal) norm += w * w;
    norm = std::sqrt(norm);
    if (norm == 0.0) throw Error(ErrorCode::InvalidSpec, "label rule normal is zero");

    for (std::size_t i = 0; i < comp.samples; ++i) {
      Eigen::VectorXd z(static_cast<Eigen::Index>(d));
      Eigen::VectorXd x;
      double score = 0.0;
      int attempts = 0;
      do {
        if (++attempts > 10000) throw Error(ErrorCode::InvalidSpec, "margin too large to sample");
        for (Eigen::Index k = 0; k < z.size(); ++k) z[k] = normal(rng);
        x = chol * z;
        score = comp.rule.offset;
        for (std::size_t k = 0; k < d; ++k) {
          x[static_cast<Eigen::Index>(k)] += comp.mean[k];
          score += comp.rule.normal[k] * x[static_cast<Eigen::Index>(k)];
        }
      } while (std::abs(score) / norm < comp.rule.margin);
      rows.emplace_back(x.data(), x.data() + x.size());
      const bool positive = score > 0.0;
      labels.push_back((positive != comp.rule.flip) ? 1 : 0);
      clusters.push_back(static_cast<int>(m));
    }
  }

  std::vector<std::string> names;
  for (std::size_t k = 0; k < d; ++k) names.push_back("x" + std::to_string(k));
  return {standardize(std::move(rows), std::move(labels), std::move(names)), std::move(clusters)};
}

SynthConfig flipped_label_config(std::size_t dim, std::size_t samples_per_component, std::uint64_t seed) {
  return rotated_boundary_config(dim, samples_per_component, M_PI, seed);
}

SynthConfig rotated_boundary_config(std::size_t dim, std::size_t samples_per_component,
                                    double angle_radians, std::uint64_t seed) {
  SynthConfig cfg;
  cfg.dim = std::max<std::size_t>(dim, 2);
  cfg.seed = seed;
  SynthComponent base;
  base.samples = samples_per_component;
  base.mean.assign(cfg.dim, 0.0);
  base.rule.normal.assign(cfg.dim, 0.0);
  base.rule.normal[0] = 1.0;
  SynthComponent other = base;
  // Exactly opposite normals are expressed as a flip so both components share
  // one boundary.
  if (std::abs(angle_radians - M_PI) < 1e-12) {
    other.rule.flip = true;
  } else {
    other.rule.normal[0] = std::cos(angle_radians);
    other.rule.normal[1] = std::sin(angle_radians);
  }
  cfg.components = {base, other};
  return cfg;
}

}  // namespace fedq
