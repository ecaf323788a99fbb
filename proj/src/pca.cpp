#include "fedq/pca.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>

#include "binary_io.hpp"

namespace fedq {

namespace {

void fix_sign(std::span<double> row) {
  std::size_t arg = 0;
  for (std::size_t k = 1; k < row.size(); ++k)
    if (std::abs(row[k]) > std::abs(row[arg])) arg = k;
  if (row[arg] < 0.0)
    for (auto& v : row) v = -v;
}

}  // namespace

PcaProjection fit_pca(std::span<const std::vector<double>> rows, std::size_t d_pca) {
  const std::size_t R = rows.size();
  if (R < 2) throw Error(ErrorCode::TooFewSamples, "PCA needs at least two rows");
  const std::size_t D = rows.front().size();
  if (d_pca < 1 || d_pca > std::min(D, R - 1))
    throw Error(ErrorCode::DimensionMismatch, "d_pca must lie in [1, min(D, R - 1)]");

  PcaProjection proj;
  proj.dim = D;
  proj.d_pca = d_pca;
  proj.mean.assign(D, 0.0);
  for (const auto& r : rows) {
    if (r.size() != D) throw Error(ErrorCode::DimensionMismatch, "PCA rows differ in length");
    for (std::size_t k = 0; k < D; ++k) proj.mean[k] += r[k];
  }
  for (auto& v : proj.mean) v /= static_cast<double>(R);

  Eigen::MatrixXd X(static_cast<Eigen::Index>(R), static_cast<Eigen::Index>(D));
  for (std::size_t i = 0; i < R; ++i)
    for (std::size_t k = 0; k < D; ++k)
      X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k] - proj.mean[k];

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(X, Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const auto& V = svd.matrixV();
  const double top = sv.size() > 0 ? sv[0] : 0.0;
  const double tol = top * static_cast<double>(std::max(R, D)) * 1e-13;

  proj.basis.assign(d_pca * D, 0.0);
  proj.singular_values.assign(d_pca, 0.0);
  std::size_t rank = 0;
  for (std::size_t j = 0; j < d_pca && static_cast<Eigen::Index>(j) < sv.size(); ++j) {
    if (!(sv[static_cast<Eigen::Index>(j)] > tol) || top == 0.0) break;
    for (std::size_t k = 0; k < D; ++k)
      proj.basis[j * D + k] = V(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j));
    proj.singular_values[j] = sv[static_cast<Eigen::Index>(j)];
    fix_sign({proj.basis.data() + j * D, D});
    ++rank;
  }
  proj.rank = rank;

  // Complete with canonical unit vectors orthogonalised against what we have
  // (modified Gram-Schmidt, applied twice for stability).
  std::size_t filled = rank;
  for (std::size_t e = 0; e < D && filled < d_pca; ++e) {
    std::vector<double> v(D, 0.0);
    v[e] = 1.0;
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t j = 0; j < filled; ++j) {
        const double* b = proj.basis.data() + j * D;
        double dot = 0.0;
        for (std::size_t k = 0; k < D; ++k) dot += b[k] * v[k];
        for (std::size_t k = 0; k < D; ++k) v[k] -= dot * b[k];
      }
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-6) continue;
    for (std::size_t k = 0; k < D; ++k) proj.basis[filled * D + k] = v[k] / norm;
    fix_sign({proj.basis.data() + filled * D, D});
    ++filled;
  }
  proj.rank_deficient = rank < d_pca;
  return proj;
}

std::vector<double> project(const PcaProjection& proj, std::span<const double> flat) {
  if (flat.size() != proj.dim) throw Error(ErrorCode::DimensionMismatch, "vector length differs from PCA dimension");
  std::vector<double> out(proj.d_pca, 0.0);
  for (std::size_t j = 0; j < proj.d_pca; ++j) {
    const double* b = proj.basis.data() + j * proj.dim;
    double s = 0.0;
    for (std::size_t k = 0; k < proj.dim; ++k) s += b[k] * (flat[k] - proj.mean[k]);
    out[j] = s;
  }
  return out;
}

std::vector<double> build_state(const PcaProjection& proj, const ComponentSet& theta) {
  std::vector<double> state;
  state.reserve(proj.d_pca * theta.size());
  for (const auto& c : theta.components) {
    auto p = project(proj, c.data);
    state.insert(state.end(), p.begin(), p.end());
  }
  return state;
}

void write_projection(std::ostream& out, const PcaProjection& proj) {
  io::write_f64(out, static_cast<double>(proj.dim));
  io::write_f64(out, static_cast<double>(proj.d_pca));
  io::write_f64s(out, proj.mean);
  io::write_f64s(out, proj.basis);
}

PcaProjection read_projection(std::istream& in) {
  PcaProjection p;
  p.dim = io::read_count(in);
  p.d_pca = io::read_count(in);
  p.mean.assign(p.dim, 0.0);
  p.basis.assign(p.dim * p.d_pca, 0.0);
  io::read_f64s(in, p.mean);
  io::read_f64s(in, p.basis);
  p.singular_values.assign(p.d_pca, 0.0);
  p.rank = p.d_pca;
  return p;
}

}  // namespace fedq
