#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "fedq/fedem.hpp"

namespace fedq {

struct PcaProjection {
  std::size_t dim = 0;     // D, flattened parameter length
  std::size_t d_pca = 0;
  std::vector<double> mean;           // length D
  std::vector<double> basis;          // d_pca x D, row-major, orthonormal rows
  std::vector<double> singular_values;  // length d_pca, descending (0 for padded rows)
  std::size_t rank = 0;
  bool rank_deficient = false;  // rows beyond `rank` are a Gram-Schmidt completion

  std::span<const double> basis_row(std::size_t j) const { return {basis.data() + j * dim, dim}; }
};

/// Top-d_pca right singular vectors of the row-centred matrix (rows are R
/// flattened parameter vectors of length D). Each basis row is signed so its
/// largest-magnitude entry is positive.
PcaProjection fit_pca(std::span<const std::vector<double>> rows, std::size_t d_pca);

std::vector<double> project(const PcaProjection& proj, std::span<const double> flat);

/// Concatenation of project(theta_m) in component order.
std::vector<double> build_state(const PcaProjection& proj, const ComponentSet& theta);

// (D, d_pca, mean, basis) as f64.
void write_projection(std::ostream& out, const PcaProjection& proj);
PcaProjection read_projection(std::istream& in);

}  // namespace fedq
