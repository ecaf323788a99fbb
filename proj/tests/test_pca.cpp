#include <doctest.h>

#include <cmath>
#include <sstream>

#include "fedq/pca.hpp"
#include "test_util.hpp"

using namespace fedq;

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void check_orthonormal(const PcaProjection& p) {
  for (std::size_t i = 0; i < p.d_pca; ++i)
    for (std::size_t j = 0; j < p.d_pca; ++j)
      CHECK(std::abs(dot(p.basis_row(i), p.basis_row(j)) - (i == j ? 1.0 : 0.0)) < 1e-8);
}

std::vector<std::vector<double>> low_rank_rows(Rng& rng, std::size_t R, std::size_t D, std::size_t rank) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<std::vector<double>> dirs(rank, std::vector<double>(D));
  for (auto& d : dirs)
    for (auto& v : d) v = g(rng);
  std::vector<double> offset(D);
  for (auto& v : offset) v = g(rng);
  std::vector<std::vector<double>> rows;
  for (std::size_t r = 0; r < R; ++r) {
    auto row = offset;
    for (const auto& d : dirs) {
      const double c = g(rng);
      for (std::size_t k = 0; k < D; ++k) row[k] += c * d[k];
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

TEST_CASE("points on y = x") {
  std::vector<std::vector<double>> rows{{-2, -2}, {0, 0}, {1, 1}, {4, 4}};
  auto p = fit_pca(rows, 1);
  CHECK(p.basis[0] == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
  CHECK(p.basis[1] == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
  CHECK(!p.rank_deficient);
}

TEST_CASE("exact-rank reconstruction and orthonormality") {
  Rng rng(5);
  for (std::size_t rank : {1u, 3u, 6u}) {
    auto rows = low_rank_rows(rng, 12, 20, rank);
    auto p = fit_pca(rows, rank);
    check_orthonormal(p);
    CHECK(p.rank == rank);
    for (const auto& row : rows) {
      auto z = project(p, row);
      for (std::size_t k = 0; k < 20; ++k) {
        double rec = p.mean[k];
        for (std::size_t j = 0; j < rank; ++j) rec += p.basis[j * 20 + k] * z[j];
        CHECK(std::abs(rec - row[k]) < 1e-8);
      }
    }
    for (std::size_t j = 0; j + 1 < p.d_pca; ++j) CHECK(p.singular_values[j] >= p.singular_values[j + 1]);
  }
}

TEST_CASE("sign convention: largest-magnitude entry positive") {
  Rng rng(6);
  auto rows = low_rank_rows(rng, 10, 8, 5);
  auto p = fit_pca(rows, 5);
  for (std::size_t j = 0; j < 5; ++j) {
    auto r = p.basis_row(j);
    double best = 0.0;
    for (double v : r)
      if (std::abs(v) > std::abs(best)) best = v;
    CHECK(best > 0.0);
  }
  auto q = fit_pca(rows, 5);
  CHECK(q.basis == p.basis);
}

TEST_CASE("identical rows are flagged and padded") {
  std::vector<std::vector<double>> rows(4, {1.0, 2.0, 3.0});
  auto p = fit_pca(rows, 2);
  CHECK(p.rank_deficient);
  CHECK(p.rank == 0);
  check_orthonormal(p);
  auto z = project(p, rows[0]);
  for (double v : z) CHECK(v == 0.0);
}

TEST_CASE("partially deficient data is completed to an orthonormal basis") {
  Rng rng(8);
  auto rows = low_rank_rows(rng, 9, 7, 2);
  auto p = fit_pca(rows, 5);
  CHECK(p.rank_deficient);
  CHECK(p.rank == 2);
  check_orthonormal(p);
}

TEST_CASE("fit preconditions") {
  std::vector<std::vector<double>> one{{1.0, 2.0}};
  CHECK_THROWS_AS_CODE(fit_pca(one, 1), ErrorCode::TooFewSamples);
  std::vector<std::vector<double>> two{{1.0, 2.0}, {3.0, 1.0}};
  CHECK_THROWS_AS_CODE(fit_pca(two, 2), ErrorCode::DimensionMismatch);
}

TEST_CASE("project examples") {
  Rng rng(9);
  auto rows = low_rank_rows(rng, 10, 6, 4);
  auto p = fit_pca(rows, 3);
  auto z = project(p, p.mean);
  for (double v : z) CHECK(v == 0.0);
  auto shifted = p.mean;
  for (std::size_t k = 0; k < 6; ++k) shifted[k] += 2.5 * p.basis_row(1)[k];
  auto e = project(p, shifted);
  CHECK(e[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(e[1] == doctest::Approx(2.5).epsilon(1e-12));
  CHECK(std::abs(e[2]) < 1e-12);
  std::normal_distribution<double> g(0.0, 3.0);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> v(6);
    double diff = 0.0;
    for (std::size_t k = 0; k < 6; ++k) {
      v[k] = g(rng);
      diff += (v[k] - p.mean[k]) * (v[k] - p.mean[k]);
    }
    auto y = project(p, v);
    CHECK(std::sqrt(dot(y, y)) <= std::sqrt(diff) + 1e-9);
  }
  CHECK_THROWS_AS_CODE(project(p, std::vector<double>(5)), ErrorCode::DimensionMismatch);
}

TEST_CASE("build_state concatenates per component") {
  auto theta = init_components(2, 3, 2, 4);
  std::vector<std::vector<double>> corpus;
  for (std::uint64_t s = 0; s < 8; ++s) corpus.push_back(init_params(2, 3, 100 + s).data);
  auto p = fit_pca(corpus, 4);
  auto s = build_state(p, theta);
  REQUIRE(s.size() == 8);
  auto a = project(p, theta[0].data), b = project(p, theta[1].data);
  CHECK(std::vector<double>(s.begin(), s.begin() + 4) == a);
  CHECK(std::vector<double>(s.begin() + 4, s.end()) == b);
  ComponentSet swapped{{theta[1], theta[0]}};
  auto t = build_state(p, swapped);
  CHECK(std::vector<double>(t.begin(), t.begin() + 4) == b);
  ComponentSet one{{theta[0]}};
  CHECK(build_state(p, one) == a);
  ComponentSet at_mean{{unflatten(p.mean, 2, 3), unflatten(p.mean, 2, 3)}};
  for (double v : build_state(p, at_mean)) CHECK(v == 0.0);
}

TEST_CASE("projection round trip") {
  Rng rng(2);
  auto p = fit_pca(low_rank_rows(rng, 6, 5, 3), 3);
  std::stringstream ss;
  write_projection(ss, p);
  auto q = read_projection(ss);
  CHECK(q.mean == p.mean);
  CHECK(q.basis == p.basis);
  CHECK(q.d_pca == p.d_pca);
}
