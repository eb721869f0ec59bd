#include "doctest.h"
#include "test_support.hpp"

#include "fbia/screening.hpp"
#include "fbia/simgen.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

using namespace fbia;

namespace {

ConditionBlock block_of(Matrix data) { return {"c1", std::move(data), std::nullopt}; }

CorrelationSummary summary_from(const Matrix& corr, int n) {
  CorrelationSummary cs;
  cs.corr = corr;
  cs.n = n;
  return cs;
}

}  // namespace

TEST_CASE("identical and negated columns") {
  Matrix m = fbia::testing::gaussian_matrix(30, 3, 11);
  m.col(1) = m.col(0);
  m.col(2) = -m.col(0);
  const auto cs = empirical_correlations(block_of(m));
  CHECK(cs.corr(0, 1) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(cs.corr(0, 2) == doctest::Approx(-1.0).epsilon(1e-14));
  CHECK(cs.corr(1, 0) == cs.corr(0, 1));
  // clamped, so the p-value is 0 rather than NaN
  const auto p = correlation_pvalues(cs);
  CHECK(p[0] == 0.0);
  CHECK(p[1] == 0.0);
  CHECK(std::isfinite(correlation_zscores(cs)[0]));
}

TEST_CASE("independent columns have small correlation") {
  const auto cs = empirical_correlations(block_of(fbia::testing::gaussian_matrix(10000, 3, 5)));
  double worst = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = i + 1; j < 3; ++j) worst = std::max(worst, std::abs(cs.corr(i, j)));
  CHECK(worst < 0.05);
  CHECK(cs.n == 10000);
}

TEST_CASE("Fisher-z p-values") {
  Matrix corr = Matrix::Identity(3, 3);
  corr(0, 1) = corr(1, 0) = 0.5;
  corr(0, 2) = corr(2, 0) = -0.5;
  const auto cs = summary_from(corr, 28);
  const auto z = correlation_zscores(cs);
  const auto p = correlation_pvalues(cs);
  // arbitrary-precision reference values
  CHECK(z[0] == doctest::Approx(2.746530721670274).epsilon(1e-13));
  CHECK(p[0] == doctest::Approx(0.006022924485883404).epsilon(1e-10));
  CHECK(z[1] == doctest::Approx(-2.746530721670274).epsilon(1e-13));
  CHECK(p[1] == p[0]);
  CHECK(p[2] == 1.0);
}

TEST_CASE("screening with all p-values one is empty") {
  const EdgeIndex index(10);
  const std::vector<double> ones(index.size(), 1.0);
  CHECK(screen_edges(index, ones, 0.2, TestMethod::kBenjaminiYekutieli).pairs.empty());
  CHECK(screen_edges(summary_from(Matrix::Identity(10, 10), 100), 0.2, TestMethod::kBenjaminiYekutieli)
            .pairs.empty());
}

TEST_CASE("one tiny p-value among uniforms survives BY") {
  // 1000 p-values need 46 nodes: 45*46/2 = 1035 pairs, the rest set to 1.
  const EdgeIndex index(46);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> unif;
  std::vector<double> p(index.size(), 1.0);
  for (std::size_t l = 0; l < 1000; ++l) p[l] = unif(rng);
  p[417] = 1e-12;

  // step-up oracle
  const double m = static_cast<double>(p.size());
  double harmonic = 0.0;
  for (std::size_t k = 1; k <= p.size(); ++k) harmonic += 1.0 / static_cast<double>(k);
  std::vector<double> sorted = p;
  std::sort(sorted.begin(), sorted.end());
  double cut = -1.0;
  for (std::size_t k = sorted.size(); k-- > 0;) {
    if (sorted[k] <= 0.2 * static_cast<double>(k + 1) / (m * harmonic)) {
      cut = sorted[k];
      break;
    }
  }
  REQUIRE(cut >= 1e-12);
  std::set<std::size_t> expected;
  for (std::size_t l = 0; l < p.size(); ++l)
    if (p[l] <= cut) expected.insert(l);

  const auto g = screen_edges(index, p, 0.2, TestMethod::kBenjaminiYekutieli);
  std::set<std::size_t> got;
  for (const auto& [i, j] : g.pairs) got.insert(index.index(i, j));
  CHECK(got == expected);
  CHECK(got.count(417) == 1);
}

TEST_CASE("p-value screening refuses the empirical-Bayes method") {
  const EdgeIndex index(4);
  const std::vector<double> p(index.size(), 0.5);
  CHECK_THROWS_AS(screen_edges(index, p, 0.2, TestMethod::kEmpiricalBayes), Error);
}

TEST_CASE("AR(2) sure screening") {
  const Matrix omega = ar2_precision(50);
  // population correlation graph: pairs with |rho| >= 0.3
  const Matrix sigma = omega.inverse();
  std::vector<NodePair> truth;
  for (int i = 0; i < 50; ++i)
    for (int j = i + 1; j < 50; ++j)
      if (std::abs(sigma(i, j)) / std::sqrt(sigma(i, i) * sigma(j, j)) >= 0.3) truth.push_back({i, j});
  REQUIRE(truth.size() == 49);
  const auto cs = empirical_correlations(block_of(sample_mvn(omega, 200, 21)));
  for (TestMethod method : {TestMethod::kEmpiricalBayes, TestMethod::kBenjaminiYekutieli}) {
    const auto g = screen_edges(cs, 0.2, method);
    const std::set<NodePair> screened(g.pairs.begin(), g.pairs.end());
    std::size_t hit = 0;
    for (const auto& e : truth) hit += screened.count(e);
    CHECK(static_cast<double>(hit) >= 0.95 * static_cast<double>(truth.size()));
  }
}

TEST_CASE("neighbourhood cap arithmetic") {
  CHECK(neighborhood_cap(100, 1.0) == 21);
  CHECK(neighborhood_cap(100, 2.0) == 10);
  CHECK(neighborhood_cap(1000, 1.0) == 144);
}

TEST_CASE("neighbourhood reduction keeps the strongest neighbours") {
  // node 0 correlated with 40 others, decreasing strength
  const int p = 45;
  Matrix corr = Matrix::Identity(p, p);
  ScreenedGraph screened;
  screened.nodes = p;
  for (int j = 1; j <= 40; ++j) {
    corr(0, j) = corr(j, 0) = 0.9 - 0.01 * j;
    screened.pairs.push_back({0, j});
  }
  // node 41 has three screened neighbours
  for (int j : {42, 43, 44}) {
    corr(41, j) = corr(j, 41) = 0.3;
    screened.pairs.push_back({41, j});
  }
  std::sort(screened.pairs.begin(), screened.pairs.end());
  const auto rn = reduce_neighborhoods(summary_from(corr, 100), screened, 1.0);
  CHECK(rn.cap_used == 21);
  REQUIRE(rn.neighbors[0].size() == 21);
  for (int k = 0; k < 21; ++k) CHECK(rn.neighbors[0][k] == k + 1);
  CHECK(rn.neighbors[41] == std::vector<int>{42, 43, 44});
  CHECK(rn.neighbors[40] == std::vector<int>{0});
}

TEST_CASE("tie at the cap boundary keeps the smaller index") {
  // n = 10 gives cap floor(10 / ln 10) = 4
  REQUIRE(neighborhood_cap(10, 1.0) == 4);
  const int p = 7;
  Matrix corr = Matrix::Identity(p, p);
  ScreenedGraph screened;
  screened.nodes = p;
  const double r[] = {0.0, 0.9, 0.8, 0.7, 0.5, 0.5, 0.5};
  for (int j = 1; j < p; ++j) {
    corr(0, j) = corr(j, 0) = (j % 2 == 0 ? -1.0 : 1.0) * r[j];
    screened.pairs.push_back({0, j});
  }
  const auto rn = reduce_neighborhoods(summary_from(corr, 10), screened, 1.0);
  CHECK(rn.neighbors[0] == std::vector<int>{1, 2, 3, 4});
}

TEST_CASE("BY screening is monotone in alpha and reductions respect the cap") {
  const auto family = make_family(StructureKind::kScaleFree, 60, 1, Lineage::kTemporal, 0.05, 9);
  const auto cs = empirical_correlations(block_of(sample_mvn(family.omegas[0], 80, 4)));
  std::set<NodePair> previous;
  for (double alpha : {0.01, 0.05, 0.1, 0.2, 0.4, 0.8}) {
    const auto g = screen_edges(cs, alpha, TestMethod::kBenjaminiYekutieli);
    const std::set<NodePair> current(g.pairs.begin(), g.pairs.end());
    CHECK(std::includes(current.begin(), current.end(), previous.begin(), previous.end()));
    previous = current;

    for (double xi : {0.5, 1.0, 3.0}) {
      const auto rn = reduce_neighborhoods(cs, g, xi);
      CHECK(rn.cap_used == neighborhood_cap(80, xi));
      for (int i = 0; i < 60; ++i) {
        CHECK(static_cast<int>(rn.neighbors[i].size()) <= rn.cap_used);
        for (int j : rn.neighbors[i]) CHECK(current.count({std::min(i, j), std::max(i, j)}) == 1);
      }
    }
  }
}

TEST_CASE("null calibration of screening") {
  const int p = 30;
  const double alpha = 0.2;
  const double pairs = p * (p - 1) / 2.0;
  for (TestMethod method : {TestMethod::kEmpiricalBayes, TestMethod::kBenjaminiYekutieli}) {
    double total = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto cs = empirical_correlations(block_of(fbia::testing::gaussian_matrix(100, p, 100 + seed)));
      total += static_cast<double>(screen_edges(cs, alpha, method).pairs.size()) / pairs;
    }
    CHECK(total / 20.0 <= 2.0 * alpha);
  }
}

TEST_CASE("covariate adjustment removes a shared driver") {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> normal;
  const int n = 400;
  Matrix x(n, 2);
  Matrix w(n, 1);
  for (int r = 0; r < n; ++r) {
    w(r, 0) = normal(rng);
    x(r, 0) = 2.0 * w(r, 0) + normal(rng);
    x(r, 1) = -1.5 * w(r, 0) + normal(rng);
  }
  ConditionBlock block{"c1", x, CovariateBlock{{"w"}, w}};
  const auto raw = empirical_correlations(block);
  const auto adjusted = covariate_adjusted_correlations(block);
  CHECK(std::abs(raw.corr(0, 1)) > 0.5);
  CHECK(std::abs(adjusted.corr(0, 1)) < 0.15);
  CHECK(adjusted.n == n - 1);

  ConditionBlock bare{"c1", x, std::nullopt};
  CHECK(covariate_adjusted_correlations(bare).corr == empirical_correlations(bare).corr);
}
