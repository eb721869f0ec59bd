#include "doctest.h"
#include "test_support.hpp"

#include "fbia/evaluation.hpp"
#include "fbia/simgen.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>

using namespace fbia;
using fbia::testing::TempDir;

namespace {

std::vector<std::vector<NodePair>> complement_of(const std::vector<std::vector<NodePair>>& sets, int p) {
  std::vector<std::vector<NodePair>> out;
  for (const auto& set : sets) {
    std::vector<NodePair> c;
    for (int i = 0; i < p; ++i)
      for (int j = i + 1; j < p; ++j)
        if (std::find(set.begin(), set.end(), NodePair{i, j}) == set.end()) c.push_back({i, j});
    out.push_back(c);
  }
  return out;
}

std::vector<int> node_degrees(const std::vector<NodePair>& edges, int p) {
  std::vector<int> d(static_cast<std::size_t>(p), 0);
  for (const auto& [i, j] : edges) {
    ++d[static_cast<std::size_t>(i)];
    ++d[static_cast<std::size_t>(j)];
  }
  return d;
}

}  // namespace

TEST_CASE("confusion identities") {
  const int p = 12;
  const std::size_t n = 66;
  const auto family = make_family(StructureKind::kScaleFree, p, 2, Lineage::kTemporal, 0.1, 3);
  const auto& truth = family.truth_edges;

  const auto same = confusion(truth, truth, p);
  for (std::size_t k = 0; k < 2; ++k) {
    const auto& c = same.per_condition[k];
    CHECK(c.fp == 0);
    CHECK(c.fn == 0);
    CHECK(c.tp == truth[k].size());
    CHECK(c.tn == n - truth[k].size());
  }
  CHECK(same.cumulated.tp == truth[0].size() + truth[1].size());
  CHECK(same.cumulated.precision() == 1.0);
  CHECK(same.cumulated.recall() == 1.0);

  const auto empty = confusion({{}, {}}, truth, p);
  CHECK(empty.cumulated.tp == 0);
  CHECK(empty.cumulated.fp == 0);
  CHECK(empty.cumulated.fn == truth[0].size() + truth[1].size());

  const auto opposite = confusion(complement_of(truth, p), truth, p);
  for (std::size_t k = 0; k < 2; ++k) {
    CHECK(opposite.per_condition[k].tp == 0);
    CHECK(opposite.per_condition[k].fp == n - truth[k].size());
  }
  for (const auto* report : {&same, &empty, &opposite})
    for (const auto& c : report->per_condition) CHECK(c.tp + c.fp + c.fn + c.tn == n);

  CHECK_THROWS_AS(confusion({{}}, truth, p), Error);
}

TEST_CASE("perfect separation and truth scores give unit AUPRC") {
  const auto family = make_family(StructureKind::kAr2, 30, 3, Lineage::kTemporal, 0.05, 1);
  const auto truth = truth_indicator(family.truth_edges, 30);
  const Matrix indicator = truth.cast<double>();
  const auto own = pr_curve(indicator, truth);
  CHECK(own.auprc == doctest::Approx(1.0));
  CHECK_FALSE(own.degenerate);

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Matrix separated(truth.rows(), truth.cols());
  for (Eigen::Index l = 0; l < truth.rows(); ++l)
    for (Eigen::Index k = 0; k < truth.cols(); ++k) separated(l, k) = truth(l, k) ? 2.0 + unif(rng) : -unif(rng);
  CHECK(pr_curve(separated, truth).auprc == doctest::Approx(1.0));
}

TEST_CASE("uninformative scores give AUPRC near the edge rate") {
  const auto family = make_family(StructureKind::kScaleFree, 60, 2, Lineage::kTemporal, 0.05, 2);
  const auto truth = truth_indicator(family.truth_edges, 60);
  const double rho = truth.cast<double>().mean();
  double total = 0.0;
  const int seeds = 20;
  for (int seed = 0; seed < seeds; ++seed) {
    total += pr_curve(fbia::testing::gaussian_matrix(static_cast<int>(truth.rows()), 2, 700 + seed), truth).auprc;
  }
  CHECK(std::abs(total / seeds - rho) < 0.05);
}

TEST_CASE("PR points are invariant under monotone transforms") {
  const auto family = make_family(StructureKind::kHub, 40, 2, Lineage::kSpatial, 0.1, 5);
  const auto truth = truth_indicator(family.truth_edges, 40);
  Matrix scores = fbia::testing::gaussian_matrix(static_cast<int>(truth.rows()), 2, 1).cwiseAbs();
  scores += 1.5 * truth.cast<double>();
  const auto base = pr_curve(scores, truth);
  const Matrix transformed = scores.unaryExpr([](double v) { return std::exp(2.0 * v) + 3.0; });
  const auto moved = pr_curve(transformed, truth);
  REQUIRE(base.points.size() == moved.points.size());
  for (std::size_t i = 0; i < base.points.size(); ++i) {
    CHECK(base.points[i].recall == moved.points[i].recall);
    CHECK(base.points[i].precision == moved.points[i].precision);
  }
  CHECK(base.auprc == moved.auprc);
  for (std::size_t i = 1; i < base.points.size(); ++i) CHECK(base.points[i].recall >= base.points[i - 1].recall);
  CHECK(base.auprc >= 0.0);
  CHECK(base.auprc <= 1.0);
}

TEST_CASE("trapezoid rule with a carried recall-0 point") {
  // (0, 1) carried, (0.5, 1), (1, 0.5): 0.5 + 0.5 * 0.75
  CHECK(auprc_trapezoid({{3.0, 0.5, 1.0}, {1.0, 1.0, 0.5}}) == doctest::Approx(0.875));
  CHECK(auprc_trapezoid({}) == 0.0);
}

TEST_CASE("equal scores give a single point") {
  Eigen::MatrixXi truth(4, 1);
  truth << 1, 0, 0, 1;
  const Matrix flat = Matrix::Constant(4, 1, 2.0);
  const auto curve = pr_curve(flat, truth);
  REQUIRE(curve.points.size() == 1);
  CHECK(curve.points[0].recall == 1.0);
  CHECK(curve.auprc == doctest::Approx(0.5));
  CHECK_FALSE(curve.degenerate);

  const Matrix ranked = (Matrix(4, 1) << 4, 3, 2, 1).finished();
  const auto partial = pr_curve(ranked, truth, {3.5});
  REQUIRE(partial.points.size() == 1);
  CHECK(partial.points[0].recall == 0.5);
  CHECK(partial.degenerate);
}

TEST_CASE("alpha sweep traces a monotone curve") {
  const auto family = make_family(StructureKind::kAr2, 30, 2, Lineage::kTemporal, 0.05, 1);
  const auto truth = truth_indicator(family.truth_edges, 30);
  Matrix scores = fbia::testing::gaussian_matrix(static_cast<int>(truth.rows()), 2, 9);
  scores -= 5.0 * truth.cast<double>();
  const auto curve =
      pr_curve_alpha_sweep(scores, truth, {0.2, 0.001, 0.05, 0.01}, TestMethod::kBenjaminiYekutieli);
  REQUIRE(curve.points.size() >= 2);
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    CHECK(curve.points[i].threshold > curve.points[i - 1].threshold);
    CHECK(curve.points[i].recall >= curve.points[i - 1].recall);
  }
  CHECK(curve.auprc > 0.8);
}

TEST_CASE("power-law fit on an exact law") {
  // frequency of degree x is L / x^2 with L = lcm(1..10)^2
  const long long l = 2520LL * 2520LL;
  std::vector<int> degrees;
  for (int x = 1; x <= 10; ++x) degrees.insert(degrees.end(), static_cast<std::size_t>(l / (x * x)), x);
  degrees.insert(degrees.end(), 1000, 0);  // isolated nodes are ignored
  const auto fit = powerlaw_fit(degrees);
  CHECK(fit.exponent == doctest::Approx(2.0).epsilon(0.005));
  CHECK(fit.r_squared > 0.999);
  CHECK(fit.support == 10);
}

TEST_CASE("power-law fit needs three distinct degrees") {
  CHECK_THROWS_AS(powerlaw_fit(std::vector<int>(50, 1)), Error);
  CHECK_THROWS_AS(powerlaw_fit({1, 1, 2, 2, 0}), Error);
}

TEST_CASE("scale-free truth follows a power law") {
  const Matrix omega = structured_precision(StructureKind::kScaleFree, 200, 6);
  const auto fit = powerlaw_fit(node_degrees(edges_of(omega), 200));
  CHECK(fit.r_squared >= 0.8);
  CHECK(fit.exponent > 1.0);
}

TEST_CASE("replicate summary") {
  const auto s = summarize({0.8, 0.9, 1.0});
  CHECK(s.replicates == 3);
  CHECK(s.mean == doctest::Approx(0.9));
  CHECK(s.sd == doctest::Approx(0.1));
  CHECK(s.se == doctest::Approx(0.1 / std::sqrt(3.0)));
}

TEST_CASE("PR curve files") {
  TempDir dir("eval");
  PrCurve curve;
  curve.points = {{2.0, 0.5, 1.0}, {1.0, 1.0, 0.5}};
  curve.auprc = auprc_trapezoid(curve.points);
  write_pr_csv(dir.path() / "pr.csv", curve);
  std::ifstream in(dir.path() / "pr.csv");
  std::string header, first;
  std::getline(in, header);
  std::getline(in, first);
  CHECK(header == "threshold,recall,precision");
  CHECK(first == "2,0.5,1");
  write_pr_svg(dir.path() / "pr.svg", {{"fbia", curve}});
  std::ifstream svg(dir.path() / "pr.svg");
  const std::string text((std::istreambuf_iterator<char>(svg)), std::istreambuf_iterator<char>());
  CHECK(text.find("<svg") == 0);
  CHECK(text.find("polyline") != std::string::npos);
  CHECK(text.find("AUPRC 0.875") != std::string::npos);
}
