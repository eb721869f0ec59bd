#pragma once

#include "fbia/common.hpp"
#include "fbia/detection.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace fbia {

struct Confusion {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;

  double precision() const;
  double recall() const;
  Confusion& operator+=(const Confusion& other);
};

struct ConfusionReport {
  std::vector<Confusion> per_condition;
  Confusion cumulated;
};

ConfusionReport confusion(const std::vector<std::vector<NodePair>>& estimate,
                          const std::vector<std::vector<NodePair>>& truth, int p);

/// N x K 0/1 truth indicator in EdgeIndex order.
Eigen::MatrixXi truth_indicator(const std::vector<std::vector<NodePair>>& truth, int p);

struct PrPoint {
  double threshold = 0.0;
  double recall = 0.0;
  double precision = 1.0;
};

struct PrCurve {
  std::vector<PrPoint> points;  // thresholds descending, recall non-decreasing
  double auprc = 0.0;
  bool degenerate = false;
};

/// Area under recall-sorted points by trapezoid, with a recall-0 point
/// carrying the smallest-recall precision.
double auprc_trapezoid(std::vector<PrPoint> points);

/// Edges at threshold t are {(l,k) : |score(l,k)| >= t}, counts cumulated over
/// all conditions. An empty grid sweeps every distinct |score|.
PrCurve pr_curve(const Matrix& scores, const Eigen::MatrixXi& truth, const std::vector<double>& grid = {});

/// PR points from re-running the pooled multiple test at each level; the
/// point's threshold field holds the level.
PrCurve pr_curve_alpha_sweep(const Matrix& scores, const Eigen::MatrixXi& truth, const std::vector<double>& alphas,
                             TestMethod method);

struct PowerLawFit {
  double exponent = 0.0;  // upsilon in P(X = x) ~ x^-upsilon
  double r_squared = 0.0;
  int support = 0;        // distinct positive degrees used
};

/// Least-squares line through (log x, log frequency(x)) over positive degrees.
PowerLawFit powerlaw_fit(const std::vector<int>& degrees);

struct ReplicateSummary {
  std::size_t replicates = 0;
  double mean = 0.0;
  double sd = 0.0;
  double se = 0.0;
};

ReplicateSummary summarize(const std::vector<double>& values);

void write_pr_csv(const std::filesystem::path& path, const PrCurve& curve);

// Self-contained SVG line plot of one or more labelled curves.
void write_pr_svg(const std::filesystem::path& path, const std::vector<std::pair<std::string, PrCurve>>& curves);

}  // namespace fbia
