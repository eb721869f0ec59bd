#pragma once

#include "fbia/common.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fbia {

enum class TestMethod { kEmpiricalBayes, kBenjaminiYekutieli };

const char* to_string(TestMethod method);
TestMethod parse_test_method(const std::string& text);

// Two-group fit: null N(mu0, sigma0^2) plus a non-null pair of normals at
// mu0 +/- delta sharing sd sigma1.
struct TwoGroupFit {
  double pi0 = 1.0;
  double pi_pos = 0.0;
  double pi_neg = 0.0;
  double mu0 = 0.0;
  double sigma0 = 1.0;
  double delta = 0.0;
  double sigma1 = 1.0;
  int iterations = 0;
  bool converged = false;
  double log_likelihood = 0.0;
  bool null_only = false;  // one normal won on BIC; nothing is rejected
};

struct MultipleTestResult {
  TestMethod method = TestMethod::kBenjaminiYekutieli;
  // lfdr for the empirical-Bayes path, BY-adjusted p-value otherwise.
  std::vector<double> uncertainty;
  std::vector<bool> rejected;
  std::optional<TwoGroupFit> fit;
  bool fell_back = false;
  std::string warning;

  std::size_t rejections() const;
};

/// Benjamini-Yekutieli step-up on raw p-values; `uncertainty` holds the
/// adjusted p-values, so rejected == (adjusted <= alpha).
MultipleTestResult benjamini_yekutieli(std::span<const double> pvalues, double alpha);

struct EmOptions {
  int max_iterations = 1000;
  double tolerance = 1e-9;
  double min_delta_sd = 2.0;  // alternative means kept at least this many sigma0 from mu0
  bool symmetric_weights = true;  // pi_pos == pi_neg
  bool bic_check = true;          // compare against a single normal
};

TwoGroupFit fit_two_group(std::span<const double> z, const EmOptions& options = {});
double local_fdr(const TwoGroupFit& fit, double z);

/// Local-FDR classification. Items are rejected in ascending lfdr order while
/// the running mean of the accepted lfdrs stays <= alpha. Falls back to BY if
/// EM does not converge.
MultipleTestResult empirical_bayes(std::span<const double> z, double alpha, const EmOptions& options = {});

MultipleTestResult multiple_test(std::span<const double> z, double alpha, TestMethod method);

struct DetectedEdge {
  NodePair pair;
  double score = 0.0;
  double uncertainty = 0.0;
  int sign = 0;
};

/// Per-condition detected edge sets; edges in each set are ordered by pair.
struct GraphEstimate {
  int nodes = 0;
  double alpha = 0.0;
  TestMethod method = TestMethod::kEmpiricalBayes;
  std::vector<std::vector<DetectedEdge>> conditions;
  MultipleTestResult test;

  std::vector<std::vector<NodePair>> edge_sets() const;
};

/// Pools all N*K scores into one test (one common threshold for all graphs).
GraphEstimate detect_edges(const Matrix& scores, const EdgeIndex& index, double alpha, TestMethod method);

/// Tests each column on its own; used for the separated baseline.
GraphEstimate detect_edges_per_condition(const Matrix& scores, const EdgeIndex& index, double alpha,
                                         TestMethod method);

}  // namespace fbia
