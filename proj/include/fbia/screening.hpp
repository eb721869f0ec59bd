#pragma once

#include "fbia/common.hpp"
#include "fbia/detection.hpp"
#include "fbia/ingest.hpp"

#include <filesystem>
#include <span>
#include <vector>

namespace fbia {

struct CorrelationSummary {
  int condition_index = 0;
  Matrix corr;  // p x p, unit diagonal, exactly symmetric
  int n = 0;    // sample size behind the Fisher-z variance 1/(n-3)
};

/// Pearson correlations of the block's columns.
CorrelationSummary empirical_correlations(const ConditionBlock& block, int condition_index = 0);

/// Correlations after regressing every variable on [1, covariates]; n is
/// reduced by the number of covariates. Identical to empirical_correlations
/// when the block has no covariates.
CorrelationSummary covariate_adjusted_correlations(const ConditionBlock& block, int condition_index = 0);

// sqrt(n-3)*atanh(r) per edge, in EdgeIndex order.
std::vector<double> correlation_zscores(const CorrelationSummary& cs);
std::vector<double> correlation_pvalues(const CorrelationSummary& cs);

struct ScreenedGraph {
  int nodes = 0;
  std::vector<NodePair> pairs;  // sorted
};

ScreenedGraph screen_edges(const CorrelationSummary& cs, double alpha, TestMethod method);

// P-value form. Only the Benjamini-Yekutieli method is defined on bare
// p-values (the empirical-Bayes fit needs signed statistics).
ScreenedGraph screen_edges(const EdgeIndex& index, std::span<const double> pvalues, double alpha,
                           TestMethod method);

struct ReducedNeighborhoods {
  int condition_index = 0;
  std::vector<std::vector<int>> neighbors;  // by |r| descending, ties by smaller index
  int cap_used = 0;
};

/// floor(n / (xi * ln n)), at least 0.
int neighborhood_cap(int n, double xi);

ReducedNeighborhoods reduce_neighborhoods(const CorrelationSummary& cs, const ScreenedGraph& screened,
                                          double xi = 1.0);

// Debug dump: i,j,r,p (1-based nodes).
void write_screened_edges(const std::filesystem::path& path, const CorrelationSummary& cs,
                          const ScreenedGraph& screened);

}  // namespace fbia
