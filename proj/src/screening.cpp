#include "fbia/screening.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace fbia {

namespace {

Matrix pearson(const Matrix& data) {
  Matrix centered = data.rowwise() - data.colwise().mean();
  Vector norms = centered.colwise().norm();
  for (Eigen::Index c = 0; c < norms.size(); ++c) {
    if (!(norms(c) > 0.0)) throw Error(ErrorKind::kDegenerate, "column " + std::to_string(c) + " is constant");
  }
  Matrix gram(data.cols(), data.cols());
  gram.setZero();
  gram.selfadjointView<Eigen::Lower>().rankUpdate(centered.transpose());
  Matrix corr(data.cols(), data.cols());
  for (Eigen::Index j = 0; j < data.cols(); ++j) {
    corr(j, j) = 1.0;
    for (Eigen::Index i = j + 1; i < data.cols(); ++i) {
      const double r = std::clamp(gram(i, j) / (norms(i) * norms(j)), -1.0, 1.0);
      corr(i, j) = r;
      corr(j, i) = r;
    }
  }
  return corr;
}

}  // namespace

CorrelationSummary empirical_correlations(const ConditionBlock& block, int condition_index) {
  if (block.data.rows() < kMinSamplesPerCondition) {
    throw Error(ErrorKind::kSize, "correlation needs at least " + std::to_string(kMinSamplesPerCondition) + " samples");
  }
  return {condition_index, pearson(block.data), static_cast<int>(block.data.rows())};
}

CorrelationSummary covariate_adjusted_correlations(const ConditionBlock& block, int condition_index) {
  if (!block.covariates || block.covariates->values.cols() == 0) {
    return empirical_correlations(block, condition_index);
  }
  const auto n = block.data.rows();
  const auto& w = block.covariates->values;
  Matrix design(n, w.cols() + 1);
  design.col(0).setOnes();
  design.rightCols(w.cols()) = w;
  Eigen::ColPivHouseholderQR<Matrix> qr(design);
  const auto rank = qr.rank();
  const Matrix residuals = block.data - design * qr.solve(block.data);
  const int n_eff = static_cast<int>(n - (rank - 1));
  if (n_eff < kMinSamplesPerCondition) {
    throw Error(ErrorKind::kSize, "too few samples left after covariate adjustment");
  }
  return {condition_index, pearson(residuals), n_eff};
}

std::vector<double> correlation_zscores(const CorrelationSummary& cs) {
  if (cs.n <= 3) throw Error(ErrorKind::kSize, "Fisher z needs n > 3");
  const int p = static_cast<int>(cs.corr.rows());
  const double scale = std::sqrt(static_cast<double>(cs.n - 3));
  std::vector<double> z;
  z.reserve(static_cast<std::size_t>(p) * static_cast<std::size_t>(p - 1) / 2);
  for (int i = 0; i < p; ++i) {
    for (int j = i + 1; j < p; ++j) {
      const double r = std::clamp(cs.corr(i, j), -kCorrelationClamp, kCorrelationClamp);
      z.push_back(scale * std::atanh(r));
    }
  }
  return z;
}

std::vector<double> correlation_pvalues(const CorrelationSummary& cs) {
  std::vector<double> p = correlation_zscores(cs);
  for (double& v : p) v = two_sided_normal_pvalue(v);
  return p;
}

namespace {

ScreenedGraph collect(const EdgeIndex& index, const MultipleTestResult& test) {
  ScreenedGraph g;
  g.nodes = index.nodes();
  for (std::size_t l = 0; l < test.rejected.size(); ++l) {
    if (test.rejected[l]) g.pairs.push_back(index.pair(l));
  }
  return g;
}

}  // namespace

ScreenedGraph screen_edges(const CorrelationSummary& cs, double alpha, TestMethod method) {
  const EdgeIndex index(static_cast<int>(cs.corr.rows()));
  const std::vector<double> z = correlation_zscores(cs);
  return collect(index, multiple_test(z, alpha, method));
}

ScreenedGraph screen_edges(const EdgeIndex& index, std::span<const double> pvalues, double alpha,
                           TestMethod method) {
  if (method != TestMethod::kBenjaminiYekutieli) {
    throw Error(ErrorKind::kParameter, "p-value screening supports only benjamini-yekutieli");
  }
  if (pvalues.size() != index.size()) throw Error(ErrorKind::kShape, "p-value count does not match edge count");
  return collect(index, benjamini_yekutieli(pvalues, alpha));
}

int neighborhood_cap(int n, double xi) {
  if (!(xi > 0.0)) throw Error(ErrorKind::kParameter, "xi must be positive");
  if (n < 2) return 0;
  return std::max(0, static_cast<int>(std::floor(static_cast<double>(n) / (xi * std::log(static_cast<double>(n))))));
}

ReducedNeighborhoods reduce_neighborhoods(const CorrelationSummary& cs, const ScreenedGraph& screened, double xi) {
  const int p = static_cast<int>(cs.corr.rows());
  ReducedNeighborhoods rn;
  rn.condition_index = cs.condition_index;
  rn.cap_used = neighborhood_cap(cs.n, xi);
  rn.neighbors.assign(static_cast<std::size_t>(p), {});
  for (const auto& [i, j] : screened.pairs) {
    rn.neighbors[static_cast<std::size_t>(i)].push_back(j);
    rn.neighbors[static_cast<std::size_t>(j)].push_back(i);
  }
  for (int i = 0; i < p; ++i) {
    auto& nb = rn.neighbors[static_cast<std::size_t>(i)];
    std::sort(nb.begin(), nb.end(), [&](int a, int b) {
      const double ra = std::abs(cs.corr(i, a));
      const double rb = std::abs(cs.corr(i, b));
      if (ra != rb) return ra > rb;
      return a < b;
    });
    if (static_cast<int>(nb.size()) > rn.cap_used) nb.resize(static_cast<std::size_t>(rn.cap_used));
  }
  return rn;
}

void write_screened_edges(const std::filesystem::path& path, const CorrelationSummary& cs,
                          const ScreenedGraph& screened) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out << "i,j,r,p\n";
  const double scale = std::sqrt(static_cast<double>(cs.n - 3));
  char buf[96];
  for (const auto& [i, j] : screened.pairs) {
    const double r = cs.corr(i, j);
    const double p = two_sided_normal_pvalue(scale * std::atanh(std::clamp(r, -kCorrelationClamp, kCorrelationClamp)));
    std::snprintf(buf, sizeof buf, "%d,%d,%.17g,%.17g\n", i + 1, j + 1, r, p);
    out << buf;
  }
}

}  // namespace fbia
