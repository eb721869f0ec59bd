#include "fbia/detection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fbia {

namespace {

constexpr double kLogSqrt2Pi = 0.91893853320467274178;

double log_normal_density(double z, double mean, double sd) {
  const double u = (z - mean) / sd;
  return -0.5 * u * u - std::log(sd) - kLogSqrt2Pi;
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  if (n == 0) return 0.0;
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct Responsibilities {
  double null = 0.0;
  double pos = 0.0;
  double neg = 0.0;
  double log_density = 0.0;
};

Responsibilities e_step(const TwoGroupFit& f, double z) {
  const double l0 = f.pi0 > 0 ? std::log(f.pi0) + log_normal_density(z, f.mu0, f.sigma0)
                              : -std::numeric_limits<double>::infinity();
  const double lp = f.pi_pos > 0 ? std::log(f.pi_pos) + log_normal_density(z, f.mu0 + f.delta, f.sigma1)
                                 : -std::numeric_limits<double>::infinity();
  const double ln = f.pi_neg > 0 ? std::log(f.pi_neg) + log_normal_density(z, f.mu0 - f.delta, f.sigma1)
                                 : -std::numeric_limits<double>::infinity();
  const double peak = std::max({l0, lp, ln});
  const double e0 = std::exp(l0 - peak);
  const double ep = std::exp(lp - peak);
  const double en = std::exp(ln - peak);
  const double total = e0 + ep + en;
  return {e0 / total, ep / total, en / total, peak + std::log(total)};
}

}  // namespace

const char* to_string(TestMethod method) {
  return method == TestMethod::kEmpiricalBayes ? "empirical-bayes" : "benjamini-yekutieli";
}

TestMethod parse_test_method(const std::string& text) {
  if (text == "empirical-bayes" || text == "eb") return TestMethod::kEmpiricalBayes;
  if (text == "benjamini-yekutieli" || text == "by") return TestMethod::kBenjaminiYekutieli;
  throw Error(ErrorKind::kParameter, "unknown multiple-test method '" + text + "'");
}

std::size_t MultipleTestResult::rejections() const {
  return static_cast<std::size_t>(std::count(rejected.begin(), rejected.end(), true));
}

MultipleTestResult benjamini_yekutieli(std::span<const double> pvalues, double alpha) {
  MultipleTestResult result;
  result.method = TestMethod::kBenjaminiYekutieli;
  const std::size_t m = pvalues.size();
  result.uncertainty.assign(m, 1.0);
  result.rejected.assign(m, false);
  if (m == 0) return result;

  double harmonic = 0.0;
  for (std::size_t i = 1; i <= m; ++i) harmonic += 1.0 / static_cast<double>(i);

  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return pvalues[a] < pvalues[b]; });

  double running = 1.0;
  for (std::size_t r = m; r-- > 0;) {
    const std::size_t idx = order[r];
    const double scaled = pvalues[idx] * static_cast<double>(m) * harmonic / static_cast<double>(r + 1);
    running = std::min(running, std::min(1.0, scaled));
    result.uncertainty[idx] = running;
  }
  for (std::size_t i = 0; i < m; ++i) result.rejected[i] = result.uncertainty[i] <= alpha;
  return result;
}

TwoGroupFit fit_two_group(std::span<const double> z, const EmOptions& options) {
  TwoGroupFit f;
  const std::size_t n = z.size();
  if (n == 0) return f;

  std::vector<double> values(z.begin(), z.end());
  f.mu0 = median_of(values);
  std::vector<double> dev(n);
  for (std::size_t i = 0; i < n; ++i) dev[i] = std::abs(z[i] - f.mu0);
  const double mad = median_of(dev);
  f.sigma0 = std::max(1.4826 * mad, 1e-3);
  std::sort(dev.begin(), dev.end());
  const double q95 = dev[std::min(n - 1, static_cast<std::size_t>(0.95 * static_cast<double>(n)))];
  f.delta = std::max(options.min_delta_sd * f.sigma0, q95);
  double var = 0.0;
  for (double v : z) var += (v - f.mu0) * (v - f.mu0);
  f.sigma1 = std::max(f.sigma0, std::sqrt(var / static_cast<double>(n)));
  f.pi0 = 0.9;
  f.pi_pos = 0.05;
  f.pi_neg = 0.05;

  double previous = -std::numeric_limits<double>::infinity();
  std::vector<Responsibilities> r(n);
  for (int iter = 1; iter <= options.max_iterations; ++iter) {
    double ll = 0.0;
    double s0 = 0.0, sp = 0.0, sn = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      r[i] = e_step(f, z[i]);
      ll += r[i].log_density;
      s0 += r[i].null;
      sp += r[i].pos;
      sn += r[i].neg;
    }
    f.log_likelihood = ll;
    f.iterations = iter;
    if (std::abs(ll - previous) <= options.tolerance * (1.0 + std::abs(ll))) {
      f.converged = true;
      break;
    }
    previous = ll;

    const double total = static_cast<double>(n);
    f.pi0 = s0 / total;
    if (options.symmetric_weights) {
      f.pi_pos = f.pi_neg = 0.5 * (sp + sn) / total;
    } else {
      f.pi_pos = sp / total;
      f.pi_neg = sn / total;
    }

    double m0 = 0.0;
    for (std::size_t i = 0; i < n; ++i) m0 += r[i].null * z[i];
    if (s0 > 0) f.mu0 = m0 / s0;
    double v0 = 0.0;
    for (std::size_t i = 0; i < n; ++i) v0 += r[i].null * (z[i] - f.mu0) * (z[i] - f.mu0);
    if (s0 > 0) f.sigma0 = std::max(std::sqrt(v0 / s0), 1e-3);

    const double s_alt = sp + sn;
    if (s_alt > 1e-9) {
      double num = 0.0;
      for (std::size_t i = 0; i < n; ++i) num += (r[i].pos - r[i].neg) * (z[i] - f.mu0);
      f.delta = std::max(num / s_alt, options.min_delta_sd * f.sigma0);
      double v1 = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double up = z[i] - f.mu0 - f.delta;
        const double down = z[i] - f.mu0 + f.delta;
        v1 += r[i].pos * up * up + r[i].neg * down * down;
      }
      f.sigma1 = std::max(std::sqrt(v1 / s_alt), f.sigma0);
    } else {
      f.delta = std::max(f.delta, options.min_delta_sd * f.sigma0);
      f.sigma1 = std::max(f.sigma1, f.sigma0);
    }
  }
  if (f.converged && options.bic_check) {
    // Single-normal fit; keep the mixture only if BIC prefers it.
    double mean = 0.0;
    for (double v : z) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : z) var += (v - mean) * (v - mean);
    const double sd = std::max(std::sqrt(var / static_cast<double>(n)), 1e-3);
    double ll_null = 0.0;
    for (double v : z) ll_null += log_normal_density(v, mean, sd);
    const double extra = options.symmetric_weights ? 3.0 : 4.0;
    if (2.0 * (f.log_likelihood - ll_null) <= extra * std::log(static_cast<double>(n))) {
      const int iterations = f.iterations;
      f = TwoGroupFit{};
      f.mu0 = mean;
      f.sigma0 = sd;
      f.iterations = iterations;
      f.converged = true;
      f.log_likelihood = ll_null;
      f.null_only = true;
    }
  }
  return f;
}

double local_fdr(const TwoGroupFit& fit, double z) { return std::clamp(e_step(fit, z).null, 0.0, 1.0); }

MultipleTestResult empirical_bayes(std::span<const double> z, double alpha, const EmOptions& options) {
  TwoGroupFit fit = fit_two_group(z, options);
  if (!fit.converged) {
    std::vector<double> p(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) p[i] = two_sided_normal_pvalue(z[i]);
    MultipleTestResult fallback = benjamini_yekutieli(p, alpha);
    fallback.fell_back = true;
    fallback.fit = fit;
    fallback.warning = "EM did not converge after " + std::to_string(fit.iterations) +
                       " iterations; used Benjamini-Yekutieli instead";
    return fallback;
  }

  MultipleTestResult result;
  result.method = TestMethod::kEmpiricalBayes;
  const std::size_t m = z.size();
  result.uncertainty.resize(m);
  result.rejected.assign(m, false);
  for (std::size_t i = 0; i < m; ++i) result.uncertainty[i] = local_fdr(fit, z[i]);

  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return result.uncertainty[a] < result.uncertainty[b]; });
  double cumulative = 0.0;
  std::size_t accepted = 0;
  for (std::size_t r = 0; r < m; ++r) {
    cumulative += result.uncertainty[order[r]];
    if (cumulative / static_cast<double>(r + 1) > alpha) break;
    accepted = r + 1;
  }
  // Items tied with the last accepted lfdr share its fate.
  if (accepted > 0) {
    const double cutoff = result.uncertainty[order[accepted - 1]];
    for (std::size_t i = 0; i < m; ++i) result.rejected[i] = result.uncertainty[i] < cutoff;
    for (std::size_t r = 0; r < accepted; ++r) result.rejected[order[r]] = true;
  }
  result.fit = fit;
  return result;
}

MultipleTestResult multiple_test(std::span<const double> z, double alpha, TestMethod method) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorKind::kParameter, "alpha must lie in (0,1)");
  for (double v : z) {
    if (!std::isfinite(v)) throw Error(ErrorKind::kParameter, "multiple test requires finite scores");
  }
  if (method == TestMethod::kEmpiricalBayes) return empirical_bayes(z, alpha);
  std::vector<double> p(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) p[i] = two_sided_normal_pvalue(z[i]);
  return benjamini_yekutieli(p, alpha);
}

std::vector<std::vector<NodePair>> GraphEstimate::edge_sets() const {
  std::vector<std::vector<NodePair>> sets;
  sets.reserve(conditions.size());
  for (const auto& edges : conditions) {
    std::vector<NodePair> s;
    s.reserve(edges.size());
    for (const auto& e : edges) s.push_back(e.pair);
    sets.push_back(std::move(s));
  }
  return sets;
}

GraphEstimate detect_edges(const Matrix& scores, const EdgeIndex& index, double alpha, TestMethod method) {
  const auto n_edges = static_cast<std::size_t>(scores.rows());
  const auto k_count = static_cast<std::size_t>(scores.cols());
  if (n_edges != index.size()) throw Error(ErrorKind::kShape, "score rows do not match the edge index");
  std::vector<double> pooled(n_edges * k_count);
  for (std::size_t k = 0; k < k_count; ++k) {
    for (std::size_t l = 0; l < n_edges; ++l) {
      pooled[k * n_edges + l] = scores(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(k));
    }
  }
  GraphEstimate g;
  g.nodes = index.nodes();
  g.alpha = alpha;
  g.test = multiple_test(pooled, alpha, method);
  g.method = g.test.method;
  g.conditions.resize(k_count);
  for (std::size_t k = 0; k < k_count; ++k) {
    for (std::size_t l = 0; l < n_edges; ++l) {
      const std::size_t item = k * n_edges + l;
      if (!g.test.rejected[item]) continue;
      const double s = pooled[item];
      g.conditions[k].push_back({index.pair(l), s, g.test.uncertainty[item], s > 0 ? 1 : (s < 0 ? -1 : 0)});
    }
  }
  return g;
}

GraphEstimate detect_edges_per_condition(const Matrix& scores, const EdgeIndex& index, double alpha,
                                         TestMethod method) {
  GraphEstimate g;
  g.nodes = index.nodes();
  g.alpha = alpha;
  g.method = method;
  g.conditions.resize(static_cast<std::size_t>(scores.cols()));
  for (Eigen::Index k = 0; k < scores.cols(); ++k) {
    const Matrix column = scores.col(k);
    GraphEstimate single = detect_edges(column, index, alpha, method);
    g.conditions[static_cast<std::size_t>(k)] = std::move(single.conditions[0]);
    g.test = std::move(single.test);
  }
  return g;
}

}  // namespace fbia
