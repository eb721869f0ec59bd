#include "fbia/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>

namespace fbia {

double Confusion::precision() const {
  return tp + fp == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
}

double Confusion::recall() const {
  return tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
}

Confusion& Confusion::operator+=(const Confusion& other) {
  tp += other.tp;
  fp += other.fp;
  fn += other.fn;
  tn += other.tn;
  return *this;
}

Eigen::MatrixXi truth_indicator(const std::vector<std::vector<NodePair>>& truth, int p) {
  const EdgeIndex index(p);
  Eigen::MatrixXi out = Eigen::MatrixXi::Zero(static_cast<Eigen::Index>(index.size()),
                                              static_cast<Eigen::Index>(truth.size()));
  for (std::size_t k = 0; k < truth.size(); ++k) {
    for (const auto& [i, j] : truth[k]) out(static_cast<Eigen::Index>(index.index(i, j)), static_cast<Eigen::Index>(k)) = 1;
  }
  return out;
}

ConfusionReport confusion(const std::vector<std::vector<NodePair>>& estimate,
                          const std::vector<std::vector<NodePair>>& truth, int p) {
  if (estimate.size() != truth.size()) {
    throw Error(ErrorKind::kShape, "estimate has " + std::to_string(estimate.size()) + " conditions, truth has " +
                                       std::to_string(truth.size()));
  }
  const EdgeIndex index(p);
  const Eigen::MatrixXi t = truth_indicator(truth, p);
  const Eigen::MatrixXi e = truth_indicator(estimate, p);
  ConfusionReport report;
  for (Eigen::Index k = 0; k < t.cols(); ++k) {
    Confusion c;
    for (Eigen::Index l = 0; l < t.rows(); ++l) {
      const bool predicted = e(l, k) != 0;
      const bool actual = t(l, k) != 0;
      if (predicted && actual) ++c.tp;
      else if (predicted) ++c.fp;
      else if (actual) ++c.fn;
      else ++c.tn;
    }
    report.per_condition.push_back(c);
    report.cumulated += c;
  }
  return report;
}

double auprc_trapezoid(std::vector<PrPoint> points) {
  if (points.empty()) return 0.0;
  std::stable_sort(points.begin(), points.end(), [](const PrPoint& a, const PrPoint& b) { return a.recall < b.recall; });
  double area = points.front().recall * points.front().precision;
  for (std::size_t i = 1; i < points.size(); ++i) {
    area += (points[i].recall - points[i - 1].recall) * 0.5 * (points[i].precision + points[i - 1].precision);
  }
  return std::clamp(area, 0.0, 1.0);
}

namespace {

void finish_curve(PrCurve& curve) {
  // A lone point is only usable when it already reaches full recall.
  curve.degenerate = curve.points.empty() || (curve.points.size() == 1 && curve.points.front().recall < 1.0);
  curve.auprc = auprc_trapezoid(curve.points);
}

}  // namespace

PrCurve pr_curve(const Matrix& scores, const Eigen::MatrixXi& truth, const std::vector<double>& grid) {
  if (scores.rows() != truth.rows() || scores.cols() != truth.cols()) {
    throw Error(ErrorKind::kShape, "score and truth matrices differ in shape");
  }
  const auto total = static_cast<std::size_t>(scores.size());
  std::vector<std::pair<double, int>> items;
  items.reserve(total);
  std::size_t positives = 0;
  for (Eigen::Index k = 0; k < scores.cols(); ++k) {
    for (Eigen::Index l = 0; l < scores.rows(); ++l) {
      items.emplace_back(std::abs(scores(l, k)), truth(l, k));
      positives += truth(l, k) != 0 ? 1 : 0;
    }
  }
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<std::size_t> tp_prefix(total + 1, 0);
  for (std::size_t r = 0; r < total; ++r) tp_prefix[r + 1] = tp_prefix[r] + (items[r].second != 0 ? 1 : 0);

  std::vector<double> thresholds = grid;
  if (thresholds.empty()) {
    for (const auto& item : items) {
      if (thresholds.empty() || thresholds.back() != item.first) thresholds.push_back(item.first);
    }
  } else {
    std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  }

  PrCurve curve;
  for (double t : thresholds) {
    // number of items with |score| >= t
    const auto predicted = static_cast<std::size_t>(
        std::partition_point(items.begin(), items.end(), [t](const auto& item) { return item.first >= t; }) -
        items.begin());
    if (predicted == 0) continue;
    const std::size_t tp = tp_prefix[predicted];
    PrPoint point;
    point.threshold = t;
    point.precision = static_cast<double>(tp) / static_cast<double>(predicted);
    point.recall = positives == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(positives);
    curve.points.push_back(point);
  }
  finish_curve(curve);
  return curve;
}

PrCurve pr_curve_alpha_sweep(const Matrix& scores, const Eigen::MatrixXi& truth, const std::vector<double>& alphas,
                             TestMethod method) {
  if (scores.rows() != truth.rows() || scores.cols() != truth.cols()) {
    throw Error(ErrorKind::kShape, "score and truth matrices differ in shape");
  }
  if (alphas.empty()) throw Error(ErrorKind::kParameter, "alpha sweep needs at least one level");
  // same pooling order as detect_edges
  std::vector<double> pooled(static_cast<std::size_t>(scores.size()));
  std::size_t positives = 0;
  for (Eigen::Index k = 0; k < scores.cols(); ++k) {
    for (Eigen::Index l = 0; l < scores.rows(); ++l) {
      pooled[static_cast<std::size_t>(k * scores.rows() + l)] = scores(l, k);
      positives += truth(l, k) != 0 ? 1 : 0;
    }
  }
  std::vector<double> levels = alphas;
  std::sort(levels.begin(), levels.end());
  PrCurve curve;
  for (double alpha : levels) {
    const auto test = multiple_test(pooled, alpha, method);
    std::size_t tp = 0, predicted = 0;
    for (std::size_t item = 0; item < pooled.size(); ++item) {
      if (!test.rejected[item]) continue;
      ++predicted;
      const auto k = static_cast<Eigen::Index>(item) / scores.rows();
      const auto l = static_cast<Eigen::Index>(item) % scores.rows();
      tp += truth(l, k) != 0 ? 1 : 0;
    }
    if (predicted == 0) continue;
    PrPoint point;
    point.threshold = alpha;
    point.precision = static_cast<double>(tp) / static_cast<double>(predicted);
    point.recall = positives == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(positives);
    curve.points.push_back(point);
  }
  finish_curve(curve);
  return curve;
}

PowerLawFit powerlaw_fit(const std::vector<int>& degrees) {
  std::map<int, int> frequency;
  int positive = 0;
  for (int d : degrees) {
    if (d > 0) {
      ++frequency[d];
      ++positive;
    }
  }
  if (frequency.size() < 3) {
    throw Error(ErrorKind::kSize, "power-law fit needs at least 3 distinct positive degrees, got " +
                                      std::to_string(frequency.size()));
  }
  std::vector<double> x;
  std::vector<double> y;
  for (const auto& [degree, count] : frequency) {
    x.push_back(std::log(static_cast<double>(degree)));
    y.push_back(std::log(static_cast<double>(count) / static_cast<double>(positive)));
  }
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  PowerLawFit fit;
  const double slope = sxy / sxx;
  fit.exponent = -slope;
  fit.r_squared = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  fit.support = static_cast<int>(x.size());
  return fit;
}

ReplicateSummary summarize(const std::vector<double>& values) {
  ReplicateSummary s;
  s.replicates = values.size();
  if (values.empty()) return s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
    s.se = s.sd / std::sqrt(static_cast<double>(values.size()));
  }
  return s;
}

void write_pr_csv(const std::filesystem::path& path, const PrCurve& curve) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out << "threshold,recall,precision\n";
  char buf[96];
  for (const auto& pt : curve.points) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", pt.threshold, pt.recall, pt.precision);
    out << buf;
  }
}

void write_pr_svg(const std::filesystem::path& path, const std::vector<std::pair<std::string, PrCurve>>& curves) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  constexpr double kSize = 400.0;
  constexpr double kMargin = 50.0;
  const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kSize + 2 * kMargin << "\" height=\""
      << kSize + 2 * kMargin << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<rect x=\"" << kMargin << "\" y=\"" << kMargin << "\" width=\"" << kSize << "\" height=\"" << kSize
      << "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (int tick = 0; tick <= 4; ++tick) {
    const double v = tick / 4.0;
    const double x = kMargin + v * kSize;
    const double y = kMargin + (1.0 - v) * kSize;
    out << "<text x=\"" << x << "\" y=\"" << kMargin + kSize + 16 << "\" text-anchor=\"middle\">" << v << "</text>\n";
    out << "<text x=\"" << kMargin - 6 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">" << v << "</text>\n";
  }
  out << "<text x=\"" << kMargin + kSize / 2 << "\" y=\"" << kMargin + kSize + 36
      << "\" text-anchor=\"middle\">recall</text>\n";
  out << "<text x=\"14\" y=\"" << kMargin + kSize / 2 << "\" transform=\"rotate(-90 14 " << kMargin + kSize / 2
      << ")\" text-anchor=\"middle\">precision</text>\n";
  for (std::size_t c = 0; c < curves.size(); ++c) {
    const auto& [label, curve] = curves[c];
    const char* color = colors[c % std::size(colors)];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& pt : curve.points) {
      out << kMargin + pt.recall * kSize << ',' << kMargin + (1.0 - pt.precision) * kSize << ' ';
    }
    out << "\"/>\n";
    char auc[32];
    std::snprintf(auc, sizeof auc, "%.3f", curve.auprc);
    out << "<text x=\"" << kMargin + 10 << "\" y=\"" << kMargin + kSize - 10 - 16.0 * static_cast<double>(c)
        << "\" fill=\"" << color << "\">" << label << " (AUPRC " << auc << ")</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace fbia
