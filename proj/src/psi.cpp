#include "fbia/psi.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>

namespace fbia {

std::vector<int> separator(int i, int j, const ReducedNeighborhoods& rn, const CorrelationSummary& cs) {
  if (i == j) throw Error(ErrorKind::kParameter, "separator needs two distinct nodes");
  std::vector<int> s;
  for (int node : {i, j}) {
    for (int m : rn.neighbors[static_cast<std::size_t>(node)]) {
      if (m != i && m != j) s.push_back(m);
    }
  }
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());

  const int limit = cs.n - 4;
  if (static_cast<int>(s.size()) > limit) {
    auto strength = [&](int m) { return std::max(std::abs(cs.corr(i, m)), std::abs(cs.corr(j, m))); };
    std::stable_sort(s.begin(), s.end(), [&](int a, int b) {
      const double sa = strength(a);
      const double sb = strength(b);
      if (sa != sb) return sa > sb;
      return a < b;
    });
    s.resize(static_cast<std::size_t>(std::max(limit, 0)));
    std::sort(s.begin(), s.end());
  }
  return s;
}

namespace {

double partial_from_submatrix(Matrix sub) {
  const auto m = sub.rows();
  Eigen::LLT<Matrix> llt(sub);
  auto singular = [&](const Eigen::LLT<Matrix>& f) {
    if (f.info() != Eigen::Success) return true;
    const Vector d = f.matrixLLT().diagonal();
    return d.minCoeff() * d.minCoeff() < 1e-12 * d.maxCoeff() * d.maxCoeff();
  };
  if (singular(llt)) {
    sub.diagonal().array() += 1e-8;
    llt.compute(sub);
    if (llt.info() != Eigen::Success) {
      throw Error(ErrorKind::kDegenerate, "conditioning set is singular even after ridge stabilization");
    }
  }
  Matrix rhs = Matrix::Zero(m, 2);
  rhs(0, 0) = 1.0;
  rhs(1, 1) = 1.0;
  const Matrix cols = llt.solve(rhs);  // first two columns of the inverse
  const double omega_ii = cols(0, 0);
  const double omega_jj = cols(1, 1);
  const double omega_ij = 0.5 * (cols(1, 0) + cols(0, 1));
  const double r = -omega_ij / std::sqrt(omega_ii * omega_jj);
  return std::clamp(r, -1.0, 1.0);
}

std::vector<int> ordered_columns(int i, int j, std::span<const int> conditioning) {
  std::vector<int> cols;
  cols.reserve(conditioning.size() + 2);
  cols.push_back(i);
  cols.push_back(j);
  for (int s : conditioning) {
    if (s == i || s == j) throw Error(ErrorKind::kParameter, "conditioning set contains an endpoint");
    cols.push_back(s);
  }
  return cols;
}

}  // namespace

double partial_correlation(const Matrix& corr, int i, int j, std::span<const int> conditioning) {
  if (conditioning.empty()) return corr(i, j);
  const std::vector<int> cols = ordered_columns(i, j, conditioning);
  const auto m = static_cast<Eigen::Index>(cols.size());
  Matrix sub(m, m);
  for (Eigen::Index a = 0; a < m; ++a) {
    for (Eigen::Index b = 0; b < m; ++b) sub(a, b) = corr(cols[static_cast<std::size_t>(a)], cols[static_cast<std::size_t>(b)]);
  }
  return partial_from_submatrix(std::move(sub));
}

double partial_correlation(const ConditionBlock& block, int i, int j, std::span<const int> conditioning) {
  const std::vector<int> cols = ordered_columns(i, j, conditioning);
  if (static_cast<int>(cols.size()) > block.samples() - 1) {
    throw Error(ErrorKind::kSize, "conditioning set too large for the sample size");
  }
  Matrix sel(block.data.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) sel.col(static_cast<Eigen::Index>(c)) = block.data.col(cols[c]);
  ConditionBlock view{block.label, std::move(sel), std::nullopt};
  const CorrelationSummary cs = empirical_correlations(view);
  if (conditioning.empty()) return cs.corr(0, 1);
  return partial_from_submatrix(cs.corr);
}

double psi_score(double psi_tilde, int n, int separator_size) {
  const int effective = n - separator_size - 3;
  if (effective < 1) {
    throw Error(ErrorKind::kSize, "effective sample size n-|S|-3 = " + std::to_string(effective) + " < 1");
  }
  const double r = std::clamp(psi_tilde, -kCorrelationClamp, kCorrelationClamp);
  return std::sqrt(static_cast<double>(effective)) * std::atanh(r);
}

AdjustedScore adjusted_psi_score(const ConditionBlock& block, int i, int j, std::span<const int> conditioning,
                                 AdjustedScoreForm form) {
  const auto n = block.data.rows();
  const Matrix empty(n, 0);
  const Matrix& w = block.covariates ? block.covariates->values : empty;

  // Covariates are kept greedily while they add rank over [1, X_S, X_j].
  Matrix base(n, 1 + static_cast<Eigen::Index>(conditioning.size()));
  base.col(0).setOnes();
  for (std::size_t s = 0; s < conditioning.size(); ++s) {
    if (conditioning[s] == i || conditioning[s] == j) {
      throw Error(ErrorKind::kParameter, "conditioning set contains an endpoint");
    }
    base.col(static_cast<Eigen::Index>(s + 1)) = block.data.col(conditioning[s]);
  }
  AdjustedScore result;
  auto rank_of = [](const Matrix& m) {
    Eigen::ColPivHouseholderQR<Matrix> qr(m);
    qr.setThreshold(1e-10);
    return qr.rank();
  };
  Matrix design = base;
  Eigen::Index rank = rank_of(design);
  for (Eigen::Index c = 0; c < w.cols(); ++c) {
    Matrix trial(n, design.cols() + 1);
    trial << design, w.col(c);
    const auto r = rank_of(trial);
    if (r > rank) {
      design = std::move(trial);
      rank = r;
    } else {
      result.dropped_covariates.push_back(block.covariates->names[static_cast<std::size_t>(c)]);
    }
  }
  if (rank < design.cols()) {
    throw Error(ErrorKind::kDegenerate, "separator columns are collinear in the adjusted regression");
  }
  Matrix full(n, design.cols() + 1);
  full << design, block.data.col(j);
  if (rank_of(full) <= rank) {
    throw Error(ErrorKind::kDegenerate, "X_j is collinear with the adjusted design");
  }
  const auto cols = full.cols();
  const auto df = n - cols;
  if (df < 1) throw Error(ErrorKind::kDegenerate, "adjusted regression has no residual degrees of freedom");

  // X_j is the last column, so its estimate and standard error come from the
  // last row of R.
  Eigen::HouseholderQR<Matrix> qr(full);
  const Vector y = block.data.col(i);
  const Vector qty = qr.householderQ().transpose() * y;
  const Matrix r = qr.matrixQR().topRows(cols).template triangularView<Eigen::Upper>();
  const Vector beta = r.template triangularView<Eigen::Upper>().solve(qty.head(cols));
  const double rss = qty.tail(n - cols).squaredNorm();
  const double sigma = std::sqrt(rss / static_cast<double>(df));
  const double r_last = r(cols - 1, cols - 1);
  const double coef = beta(cols - 1);
  result.coefficient = coef;
  result.residual_df = static_cast<int>(df);

  double t = 0.0;
  if (sigma > 0.0) {
    t = coef / (sigma / std::abs(r_last));
  } else {
    t = coef == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), coef);
  }
  // Tail mass beyond |t|, computed directly to keep precision for large |t|.
  double half_p = 0.5;
  if (std::isinf(t)) {
    half_p = 0.0;
  } else if (t != 0.0) {
    const boost::math::students_t_distribution<double> dist(static_cast<double>(df));
    half_p = boost::math::cdf(boost::math::complement(dist, std::abs(t)));
  }
  constexpr double kTiny = 1e-300;
  result.pvalue = std::min(1.0, 2.0 * half_p);
  if (form == AdjustedScoreForm::kSigned) {
    const double z = -normal_quantile(std::max(half_p, kTiny));
    result.score = coef >= 0.0 ? z : -z;
    if (half_p >= 0.5) result.score = 0.0;
  } else {
    result.score = -normal_quantile(std::max(std::min(result.pvalue, 1.0 - 1e-16), kTiny));
  }
  return result;
}

PsiScoreMatrix compute_psi_matrix(const ConditionedDataset& ds, std::span<const CorrelationSummary> correlations,
                                  std::span<const ReducedNeighborhoods> neighborhoods, const PsiOptions& options) {
  const int k_count = ds.conditions_count();
  if (static_cast<int>(correlations.size()) != k_count || static_cast<int>(neighborhoods.size()) != k_count) {
    throw Error(ErrorKind::kShape, "screening results must cover every condition");
  }
  PsiScoreMatrix psi;
  psi.index = EdgeIndex(ds.variables());
  const auto n_edges = static_cast<Eigen::Index>(psi.index.size());
  psi.scores.resize(n_edges, k_count);
  psi.separator_sizes.resize(n_edges, k_count);
  psi.effective_n.resize(n_edges, k_count);
  for (const auto& c : ds.conditions) psi.condition_labels.push_back(c.label);

  if (options.adjust_covariates) {
    for (const auto& c : ds.conditions) {
      if (!c.covariates) throw Error(ErrorKind::kSchema, "condition '" + c.label + "' has no covariates to adjust for");
    }
  }

  parallel_for(psi.index.size(), options.threads, [&](std::size_t l) {
    const auto [i, j] = psi.index.pair(l);
    const auto row = static_cast<Eigen::Index>(l);
    for (int k = 0; k < k_count; ++k) {
      const auto& block = ds.conditions[static_cast<std::size_t>(k)];
      const auto& cs = correlations[static_cast<std::size_t>(k)];
      try {
        std::vector<int> s = separator(i, j, neighborhoods[static_cast<std::size_t>(k)], cs);
        psi.separator_sizes(row, k) = static_cast<int>(s.size());
        if (options.adjust_covariates) {
          const AdjustedScore adj = adjusted_psi_score(block, i, j, s, options.adjusted_form);
          psi.scores(row, k) = adj.score;
          psi.effective_n(row, k) = adj.residual_df;
        } else {
          const int n = block.samples();
          const double r = partial_correlation(cs.corr, i, j, s);
          psi.scores(row, k) = psi_score(r, n, static_cast<int>(s.size()));
          psi.effective_n(row, k) = n - static_cast<int>(s.size()) - 3;
        }
      } catch (const Error& e) {
        throw Error(e.kind(), std::string(e.what()) + " [edge " + std::to_string(l) + " (" + std::to_string(i + 1) +
                                  "," + std::to_string(j + 1) + "), condition " + std::to_string(k + 1) + "]");
      }
    }
  });
  return psi;
}

void write_score_csv(const std::filesystem::path& path, const EdgeIndex& index, const Matrix& scores,
                     const std::vector<std::string>& labels, const Eigen::MatrixXi* separator_sizes) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out << "i,j";
  for (const auto& label : labels) out << ',' << label;
  if (separator_sizes) {
    for (const auto& label : labels) out << ",sep_" << label;
  }
  out << '\n';
  char buf[40];
  for (std::size_t l = 0; l < index.size(); ++l) {
    const auto [i, j] = index.pair(l);
    out << i + 1 << ',' << j + 1;
    for (Eigen::Index k = 0; k < scores.cols(); ++k) {
      std::snprintf(buf, sizeof buf, ",%.17g", scores(static_cast<Eigen::Index>(l), k));
      out << buf;
    }
    if (separator_sizes) {
      for (Eigen::Index k = 0; k < separator_sizes->cols(); ++k) out << ',' << (*separator_sizes)(static_cast<Eigen::Index>(l), k);
    }
    out << '\n';
  }
}

namespace {

constexpr std::array<char, 8> kPsiMagic = {'F', 'B', 'I', 'A', 'P', 'S', 'I', '\0'};
constexpr std::uint32_t kPsiCacheVersion = 1;

template <typename T>
void put_le(std::ostream& out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  U bits;
  std::memcpy(&bits, &value, sizeof bits);
  for (std::size_t b = 0; b < sizeof bits; ++b) out.put(static_cast<char>((bits >> (8 * b)) & 0xFF));
}

template <typename T>
T get_le(std::istream& in) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  U bits = 0;
  for (std::size_t b = 0; b < sizeof bits; ++b) {
    const int c = in.get();
    if (c == EOF) throw Error(ErrorKind::kParse, "truncated psi cache");
    bits |= static_cast<U>(static_cast<unsigned char>(c)) << (8 * b);
  }
  T value;
  std::memcpy(&value, &bits, sizeof value);
  return value;
}

}  // namespace

void write_psi_cache(const std::filesystem::path& path, const PsiScoreMatrix& psi) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out.write(kPsiMagic.data(), kPsiMagic.size());
  put_le<std::uint32_t>(out, kPsiCacheVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(psi.index.nodes()));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(psi.conditions()));
  for (const auto& label : psi.condition_labels) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(label.size()));
    out.write(label.data(), static_cast<std::streamsize>(label.size()));
  }
  for (Eigen::Index l = 0; l < psi.scores.rows(); ++l)
    for (Eigen::Index k = 0; k < psi.scores.cols(); ++k) put_le<double>(out, psi.scores(l, k));
  for (Eigen::Index l = 0; l < psi.scores.rows(); ++l)
    for (Eigen::Index k = 0; k < psi.scores.cols(); ++k) put_le<std::int32_t>(out, psi.separator_sizes(l, k));
  for (Eigen::Index l = 0; l < psi.scores.rows(); ++l)
    for (Eigen::Index k = 0; k < psi.scores.cols(); ++k) put_le<std::int32_t>(out, psi.effective_n(l, k));
}

PsiScoreMatrix read_psi_cache(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kPsiMagic) throw Error(ErrorKind::kParse, path.string() + ": not a psi cache");
  const auto version = get_le<std::uint32_t>(in);
  if (version != kPsiCacheVersion) {
    throw Error(ErrorKind::kParse, path.string() + ": unsupported cache version " + std::to_string(version));
  }
  const auto p = static_cast<int>(get_le<std::uint32_t>(in));
  const auto k_count = static_cast<Eigen::Index>(get_le<std::uint32_t>(in));
  PsiScoreMatrix psi;
  psi.index = EdgeIndex(p);
  for (Eigen::Index k = 0; k < k_count; ++k) {
    const auto len = get_le<std::uint32_t>(in);
    std::string label(len, '\0');
    in.read(label.data(), len);
    psi.condition_labels.push_back(std::move(label));
  }
  const auto rows = static_cast<Eigen::Index>(psi.index.size());
  psi.scores.resize(rows, k_count);
  psi.separator_sizes.resize(rows, k_count);
  psi.effective_n.resize(rows, k_count);
  for (Eigen::Index l = 0; l < rows; ++l)
    for (Eigen::Index k = 0; k < k_count; ++k) psi.scores(l, k) = get_le<double>(in);
  for (Eigen::Index l = 0; l < rows; ++l)
    for (Eigen::Index k = 0; k < k_count; ++k) psi.separator_sizes(l, k) = get_le<std::int32_t>(in);
  for (Eigen::Index l = 0; l < rows; ++l)
    for (Eigen::Index k = 0; k < k_count; ++k) psi.effective_n(l, k) = get_le<std::int32_t>(in);
  return psi;
}

}  // namespace fbia
