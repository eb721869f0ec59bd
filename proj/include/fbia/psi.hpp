#pragma once

#include "fbia/common.hpp"
#include "fbia/ingest.hpp"
#include "fbia/screening.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace fbia {

/// N x K edge-wise scores; row l is the pair index.pair(l).
struct PsiScoreMatrix {
  EdgeIndex index{2};
  Matrix scores;
  Eigen::MatrixXi separator_sizes;
  Eigen::MatrixXi effective_n;  // n_k - |S| - 3
  std::vector<std::string> condition_labels;

  std::size_t edges() const { return static_cast<std::size_t>(scores.rows()); }
  int conditions() const { return static_cast<int>(scores.cols()); }
};

/// Union of both reduced neighbourhoods minus {i, j}. If that leaves fewer
/// than one effective sample (n - |S| - 3 < 1), members with the smallest
/// max(|r_im|, |r_jm|) are dropped first. Returned sorted by node index.
std::vector<int> separator(int i, int j, const ReducedNeighborhoods& rn, const CorrelationSummary& cs);

/// Partial correlation of i, j given S from the inverse of the correlation
/// submatrix over [i, j, S]. A 1e-8 ridge is added if that submatrix is
/// numerically singular.
double partial_correlation(const Matrix& corr, int i, int j, std::span<const int> conditioning);
double partial_correlation(const ConditionBlock& block, int i, int j, std::span<const int> conditioning);

/// sqrt(n - s - 3) * atanh(psi_tilde), psi_tilde clamped to +/-(1 - 1e-15).
double psi_score(double psi_tilde, int n, int separator_size);

enum class AdjustedScoreForm {
  kSigned,    // sign(beta) * Phi^{-1}(1 - p/2)
  kUnsigned,  // Phi^{-1}(1 - p)
};

struct AdjustedScore {
  double score = 0.0;
  double pvalue = 1.0;
  double coefficient = 0.0;
  int residual_df = 0;
  std::vector<std::string> dropped_covariates;
};

/// OLS of X_i on [1, W, X_j, X_S]; the score comes from the t-test of the
/// X_j coefficient. Collinear covariate columns are dropped and reported.
AdjustedScore adjusted_psi_score(const ConditionBlock& block, int i, int j, std::span<const int> conditioning,
                                 AdjustedScoreForm form = AdjustedScoreForm::kSigned);

struct PsiOptions {
  bool adjust_covariates = false;
  AdjustedScoreForm adjusted_form = AdjustedScoreForm::kSigned;
  unsigned threads = 0;
};

PsiScoreMatrix compute_psi_matrix(const ConditionedDataset& ds, std::span<const CorrelationSummary> correlations,
                                  std::span<const ReducedNeighborhoods> neighborhoods, const PsiOptions& options = {});

// CSV: i,j,<label_1..K>,sep_<label_1..K> with 1-based nodes.
void write_score_csv(const std::filesystem::path& path, const EdgeIndex& index, const Matrix& scores,
                     const std::vector<std::string>& labels, const Eigen::MatrixXi* separator_sizes = nullptr);

// Binary cache: "FBIAPSI\0", u32 version, u32 p, u32 K, then N*K f64 scores,
// N*K i32 separator sizes, N*K i32 effective n; all little-endian, row-major.
void write_psi_cache(const std::filesystem::path& path, const PsiScoreMatrix& psi);
PsiScoreMatrix read_psi_cache(const std::filesystem::path& path);

}  // namespace fbia
