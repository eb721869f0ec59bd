#pragma once

#include <Eigen/Dense>

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace fbia {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Error categories surfaced to callers (and mapped to CLI exit codes).
enum class ErrorKind {
  kSchema,
  kParse,
  kSize,
  kDegenerate,
  kCapacity,
  kShape,
  kParameter,
  kNotPositiveDefinite,
  kIo,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + " error: " + what),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

  // Same kind, message prefixed with "[stage] ".
  Error tagged(const std::string& stage) const { return Error(kind_, "[" + stage + "] " + what(), 0); }

 private:
  Error(ErrorKind kind, const std::string& full, int) : std::runtime_error(full), kind_(kind) {}

  ErrorKind kind_;
};

// An unordered node pair with i < j, 0-based.
struct NodePair {
  int i = 0;
  int j = 0;
  friend bool operator==(const NodePair&, const NodePair&) = default;
  friend auto operator<=>(const NodePair&, const NodePair&) = default;
};

// Row-major enumeration of unordered pairs (0,1),(0,2),...,(0,p-1),(1,2),...
class EdgeIndex {
 public:
  explicit EdgeIndex(int p);

  int nodes() const noexcept { return p_; }
  std::size_t size() const noexcept { return n_; }

  std::size_t index(int i, int j) const;
  NodePair pair(std::size_t l) const;

 private:
  int p_;
  std::size_t n_;
  std::vector<std::size_t> row_start_;
};

// Stateless seed mixer; used to derive per-item RNG streams that do not
// depend on scheduling order.
std::uint64_t mix_seed(std::uint64_t master, std::uint64_t stream);

/// Runs body(i) for i in [0, count) on up to `threads` workers.
/// Work is handed out in contiguous chunks from a shared counter; body must
/// only write to state owned by index i. threads == 0 means hardware
/// concurrency.
void parallel_for(std::size_t count, unsigned threads,
                  const std::function<void(std::size_t)>& body);

unsigned resolve_threads(unsigned requested);

// Standard normal helpers.
double normal_cdf(double z);
double normal_upper_tail(double z);
double normal_quantile(double prob);
double two_sided_normal_pvalue(double z);

double log_sum_exp(const std::vector<double>& values);

// Correlations are clamped to this magnitude before atanh.
inline constexpr double kCorrelationClamp = 1.0 - 1e-15;

}  // namespace fbia
