#include "fbia/common.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>

namespace fbia {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kSchema: return "schema";
    case ErrorKind::kParse: return "parse";
    case ErrorKind::kSize: return "size";
    case ErrorKind::kDegenerate: return "degenerate";
    case ErrorKind::kCapacity: return "capacity";
    case ErrorKind::kShape: return "shape";
    case ErrorKind::kParameter: return "parameter";
    case ErrorKind::kNotPositiveDefinite: return "positive-definiteness";
    case ErrorKind::kIo: return "io";
  }
  return "unknown";
}

EdgeIndex::EdgeIndex(int p) : p_(p) {
  if (p < 2) throw Error(ErrorKind::kSize, "edge index needs at least 2 nodes");
  n_ = static_cast<std::size_t>(p) * static_cast<std::size_t>(p - 1) / 2;
  row_start_.resize(static_cast<std::size_t>(p));
  std::size_t start = 0;
  for (int i = 0; i < p; ++i) {
    row_start_[static_cast<std::size_t>(i)] = start;
    start += static_cast<std::size_t>(p - 1 - i);
  }
}

std::size_t EdgeIndex::index(int i, int j) const {
  if (i > j) std::swap(i, j);
  if (i == j || i < 0 || j >= p_) {
    throw Error(ErrorKind::kParameter, "invalid node pair (" + std::to_string(i) + "," +
                                           std::to_string(j) + ")");
  }
  return row_start_[static_cast<std::size_t>(i)] + static_cast<std::size_t>(j - i - 1);
}

NodePair EdgeIndex::pair(std::size_t l) const {
  if (l >= n_) throw Error(ErrorKind::kParameter, "edge index out of range");
  auto it = std::upper_bound(row_start_.begin(), row_start_.end(), l);
  const int i = static_cast<int>(std::distance(row_start_.begin(), it)) - 1;
  const int j = i + 1 + static_cast<int>(l - row_start_[static_cast<std::size_t>(i)]);
  return {i, j};
}

std::uint64_t mix_seed(std::uint64_t master, std::uint64_t stream) {
  // splitmix64 finalizer over a combined word
  std::uint64_t z = master ^ (stream + 0x9e3779b97f4a7c15ULL + (master << 6) + (master >> 2));
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

unsigned resolve_threads(unsigned requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1U : hw;
}

void parallel_for(std::size_t count, unsigned threads,
                  const std::function<void(std::size_t)>& body) {
  const unsigned workers =
      static_cast<unsigned>(std::min<std::size_t>(resolve_threads(threads), std::max<std::size_t>(count, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  const std::size_t chunk = std::max<std::size_t>(1, count / (workers * 8));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto run = [&] {
    for (;;) {
      const std::size_t begin = next.fetch_add(chunk);
      if (begin >= count) return;
      const std::size_t end = std::min(count, begin + chunk);
      try {
        for (std::size_t i = begin; i < end; ++i) body(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(count);
        return;
      }
    }
  };
  std::vector<std::jthread> pool;
  pool.reserve(workers - 1);
  for (unsigned w = 1; w < workers; ++w) pool.emplace_back(run);
  run();
  pool.clear();
  if (failure) std::rethrow_exception(failure);
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double normal_upper_tail(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

double normal_quantile(double prob) {
  if (prob <= 0.0) return -std::numeric_limits<double>::infinity();
  if (prob >= 1.0) return std::numeric_limits<double>::infinity();
  static const boost::math::normal_distribution<double> standard;
  return boost::math::quantile(standard, prob);
}

double two_sided_normal_pvalue(double z) {
  return std::min(1.0, std::erfc(std::abs(z) / std::sqrt(2.0)));
}

double log_sum_exp(const std::vector<double>& values) {
  if (values.empty()) return -std::numeric_limits<double>::infinity();
  const double peak = *std::max_element(values.begin(), values.end());
  if (!std::isfinite(peak)) return peak;
  double total = 0.0;
  for (double v : values) total += std::exp(v - peak);
  return peak + std::log(total);
}

}  // namespace fbia
