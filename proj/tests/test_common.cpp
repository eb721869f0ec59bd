#include "doctest.h"

#include "fbia/common.hpp"

#include <atomic>
#include <cmath>
#include <vector>

using namespace fbia;

TEST_CASE("edge index is a bijection in row-major pair order") {
  for (int p : {2, 3, 7, 40}) {
    const EdgeIndex index(p);
    CHECK(index.size() == static_cast<std::size_t>(p * (p - 1) / 2));
    std::size_t expected = 0;
    for (int i = 0; i < p; ++i) {
      for (int j = i + 1; j < p; ++j) {
        CHECK(index.index(i, j) == expected);
        CHECK(index.index(j, i) == expected);
        const NodePair back = index.pair(expected);
        CHECK(back.i == i);
        CHECK(back.j == j);
        // 1-based closed form l = (i-1)p - i(i+1)/2 + j
        const int i1 = i + 1, j1 = j + 1;
        CHECK(static_cast<std::size_t>((i1 - 1) * p - i1 * (i1 + 1) / 2 + j1) == expected + 1);
        ++expected;
      }
    }
  }
}

TEST_CASE("edge index rejects invalid pairs") {
  const EdgeIndex index(4);
  CHECK_THROWS_AS(index.index(1, 1), Error);
  CHECK_THROWS_AS(index.index(0, 4), Error);
  CHECK_THROWS_AS(index.pair(6), Error);
  CHECK_THROWS_AS(EdgeIndex(1), Error);
}

TEST_CASE("parallel_for visits every index exactly once") {
  for (unsigned threads : {1U, 3U, 8U}) {
    std::vector<std::atomic<int>> hits(1000);
    parallel_for(hits.size(), threads, [&](std::size_t i) { hits[i].fetch_add(1); });
    for (const auto& h : hits) CHECK(h.load() == 1);
  }
}

TEST_CASE("parallel_for propagates the first exception") {
  CHECK_THROWS_AS(parallel_for(100, 4,
                               [](std::size_t i) {
                                 if (i == 37) throw Error(ErrorKind::kParameter, "boom");
                               }),
                  Error);
}

TEST_CASE("normal helpers") {
  CHECK(normal_cdf(0.0) == doctest::Approx(0.5));
  CHECK(two_sided_normal_pvalue(0.0) == doctest::Approx(1.0));
  CHECK(two_sided_normal_pvalue(1.959963984540054) == doctest::Approx(0.05).epsilon(1e-10));
  CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-12));
  CHECK(log_sum_exp({std::log(1.0), std::log(3.0)}) == doctest::Approx(std::log(4.0)));
  CHECK(log_sum_exp({-1000.0, -1000.0}) == doctest::Approx(-1000.0 + std::log(2.0)));
}

TEST_CASE("mix_seed is deterministic and stream-sensitive") {
  CHECK(mix_seed(7, 3) == mix_seed(7, 3));
  CHECK(mix_seed(7, 3) != mix_seed(7, 4));
  CHECK(mix_seed(7, 3) != mix_seed(8, 3));
}
