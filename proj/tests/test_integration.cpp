#include "doctest.h"
#include "test_support.hpp"

#include "fbia/integration.hpp"

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/sinh_sinh.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <random>

using namespace fbia;

namespace {

// Straight transcription of the closed form, one configuration at a time.
double oracle_log_posterior(const std::vector<double>& psi, const std::vector<int>& e, bool spatial,
                            const MixtureHyperparams& hp) {
  const int k = static_cast<int>(psi.size());
  int k1 = 0, k2 = 0;
  if (!spatial) {
    for (int d = 0; d + 1 < k; ++d) k1 += std::abs(e[d + 1] - e[d]);
    k2 = k - 1 - k1;
  } else {
    const int ones = static_cast<int>(std::count(e.begin(), e.end(), 1));
    const int mode = ones > k - ones ? 1 : 0;
    for (int s : e) k1 += std::abs(s - mode);
    k2 = k - k1;
  }
  double total = std::lgamma(hp.a1 + k1) + std::lgamma(hp.b1 + k2) - std::lgamma(hp.a1 + k1 + hp.b1 + k2);
  for (int status : {0, 1}) {
    double n = 0, s = 0, ss = 0;
    for (int d = 0; d < k; ++d) {
      if (e[d] != status) continue;
      n += 1;
      s += psi[d];
      ss += psi[d] * psi[d];
    }
    if (n == 0) continue;
    const double shape = (n - 1) / 2 + hp.a2;
    total += hp.a2 * std::log(hp.b2) - std::lgamma(hp.a2) - 0.5 * std::log(n) -
             (n - 1) / 2 * std::log(2 * std::numbers::pi) + std::lgamma(shape) -
             shape * std::log(0.5 * ss - s * s / (2 * n) + hp.b2);
  }
  return total;
}

std::vector<double> oracle_posterior(const std::vector<double>& psi, bool spatial, const MixtureHyperparams& hp) {
  const int k = static_cast<int>(psi.size());
  std::vector<double> logm;
  for (int code = 0; code < (1 << k); ++code) {
    std::vector<int> e(k);
    for (int d = 0; d < k; ++d) e[d] = (code >> d) & 1;
    logm.push_back(oracle_log_posterior(psi, e, spatial, hp));
  }
  const double top = *std::max_element(logm.begin(), logm.end());
  double z = 0;
  for (double& v : logm) z += (v = std::exp(v - top));
  for (double& v : logm) v /= z;
  return logm;
}

double oracle_log_posterior3(const std::vector<double>& psi, const std::vector<int>& e, bool spatial,
                             const MixtureHyperparams& hp) {
  const int k = static_cast<int>(psi.size());
  double n[3] = {0, 0, 0};  // magnitudes 0, 1, 2
  if (!spatial) {
    for (int d = 0; d + 1 < k; ++d) n[std::abs(e[d + 1] - e[d])] += 1;
  } else {
    int count[3] = {0, 0, 0};
    for (int s : e) count[s + 1] += 1;
    int mode = 0;
    if (count[2] > count[1]) mode = 1;
    if (count[0] > count[1] && count[0] > count[2]) mode = -1;
    for (int s : e) n[std::abs(s - mode)] += 1;
  }
  const double alpha[3] = {hp.alpha0, hp.alpha1, hp.alpha2};
  double total = -std::lgamma(alpha[0] + alpha[1] + alpha[2] + n[0] + n[1] + n[2]);
  for (int i = 0; i < 3; ++i) total += std::lgamma(alpha[i] + n[i]);
  for (int status : {-1, 0, 1}) {
    std::vector<double> members;
    for (int d = 0; d < k; ++d)
      if (e[d] == status) members.push_back(psi[d]);
    if (members.empty()) continue;
    const double m = static_cast<double>(members.size());
    double s = 0, ss = 0;
    for (double v : members) {
      s += v;
      ss += v * v;
    }
    const double shape = (m - 1) / 2 + hp.a2;
    total += hp.a2 * std::log(hp.b2) - std::lgamma(hp.a2) - 0.5 * std::log(m) -
             (m - 1) / 2 * std::log(2 * std::numbers::pi) + std::lgamma(shape) -
             shape * std::log(0.5 * ss - s * s / (2 * m) + hp.b2);
  }
  return total;
}

double normal_pdf(double x, double mu, double var) {
  return std::exp(-0.5 * (x - mu) * (x - mu) / var) / std::sqrt(2 * std::numbers::pi * var);
}

double inverse_gamma_pdf(double v, double a, double b) {
  return std::exp(a * std::log(b) - std::lgamma(a) - (a + 1) * std::log(v) - b / v);
}

// Integrates flat(mu) x IG(sigma^2) against the group's normal likelihood.
double quadrature_group(const std::vector<double>& values, const MixtureHyperparams& hp, bool pin_mean) {
  boost::math::quadrature::exp_sinh<double> outer;
  boost::math::quadrature::sinh_sinh<double> inner;
  auto likelihood = [&](double mu, double var) {
    double out = 1.0;
    for (double x : values) out *= normal_pdf(x, mu, var);
    return out;
  };
  return outer.integrate([&](double var) {
    const double prior = inverse_gamma_pdf(var, hp.a2, hp.b2);
    if (prior == 0.0) return 0.0;
    if (pin_mean) return prior * likelihood(0.0, var);
    return prior * inner.integrate([&](double mu) { return likelihood(mu, var); });
  });
}

// Beta(a1, b1) kernel without its normalizer, matching the prior factor.
double quadrature_beta(int k1, int k2, const MixtureHyperparams& hp) {
  boost::math::quadrature::tanh_sinh<double> q;
  return q.integrate([&](double x) {
    return std::pow(x, hp.a1 + k1 - 1) * std::pow(1 - x, hp.b1 + k2 - 1);
  }, 0.0, 1.0);
}

double total_variation(const EdgePosterior& a, const EdgePosterior& b, int arity) {
  std::map<std::uint64_t, double> diff;
  for (const auto& c : a.configurations) diff[encode(c.configuration, arity)] += c.probability;
  for (const auto& c : b.configurations) diff[encode(c.configuration, arity)] -= c.probability;
  double tv = 0.0;
  for (const auto& [code, d] : diff) tv += std::abs(d);
  return 0.5 * tv;
}

double probability_of(const EdgePosterior& post, const std::vector<int>& states, int arity) {
  const auto code = encode(EdgeConfiguration{states}, arity);
  for (const auto& c : post.configurations)
    if (encode(c.configuration, arity) == code) return c.probability;
  return 0.0;
}

}  // namespace

TEST_CASE("configuration encoding round trip") {
  for (int arity : {2, 3}) {
    const auto total = configuration_count(5, arity);
    for (std::uint64_t code = 0; code < total; ++code) CHECK(encode(decode(code, 5, arity), arity) == code);
  }
  CHECK(configuration_count(14, 2) == 16384);
  CHECK(configuration_count(100, 3) == 0);
  CHECK(status_mode(EdgeConfiguration{{0, 1}}) == 0);
  CHECK(status_mode(EdgeConfiguration{{-1, 1}}) == 1);
  CHECK(status_mode(EdgeConfiguration{{-1, -1, 1}}) == -1);
}

TEST_CASE("closed-form group marginal agrees with numerical integration") {
  MixtureHyperparams hp;
  for (const auto& values : std::vector<std::vector<double>>{{0.7}, {1.2, 2.5}, {-0.3, 0.4, 1.9}, {3.0, 3.5, 2.2, 4.1}}) {
    double s = 0, ss = 0;
    for (double v : values) {
      s += v;
      ss += v * v;
    }
    const int n = static_cast<int>(values.size());
    CHECK(log_group_marginal(n, s, ss, hp, false) ==
          doctest::Approx(std::log(quadrature_group(values, hp, false))).epsilon(1e-7));
    MixtureHyperparams pinned = hp;
    pinned.pin_null_mean = true;
    CHECK(log_group_marginal(n, s, ss, pinned, true) ==
          doctest::Approx(std::log(quadrature_group(values, pinned, true))).epsilon(1e-7));
    // the pinned form only applies to the null group
    CHECK(log_group_marginal(n, s, ss, pinned, false) == log_group_marginal(n, s, ss, hp, false));
  }
}

TEST_CASE("full configuration marginal against quadrature over mean, variance and q") {
  MixtureHyperparams hp;
  hp.a2 = 2.0;
  hp.b2 = 1.5;
  {
    // K = 1: a single group of one; the Beta kernel integrates to B(a1, b1).
    const std::vector<double> psi{0.8};
    const double expected = std::log(quadrature_beta(0, 0, hp)) + std::log(quadrature_group(psi, hp, false));
    CHECK(log_marginal_config(psi, EdgeConfiguration{{0}}, PriorKind::kTemporal, hp, 2) ==
          doctest::Approx(expected).epsilon(1e-7));
    CHECK(std::lgamma(hp.a1) + std::lgamma(hp.b1) - std::lgamma(hp.a1 + hp.b1) ==
          doctest::Approx(std::log(quadrature_beta(0, 0, hp))).epsilon(1e-9));
  }
  {
    const std::vector<double> psi{1.2, -0.4, 2.5, 0.3};
    const EdgeConfiguration e{{1, 0, 1, 0}};  // three changes
    const double expected = std::log(quadrature_beta(3, 0, hp)) +
                            std::log(quadrature_group({1.2, 2.5}, hp, false)) +
                            std::log(quadrature_group({-0.4, 0.3}, hp, false));
    CHECK(log_marginal_config(psi, e, PriorKind::kTemporal, hp, 2) == doctest::Approx(expected).epsilon(1e-7));
  }
}

TEST_CASE("posterior matches an independent enumeration") {
  const MixtureHyperparams hp;
  std::mt19937_64 rng(8);
  std::normal_distribution<double> normal(0.0, 2.0);
  for (int trial = 0; trial < 20; ++trial) {
    const int k = 1 + trial % 6;
    std::vector<double> psi(k);
    for (double& v : psi) v = normal(rng);
    for (bool spatial : {false, true}) {
      const auto expected = oracle_posterior(psi, spatial, hp);
      const auto post = enumerate_posterior(psi, spatial ? PriorKind::kSpatial : PriorKind::kTemporal, hp, 2);
      REQUIRE(post.configurations.size() == expected.size());
      double total = 0.0;
      for (std::size_t d = 0; d < expected.size(); ++d) {
        CHECK(post.configurations[d].probability == doctest::Approx(expected[d]).epsilon(1e-10));
        total += post.configurations[d].probability;
      }
      CHECK(std::abs(total - 1.0) < 1e-10);
    }
  }
}

TEST_CASE("three-component posterior matches an independent enumeration") {
  const MixtureHyperparams hp;
  std::mt19937_64 rng(81);
  std::normal_distribution<double> normal(0.0, 3.0);
  for (int trial = 0; trial < 12; ++trial) {
    const int k = 1 + trial % 5;
    std::vector<double> psi(k);
    for (double& v : psi) v = normal(rng);
    for (bool spatial : {false, true}) {
      const auto post = enumerate_posterior(psi, spatial ? PriorKind::kSpatial : PriorKind::kTemporal, hp, 3);
      std::vector<double> logm;
      for (const auto& c : post.configurations) logm.push_back(oracle_log_posterior3(psi, c.configuration.states, spatial, hp));
      const double top = *std::max_element(logm.begin(), logm.end());
      double z = 0.0;
      for (double v : logm) z += std::exp(v - top);
      for (std::size_t d = 0; d < logm.size(); ++d)
        CHECK(post.configurations[d].probability == doctest::Approx(std::exp(logm[d] - top) / z).epsilon(1e-10));
    }
  }
}

TEST_CASE("weak scores favour the null configuration") {
  const std::vector<double> psi{0.1, 0.2};
  const auto post = enumerate_posterior(psi, PriorKind::kTemporal, {}, 2);
  REQUIRE(post.configurations.size() == 4);
  const auto expected = oracle_posterior(psi, false, {});
  double total = 0.0;
  for (std::size_t d = 0; d < 4; ++d) {
    CHECK(post.configurations[d].probability == doctest::Approx(expected[d]).epsilon(1e-12));
    total += post.configurations[d].probability;
  }
  CHECK(total == doctest::Approx(1.0));
  // (0,0) ties with its complement (1,1) under the default marginal
  for (const auto& c : post.configurations) CHECK(post.configurations[0].probability >= c.probability - 1e-15);
  MixtureHyperparams literal;
  literal.pin_null_mean = true;
  literal.literal_group_constant = true;
  const auto pinned = enumerate_posterior(psi, PriorKind::kTemporal, literal, 2);
  for (std::size_t d = 1; d < 4; ++d) CHECK(pinned.configurations[0].probability > pinned.configurations[d].probability);
}

TEST_CASE("default marginal is exchangeable under complement") {
  // With both group means integrated out, relabelling 0 <-> 1 changes nothing.
  const std::vector<double> psi{8, 8, 8, 8};
  const auto post = enumerate_posterior(psi, PriorKind::kTemporal, {}, 2);
  for (const auto& c : post.configurations) {
    std::vector<int> flipped = c.configuration.states;
    for (int& v : flipped) v = 1 - v;
    CHECK(probability_of(post, flipped, 2) == doctest::Approx(c.probability).epsilon(1e-12));
  }
  CHECK(probability_of(post, {1, 1, 1, 1}, 2) + probability_of(post, {0, 0, 0, 0}, 2) > 0.6);
}

TEST_CASE("strong scores everywhere favour the all-edge configuration") {
  // identifiable only once the null mean is fixed at 0
  MixtureHyperparams hp;
  hp.pin_null_mean = true;
  hp.literal_group_constant = true;
  const auto post = enumerate_posterior(std::vector<double>{8, 8, 8, 8}, PriorKind::kTemporal, hp, 2);
  CHECK(probability_of(post, {1, 1, 1, 1}, 2) > 0.9);
  hp.literal_group_constant = false;
  CHECK(probability_of(enumerate_posterior(std::vector<double>{8, 8, 8, 8}, PriorKind::kTemporal, hp, 2),
                       {1, 1, 1, 1}, 2) > 0.9);
}

TEST_CASE("temporal prior factor") {
  const MixtureHyperparams hp;  // a1 < b1
  for (int k = 1; k <= 6; ++k) {
    const auto total = configuration_count(k, 2);
    const double flat = log_prior_factor(decode(0, k, 2), PriorKind::kTemporal, hp, 2);
    for (std::uint64_t c = 0; c < total; ++c) {
      const auto e = decode(c, k, 2);
      CHECK(log_prior_factor(e, PriorKind::kTemporal, hp, 2) <= flat + 1e-12);
      EdgeConfiguration complement = e;
      for (int& s : complement.states) s = 1 - s;
      CHECK(log_prior_factor(complement, PriorKind::kTemporal, hp, 2) ==
            log_prior_factor(e, PriorKind::kTemporal, hp, 2));
    }
    // same number of edges, fewer changes: prior never lower
    for (std::uint64_t a = 0; a < total; ++a) {
      for (std::uint64_t b = 0; b < total; ++b) {
        const auto ea = decode(a, k, 2);
        const auto eb = decode(b, k, 2);
        if (std::count(ea.states.begin(), ea.states.end(), 1) != std::count(eb.states.begin(), eb.states.end(), 1))
          continue;
        int ca = 0, cb = 0;
        for (int d = 0; d + 1 < k; ++d) {
          ca += ea.states[d] != ea.states[d + 1];
          cb += eb.states[d] != eb.states[d + 1];
        }
        if (ca < cb)
          CHECK(log_prior_factor(ea, PriorKind::kTemporal, hp, 2) >=
                log_prior_factor(eb, PriorKind::kTemporal, hp, 2));
      }
    }
  }
  // the constant configuration of K = 4 against all 16
  const double h0 = log_prior_factor(EdgeConfiguration{{0, 0, 0, 0}}, PriorKind::kTemporal, hp, 2);
  CHECK(h0 == doctest::Approx(std::lgamma(1.0) + std::lgamma(13.0) - std::lgamma(14.0)));
}

TEST_CASE("spatial posterior is permutation equivariant") {
  const std::vector<double> psi{0.4, 3.1, -2.7, 1.5, 5.0};
  const std::vector<int> perm{3, 0, 4, 1, 2};
  std::vector<double> permuted(psi.size());
  for (std::size_t k = 0; k < psi.size(); ++k) permuted[k] = psi[static_cast<std::size_t>(perm[k])];
  for (int arity : {2, 3}) {
    const auto a = enumerate_posterior(psi, PriorKind::kSpatial, {}, arity);
    const auto b = enumerate_posterior(permuted, PriorKind::kSpatial, {}, arity);
    for (const auto& c : a.configurations) {
      std::vector<int> moved(psi.size());
      for (std::size_t k = 0; k < psi.size(); ++k) moved[k] = c.configuration.states[static_cast<std::size_t>(perm[k])];
      CHECK(probability_of(b, moved, arity) == doctest::Approx(c.probability).epsilon(1e-12));
    }
  }
}

TEST_CASE("Gibbs sampler agrees with enumeration") {
  const std::vector<double> psi{2.5, 0.3, 3.8, 1.1};
  const auto exact = enumerate_posterior(psi, PriorKind::kTemporal, {}, 2);
  const GibbsOptions options{10000, 1000, 42};
  const auto sampled = gibbs_posterior(psi, PriorKind::kTemporal, {}, 2, options);
  CHECK(sampled.method == Engine::kGibbs);
  CHECK(total_variation(exact, sampled, 2) < 0.05);

  const auto again = gibbs_posterior(psi, PriorKind::kTemporal, {}, 2, options);
  REQUIRE(again.configurations.size() == sampled.configurations.size());
  for (std::size_t d = 0; d < again.configurations.size(); ++d) {
    CHECK(again.configurations[d].configuration == sampled.configurations[d].configuration);
    CHECK(again.configurations[d].probability == sampled.configurations[d].probability);
  }
}

TEST_CASE("Gibbs agreement over seeded edges up to K = 6") {
  std::mt19937_64 rng(123);
  std::normal_distribution<double> normal;
  std::bernoulli_distribution edge(0.5);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const int k = 2 + trial % 5;
    std::vector<double> psi(k);
    for (double& v : psi) v = normal(rng) + (edge(rng) ? 4.0 : 0.0);
    for (PriorKind prior : {PriorKind::kTemporal, PriorKind::kSpatial}) {
      // 3^K states: beyond K = 4 even independent draws miss 0.05
      for (int arity : {2, 3}) {
        if (arity == 3 && k > 4) continue;
        const auto exact = enumerate_posterior(psi, prior, {}, arity);
        const auto sampled = gibbs_posterior(psi, prior, {}, arity, {10000, 1000, static_cast<std::uint64_t>(trial)});
        worst = std::max(worst, total_variation(exact, sampled, arity));
      }
    }
  }
  CHECK(worst < 0.05);
}

TEST_CASE("zero scores put their mass on constant configurations") {
  MixtureHyperparams literal;
  literal.pin_null_mean = true;
  literal.literal_group_constant = true;
  const auto post = enumerate_posterior(std::vector<double>{0, 0, 0, 0}, PriorKind::kTemporal, literal, 2);
  CHECK(probability_of(post, {0, 0, 0, 0}, 2) + probability_of(post, {1, 1, 1, 1}, 2) > 0.8);
  CHECK(probability_of(post, {0, 0, 0, 0}, 2) > probability_of(post, {1, 1, 1, 1}, 2));

  // the default still makes the constant configurations the two most likely
  const auto def = enumerate_posterior(std::vector<double>{0, 0, 0, 0}, PriorKind::kTemporal, {}, 2);
  const double constant = probability_of(def, {0, 0, 0, 0}, 2);
  for (const auto& c : def.configurations) {
    const auto& st = c.configuration.states;
    if (std::adjacent_find(st.begin(), st.end(), std::not_equal_to<>()) != st.end()) CHECK(c.probability < constant);
  }
}

TEST_CASE("Stouffer integration") {
  const auto a = stouffer_integrate(std::vector<double>{2, 2, 2}, EdgeConfiguration{{1, 1, 1}});
  for (double v : a) CHECK(v == doctest::Approx(3.464101615137754).epsilon(1e-14));
  const auto b = stouffer_integrate(std::vector<double>{0.1, 3, 4}, EdgeConfiguration{{0, 1, 1}});
  CHECK(b[0] == doctest::Approx(0.1));
  CHECK(b[1] == doctest::Approx(4.949747468305833).epsilon(1e-14));
  CHECK(b[2] == b[1]);
  CHECK(stouffer_integrate(std::vector<double>{-1.7}, EdgeConfiguration{{1}})[0] == -1.7);
  // weights: (2*1 + 1*3) / sqrt(4 + 1)
  const auto c = stouffer_integrate(std::vector<double>{1, 3}, EdgeConfiguration{{1, 1}}, std::vector<double>{2, 1});
  CHECK(c[0] == doctest::Approx(5.0 / std::sqrt(5.0)));
  CHECK_THROWS_AS(stouffer_integrate(std::vector<double>{1, 3}, EdgeConfiguration{{1, 1}}, std::vector<double>{0, 1}),
                  Error);
}

TEST_CASE("integrated vectors are constant within status groups") {
  const std::vector<double> psi{1.0, -2.0, 0.5, 4.0, 3.0};
  for (int arity : {2, 3}) {
    const auto post = enumerate_posterior(psi, PriorKind::kTemporal, {}, arity);
    for (const auto& c : post.configurations) {
      for (std::size_t a = 0; a < psi.size(); ++a)
        for (std::size_t b = 0; b < psi.size(); ++b)
          if (c.configuration.states[a] == c.configuration.states[b]) CHECK(c.integrated[a] == c.integrated[b]);
    }
  }
}

TEST_CASE("Bayes averaging") {
  EdgePosterior degenerate;
  degenerate.configurations.push_back({EdgeConfiguration{{0, 1}}, 1.0, {0.5, 2.0}});
  degenerate.configurations.push_back({EdgeConfiguration{{1, 1}}, 0.0, {9.0, 9.0}});
  CHECK(bayes_average(degenerate) == std::vector<double>{0.5, 2.0});

  const std::vector<double> psi{1, 1};
  EdgePosterior uniform;
  uniform.configurations.push_back({EdgeConfiguration{{0, 0}}, 0.5, stouffer_integrate(psi, EdgeConfiguration{{0, 0}})});
  uniform.configurations.push_back({EdgeConfiguration{{1, 1}}, 0.5, stouffer_integrate(psi, EdgeConfiguration{{1, 1}})});
  const auto avg = bayes_average(uniform);
  CHECK(avg[0] == doctest::Approx(std::sqrt(2.0)));
  CHECK(avg[1] == doctest::Approx(std::sqrt(2.0)));

  for (int arity : {2, 3})
    CHECK(bayes_average(enumerate_posterior(std::vector<double>{2.7}, PriorKind::kTemporal, {}, arity))[0] ==
          doctest::Approx(2.7).epsilon(1e-14));
}

TEST_CASE("matrix integration") {
  const Matrix single = fbia::testing::gaussian_matrix(30, 1, 2);
  const auto id = integrate_matrix(single, {});
  CHECK((id.scores - single).cwiseAbs().maxCoeff() < 1e-12);

  Matrix twin(1, 2);
  twin << 6, 6;
  const auto amp = integrate_matrix(twin, {});
  CHECK(amp.scores(0, 0) >= 6.0);
  CHECK(amp.scores(0, 1) >= 6.0);
  CHECK(amp.scores(0, 0) <= 6.0 * std::sqrt(2.0) + 1e-12);

  for (int k : {2, 4, 6}) {
    const Matrix noise = fbia::testing::gaussian_matrix(200, k, static_cast<std::uint64_t>(k));
    for (int arity : {2, 3}) {
      IntegrationOptions options;
      options.arity = arity;
      const auto out = integrate_matrix(noise, options);
      for (Eigen::Index l = 0; l < noise.rows(); ++l) {
        const double bound = std::sqrt(static_cast<double>(k)) * noise.row(l).cwiseAbs().maxCoeff() + 1e-12;
        for (Eigen::Index c = 0; c < k; ++c) CHECK(std::abs(out.scores(l, c)) <= bound);
      }
      CHECK(out.scores.allFinite());
    }
  }
}

TEST_CASE("two- and three-component models agree on positive rows" * doctest::may_fail()) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal;
  std::bernoulli_distribution edge(0.5);
  double worst = 0.0;
  for (int trial = 0; trial < 30; ++trial) {
    const int k = 3 + trial % 4;
    std::vector<double> psi(k);
    for (double& v : psi) v = std::max(-1.5, normal(rng) + (edge(rng) ? 5.0 : 0.0));
    const auto two = enumerate_posterior(psi, PriorKind::kTemporal, {}, 2);
    const auto three = enumerate_posterior(psi, PriorKind::kTemporal, {}, 3);
    for (int c = 0; c < k; ++c) {
      double p2 = 0.0, p3 = 0.0, negative = 0.0;
      for (const auto& cfg : two.configurations)
        if (cfg.configuration.states[c] == 1) p2 += cfg.probability;
      for (const auto& cfg : three.configurations) {
        if (cfg.configuration.states[c] != 0) p3 += cfg.probability;
        if (cfg.configuration.states[c] == -1) negative += cfg.probability;
      }
      CHECK(negative < p3 - negative + 1e-12);
      worst = std::max(worst, std::abs(p2 - p3));
    }
  }
  CHECK(worst <= 0.1);
}

TEST_CASE("engine selection and capacity") {
  const std::vector<double> psi(15, 1.0);
  CHECK_THROWS_AS(enumerate_posterior(psi, PriorKind::kTemporal, {}, 2), Error);
  try {
    enumerate_posterior(psi, PriorKind::kTemporal, {}, 2);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kCapacity);
    CHECK(std::string(e.what()).find("Gibbs") != std::string::npos);
  }
  IntegrationOptions options;
  options.arity = 3;
  CHECK(resolve_engine(options, 9) == Engine::kGibbs);
  CHECK(resolve_engine(options, 8) == Engine::kExact);
  options.arity = 2;
  CHECK(resolve_engine(options, 14) == Engine::kExact);
  CHECK(resolve_engine(options, 15) == Engine::kGibbs);

  Matrix wide = fbia::testing::gaussian_matrix(3, 9, 1);
  options.arity = 3;
  options.gibbs = {500, 100, 3};
  const auto out = integrate_matrix(wide, options);
  CHECK(out.engine == Engine::kGibbs);
  CHECK(out.scores.allFinite());
  const auto repeat = integrate_matrix(wide, options);
  CHECK(repeat.scores == out.scores);
}

TEST_CASE("invalid hyperparameters are rejected") {
  MixtureHyperparams hp;
  hp.b2 = 0.0;
  CHECK_THROWS_AS(enumerate_posterior(std::vector<double>{1.0, 2.0}, PriorKind::kTemporal, hp, 2), Error);
  CHECK_THROWS_AS(enumerate_posterior(std::vector<double>{1.0, 2.0}, PriorKind::kTemporal, {}, 4), Error);
}
