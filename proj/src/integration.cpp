#include "fbia/integration.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cassert>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <random>

namespace fbia {

const char* to_string(PriorKind prior) { return prior == PriorKind::kTemporal ? "temporal" : "spatial"; }

const char* to_string(Engine engine) {
  switch (engine) {
    case Engine::kAuto: return "auto";
    case Engine::kExact: return "exact";
    case Engine::kGibbs: return "gibbs";
  }
  return "auto";
}

PriorKind parse_prior(const std::string& text) {
  if (text == "temporal") return PriorKind::kTemporal;
  if (text == "spatial") return PriorKind::kSpatial;
  throw Error(ErrorKind::kParameter, "unknown prior '" + text + "'");
}

Engine parse_engine(const std::string& text) {
  if (text == "auto") return Engine::kAuto;
  if (text == "exact") return Engine::kExact;
  if (text == "gibbs") return Engine::kGibbs;
  throw Error(ErrorKind::kParameter, "unknown engine '" + text + "'");
}

void MixtureHyperparams::validate() const {
  for (double v : {a1, b1, a2, b2, alpha0, alpha1, alpha2}) {
    if (!(v > 0.0) || !std::isfinite(v)) throw Error(ErrorKind::kParameter, "hyperparameters must be positive");
  }
}

namespace {

void check_arity(int arity) {
  if (arity != 2 && arity != 3) throw Error(ErrorKind::kParameter, "arity must be 2 or 3");
}

int slot_of(int state, int arity) { return arity == 2 ? state : state + 1; }
int state_of(int slot, int arity) { return arity == 2 ? slot : slot - 1; }

// Sufficient statistics of one configuration: per-status group sums and
// the change-magnitude counts the prior needs.
struct ConfigStats {
  std::array<int, 3> count{};
  std::array<double, 3> sum{};
  std::array<double, 3> sum_squares{};
  std::array<int, 3> changes{};  // temporal: transitions with |delta| = 0,1,2
};

int mode_from_counts(const std::array<int, 3>& count, int arity) {
  // preference order 0, 1, -1
  const std::array<int, 3> preference = {0, 1, -1};
  int best = 0;
  int best_count = -1;
  for (int s : preference) {
    if (arity == 2 && s == -1) continue;
    const int c = count[static_cast<std::size_t>(slot_of(s, arity))];
    if (c > best_count) {
      best = s;
      best_count = c;
    }
  }
  return best;
}

double prior_from_counts(const std::array<int, 3>& change_counts, int total, const MixtureHyperparams& hp,
                         int arity) {
  if (arity == 2) {
    const int k1 = change_counts[1];
    const int k2 = total - k1;
    return std::lgamma(hp.a1 + k1) + std::lgamma(hp.b1 + k2) - std::lgamma(hp.a1 + hp.b1 + total);
  }
  const std::array<double, 3> alpha = {hp.alpha0, hp.alpha1, hp.alpha2};
  double h = 0.0;
  double denom = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    h += std::lgamma(alpha[i] + change_counts[i]);
    denom += alpha[i] + change_counts[i];
  }
  return h - std::lgamma(denom);
}

double log_prior_from_stats(const ConfigStats& st, int k_count, PriorKind prior, const MixtureHyperparams& hp,
                            int arity) {
  if (prior == PriorKind::kTemporal) return prior_from_counts(st.changes, k_count - 1, hp, arity);
  const int mode = mode_from_counts(st.count, arity);
  std::array<int, 3> deviations{};
  for (int slot = 0; slot < arity; ++slot) {
    const int distance = std::abs(state_of(slot, arity) - mode);
    deviations[static_cast<std::size_t>(distance)] += st.count[static_cast<std::size_t>(slot)];
  }
  return prior_from_counts(deviations, k_count, hp, arity);
}

double log_posterior_from_stats(const ConfigStats& st, int k_count, PriorKind prior, const MixtureHyperparams& hp,
                                int arity) {
  double total = log_prior_from_stats(st, k_count, prior, hp, arity);
  for (int slot = 0; slot < arity; ++slot) {
    const auto s = static_cast<std::size_t>(slot);
    if (st.count[s] == 0) continue;
    total += log_group_marginal(st.count[s], st.sum[s], st.sum_squares[s], hp, state_of(slot, arity) == 0);
  }
  return total;
}

ConfigStats stats_of(std::span<const double> psi, const EdgeConfiguration& e, int arity) {
  ConfigStats st;
  for (std::size_t k = 0; k < psi.size(); ++k) {
    const auto s = static_cast<std::size_t>(slot_of(e.states[k], arity));
    st.count[s] += 1;
    st.sum[s] += psi[k];
    st.sum_squares[s] += psi[k] * psi[k];
    if (k + 1 < psi.size()) st.changes[static_cast<std::size_t>(std::abs(e.states[k + 1] - e.states[k]))] += 1;
  }
  return st;
}

void check_configuration(std::span<const double> psi, const EdgeConfiguration& e, int arity) {
  check_arity(arity);
  if (psi.empty()) throw Error(ErrorKind::kParameter, "need at least one condition");
  if (e.states.size() != psi.size()) throw Error(ErrorKind::kShape, "configuration length differs from K");
  for (int s : e.states) {
    if (s < (arity == 2 ? 0 : -1) || s > 1) throw Error(ErrorKind::kParameter, "status outside the arity domain");
  }
}

std::vector<double> unit_weights_if_empty(std::span<const double> weights, std::size_t k) {
  if (weights.empty()) return std::vector<double>(k, 1.0);
  if (weights.size() != k) throw Error(ErrorKind::kShape, "weight vector length differs from K");
  for (double w : weights) {
    if (!(w > 0.0)) throw Error(ErrorKind::kParameter, "Stouffer weights must be positive");
  }
  return {weights.begin(), weights.end()};
}

void stouffer_into(std::span<const double> psi, const EdgeConfiguration& e, std::span<const double> w,
                   std::span<double> out) {
  std::array<double, 3> numerator{};
  std::array<double, 3> weight_squares{};
  for (std::size_t k = 0; k < psi.size(); ++k) {
    const auto s = static_cast<std::size_t>(e.states[k] + 1);
    numerator[s] += w[k] * psi[k];
    weight_squares[s] += w[k] * w[k];
  }
  for (std::size_t k = 0; k < psi.size(); ++k) {
    const auto s = static_cast<std::size_t>(e.states[k] + 1);
    out[k] = numerator[s] / std::sqrt(weight_squares[s]);
  }
}

}  // namespace

std::uint64_t configuration_count(int k_count, int arity) {
  std::uint64_t total = 1;
  for (int k = 0; k < k_count; ++k) {
    if (total > std::numeric_limits<std::uint64_t>::max() / static_cast<std::uint64_t>(arity)) return 0;
    total *= static_cast<std::uint64_t>(arity);
  }
  return total;
}

std::uint64_t encode(const EdgeConfiguration& e, int arity) {
  std::uint64_t code = 0;
  for (std::size_t k = e.states.size(); k-- > 0;) {
    code = code * static_cast<std::uint64_t>(arity) + static_cast<std::uint64_t>(slot_of(e.states[k], arity));
  }
  return code;
}

EdgeConfiguration decode(std::uint64_t code, int k_count, int arity) {
  EdgeConfiguration e;
  e.states.resize(static_cast<std::size_t>(k_count));
  for (int k = 0; k < k_count; ++k) {
    e.states[static_cast<std::size_t>(k)] = state_of(static_cast<int>(code % static_cast<std::uint64_t>(arity)), arity);
    code /= static_cast<std::uint64_t>(arity);
  }
  return e;
}

int status_mode(const EdgeConfiguration& e) {
  std::array<int, 3> count{};
  for (int s : e.states) count[static_cast<std::size_t>(s + 1)] += 1;
  // reuse the arity-3 slot layout
  return mode_from_counts(count, 3);
}

double log_prior_factor(const EdgeConfiguration& e, PriorKind prior, const MixtureHyperparams& hp, int arity) {
  check_arity(arity);
  const std::vector<double> zeros(e.states.size(), 0.0);
  const ConfigStats st = stats_of(zeros, e, arity);
  return log_prior_from_stats(st, static_cast<int>(e.states.size()), prior, hp, arity);
}

double log_group_marginal(int count, double sum, double sum_squares, const MixtureHyperparams& hp, bool null_group) {
  constexpr double kLog2Pi = 1.83787706640934548356;
  const double n = static_cast<double>(count);
  const double ig_normalizer = hp.literal_group_constant ? 0.0 : hp.a2 * std::log(hp.b2) - std::lgamma(hp.a2);
  if (null_group && hp.pin_null_mean) {
    const double shape = 0.5 * n + hp.a2;
    const double rate = 0.5 * sum_squares + hp.b2;
    return ig_normalizer - 0.5 * n * kLog2Pi + std::lgamma(shape) - shape * std::log(rate);
  }
  const double centered = std::max(0.0, sum_squares - sum * sum / n);
  const double rate = 0.5 * centered + hp.b2;
  assert(rate > 0.0);
  const double shape = 0.5 * (n - 1.0) + hp.a2;
  const double log_2pi_power = hp.literal_group_constant ? 0.5 * n * kLog2Pi : 0.5 * (n - 1.0) * kLog2Pi;
  return ig_normalizer - 0.5 * std::log(n) - log_2pi_power + std::lgamma(shape) - shape * std::log(rate);
}

double log_marginal_config(std::span<const double> psi, const EdgeConfiguration& e, PriorKind prior,
                           const MixtureHyperparams& hp, int arity) {
  check_configuration(psi, e, arity);
  return log_posterior_from_stats(stats_of(psi, e, arity), static_cast<int>(psi.size()), prior, hp, arity);
}

std::vector<double> stouffer_integrate(std::span<const double> psi, const EdgeConfiguration& e,
                                       std::span<const double> weights) {
  if (e.states.size() != psi.size()) throw Error(ErrorKind::kShape, "configuration length differs from K");
  const std::vector<double> w = unit_weights_if_empty(weights, psi.size());
  std::vector<double> out(psi.size());
  stouffer_into(psi, e, w, out);
  return out;
}

EdgePosterior enumerate_posterior(std::span<const double> psi, PriorKind prior, const MixtureHyperparams& hp,
                                  int arity, std::span<const double> weights, std::uint64_t cap) {
  check_arity(arity);
  hp.validate();
  const int k_count = static_cast<int>(psi.size());
  if (k_count < 1) throw Error(ErrorKind::kParameter, "need at least one condition");
  const std::uint64_t total = configuration_count(k_count, arity);
  if (total == 0 || total > cap) {
    throw Error(ErrorKind::kCapacity, std::to_string(arity) + "^" + std::to_string(k_count) +
                                          " configurations exceed the enumeration cap of " + std::to_string(cap) +
                                          "; use the Gibbs engine");
  }
  const std::vector<double> w = unit_weights_if_empty(weights, psi.size());
  EdgePosterior post;
  post.method = Engine::kExact;
  post.configurations.resize(total);
  std::vector<double> logm(total);
  for (std::uint64_t d = 0; d < total; ++d) {
    auto& c = post.configurations[d];
    c.configuration = decode(d, k_count, arity);
    logm[d] = log_posterior_from_stats(stats_of(psi, c.configuration, arity), k_count, prior, hp, arity);
  }
  const double norm = log_sum_exp(logm);
  for (std::uint64_t d = 0; d < total; ++d) {
    auto& c = post.configurations[d];
    c.probability = std::exp(logm[d] - norm);
    c.integrated.resize(psi.size());
    stouffer_into(psi, c.configuration, w, c.integrated);
  }
  return post;
}

EdgePosterior gibbs_posterior(std::span<const double> psi, PriorKind prior, const MixtureHyperparams& hp, int arity,
                              const GibbsOptions& options, std::span<const double> weights) {
  check_arity(arity);
  hp.validate();
  if (options.sweeps < 1) throw Error(ErrorKind::kParameter, "Gibbs needs at least one sweep");
  const int k_count = static_cast<int>(psi.size());
  if (k_count < 1) throw Error(ErrorKind::kParameter, "need at least one condition");
  if (configuration_count(k_count, arity) == 0) throw Error(ErrorKind::kCapacity, "too many conditions to encode");
  const std::vector<double> w = unit_weights_if_empty(weights, psi.size());

  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  EdgeConfiguration e;
  e.states.resize(psi.size());
  for (std::size_t k = 0; k < psi.size(); ++k) {
    if (arity == 2) {
      e.states[k] = std::abs(psi[k]) > 2.0 ? 1 : 0;
    } else {
      e.states[k] = psi[k] > 2.0 ? 1 : (psi[k] < -2.0 ? -1 : 0);
    }
  }
  ConfigStats st = stats_of(psi, e, arity);

  auto move_site = [&](std::size_t k, int to) {
    const int from = e.states[k];
    if (from == to) return;
    const auto a = static_cast<std::size_t>(slot_of(from, arity));
    const auto b = static_cast<std::size_t>(slot_of(to, arity));
    st.count[a] -= 1;
    st.sum[a] -= psi[k];
    st.sum_squares[a] -= psi[k] * psi[k];
    st.count[b] += 1;
    st.sum[b] += psi[k];
    st.sum_squares[b] += psi[k] * psi[k];
    if (st.count[a] == 0) {
      st.sum[a] = 0.0;
      st.sum_squares[a] = 0.0;
    }
    if (k > 0) {
      st.changes[static_cast<std::size_t>(std::abs(from - e.states[k - 1]))] -= 1;
      st.changes[static_cast<std::size_t>(std::abs(to - e.states[k - 1]))] += 1;
    }
    if (k + 1 < psi.size()) {
      st.changes[static_cast<std::size_t>(std::abs(e.states[k + 1] - from))] -= 1;
      st.changes[static_cast<std::size_t>(std::abs(e.states[k + 1] - to))] += 1;
    }
    e.states[k] = to;
  };

  // Non-identity permutations of the slots; the set is closed under
  // inversion, so a uniform pick is a symmetric proposal.
  const std::array<std::array<int, 3>, 5> relabelings =
      arity == 2 ? std::array<std::array<int, 3>, 5>{{{1, 0, 2}}}
                 : std::array<std::array<int, 3>, 5>{{{1, 0, 2}, {0, 2, 1}, {2, 1, 0}, {1, 2, 0}, {2, 0, 1}}};
  const int relabel_count = arity == 2 ? 1 : 5;

  std::map<std::uint64_t, std::uint64_t> visits;
  std::array<double, 3> logp{};
  const int total_sweeps = options.burn_in + options.sweeps;
  for (int sweep = 0; sweep < total_sweeps; ++sweep) {
    for (std::size_t k = 0; k < psi.size(); ++k) {
      for (int slot = 0; slot < arity; ++slot) {
        move_site(k, state_of(slot, arity));
        logp[static_cast<std::size_t>(slot)] = log_posterior_from_stats(st, k_count, prior, hp, arity);
      }
      const double peak = *std::max_element(logp.begin(), logp.begin() + arity);
      std::array<double, 3> weight{};
      double total = 0.0;
      for (int slot = 0; slot < arity; ++slot) {
        weight[static_cast<std::size_t>(slot)] = std::exp(logp[static_cast<std::size_t>(slot)] - peak);
        total += weight[static_cast<std::size_t>(slot)];
      }
      double u = unit(rng) * total;
      int chosen = arity - 1;
      for (int slot = 0; slot < arity; ++slot) {
        u -= weight[static_cast<std::size_t>(slot)];
        if (u < 0.0) {
          chosen = slot;
          break;
        }
      }
      move_site(k, state_of(chosen, arity));
    }
    // Rebuild sums so incremental round-off cannot accumulate.
    st = stats_of(psi, e, arity);

    // Relabel all sites at once; single-site moves cross between
    // label-permuted modes only through low-probability states.
    {
      const auto& perm = relabelings[static_cast<std::size_t>(unit(rng) * static_cast<double>(relabel_count))];
      EdgeConfiguration proposal = e;
      for (int& s : proposal.states) s = state_of(perm[static_cast<std::size_t>(slot_of(s, arity))], arity);
      const ConfigStats proposed = stats_of(psi, proposal, arity);
      const double log_ratio = log_posterior_from_stats(proposed, k_count, prior, hp, arity) -
                               log_posterior_from_stats(st, k_count, prior, hp, arity);
      if (std::log(unit(rng)) < log_ratio) {
        e = std::move(proposal);
        st = proposed;
      }
    }
    if (sweep >= options.burn_in) visits[encode(e, arity)] += 1;
  }

  EdgePosterior post;
  post.method = Engine::kGibbs;
  const auto kept = static_cast<double>(options.sweeps);
  for (const auto& [code, hits] : visits) {
    ConfigurationPosterior c;
    c.configuration = decode(code, k_count, arity);
    c.probability = static_cast<double>(hits) / kept;
    c.integrated.resize(psi.size());
    stouffer_into(psi, c.configuration, w, c.integrated);
    post.configurations.push_back(std::move(c));
  }
  return post;
}

std::vector<double> bayes_average(const EdgePosterior& posterior) {
  if (posterior.configurations.empty()) throw Error(ErrorKind::kParameter, "empty posterior");
  std::vector<double> avg(posterior.configurations.front().integrated.size(), 0.0);
  for (const auto& c : posterior.configurations) {
    for (std::size_t k = 0; k < avg.size(); ++k) avg[k] += c.probability * c.integrated[k];
  }
  return avg;
}

Engine resolve_engine(const IntegrationOptions& options, int k_count) {
  if (options.engine != Engine::kAuto) return options.engine;
  const std::uint64_t total = configuration_count(k_count, options.arity);
  return (total != 0 && total <= options.cap) ? Engine::kExact : Engine::kGibbs;
}

EdgePosterior edge_posterior(const Matrix& psi, std::size_t row, const IntegrationOptions& options) {
  const auto k_count = static_cast<int>(psi.cols());
  std::vector<double> values(static_cast<std::size_t>(k_count));
  for (int k = 0; k < k_count; ++k) values[static_cast<std::size_t>(k)] = psi(static_cast<Eigen::Index>(row), k);
  if (resolve_engine(options, k_count) == Engine::kExact) {
    return enumerate_posterior(values, options.prior, options.hp, options.arity, options.weights, options.cap);
  }
  GibbsOptions g = options.gibbs;
  g.seed = mix_seed(options.gibbs.seed, row);
  return gibbs_posterior(values, options.prior, options.hp, options.arity, g, options.weights);
}

IntegratedScores integrate_matrix(const Matrix& psi, const IntegrationOptions& options) {
  check_arity(options.arity);
  options.hp.validate();
  const auto k_count = static_cast<int>(psi.cols());
  if (k_count < 1) throw Error(ErrorKind::kShape, "score matrix has no conditions");
  if (!psi.allFinite()) throw Error(ErrorKind::kParameter, "score matrix has non-finite entries");
  IntegratedScores out;
  out.engine = resolve_engine(options, k_count);
  out.scores.resize(psi.rows(), psi.cols());
  parallel_for(static_cast<std::size_t>(psi.rows()), options.threads, [&](std::size_t row) {
    try {
      const std::vector<double> avg = bayes_average(edge_posterior(psi, row, options));
      for (int k = 0; k < k_count; ++k) out.scores(static_cast<Eigen::Index>(row), k) = avg[static_cast<std::size_t>(k)];
    } catch (const Error& e) {
      throw Error(e.kind(), std::string(e.what()) + " [edge row " + std::to_string(row) + "]");
    }
  });
  return out;
}

void write_posterior_dump(const std::filesystem::path& path, const std::vector<EdgePosterior>& posteriors,
                          std::size_t top) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& post : posteriors) {
    std::vector<const ConfigurationPosterior*> order;
    for (const auto& c : post.configurations) order.push_back(&c);
    std::stable_sort(order.begin(), order.end(),
                     [](const auto* a, const auto* b) { return a->probability > b->probability; });
    if (order.size() > top) order.resize(top);
    nlohmann::json entry;
    entry["edge"] = {post.edge.i + 1, post.edge.j + 1};
    entry["method"] = to_string(post.method);
    entry["top"] = nlohmann::json::array();
    for (const auto* c : order) {
      entry["top"].push_back({{"states", c->configuration.states},
                              {"probability", c->probability},
                              {"integrated", c->integrated}});
    }
    j.push_back(std::move(entry));
  }
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace fbia
