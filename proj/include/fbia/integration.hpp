#pragma once

#include "fbia/common.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace fbia {

enum class PriorKind { kTemporal, kSpatial };
enum class Engine { kAuto, kExact, kGibbs };

const char* to_string(PriorKind prior);
const char* to_string(Engine engine);
PriorKind parse_prior(const std::string& text);
Engine parse_engine(const std::string& text);

struct MixtureHyperparams {
  // Beta(a1, b1) on the status-change probability q.
  double a1 = 1.0;
  double b1 = 10.0;
  // IG(a2, b2) on each component variance.
  double a2 = 1.0;
  double b2 = 1.0;
  // Dirichlet over change magnitudes {0, 1, 2} (three-component model).
  double alpha0 = 10.0;
  double alpha1 = 1.0;
  double alpha2 = 1.0;
  // Fix the null component mean at zero instead of integrating it out.
  bool pin_null_mean = false;
  // Use (2 pi)^{-n_g/2} without the IG normalizer per status group, as the
  // closed form is usually printed, instead of the exact marginal.
  bool literal_group_constant = false;

  void validate() const;
};

/// Edge status per condition: {0, 1} for arity 2, {-1, 0, 1} for arity 3.
struct EdgeConfiguration {
  std::vector<int> states;

  friend bool operator==(const EdgeConfiguration&, const EdgeConfiguration&) = default;
};

// Arity-ary digit encoding, condition 0 is the least significant digit.
std::uint64_t encode(const EdgeConfiguration& e, int arity);
EdgeConfiguration decode(std::uint64_t code, int k_count, int arity);
std::uint64_t configuration_count(int k_count, int arity);  // 0 on overflow

/// Modal status; ties prefer 0, then 1, then -1.
int status_mode(const EdgeConfiguration& e);

/// log of the prior factor after integrating q (Beta or Dirichlet).
double log_prior_factor(const EdgeConfiguration& e, PriorKind prior, const MixtureHyperparams& hp, int arity);

/// log marginal likelihood of one status group's scores after integrating
/// its mean (flat) and variance (IG(a2, b2)). `null_group` selects the
/// pinned-mean form when hp.pin_null_mean is set.
double log_group_marginal(int count, double sum, double sum_squares, const MixtureHyperparams& hp, bool null_group);

/// Unnormalized log posterior of configuration e for one edge's K scores.
double log_marginal_config(std::span<const double> psi, const EdgeConfiguration& e, PriorKind prior,
                           const MixtureHyperparams& hp, int arity);

/// Stouffer combination within each status group.
std::vector<double> stouffer_integrate(std::span<const double> psi, const EdgeConfiguration& e,
                                       std::span<const double> weights = {});

struct ConfigurationPosterior {
  EdgeConfiguration configuration;
  double probability = 0.0;
  std::vector<double> integrated;
};

struct EdgePosterior {
  NodePair edge;
  std::vector<ConfigurationPosterior> configurations;  // exact: all, ordered by code; gibbs: visited
  Engine method = Engine::kExact;
};

inline constexpr std::uint64_t kEnumerationCap = std::uint64_t{1} << 14;

EdgePosterior enumerate_posterior(std::span<const double> psi, PriorKind prior, const MixtureHyperparams& hp,
                                  int arity, std::span<const double> weights = {},
                                  std::uint64_t cap = kEnumerationCap);

struct GibbsOptions {
  int sweeps = 5000;
  int burn_in = 500;
  std::uint64_t seed = 1;
};

/// Single-site Gibbs over the K statuses; probabilities are post-burn-in
/// configuration frequencies (one draw per sweep).
EdgePosterior gibbs_posterior(std::span<const double> psi, PriorKind prior, const MixtureHyperparams& hp, int arity,
                              const GibbsOptions& options, std::span<const double> weights = {});

std::vector<double> bayes_average(const EdgePosterior& posterior);

struct IntegrationOptions {
  PriorKind prior = PriorKind::kTemporal;
  int arity = 2;
  MixtureHyperparams hp;
  Engine engine = Engine::kAuto;
  std::vector<double> weights;  // empty: all ones
  GibbsOptions gibbs;           // seed is the master seed; rows get mix_seed(seed, row)
  std::uint64_t cap = kEnumerationCap;
  unsigned threads = 0;
};

Engine resolve_engine(const IntegrationOptions& options, int k_count);

struct IntegratedScores {
  Matrix scores;  // N x K
  Engine engine = Engine::kExact;
};

IntegratedScores integrate_matrix(const Matrix& psi, const IntegrationOptions& options);

/// Posterior for row `row` of a score matrix under the same engine choice and
/// per-row seeding that integrate_matrix uses.
EdgePosterior edge_posterior(const Matrix& psi, std::size_t row, const IntegrationOptions& options);

// JSON array of {edge, method, top: [{states, probability, integrated}]}.
void write_posterior_dump(const std::filesystem::path& path, const std::vector<EdgePosterior>& posteriors,
                          std::size_t top = 10);

}  // namespace fbia
