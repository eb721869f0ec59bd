#pragma once

#include "fbia/detection.hpp"
#include "fbia/ingest.hpp"
#include "fbia/integration.hpp"
#include "fbia/psi.hpp"
#include "fbia/screening.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace fbia {

struct FitConfig {
  PriorKind prior = PriorKind::kTemporal;
  int arity = 2;
  double alpha1 = 0.2;
  double alpha2 = 0.05;
  MixtureHyperparams hp;
  Engine engine = Engine::kAuto;
  TestMethod screen_method = TestMethod::kEmpiricalBayes;
  TestMethod detect_method = TestMethod::kEmpiricalBayes;
  double xi = 1.0;
  bool adjust_covariates = false;
  AdjustedScoreForm adjusted_form = AdjustedScoreForm::kSigned;
  std::vector<double> weights;
  int gibbs_sweeps = 5000;
  int gibbs_burn_in = 500;
  std::uint64_t seed = 1;
  unsigned threads = 0;

  void validate() const;
  IntegrationOptions integration_options() const;
  // Everything that influences the scores before the final test.
  std::string upstream_key() const;
};

nlohmann::json to_json(const FitConfig& config);
FitConfig fit_config_from_json(const nlohmann::json& j, FitConfig base = {});

struct ScreeningResult {
  std::vector<CorrelationSummary> correlations;
  std::vector<ScreenedGraph> screened;
  std::vector<ReducedNeighborhoods> neighborhoods;
};

ScreeningResult screen_dataset(const ConditionedDataset& standardized, const FitConfig& config);

PsiScoreMatrix psi_scores_for(const ConditionedDataset& ds, const FitConfig& config,
                              ScreeningResult* screening_out = nullptr);

struct FitResult {
  ScreeningResult screening;
  PsiScoreMatrix psi;
  IntegratedScores integrated;
  GraphEstimate graph;
  std::vector<std::string> notes;
};

/// screening -> psi-scores -> Bayesian integration -> pooled edge detection.
FitResult fbia_fit(const ConditionedDataset& ds, const FitConfig& config);

/// Per-condition psi-learning without integration (the separated baseline).
FitResult separated_fit(const ConditionedDataset& ds, const FitConfig& config);

struct TwoStepResult {
  PsiScoreMatrix first_psi;
  PsiScoreMatrix second_psi;
  Matrix stage1_first;   // N x K, integrated over time within group 1
  Matrix stage1_second;
  Matrix combined;       // N x 2K: group 1 times, then group 2 times
  std::vector<std::string> labels;
  GraphEstimate graph;
};

/// Integrates over time within each group, then across the two groups at
/// each time point (a K = 2 temporal integration), then tests all 2K columns
/// together.
TwoStepResult two_step_integration(const ConditionedDataset& first, const ConditionedDataset& second,
                                   const FitConfig& config);

struct EdgeChanges {
  std::vector<NodePair> appeared;
  std::vector<NodePair> persisted;
  std::vector<NodePair> disappeared;  // in the previous condition only
};

/// For k >= 1, edges of condition k classified against condition k-1.
std::vector<EdgeChanges> edge_changes(const GraphEstimate& graph);

struct HubEntry {
  std::string name;
  int degree = 0;
};

// Descending degree, ties by name.
std::vector<HubEntry> hub_ranking(const std::vector<DetectedEdge>& edges, const std::vector<std::string>& names);

// Edge list per condition as graph_<label>.csv:
// i,j,name_i,name_j,score,lfdr,status
void write_graph(const std::filesystem::path& dir, const GraphEstimate& graph,
                 const std::vector<std::string>& labels, const std::vector<std::string>& names);
nlohmann::json graph_summary(const GraphEstimate& graph, const std::vector<std::string>& labels,
                             const std::vector<std::string>& names);

/// Writes every artifact of a fit into dir (psi/integrated CSV + caches,
/// graphs, summary JSON, posterior dump for detected edges).
void write_fit(const std::filesystem::path& dir, const ConditionedDataset& ds, const FitResult& result,
               const FitConfig& config);

}  // namespace fbia
