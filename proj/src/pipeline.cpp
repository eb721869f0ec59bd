#include "fbia/pipeline.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace fbia {

namespace fs = std::filesystem;

void FitConfig::validate() const {
  if (arity != 2 && arity != 3) throw Error(ErrorKind::kParameter, "arity must be 2 or 3");
  if (!(alpha1 > 0.0 && alpha1 < 1.0)) throw Error(ErrorKind::kParameter, "alpha1 must lie in (0,1)");
  if (!(alpha2 > 0.0 && alpha2 < 1.0)) throw Error(ErrorKind::kParameter, "alpha2 must lie in (0,1)");
  if (!(xi > 0.0)) throw Error(ErrorKind::kParameter, "xi must be positive");
  if (gibbs_sweeps < 1 || gibbs_burn_in < 0) throw Error(ErrorKind::kParameter, "invalid Gibbs sweep counts");
  hp.validate();
}

IntegrationOptions FitConfig::integration_options() const {
  IntegrationOptions o;
  o.prior = prior;
  o.arity = arity;
  o.hp = hp;
  o.engine = engine;
  o.weights = weights;
  o.gibbs.sweeps = gibbs_sweeps;
  o.gibbs.burn_in = gibbs_burn_in;
  o.gibbs.seed = seed;
  o.threads = threads;
  return o;
}

nlohmann::json to_json(const FitConfig& c) {
  return {
      {"prior", to_string(c.prior)},
      {"arity", c.arity},
      {"alpha1", c.alpha1},
      {"alpha2", c.alpha2},
      {"a1", c.hp.a1},
      {"b1", c.hp.b1},
      {"a2", c.hp.a2},
      {"b2", c.hp.b2},
      {"dirichlet", {c.hp.alpha0, c.hp.alpha1, c.hp.alpha2}},
      {"pin_null_mean", c.hp.pin_null_mean},
      {"literal_group_constant", c.hp.literal_group_constant},
      {"engine", to_string(c.engine)},
      {"screen_method", to_string(c.screen_method)},
      {"detect_method", to_string(c.detect_method)},
      {"xi", c.xi},
      {"adjust_covariates", c.adjust_covariates},
      {"adjusted_form", c.adjusted_form == AdjustedScoreForm::kSigned ? "signed" : "unsigned"},
      {"weights", c.weights},
      {"gibbs_sweeps", c.gibbs_sweeps},
      {"gibbs_burn_in", c.gibbs_burn_in},
      {"seed", c.seed},
  };
}

FitConfig fit_config_from_json(const nlohmann::json& j, FitConfig c) {
  if (j.contains("prior")) c.prior = parse_prior(j["prior"].get<std::string>());
  c.arity = j.value("arity", c.arity);
  c.alpha1 = j.value("alpha1", c.alpha1);
  c.alpha2 = j.value("alpha2", c.alpha2);
  c.hp.a1 = j.value("a1", c.hp.a1);
  c.hp.b1 = j.value("b1", c.hp.b1);
  c.hp.a2 = j.value("a2", c.hp.a2);
  c.hp.b2 = j.value("b2", c.hp.b2);
  if (j.contains("dirichlet")) {
    const auto d = j["dirichlet"].get<std::vector<double>>();
    if (d.size() != 3) throw Error(ErrorKind::kParameter, "dirichlet needs three values");
    c.hp.alpha0 = d[0];
    c.hp.alpha1 = d[1];
    c.hp.alpha2 = d[2];
  }
  c.hp.pin_null_mean = j.value("pin_null_mean", c.hp.pin_null_mean);
  c.hp.literal_group_constant = j.value("literal_group_constant", c.hp.literal_group_constant);
  if (j.contains("engine")) c.engine = parse_engine(j["engine"].get<std::string>());
  if (j.contains("screen_method")) c.screen_method = parse_test_method(j["screen_method"].get<std::string>());
  if (j.contains("detect_method")) c.detect_method = parse_test_method(j["detect_method"].get<std::string>());
  c.xi = j.value("xi", c.xi);
  c.adjust_covariates = j.value("adjust_covariates", c.adjust_covariates);
  if (j.contains("adjusted_form")) {
    c.adjusted_form = j["adjusted_form"].get<std::string>() == "unsigned" ? AdjustedScoreForm::kUnsigned
                                                                         : AdjustedScoreForm::kSigned;
  }
  c.weights = j.value("weights", c.weights);
  c.gibbs_sweeps = j.value("gibbs_sweeps", c.gibbs_sweeps);
  c.gibbs_burn_in = j.value("gibbs_burn_in", c.gibbs_burn_in);
  c.seed = j.value("seed", c.seed);
  return c;
}

std::string FitConfig::upstream_key() const {
  nlohmann::json j = to_json(*this);
  j.erase("alpha2");
  j.erase("detect_method");
  return j.dump();
}

ScreeningResult screen_dataset(const ConditionedDataset& standardized, const FitConfig& config) {
  ScreeningResult out;
  for (int k = 0; k < standardized.conditions_count(); ++k) {
    const auto& block = standardized.conditions[static_cast<std::size_t>(k)];
    CorrelationSummary cs = config.adjust_covariates ? covariate_adjusted_correlations(block, k)
                                                     : empirical_correlations(block, k);
    ScreenedGraph screened = screen_edges(cs, config.alpha1, config.screen_method);
    out.neighborhoods.push_back(reduce_neighborhoods(cs, screened, config.xi));
    out.screened.push_back(std::move(screened));
    out.correlations.push_back(std::move(cs));
  }
  return out;
}

PsiScoreMatrix psi_scores_for(const ConditionedDataset& ds, const FitConfig& config, ScreeningResult* screening_out) {
  config.validate();
  validate(ds);
  const ConditionedDataset standardized = standardize(ds);
  ScreeningResult screening = screen_dataset(standardized, config);
  PsiOptions opts;
  opts.adjust_covariates = config.adjust_covariates;
  opts.adjusted_form = config.adjusted_form;
  opts.threads = config.threads;
  PsiScoreMatrix psi = compute_psi_matrix(standardized, screening.correlations, screening.neighborhoods, opts);
  if (screening_out) *screening_out = std::move(screening);
  return psi;
}

namespace {

void note_fallback(FitResult& r) {
  if (r.graph.test.fell_back) r.notes.push_back("detection: " + r.graph.test.warning);
}

}  // namespace

FitResult fbia_fit(const ConditionedDataset& ds, const FitConfig& config) {
  FitResult r;
  try {
    r.psi = psi_scores_for(ds, config, &r.screening);
  } catch (const Error& e) {
    throw e.tagged("psi");
  }
  try {
    r.integrated = integrate_matrix(r.psi.scores, config.integration_options());
  } catch (const Error& e) {
    throw e.tagged("integration");
  }
  try {
    r.graph = detect_edges(r.integrated.scores, r.psi.index, config.alpha2, config.detect_method);
  } catch (const Error& e) {
    throw e.tagged("detection");
  }
  note_fallback(r);
  return r;
}

FitResult separated_fit(const ConditionedDataset& ds, const FitConfig& config) {
  FitResult r;
  r.psi = psi_scores_for(ds, config, &r.screening);
  r.integrated.scores = r.psi.scores;
  r.integrated.engine = Engine::kExact;
  r.graph = detect_edges_per_condition(r.psi.scores, r.psi.index, config.alpha2, config.detect_method);
  note_fallback(r);
  return r;
}

TwoStepResult two_step_integration(const ConditionedDataset& first, const ConditionedDataset& second,
                                   const FitConfig& config) {
  if (first.conditions_count() != second.conditions_count()) {
    throw Error(ErrorKind::kShape, "groups have different numbers of time points (" +
                                       std::to_string(first.conditions_count()) + " vs " +
                                       std::to_string(second.conditions_count()) + ")");
  }
  if (first.variable_names != second.variable_names) {
    throw Error(ErrorKind::kShape, "groups have different variables");
  }
  TwoStepResult r;
  r.first_psi = psi_scores_for(first, config);
  r.second_psi = psi_scores_for(second, config);

  IntegrationOptions stage1 = config.integration_options();
  stage1.prior = PriorKind::kTemporal;
  r.stage1_first = integrate_matrix(r.first_psi.scores, stage1).scores;
  stage1.gibbs.seed = mix_seed(config.seed, 1);
  r.stage1_second = integrate_matrix(r.second_psi.scores, stage1).scores;

  const auto times = r.stage1_first.cols();
  const auto rows = r.stage1_first.rows();
  r.combined.resize(rows, 2 * times);
  IntegrationOptions stage2 = config.integration_options();
  stage2.prior = PriorKind::kTemporal;
  stage2.weights.clear();
  for (Eigen::Index t = 0; t < times; ++t) {
    Matrix pair(rows, 2);
    pair.col(0) = r.stage1_first.col(t);
    pair.col(1) = r.stage1_second.col(t);
    stage2.gibbs.seed = mix_seed(config.seed, 100 + static_cast<std::uint64_t>(t));
    const Matrix merged = integrate_matrix(pair, stage2).scores;
    r.combined.col(t) = merged.col(0);
    r.combined.col(times + t) = merged.col(1);
  }
  for (const auto& c : first.conditions) r.labels.push_back("g1_" + c.label);
  for (const auto& c : second.conditions) r.labels.push_back("g2_" + c.label);
  r.graph = detect_edges(r.combined, r.first_psi.index, config.alpha2, config.detect_method);
  return r;
}

std::vector<EdgeChanges> edge_changes(const GraphEstimate& graph) {
  std::vector<EdgeChanges> out;
  const auto sets = graph.edge_sets();
  for (std::size_t k = 1; k < sets.size(); ++k) {
    const std::set<NodePair> previous(sets[k - 1].begin(), sets[k - 1].end());
    const std::set<NodePair> current(sets[k].begin(), sets[k].end());
    EdgeChanges c;
    for (const auto& e : current) (previous.count(e) ? c.persisted : c.appeared).push_back(e);
    for (const auto& e : previous) {
      if (!current.count(e)) c.disappeared.push_back(e);
    }
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<HubEntry> hub_ranking(const std::vector<DetectedEdge>& edges, const std::vector<std::string>& names) {
  std::vector<int> degree(names.size(), 0);
  for (const auto& e : edges) {
    ++degree[static_cast<std::size_t>(e.pair.i)];
    ++degree[static_cast<std::size_t>(e.pair.j)];
  }
  std::vector<HubEntry> hubs;
  for (std::size_t v = 0; v < names.size(); ++v) hubs.push_back({names[v], degree[v]});
  std::sort(hubs.begin(), hubs.end(), [](const HubEntry& a, const HubEntry& b) {
    if (a.degree != b.degree) return a.degree > b.degree;
    return a.name < b.name;
  });
  return hubs;
}

void write_graph(const fs::path& dir, const GraphEstimate& graph, const std::vector<std::string>& labels,
                 const std::vector<std::string>& names) {
  fs::create_directories(dir);
  char buf[64];
  for (std::size_t k = 0; k < graph.conditions.size(); ++k) {
    const fs::path path = dir / ("graph_" + labels[k] + ".csv");
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
    out << "i,j,name_i,name_j,score,lfdr,status\n";
    for (const auto& e : graph.conditions[k]) {
      out << e.pair.i + 1 << ',' << e.pair.j + 1 << ',' << names[static_cast<std::size_t>(e.pair.i)] << ','
          << names[static_cast<std::size_t>(e.pair.j)];
      std::snprintf(buf, sizeof buf, ",%.17g,%.17g,", e.score, e.uncertainty);
      out << buf << (e.sign >= 0 ? "positive" : "negative") << '\n';
    }
  }
}

nlohmann::json graph_summary(const GraphEstimate& graph, const std::vector<std::string>& labels,
                             const std::vector<std::string>& names) {
  nlohmann::json j;
  j["alpha"] = graph.alpha;
  j["method"] = to_string(graph.method);
  j["fell_back"] = graph.test.fell_back;
  if (graph.test.fit) {
    const auto& f = *graph.test.fit;
    j["null_fit"] = {{"pi0", f.pi0}, {"mu0", f.mu0}, {"sigma0", f.sigma0}, {"delta", f.delta},
                     {"sigma1", f.sigma1}, {"iterations", f.iterations}, {"converged", f.converged},
                     {"null_only", f.null_only}};
  }
  j["conditions"] = nlohmann::json::array();
  for (std::size_t k = 0; k < graph.conditions.size(); ++k) {
    const auto hubs = hub_ranking(graph.conditions[k], names);
    nlohmann::json c;
    c["label"] = labels[k];
    c["edges"] = graph.conditions[k].size();
    nlohmann::json degrees = nlohmann::json::object();
    for (const auto& h : hubs) degrees[h.name] = h.degree;
    c["degrees"] = degrees;
    nlohmann::json ranking = nlohmann::json::array();
    for (std::size_t h = 0; h < std::min<std::size_t>(hubs.size(), 20); ++h) {
      ranking.push_back({{"name", hubs[h].name}, {"degree", hubs[h].degree}});
    }
    c["hubs"] = ranking;
    j["conditions"].push_back(std::move(c));
  }
  const auto changes = edge_changes(graph);
  j["changes"] = nlohmann::json::array();
  for (std::size_t k = 0; k < changes.size(); ++k) {
    j["changes"].push_back({{"from", labels[k]},
                            {"to", labels[k + 1]},
                            {"appeared", changes[k].appeared.size()},
                            {"persisted", changes[k].persisted.size()},
                            {"disappeared", changes[k].disappeared.size()}});
  }
  return j;
}

void write_fit(const fs::path& dir, const ConditionedDataset& ds, const FitResult& result, const FitConfig& config) {
  fs::create_directories(dir);
  std::vector<std::string> labels;
  for (const auto& c : ds.conditions) labels.push_back(c.label);
  write_score_csv(dir / "psi_scores.csv", result.psi.index, result.psi.scores, labels, &result.psi.separator_sizes);
  write_psi_cache(dir / "psi_cache.bin", result.psi);
  write_score_csv(dir / "integrated_scores.csv", result.psi.index, result.integrated.scores, labels);
  PsiScoreMatrix integrated = result.psi;
  integrated.scores = result.integrated.scores;
  write_psi_cache(dir / "integrated_cache.bin", integrated);
  write_graph(dir, result.graph, labels, ds.variable_names);
  {
    std::ofstream out(dir / "graph_summary.json");
    out << graph_summary(result.graph, labels, ds.variable_names).dump(2) << '\n';
  }
  for (std::size_t k = 0; k < result.screening.screened.size(); ++k) {
    write_screened_edges(dir / ("screened_" + labels[k] + ".csv"), result.screening.correlations[k],
                         result.screening.screened[k]);
  }
  // Posterior diagnostics for edges detected anywhere.
  std::set<std::size_t> rows;
  for (const auto& cond : result.graph.conditions) {
    for (const auto& e : cond) rows.insert(result.psi.index.index(e.pair.i, e.pair.j));
  }
  std::vector<EdgePosterior> posteriors;
  const IntegrationOptions options = config.integration_options();
  constexpr std::size_t kMaxDumped = 1000;
  for (std::size_t row : rows) {
    if (posteriors.size() >= kMaxDumped) break;
    EdgePosterior post = edge_posterior(result.psi.scores, row, options);
    post.edge = result.psi.index.pair(row);
    posteriors.push_back(std::move(post));
  }
  write_posterior_dump(dir / "posterior_top.json", posteriors);
}

}  // namespace fbia
