#include "fbia/evaluation.hpp"
#include "fbia/ingest.hpp"
#include "fbia/pipeline.hpp"
#include "fbia/simgen.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw fbia::Error(fbia::ErrorKind::kIo, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw fbia::Error(fbia::ErrorKind::kIo, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

json versions() {
  return {{"fbia", kVersion},
          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                        std::to_string(EIGEN_MINOR_VERSION)},
          {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
          {"compiler", __VERSION__}};
}

std::string rep_name(int rep) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "rep_%03d", rep);
  return buf;
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
  std::string kind = "ar2";
  int p = 50;
  int n = 100;
  int k = 4;
  std::string lineage = "temporal";
  double frac = 0.05;
  int reps = 1;
  std::uint64_t seed = 1;
  fs::path out;
};

int run_simulate(const SimulateArgs& a) {
  const auto kind = fbia::parse_structure(a.kind);
  const auto lineage = fbia::parse_lineage(a.lineage);
  fs::create_directories(a.out);
  for (int rep = 1; rep <= a.reps; ++rep) {
    const fs::path dir = a.out / rep_name(rep);
    const auto family_seed = fbia::mix_seed(a.seed, static_cast<std::uint64_t>(rep));
    const auto family = fbia::make_family(kind, a.p, a.k, lineage, a.frac, family_seed);
    const auto ds = fbia::sample_family(family, a.n, fbia::mix_seed(family_seed, 1));
    const auto manifest = fbia::write_dataset(dir, ds);
    fbia::write_manifest(dir / "manifest.json", manifest);
    fbia::write_truth(dir / "truth", family);
  }
  write_json(a.out / "simulate.json", {{"kind", a.kind},
                                       {"p", a.p},
                                       {"n", a.n},
                                       {"k", a.k},
                                       {"lineage", a.lineage},
                                       {"frac", a.frac},
                                       {"reps", a.reps},
                                       {"seed", a.seed},
                                       {"version", kVersion}});
  std::cout << "wrote " << a.reps << " replicate(s) to " << a.out.string() << '\n';
  return 0;
}

// ---------------------------------------------------------------- fit

struct FitArgs {
  std::vector<std::string> manifests;
  std::vector<std::string> files;
  std::string config_file;
  std::string prior;
  int arity = 2;
  double alpha1 = 0.2, alpha2 = 0.05;
  double a1 = 1, b1 = 10, a2 = 1, b2 = 1;
  std::string engine;
  std::string screen_method, detect_method;
  double xi = 1.0;
  bool adjust_covariates = false;
  bool two_step = false;
  int sweeps = 5000, burn_in = 500;
  std::uint64_t seed = 1;
  unsigned threads = 0;
  fs::path out;
};

struct FitOptions {
  CLI::Option* prior = nullptr;
  CLI::Option* arity = nullptr;
  CLI::Option* alpha1 = nullptr;
  CLI::Option* alpha2 = nullptr;
  CLI::Option* a1 = nullptr;
  CLI::Option* b1 = nullptr;
  CLI::Option* a2 = nullptr;
  CLI::Option* b2 = nullptr;
  CLI::Option* engine = nullptr;
  CLI::Option* screen = nullptr;
  CLI::Option* detect = nullptr;
  CLI::Option* xi = nullptr;
  CLI::Option* adjust = nullptr;
  CLI::Option* sweeps = nullptr;
  CLI::Option* burn_in = nullptr;
  CLI::Option* seed = nullptr;
};

fbia::FitConfig resolve_config(const FitArgs& a, const FitOptions& o) {
  fbia::FitConfig c;
  if (!a.config_file.empty()) {
    json j;
    try {
      j = json::parse(slurp(a.config_file));
    } catch (const json::exception& e) {
      throw fbia::Error(fbia::ErrorKind::kParse, "config " + a.config_file + ": " + e.what());
    }
    c = fbia::fit_config_from_json(j, c);
    if (j.contains("threads")) c.threads = j["threads"].get<unsigned>();
  }
  try {
    if (o.prior->count()) c.prior = fbia::parse_prior(a.prior);
    if (o.engine->count()) c.engine = fbia::parse_engine(a.engine);
    if (o.screen->count()) c.screen_method = fbia::parse_test_method(a.screen_method);
    if (o.detect->count()) c.detect_method = fbia::parse_test_method(a.detect_method);
  } catch (const fbia::Error& e) {
    throw UsageError(e.what());
  }
  if (o.arity->count()) c.arity = a.arity;
  if (o.alpha1->count()) c.alpha1 = a.alpha1;
  if (o.alpha2->count()) c.alpha2 = a.alpha2;
  if (o.a1->count()) c.hp.a1 = a.a1;
  if (o.b1->count()) c.hp.b1 = a.b1;
  if (o.a2->count()) c.hp.a2 = a.a2;
  if (o.b2->count()) c.hp.b2 = a.b2;
  if (o.xi->count()) c.xi = a.xi;
  if (o.adjust->count()) c.adjust_covariates = a.adjust_covariates;
  if (o.sweeps->count()) c.gibbs_sweeps = a.sweeps;
  if (o.burn_in->count()) c.gibbs_burn_in = a.burn_in;
  if (o.seed->count()) c.seed = a.seed;
  if (a.threads > 0) c.threads = a.threads;
  try {
    c.validate();
  } catch (const fbia::Error& e) {
    throw UsageError(e.what());
  }
  return c;
}

std::string data_key(const std::vector<fbia::ConditionSource>& sources) {
  std::string all;
  for (const auto& s : sources) {
    all += s.label + '\n' + slurp(s.data);
    if (s.covariates) all += slurp(*s.covariates);
  }
  return std::to_string(std::hash<std::string>{}(all));
}

fbia::Manifest manifest_from(const FitArgs& a, std::size_t which) {
  if (!a.manifests.empty()) return fbia::read_manifest(a.manifests[which]);
  fbia::Manifest m;
  for (const auto& f : a.files) m.sources.push_back({f, fs::path(f).stem().string(), std::nullopt});
  return m;
}

std::pair<fbia::Manifest, fbia::ConditionedDataset> load_input(const FitArgs& a, std::size_t which) {
  try {
    auto m = manifest_from(a, which);
    auto ds = fbia::load_dataset(m.sources, m.schema);
    return {std::move(m), std::move(ds)};
  } catch (const fbia::Error& e) {
    throw e.tagged("ingest");
  }
}

// Reuses psi/integrated caches from an earlier run in the same directory
// when nothing upstream of the final test changed.
bool load_cached(const fs::path& out, const std::string& upstream, const std::string& data, fbia::FitResult& r) {
  const fs::path run = out / "run.json";
  if (!fs::exists(run) || !fs::exists(out / "psi_cache.bin") || !fs::exists(out / "integrated_cache.bin")) return false;
  try {
    const json old = json::parse(slurp(run));
    if (old.value("upstream_key", "") != upstream || old.value("data_key", "") != data) return false;
    r.psi = fbia::read_psi_cache(out / "psi_cache.bin");
    r.integrated.scores = fbia::read_psi_cache(out / "integrated_cache.bin").scores;
  } catch (const std::exception&) {
    return false;
  }
  return r.integrated.scores.rows() == r.psi.scores.rows() && r.integrated.scores.cols() == r.psi.scores.cols();
}

int run_fit(const FitArgs& a, const FitOptions& o) {
  if (a.manifests.empty() && a.files.empty()) throw UsageError("fit needs --manifest or data files");
  if (!a.manifests.empty() && !a.files.empty()) throw UsageError("give either --manifest or data files, not both");
  if (a.two_step && a.manifests.size() != 2) throw UsageError("--two-step needs --manifest twice (one per group)");
  if (!a.two_step && a.manifests.size() > 1) throw UsageError("several manifests need --two-step");
  const fbia::FitConfig config = resolve_config(a, o);
  fs::create_directories(a.out);

  json run;
  run["command"] = "fit";
  run["config"] = fbia::to_json(config);
  run["threads"] = fbia::resolve_threads(config.threads);
  run["seed"] = config.seed;
  run["versions"] = versions();
  run["upstream_key"] = config.upstream_key();
  run["inputs"] = a.manifests.empty() ? json(a.files) : json(a.manifests);

  if (a.two_step) {
    const auto first = load_input(a, 0).second;
    const auto second = load_input(a, 1).second;
    const auto r = fbia::two_step_integration(first, second, config);
    Eigen::MatrixXd psi(r.first_psi.scores.rows(), r.labels.size());
    psi << r.first_psi.scores, r.second_psi.scores;
    fbia::write_score_csv(a.out / "psi_scores.csv", r.first_psi.index, psi, r.labels);
    fbia::write_score_csv(a.out / "integrated_scores.csv", r.first_psi.index, r.combined, r.labels);
    fbia::PsiScoreMatrix cache = r.first_psi;
    cache.scores = psi;
    fbia::write_psi_cache(a.out / "psi_cache.bin", cache);
    cache.scores = r.combined;
    fbia::write_psi_cache(a.out / "integrated_cache.bin", cache);
    fbia::write_graph(a.out, r.graph, r.labels, first.variable_names);
    write_json(a.out / "graph_summary.json", fbia::graph_summary(r.graph, r.labels, first.variable_names));
    run["two_step"] = true;
    run["conditions"] = r.labels;
    write_json(a.out / "run.json", run);
    std::cout << "two-step fit written to " << a.out.string() << '\n';
    return 0;
  }

  const auto [manifest, ds] = load_input(a, 0);
  const std::string dkey = data_key(manifest.sources);
  fbia::FitResult result;
  const bool reused = load_cached(a.out, config.upstream_key(), dkey, result);
  if (reused) {
    if (result.psi.scores.cols() != ds.conditions_count()) throw fbia::Error(fbia::ErrorKind::kShape, "stale cache");
    result.integrated.engine = fbia::resolve_engine(config.integration_options(), ds.conditions_count());
    result.graph =
        fbia::detect_edges(result.integrated.scores, result.psi.index, config.alpha2, config.detect_method);
    if (result.graph.test.fell_back) result.notes.push_back("detection: " + result.graph.test.warning);
  } else {
    result = fbia::fbia_fit(ds, config);
  }
  fbia::write_fit(a.out, ds, result, config);

  std::vector<std::string> labels;
  for (const auto& c : ds.conditions) labels.push_back(c.label);
  run["conditions"] = labels;
  run["data_key"] = dkey;
  run["reused_cache"] = reused;
  run["engine"] = fbia::to_string(result.integrated.engine);
  run["notes"] = result.notes;
  json screened = json::array();
  for (const auto& s : result.screening.screened) screened.push_back(s.pairs.size());
  if (!reused) run["screened_edges"] = screened;
  write_json(a.out / "run.json", run);
  for (const auto& note : result.notes) std::cerr << "warning: " << note << '\n';
  std::size_t edges = 0;
  for (const auto& c : result.graph.conditions) edges += c.size();
  std::cout << "engine " << fbia::to_string(result.integrated.engine) << (reused ? " (cached scores)" : "") << ", "
            << edges << " edges over " << labels.size() << " conditions, written to " << a.out.string() << '\n';
  return 0;
}

// ---------------------------------------------------------------- evaluate

struct EvaluateArgs {
  fs::path fit;
  fs::path truth;
  std::string grid = "auto";
  std::string alphas;
  std::string format = "csv";
  fs::path out;
};

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError("not a number list: " + text);
    }
  }
  if (out.empty()) throw UsageError("empty number list");
  return out;
}

bool is_fit_dir(const fs::path& dir) { return fs::exists(dir / "integrated_cache.bin"); }

fs::path truth_for(const fs::path& root, const std::string& rep) {
  for (const fs::path& c : {root / rep / "truth", root / rep, root / "truth", root}) {
    if (fs::exists(c / "truth.json")) return c;
  }
  throw fbia::Error(fbia::ErrorKind::kIo, "no truth found for " + (rep.empty() ? root.string() : rep) + " under " +
                                              root.string());
}

struct RepResult {
  std::string name;
  fbia::PrCurve fbia_curve;
  fbia::PrCurve separated_curve;
  std::vector<std::pair<std::string, fbia::PowerLawFit>> powerlaw;
  std::vector<std::string> powerlaw_missing;
};

RepResult evaluate_one(const fs::path& fit_dir, const fs::path& truth_dir, const std::string& name,
                       const EvaluateArgs& a) {
  const auto truth = fbia::read_truth(truth_dir);
  const auto psi = fbia::read_psi_cache(fit_dir / "psi_cache.bin");
  const auto integrated = fbia::read_psi_cache(fit_dir / "integrated_cache.bin");
  const int p = psi.index.nodes();
  if (truth.omegas.empty() || truth.omegas.front().rows() != p ||
      static_cast<Eigen::Index>(truth.omegas.size()) != integrated.scores.cols()) {
    throw fbia::Error(fbia::ErrorKind::kShape, "truth in " + truth_dir.string() + " does not match the fit");
  }
  const auto indicator = fbia::truth_indicator(truth.truth_edges, p);
  RepResult r;
  r.name = name;
  if (!a.alphas.empty()) {
    auto method = fbia::TestMethod::kEmpiricalBayes;
    if (fs::exists(fit_dir / "run.json")) {
      const json run = json::parse(slurp(fit_dir / "run.json"));
      method = fbia::parse_test_method(run["config"].value("detect_method", "eb"));
    }
    const auto levels = parse_list(a.alphas);
    r.fbia_curve = fbia::pr_curve_alpha_sweep(integrated.scores, indicator, levels, method);
    r.separated_curve = fbia::pr_curve_alpha_sweep(psi.scores, indicator, levels, method);
  } else {
    const std::vector<double> grid = a.grid == "auto" ? std::vector<double>{} : parse_list(a.grid);
    r.fbia_curve = fbia::pr_curve(integrated.scores, indicator, grid);
    r.separated_curve = fbia::pr_curve(psi.scores, indicator, grid);
  }
  if (fs::exists(fit_dir / "graph_summary.json")) {
    const json summary = json::parse(slurp(fit_dir / "graph_summary.json"));
    for (const auto& c : summary["conditions"]) {
      std::vector<int> degrees;
      for (const auto& [node, d] : c["degrees"].items()) degrees.push_back(d.get<int>());
      const std::string label = c["label"].get<std::string>();
      try {
        r.powerlaw.push_back({label, fbia::powerlaw_fit(degrees)});
      } catch (const fbia::Error&) {
        r.powerlaw_missing.push_back(label);
      }
    }
  }
  return r;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

int run_evaluate(const EvaluateArgs& a) {
  if (!fs::exists(a.fit)) throw fbia::Error(fbia::ErrorKind::kIo, "fit directory " + a.fit.string() + " not found");
  if (!fs::exists(a.truth)) throw fbia::Error(fbia::ErrorKind::kIo, "truth " + a.truth.string() + " not found");
  if (a.format != "csv" && a.format != "json") throw UsageError("--format must be csv or json");
  if (a.grid != "auto" && !a.alphas.empty()) throw UsageError("--grid and --alpha-sweep are exclusive");

  std::vector<std::pair<std::string, fs::path>> fits;
  if (is_fit_dir(a.fit)) {
    fits.push_back({"", a.fit});
  } else {
    for (const auto& entry : fs::directory_iterator(a.fit)) {
      if (entry.is_directory() && is_fit_dir(entry.path())) fits.push_back({entry.path().filename().string(), entry.path()});
    }
    std::sort(fits.begin(), fits.end());
  }
  if (fits.empty()) throw fbia::Error(fbia::ErrorKind::kIo, "no fit outputs under " + a.fit.string());

  const fs::path out = a.out.empty() ? a.fit / "evaluation" : a.out;
  fs::create_directories(out);
  std::vector<RepResult> results;
  for (const auto& [name, dir] : fits) {
    results.push_back(evaluate_one(dir, truth_for(a.truth, name), name, a));
  }

  std::vector<double> fbia_auprc, sep_auprc;
  std::vector<std::pair<std::string, fbia::PrCurve>> plotted;
  for (const auto& r : results) {
    const std::string tag = r.name.empty() ? "fit" : r.name;
    fbia::write_pr_csv(out / ("pr_" + tag + ".csv"), r.fbia_curve);
    fbia::write_pr_csv(out / ("pr_" + tag + "_separated.csv"), r.separated_curve);
    fbia_auprc.push_back(r.fbia_curve.auprc);
    sep_auprc.push_back(r.separated_curve.auprc);
  }
  plotted.push_back({"FBIA " + (results.front().name.empty() ? "" : results.front().name), results.front().fbia_curve});
  plotted.push_back({"separated", results.front().separated_curve});
  fbia::write_pr_svg(out / "pr.svg", plotted);

  const auto fs_sum = fbia::summarize(fbia_auprc);
  const auto sep_sum = fbia::summarize(sep_auprc);
  json summary;
  summary["replicates"] = json::array();
  for (const auto& r : results) {
    summary["replicates"].push_back({{"replicate", r.name.empty() ? "fit" : r.name},
                                     {"auprc_fbia", r.fbia_curve.auprc},
                                     {"auprc_separated", r.separated_curve.auprc},
                                     {"points", r.fbia_curve.points.size()},
                                     {"degenerate", r.fbia_curve.degenerate}});
  }
  summary["fbia"] = {{"mean", fs_sum.mean}, {"sd", fs_sum.sd}, {"se", fs_sum.se}, {"n", fs_sum.replicates}};
  summary["separated"] = {{"mean", sep_sum.mean}, {"sd", sep_sum.sd}, {"se", sep_sum.se}, {"n", sep_sum.replicates}};
  json power = json::array();
  for (const auto& r : results) {
    for (const auto& [label, f] : r.powerlaw) {
      power.push_back({{"replicate", r.name.empty() ? "fit" : r.name},
                       {"condition", label},
                       {"exponent", f.exponent},
                       {"r_squared", f.r_squared},
                       {"support", f.support}});
    }
    for (const auto& label : r.powerlaw_missing) {
      power.push_back({{"replicate", r.name.empty() ? "fit" : r.name}, {"condition", label}, {"insufficient", true}});
    }
  }

  if (a.format == "json") {
    write_json(out / "auprc_summary.json", summary);
    write_json(out / "powerlaw.json", power);
  } else {
    std::ofstream s(out / "auprc_summary.csv");
    s << "replicate,auprc_fbia,auprc_separated,points,degenerate\n";
    for (const auto& row : summary["replicates"]) {
      s << row["replicate"].get<std::string>() << ',' << fmt(row["auprc_fbia"]) << ',' << fmt(row["auprc_separated"])
        << ',' << row["points"].get<std::size_t>() << ',' << (row["degenerate"].get<bool>() ? "yes" : "no") << '\n';
    }
    s << "mean," << fmt(fs_sum.mean) << ',' << fmt(sep_sum.mean) << ",,\n";
    s << "sd," << fmt(fs_sum.sd) << ',' << fmt(sep_sum.sd) << ",,\n";
    s << "se," << fmt(fs_sum.se) << ',' << fmt(sep_sum.se) << ",,\n";
    std::ofstream pl(out / "powerlaw.csv");
    pl << "replicate,condition,exponent,r_squared,support\n";
    for (const auto& row : power) {
      pl << row["replicate"].get<std::string>() << ',' << row["condition"].get<std::string>() << ',';
      if (row.contains("insufficient")) {
        pl << "NA,NA,NA\n";
      } else {
        pl << fmt(row["exponent"]) << ',' << fmt(row["r_squared"]) << ',' << row["support"].get<int>() << '\n';
      }
    }
  }
  for (const auto& r : results) {
    if (r.fbia_curve.degenerate) {
      std::cerr << "warning: PR curve for " << (r.name.empty() ? "fit" : r.name) << " is degenerate\n";
    }
  }
  std::cout << "AUPRC FBIA " << fmt(fs_sum.mean) << " (se " << fmt(fs_sum.se) << "), separated " << fmt(sep_sum.mean)
            << " over " << results.size() << " replicate(s)\n";
  return 0;
}

// ---------------------------------------------------------------- report

struct ReportArgs {
  fs::path fit;
  int top = 10;
  std::string format = "csv";
  fs::path out;
};

int run_report(const ReportArgs& a) {
  const fs::path path = a.fit / "graph_summary.json";
  if (!fs::exists(path)) throw fbia::Error(fbia::ErrorKind::kIo, "no graph_summary.json in " + a.fit.string());
  if (a.format != "csv" && a.format != "json") throw UsageError("--format must be csv or json");
  const json summary = json::parse(slurp(path));
  std::ostringstream text;
  if (a.format == "json") {
    json j;
    j["conditions"] = json::array();
    for (const auto& c : summary["conditions"]) {
      json hubs = c["hubs"];
      if (static_cast<int>(hubs.size()) > a.top) hubs.erase(hubs.begin() + a.top, hubs.end());
      j["conditions"].push_back({{"label", c["label"]}, {"edges", c["edges"]}, {"hubs", hubs}});
    }
    j["changes"] = summary["changes"];
    text << j.dump(2) << '\n';
  } else {
    text << "section,condition,name,value\n";
    for (const auto& c : summary["conditions"]) {
      const std::string label = c["label"];
      text << "edges," << label << ",," << c["edges"].get<std::size_t>() << '\n';
      int shown = 0;
      for (const auto& h : c["hubs"]) {
        if (shown++ >= a.top) break;
        text << "hub," << label << ',' << h["name"].get<std::string>() << ',' << h["degree"].get<int>() << '\n';
      }
    }
    for (const auto& ch : summary["changes"]) {
      const std::string span = ch["from"].get<std::string>() + "->" + ch["to"].get<std::string>();
      for (const char* key : {"appeared", "persisted", "disappeared"}) {
        text << "change," << span << ',' << key << ',' << ch[key].get<std::size_t>() << '\n';
      }
    }
  }
  std::cout << text.str();
  if (!a.out.empty()) {
    fs::create_directories(a.out);
    std::ofstream f(a.out / (a.format == "json" ? "report.json" : "report.csv"));
    f << text.str();
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint estimation of Gaussian graphical models across conditions"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Simulate precision families and datasets");
  simulate->add_option("--kind", sim.kind)->check(CLI::IsMember({"ar2", "scalefree", "hub"}));
  simulate->add_option("--p", sim.p)->check(CLI::Range(5, 100000));
  simulate->add_option("--n", sim.n)->check(CLI::Range(5, 10000000));
  simulate->add_option("--k", sim.k)->check(CLI::Range(1, 64));
  simulate->add_option("--lineage", sim.lineage)->check(CLI::IsMember({"temporal", "spatial"}));
  simulate->add_option("--frac", sim.frac, "fraction of edges swapped per step")
      ->check([](const std::string& s) -> std::string {
        const double v = std::stod(s);
        return v > 0.0 && v < 1.0 ? "" : "frac must lie in (0,1)";
      });
  simulate->add_option("--reps", sim.reps)->check(CLI::Range(1, 100000));
  simulate->add_option("--seed", sim.seed);
  simulate->add_option("--out", sim.out)->required();

  FitArgs fit;
  FitOptions fo;
  auto* fitc = app.add_subcommand("fit", "Run screening, psi-scores, integration and detection");
  fitc->add_option("--manifest", fit.manifests, "JSON manifest (twice with --two-step)");
  fitc->add_option("files", fit.files, "condition data files, in condition order");
  fitc->add_option("--config", fit.config_file, "JSON config; flags take precedence")->check(CLI::ExistingFile);
  fo.prior = fitc->add_option("--prior", fit.prior)->check(CLI::IsMember({"temporal", "spatial"}));
  fo.arity = fitc->add_option("--arity", fit.arity)->check(CLI::IsMember({2, 3}));
  fo.alpha1 = fitc->add_option("--alpha1", fit.alpha1);
  fo.alpha2 = fitc->add_option("--alpha2", fit.alpha2);
  fo.a1 = fitc->add_option("--a1", fit.a1);
  fo.b1 = fitc->add_option("--b1", fit.b1);
  fo.a2 = fitc->add_option("--a2", fit.a2);
  fo.b2 = fitc->add_option("--b2", fit.b2);
  fo.engine = fitc->add_option("--engine", fit.engine)->check(CLI::IsMember({"auto", "exact", "gibbs"}));
  fo.screen = fitc->add_option("--screen-method", fit.screen_method, "eb or by");
  fo.detect = fitc->add_option("--detect-method", fit.detect_method, "eb or by");
  fo.xi = fitc->add_option("--xi", fit.xi, "neighbourhood cap constant");
  fo.adjust = fitc->add_flag("--adjust-covariates", fit.adjust_covariates);
  fitc->add_flag("--two-step", fit.two_step, "integrate within each group over time, then across groups");
  fo.sweeps = fitc->add_option("--sweeps", fit.sweeps, "Gibbs draws after burn-in");
  fo.burn_in = fitc->add_option("--burn-in", fit.burn_in);
  fo.seed = fitc->add_option("--seed", fit.seed);
  fitc->add_option("--threads", fit.threads, "worker threads (default: all cores)");
  fitc->add_option("--out", fit.out)->required();

  EvaluateArgs ev;
  auto* evaluate = app.add_subcommand("evaluate", "PR curves, AUPRC summary and power-law report");
  evaluate->add_option("--fit", ev.fit, "fit directory, or a directory of replicate fits")->required();
  evaluate->add_option("--truth", ev.truth, "truth directory, or the simulate output")->required();
  evaluate->add_option("--grid", ev.grid, "auto or comma-separated |score| thresholds");
  evaluate->add_option("--alpha-sweep", ev.alphas, "comma-separated detection levels");
  evaluate->add_option("--format", ev.format)->check(CLI::IsMember({"csv", "json"}));
  evaluate->add_option("--out", ev.out, "default: <fit>/evaluation");

  ReportArgs rep;
  auto* report = app.add_subcommand("report", "Edge counts, hubs and edge changes of a fit");
  report->add_option("--fit", rep.fit)->required();
  report->add_option("--top", rep.top)->check(CLI::Range(1, 100000));
  report->add_option("--format", rep.format)->check(CLI::IsMember({"csv", "json"}));
  report->add_option("--out", rep.out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*simulate) return run_simulate(sim);
    if (*fitc) return run_fit(fit, fo);
    if (*evaluate) return run_evaluate(ev);
    if (*report) return run_report(rep);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const fbia::Error& e) {
    std::cerr << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
