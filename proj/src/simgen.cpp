#include "fbia/simgen.hpp"

#include <Eigen/Eigenvalues>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

namespace fbia {

namespace fs = std::filesystem;

const char* to_string(StructureKind kind) {
  switch (kind) {
    case StructureKind::kAr2: return "ar2";
    case StructureKind::kScaleFree: return "scalefree";
    case StructureKind::kHub: return "hub";
  }
  return "ar2";
}

const char* to_string(Lineage lineage) { return lineage == Lineage::kTemporal ? "temporal" : "spatial"; }

StructureKind parse_structure(const std::string& text) {
  if (text == "ar2") return StructureKind::kAr2;
  if (text == "scalefree" || text == "scale-free") return StructureKind::kScaleFree;
  if (text == "hub") return StructureKind::kHub;
  throw Error(ErrorKind::kParameter, "unknown structure '" + text + "'");
}

Lineage parse_lineage(const std::string& text) {
  if (text == "temporal") return Lineage::kTemporal;
  if (text == "spatial") return Lineage::kSpatial;
  throw Error(ErrorKind::kParameter, "unknown lineage '" + text + "'");
}

std::vector<NodePair> edges_of(const Matrix& omega, double tol) {
  std::vector<NodePair> e;
  for (int i = 0; i < omega.rows(); ++i) {
    for (int j = i + 1; j < omega.cols(); ++j) {
      if (std::abs(omega(i, j)) > tol) e.push_back({i, j});
    }
  }
  return e;
}

double min_eigenvalue(const Matrix& symmetric) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(symmetric, Eigen::EigenvaluesOnly);
  return solver.eigenvalues().minCoeff();
}

Matrix ar2_precision(int p) {
  if (p < 5) throw Error(ErrorKind::kParameter, "AR(2) precision needs p >= 5");
  Matrix omega = Matrix::Zero(p, p);
  for (int i = 0; i < p; ++i) {
    omega(i, i) = 1.0;
    if (i + 1 < p) omega(i, i + 1) = omega(i + 1, i) = 0.5;
    if (i + 2 < p) omega(i, i + 2) = omega(i + 2, i) = 0.25;
  }
  return omega;
}

Matrix repair_diagonal(Matrix omega, double ridge) {
  if (!(ridge > 0.0)) throw Error(ErrorKind::kParameter, "ridge must be positive");
  Matrix off = omega;
  off.diagonal().setZero();
  const double lambda = std::abs(min_eigenvalue(off));
  for (int attempt = 0; attempt < 5; ++attempt, ridge *= 2.0) {
    omega.diagonal().setConstant(lambda + ridge);
    if (min_eigenvalue(omega) > 1e-10) return omega;
  }
  throw Error(ErrorKind::kNotPositiveDefinite, "diagonal repair failed after 5 attempts");
}

Matrix structured_precision(StructureKind kind, int p, std::uint64_t seed, const SimulationOptions& options) {
  if (kind == StructureKind::kAr2) return ar2_precision(p);
  if (p < 10) throw Error(ErrorKind::kParameter, "structured precision needs p >= 10");
  std::mt19937_64 rng(seed);
  std::vector<NodePair> edges;
  if (kind == StructureKind::kScaleFree) {
    // Each new node attaches to one existing node with probability
    // proportional to its degree.
    std::vector<int> endpoints = {0, 1};
    edges.push_back({0, 1});
    for (int node = 2; node < p; ++node) {
      std::uniform_int_distribution<std::size_t> pick(0, endpoints.size() - 1);
      const int target = endpoints[pick(rng)];
      edges.push_back({std::min(node, target), std::max(node, target)});
      endpoints.push_back(node);
      endpoints.push_back(target);
    }
  } else {
    const int g = options.hub_group_size;
    if (g < 2) throw Error(ErrorKind::kParameter, "hub group size must be at least 2");
    for (int start = 0; start < p; start += g) {
      const int end = std::min(p, start + g);
      for (int member = start + 1; member < end; ++member) edges.push_back({start, member});
    }
  }
  Matrix omega = Matrix::Zero(p, p);
  std::bernoulli_distribution coin(0.5);
  for (const auto& [i, j] : edges) {
    const double v = coin(rng) ? options.magnitude : -options.magnitude;
    omega(i, j) = omega(j, i) = v;
  }
  return repair_diagonal(std::move(omega), options.ridge);
}

Matrix perturb(const Matrix& omega, double frac, std::uint64_t seed, const SimulationOptions& options) {
  if (!(frac > 0.0 && frac < 1.0)) throw Error(ErrorKind::kParameter, "perturbation fraction must lie in (0,1)");
  const int p = static_cast<int>(omega.rows());
  std::vector<NodePair> present = edges_of(omega);
  const auto removals = static_cast<std::size_t>(std::llround(frac * static_cast<double>(present.size())));
  if (removals > present.size()) throw Error(ErrorKind::kParameter, "more removals than edges");

  std::mt19937_64 rng(seed);
  Matrix out = omega;
  std::vector<NodePair> chosen;
  std::sample(present.begin(), present.end(), std::back_inserter(chosen), removals, rng);
  for (const auto& [i, j] : chosen) out(i, j) = out(j, i) = 0.0;

  // Additions go to positions that were zero before the removals.
  std::vector<NodePair> zeros;
  for (int i = 0; i < p; ++i) {
    for (int j = i + 1; j < p; ++j) {
      if (omega(i, j) == 0.0) zeros.push_back({i, j});
    }
  }
  if (zeros.size() < removals) throw Error(ErrorKind::kParameter, "not enough zero positions to add edges");
  std::vector<NodePair> added;
  std::sample(zeros.begin(), zeros.end(), std::back_inserter(added), removals, rng);
  std::uniform_real_distribution<double> magnitude(options.perturb_low, options.perturb_high);
  std::bernoulli_distribution coin(0.5);
  for (const auto& [i, j] : added) {
    const double m = magnitude(rng);
    out(i, j) = out(j, i) = coin(rng) ? m : -m;
  }
  return repair_diagonal(std::move(out), options.ridge);
}

PrecisionFamily make_family(StructureKind kind, int p, int k_count, Lineage lineage, double frac, std::uint64_t seed,
                            const SimulationOptions& options) {
  if (k_count < 1) throw Error(ErrorKind::kParameter, "need K >= 1");
  PrecisionFamily f;
  f.kind = kind;
  f.lineage = lineage;
  f.seed = seed;
  f.base = structured_precision(kind, p, mix_seed(seed, 0), options);
  if (lineage == Lineage::kTemporal) {
    f.omegas.push_back(f.base);
    for (int k = 1; k < k_count; ++k) {
      f.omegas.push_back(perturb(f.omegas.back(), frac, mix_seed(seed, static_cast<std::uint64_t>(k)), options));
    }
  } else {
    if (k_count == 1) {
      f.omegas.push_back(f.base);
    } else {
      for (int k = 1; k <= k_count; ++k) {
        f.omegas.push_back(perturb(f.base, frac, mix_seed(seed, static_cast<std::uint64_t>(k)), options));
      }
    }
  }
  for (const auto& o : f.omegas) f.truth_edges.push_back(edges_of(o));
  return f;
}

Matrix sample_mvn(const Matrix& omega, int n, std::uint64_t seed) {
  Eigen::LLT<Matrix> llt(omega);
  if (llt.info() != Eigen::Success) throw Error(ErrorKind::kNotPositiveDefinite, "precision matrix is not PD");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  const auto p = omega.rows();
  Matrix z(p, n);
  for (int r = 0; r < n; ++r) {
    for (Eigen::Index c = 0; c < p; ++c) z(c, r) = normal(rng);
  }
  // omega = L L^T, x = L^{-T} z has covariance omega^{-1}.
  const Matrix x = llt.matrixU().solve(z);
  return x.transpose();
}

ConditionedDataset sample_family(const PrecisionFamily& family, int n, std::uint64_t seed) {
  ConditionedDataset ds;
  const auto p = family.omegas.front().rows();
  for (Eigen::Index v = 0; v < p; ++v) ds.variable_names.push_back("X" + std::to_string(v + 1));
  for (std::size_t k = 0; k < family.omegas.size(); ++k) {
    ConditionBlock block;
    block.label = "cond_" + std::to_string(k + 1);
    block.data = sample_mvn(family.omegas[k], n, mix_seed(seed, 1000 + k));
    ds.conditions.push_back(std::move(block));
  }
  return ds;
}

void write_truth(const fs::path& dir, const PrecisionFamily& family) {
  fs::create_directories(dir);
  nlohmann::json j;
  j["kind"] = to_string(family.kind);
  j["lineage"] = to_string(family.lineage);
  j["seed"] = family.seed;
  j["p"] = family.omegas.front().rows();
  j["conditions"] = nlohmann::json::array();
  char buf[64];
  for (std::size_t k = 0; k < family.omegas.size(); ++k) {
    const std::string omega_file = "omega_" + std::to_string(k + 1) + ".csv";
    const std::string edge_file = "edges_" + std::to_string(k + 1) + ".csv";
    std::vector<std::string> header;
    for (Eigen::Index v = 0; v < family.omegas[k].cols(); ++v) header.push_back("X" + std::to_string(v + 1));
    write_table(dir / omega_file, header, family.omegas[k]);
    std::ofstream out(dir / edge_file);
    if (!out) throw Error(ErrorKind::kIo, "cannot write " + (dir / edge_file).string());
    out << "i,j,value\n";
    for (const auto& [i, jj] : family.truth_edges[k]) {
      std::snprintf(buf, sizeof buf, "%d,%d,%.17g\n", i + 1, jj + 1, family.omegas[k](i, jj));
      out << buf;
    }
    j["conditions"].push_back({{"omega", omega_file}, {"edges", edge_file}, {"edge_count", family.truth_edges[k].size()}});
  }
  std::ofstream meta(dir / "truth.json");
  meta << j.dump(2) << '\n';
}

PrecisionFamily read_truth(const fs::path& dir) {
  std::ifstream in(dir / "truth.json");
  if (!in) throw Error(ErrorKind::kIo, "missing truth manifest in " + dir.string());
  nlohmann::json j;
  in >> j;
  PrecisionFamily f;
  f.kind = parse_structure(j.at("kind").get<std::string>());
  f.lineage = parse_lineage(j.at("lineage").get<std::string>());
  f.seed = j.value("seed", std::uint64_t{0});
  for (const auto& c : j.at("conditions")) {
    DelimitedTable t = read_table(dir / c.at("omega").get<std::string>());
    f.omegas.push_back(std::move(t.values));
    f.truth_edges.push_back(edges_of(f.omegas.back()));
  }
  if (f.omegas.empty()) throw Error(ErrorKind::kSchema, "truth manifest lists no conditions");
  f.base = f.omegas.front();
  return f;
}

}  // namespace fbia
