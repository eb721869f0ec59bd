#pragma once

#include "fbia/common.hpp"
#include "fbia/ingest.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace fbia {

enum class StructureKind { kAr2, kScaleFree, kHub };
enum class Lineage { kTemporal, kSpatial };

const char* to_string(StructureKind kind);
const char* to_string(Lineage lineage);
StructureKind parse_structure(const std::string& text);
Lineage parse_lineage(const std::string& text);

struct SimulationOptions {
  double magnitude = 0.3;       // |off-diagonal| for scale-free / hub before repair
  int hub_group_size = 20;
  double ridge = 0.1;           // added to |lambda_min| of the off-diagonal part
  double perturb_low = 0.1;     // |value| range for edges added by perturbation
  double perturb_high = 0.3;
};

/// Off-diagonal nonzeros (i < j) of a symmetric matrix.
std::vector<NodePair> edges_of(const Matrix& omega, double tol = 0.0);

double min_eigenvalue(const Matrix& symmetric);

/// Banded precision: 1 on the diagonal, 0.5 at lag 1, 0.25 at lag 2.
Matrix ar2_precision(int p);

/// Scale-free (preferential-attachment tree) or hub (stars of
/// hub_group_size) graph with +/-magnitude weights and a repaired diagonal.
Matrix structured_precision(StructureKind kind, int p, std::uint64_t seed, const SimulationOptions& options = {});

/// Sets the diagonal to |lambda_min(offdiag)| + ridge. If the result is
/// still not positive definite the ridge doubles, up to 5 attempts.
Matrix repair_diagonal(Matrix omega, double ridge);

/// Removes round(frac*|E|) random edges, adds as many at random zero
/// positions with values drawn from +/-[low, high], then repairs the diagonal.
Matrix perturb(const Matrix& omega, double frac, std::uint64_t seed, const SimulationOptions& options = {});

struct PrecisionFamily {
  std::vector<Matrix> omegas;
  std::vector<std::vector<NodePair>> truth_edges;
  Matrix base;  // Omega^(0) for spatial lineages, equals omegas[0] for temporal
  StructureKind kind = StructureKind::kAr2;
  Lineage lineage = Lineage::kTemporal;
  std::uint64_t seed = 0;
};

PrecisionFamily make_family(StructureKind kind, int p, int k_count, Lineage lineage, double frac,
                            std::uint64_t seed, const SimulationOptions& options = {});

/// n draws from N(0, omega^{-1}) using the Cholesky factor of omega.
Matrix sample_mvn(const Matrix& omega, int n, std::uint64_t seed);

/// One dataset per family member, condition labels cond_1..cond_K.
ConditionedDataset sample_family(const PrecisionFamily& family, int n, std::uint64_t seed);

// Ground truth on disk: omega_<k>.csv, edges_<k>.csv (i,j,value, 1-based)
// and truth.json describing the family.
void write_truth(const std::filesystem::path& dir, const PrecisionFamily& family);
PrecisionFamily read_truth(const std::filesystem::path& dir);

}  // namespace fbia
