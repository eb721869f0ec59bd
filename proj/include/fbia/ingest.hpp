#pragma once

#include "fbia/common.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace fbia {

struct CovariateBlock {
  std::vector<std::string> names;
  Matrix values;  // n_k x q
};

struct ConditionBlock {
  std::string label;
  Matrix data;  // n_k x p
  std::optional<CovariateBlock> covariates;

  int samples() const { return static_cast<int>(data.rows()); }
  int variables() const { return static_cast<int>(data.cols()); }
};

/// Multi-condition dataset. Condition order is semantic: the temporal prior
/// treats neighbouring conditions as adjacent in time.
struct ConditionedDataset {
  std::vector<ConditionBlock> conditions;
  std::vector<std::string> variable_names;

  int conditions_count() const { return static_cast<int>(conditions.size()); }
  int variables() const { return static_cast<int>(variable_names.size()); }
  std::vector<int> sample_sizes() const;
};

inline constexpr int kMinSamplesPerCondition = 5;

// Which columns of a data file are not network variables. Everything not
// listed is a variable.
struct ColumnSchema {
  std::vector<std::string> ignored;
  std::vector<std::string> covariates;
};

struct ConditionSource {
  std::filesystem::path data;
  std::string label;  // defaults to the file stem
  std::optional<std::filesystem::path> covariates;  // sidecar file, same row order
};

struct DelimitedTable {
  std::vector<std::string> header;
  Matrix values;
};

char delimiter_for(const std::filesystem::path& path);

/// Reads a header + numeric body. Any non-numeric or non-finite cell is a
/// parse error naming its 1-based row and the column name.
DelimitedTable read_table(const std::filesystem::path& path,
                          const std::vector<std::string>& skip_columns = {});

void write_table(const std::filesystem::path& path, const std::vector<std::string>& header,
                 const Matrix& values);

ConditionedDataset load_dataset(const std::vector<ConditionSource>& sources,
                                const ColumnSchema& schema = {});

struct Manifest {
  std::vector<ConditionSource> sources;
  ColumnSchema schema;
};

// JSON manifest: {"conditions":[{"label":..,"data":..,"covariates":..}],
// "ignore":[..], "covariate_columns":[..]}. Relative paths resolve against
// the manifest's directory.
Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);

ConditionedDataset load_manifest(const std::filesystem::path& path);

// Writes each condition as <dir>/<label>.csv and returns a manifest for them.
Manifest write_dataset(const std::filesystem::path& dir, const ConditionedDataset& ds);

/// Centers and scales each variable within each condition (sd with n-1).
ConditionedDataset standardize(const ConditionedDataset& ds);

void validate(const ConditionedDataset& ds);

}  // namespace fbia
