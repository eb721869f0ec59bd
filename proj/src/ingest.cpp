#include "fbia/ingest.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace fbia {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, delim)) {
    if (!cell.empty() && cell.back() == '\r') cell.pop_back();
    cells.push_back(cell);
  }
  if (!line.empty() && line.back() == delim) cells.emplace_back();
  return cells;
}

std::string trim(std::string s) {
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

bool parse_double(const std::string& text, double& out) {
  const char* begin = text.data();
  const char* end = text.data() + text.size();
  if (begin != end && *begin == '+') ++begin;
  auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Matrix select_columns(const Matrix& m, const std::vector<int>& cols) {
  Matrix out(m.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) out.col(static_cast<Eigen::Index>(c)) = m.col(cols[c]);
  return out;
}

}  // namespace

std::vector<int> ConditionedDataset::sample_sizes() const {
  std::vector<int> n;
  n.reserve(conditions.size());
  for (const auto& c : conditions) n.push_back(c.samples());
  return n;
}

char delimiter_for(const fs::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".tsv" || ext == ".tab" || ext == ".txt") return '\t';
  return ',';
}

DelimitedTable read_table(const fs::path& path, const std::vector<std::string>& skip_columns) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  const char delim = delimiter_for(path);

  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::kParse, path.string() + ": missing header row");
  std::vector<std::string> header = split_line(line, delim);
  for (auto& h : header) h = trim(h);

  std::vector<int> keep;
  DelimitedTable table;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (std::find(skip_columns.begin(), skip_columns.end(), header[c]) != skip_columns.end()) continue;
    keep.push_back(static_cast<int>(c));
    table.header.push_back(header[c]);
  }

  std::vector<double> flat;
  std::size_t rows = 0;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto cells = split_line(line, delim);
    if (cells.size() != header.size()) {
      throw Error(ErrorKind::kParse, path.string() + ": row " + std::to_string(line_no) + " has " +
                                         std::to_string(cells.size()) + " cells, header has " +
                                         std::to_string(header.size()));
    }
    for (int c : keep) {
      double v = 0.0;
      const std::string cell = trim(cells[static_cast<std::size_t>(c)]);
      if (!parse_double(cell, v)) {
        throw Error(ErrorKind::kParse, path.string() + ": row " + std::to_string(line_no) +
                                           ", column '" + header[static_cast<std::size_t>(c)] +
                                           "': not a finite number: '" + cell + "'");
      }
      flat.push_back(v);
    }
    ++rows;
  }
  table.values.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < keep.size(); ++c) {
      table.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = flat[r * keep.size() + c];
    }
  }
  return table;
}

void write_table(const fs::path& path, const std::vector<std::string>& header, const Matrix& values) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  const char delim = delimiter_for(path);
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c) out << delim;
    out << header[c];
  }
  out << '\n';
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      if (c) out << delim;
      out << format_double(values(r, c));
    }
    out << '\n';
  }
}

void validate(const ConditionedDataset& ds) {
  if (ds.conditions.empty()) throw Error(ErrorKind::kSize, "dataset has no conditions");
  const auto p = static_cast<Eigen::Index>(ds.variable_names.size());
  for (const auto& c : ds.conditions) {
    if (c.data.cols() != p) {
      throw Error(ErrorKind::kSchema, "condition '" + c.label + "' has " + std::to_string(c.data.cols()) +
                                          " variables, expected " + std::to_string(p));
    }
    if (c.data.rows() < kMinSamplesPerCondition) {
      throw Error(ErrorKind::kSize, "condition '" + c.label + "' has " + std::to_string(c.data.rows()) +
                                        " samples; at least " + std::to_string(kMinSamplesPerCondition) +
                                        " are required");
    }
    if (!c.data.allFinite()) throw Error(ErrorKind::kParse, "condition '" + c.label + "' has non-finite values");
    if (c.covariates) {
      if (c.covariates->values.rows() != c.data.rows()) {
        throw Error(ErrorKind::kSchema, "condition '" + c.label + "': covariate rows (" +
                                            std::to_string(c.covariates->values.rows()) +
                                            ") differ from data rows (" + std::to_string(c.data.rows()) + ")");
      }
      if (!c.covariates->values.allFinite()) {
        throw Error(ErrorKind::kParse, "condition '" + c.label + "' has non-finite covariates");
      }
    }
  }
}

ConditionedDataset load_dataset(const std::vector<ConditionSource>& sources, const ColumnSchema& schema) {
  if (sources.empty()) throw Error(ErrorKind::kSize, "no condition files given");
  ConditionedDataset ds;
  for (const auto& src : sources) {
    std::vector<std::string> skip = schema.ignored;
    skip.insert(skip.end(), schema.covariates.begin(), schema.covariates.end());
    DelimitedTable table = read_table(src.data, skip);

    ConditionBlock block;
    block.label = src.label.empty() ? src.data.stem().string() : src.label;

    if (ds.variable_names.empty() && ds.conditions.empty()) {
      ds.variable_names = table.header;
      block.data = std::move(table.values);
    } else {
      std::unordered_map<std::string, int> position;
      for (std::size_t c = 0; c < table.header.size(); ++c) position[table.header[c]] = static_cast<int>(c);
      if (position.size() != table.header.size() || table.header.size() != ds.variable_names.size()) {
        throw Error(ErrorKind::kSchema, src.data.string() + ": variable set differs from first condition");
      }
      std::vector<int> order;
      for (const auto& name : ds.variable_names) {
        auto it = position.find(name);
        if (it == position.end()) {
          throw Error(ErrorKind::kSchema, src.data.string() + ": missing variable '" + name + "'");
        }
        order.push_back(it->second);
      }
      block.data = select_columns(table.values, order);
    }

    if (!schema.covariates.empty()) {
      std::vector<std::string> skip_vars;
      DelimitedTable full = read_table(src.data, schema.ignored);
      std::vector<int> cols;
      for (const auto& name : schema.covariates) {
        auto it = std::find(full.header.begin(), full.header.end(), name);
        if (it == full.header.end()) {
          throw Error(ErrorKind::kSchema, src.data.string() + ": missing covariate column '" + name + "'");
        }
        cols.push_back(static_cast<int>(std::distance(full.header.begin(), it)));
      }
      block.covariates = CovariateBlock{schema.covariates, select_columns(full.values, cols)};
    }
    if (src.covariates) {
      DelimitedTable cov = read_table(*src.covariates);
      if (block.covariates) {
        auto& existing = *block.covariates;
        if (existing.values.rows() != cov.values.rows()) {
          throw Error(ErrorKind::kSchema, src.covariates->string() + ": row count differs from data file");
        }
        Matrix merged(existing.values.rows(), existing.values.cols() + cov.values.cols());
        merged << existing.values, cov.values;
        existing.values = std::move(merged);
        existing.names.insert(existing.names.end(), cov.header.begin(), cov.header.end());
      } else {
        block.covariates = CovariateBlock{cov.header, std::move(cov.values)};
      }
    }
    ds.conditions.push_back(std::move(block));
  }
  validate(ds);
  return ds;
}

Manifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open manifest " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kParse, "manifest " + path.string() + ": " + e.what());
  }
  const fs::path base = path.parent_path();
  auto resolve = [&](const std::string& p) {
    fs::path candidate(p);
    return candidate.is_absolute() ? candidate : base / candidate;
  };
  Manifest m;
  if (!j.contains("conditions") || !j["conditions"].is_array()) {
    throw Error(ErrorKind::kSchema, "manifest " + path.string() + ": 'conditions' array required");
  }
  for (const auto& c : j["conditions"]) {
    ConditionSource src;
    src.data = resolve(c.at("data").get<std::string>());
    src.label = c.value("label", std::string());
    if (c.contains("covariates") && !c["covariates"].is_null()) {
      src.covariates = resolve(c["covariates"].get<std::string>());
    }
    m.sources.push_back(std::move(src));
  }
  m.schema.ignored = j.value("ignore", std::vector<std::string>{});
  m.schema.covariates = j.value("covariate_columns", std::vector<std::string>{});
  return m;
}

void write_manifest(const fs::path& path, const Manifest& manifest) {
  nlohmann::json j;
  j["conditions"] = nlohmann::json::array();
  const fs::path base = path.parent_path();
  for (const auto& src : manifest.sources) {
    nlohmann::json c;
    c["label"] = src.label;
    c["data"] = fs::relative(src.data, base).generic_string();
    if (src.covariates) c["covariates"] = fs::relative(*src.covariates, base).generic_string();
    j["conditions"].push_back(c);
  }
  if (!manifest.schema.ignored.empty()) j["ignore"] = manifest.schema.ignored;
  if (!manifest.schema.covariates.empty()) j["covariate_columns"] = manifest.schema.covariates;
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

ConditionedDataset load_manifest(const fs::path& path) {
  Manifest m = read_manifest(path);
  return load_dataset(m.sources, m.schema);
}

Manifest write_dataset(const fs::path& dir, const ConditionedDataset& ds) {
  fs::create_directories(dir);
  Manifest m;
  for (const auto& c : ds.conditions) {
    ConditionSource src;
    src.label = c.label;
    src.data = dir / (c.label + ".csv");
    write_table(src.data, ds.variable_names, c.data);
    if (c.covariates) {
      src.covariates = dir / (c.label + ".covariates.csv");
      write_table(*src.covariates, c.covariates->names, c.covariates->values);
    }
    m.sources.push_back(std::move(src));
  }
  return m;
}

ConditionedDataset standardize(const ConditionedDataset& ds) {
  ConditionedDataset out = ds;
  for (auto& c : out.conditions) {
    const double n = static_cast<double>(c.data.rows());
    for (Eigen::Index v = 0; v < c.data.cols(); ++v) {
      auto col = c.data.col(v);
      const double mean = col.mean();
      col.array() -= mean;
      const double sd = std::sqrt(col.squaredNorm() / (n - 1.0));
      if (!(sd > 0.0) || sd < 1e-300) {
        throw Error(ErrorKind::kDegenerate, "variable '" + ds.variable_names[static_cast<std::size_t>(v)] +
                                                "' has zero variance in condition '" + c.label + "'");
      }
      col /= sd;
    }
  }
  return out;
}

}  // namespace fbia
