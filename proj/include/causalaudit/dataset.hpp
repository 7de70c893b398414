#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "causalaudit/common.hpp"
#include "causalaudit/rng.hpp"

namespace causalaudit {

enum class ColumnKind { Categorical, Continuous };

struct ColumnSpec {
  std::string name;
  ColumnKind kind = ColumnKind::Categorical;
  std::vector<std::string> levels;  // categorical only; ordered, unique
};

// Column storage: categorical columns hold level codes, continuous columns
// hold doubles. Both vectors have length n for their kind; the other is empty.
struct Column {
  ColumnSpec spec;
  std::vector<std::int32_t> codes;
  std::vector<double> values;

  bool is_categorical() const { return spec.kind == ColumnKind::Categorical; }
};

struct Dataset {
  std::vector<Column> columns;
  std::vector<std::size_t> row_ids;
  std::size_t dropped_missing = 0;  // rows removed at load for missing cells

  std::size_t n_rows() const { return row_ids.size(); }
  std::size_t n_cols() const { return columns.size(); }

  const Column& column(const std::string& name) const {
    for (const auto& c : columns)
      if (c.spec.name == name) return c;
    throw DataError("unknown column: " + name);
  }

  std::size_t column_index(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i].spec.name == name) return i;
    throw DataError("unknown column: " + name);
  }

  bool has_column(const std::string& name) const {
    for (const auto& c : columns)
      if (c.spec.name == name) return true;
    return false;
  }

  Dataset select_rows(const std::vector<std::size_t>& idx) const {
    Dataset out;
    out.columns.reserve(columns.size());
    for (const auto& c : columns) {
      Column nc;
      nc.spec = c.spec;
      if (c.is_categorical()) {
        nc.codes.reserve(idx.size());
        for (std::size_t i : idx) nc.codes.push_back(c.codes[i]);
      } else {
        nc.values.reserve(idx.size());
        for (std::size_t i : idx) nc.values.push_back(c.values[i]);
      }
      out.columns.push_back(std::move(nc));
    }
    out.row_ids.reserve(idx.size());
    for (std::size_t i : idx) out.row_ids.push_back(row_ids[i]);
    return out;
  }
};

struct RoleSchema {
  std::string sensitive;
  std::vector<std::string> s1_levels;
  std::string outcome;
  std::string positive_level;
  std::vector<std::string> confounders;
  std::vector<std::string> mediators;
};

// Dataset plus validated role bindings; per-row sensitive indicator and
// binary outcome are precomputed.
struct RoledDataset {
  Dataset data;
  RoleSchema schema;
  std::vector<double> s;  // 1.0 if sensitive level in s2, else 0.0
  std::vector<double> y;  // 1.0 = positive level

  std::size_t n_rows() const { return data.n_rows(); }

  std::vector<std::size_t> rows_with_s(double value) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < s.size(); ++i)
      if (s[i] == value) out.push_back(i);
    return out;
  }

  RoledDataset select_rows(const std::vector<std::size_t>& idx) const {
    RoledDataset out;
    out.data = data.select_rows(idx);
    out.schema = schema;
    out.s = select(s, idx);
    out.y = select(y, idx);
    return out;
  }
};

struct FeatureOrigin {
  std::string source_column;
  std::string level;  // empty for continuous pass-through columns
};

enum class FeatureRole { SensitiveIndicator, Confounder, Mediator };

// Numeric design matrices. The tree view one-hot encodes every categorical
// level; the linear view drops the first level of each categorical block.
struct EncodedView {
  Matrix tree;
  Matrix linear;
  std::vector<FeatureOrigin> tree_features;
  std::vector<FeatureOrigin> linear_features;
  std::vector<FeatureRole> tree_roles;
  std::vector<FeatureRole> linear_roles;
  std::size_t s_column_tree = 0;  // index of the S-indicator column
  std::size_t s_column_linear = 0;
};

namespace detail {

inline std::vector<std::string> parse_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c == '\r') {
      // ignore CR from CRLF files
    } else {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

inline bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size() && std::isfinite(out);
}

inline bool is_missing(const std::string& s) { return s.empty() || s == "?"; }

}  // namespace detail

// Loads a UTF-8 header-first CSV. Rows with missing cells ("" or "?") are
// dropped and counted. When specs are omitted, a column whose observed values
// are all numeric becomes continuous; otherwise categorical with levels
// sorted lexicographically.
inline Dataset load_csv(const std::string& path,
                        const std::optional<std::vector<ColumnSpec>>& specs = std::nullopt) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open file: " + path);

  std::string line;
  if (!std::getline(in, line)) throw DataError("empty file: " + path);
  std::vector<std::string> header = detail::parse_csv_line(line);
  for (auto& h : header) h = detail::trim(h);
  const std::size_t p = header.size();

  std::vector<std::vector<std::string>> raw;
  std::size_t dropped = 0;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> fields = detail::parse_csv_line(line);
    if (fields.size() != p)
      throw DataError("row " + std::to_string(lineno) + ": expected " +
                      std::to_string(p) + " fields, got " + std::to_string(fields.size()));
    bool missing = false;
    for (auto& f : fields) {
      f = detail::trim(f);
      if (detail::is_missing(f)) missing = true;
    }
    if (missing) {
      ++dropped;
      continue;
    }
    raw.push_back(std::move(fields));
  }
  if (raw.empty()) throw DataError("no complete rows in file: " + path);

  std::vector<ColumnSpec> colspecs;
  if (specs) {
    if (specs->size() != p) throw DataError("spec count does not match header");
    colspecs = *specs;
    for (std::size_t j = 0; j < p; ++j)
      if (colspecs[j].name != header[j])
        throw DataError("spec name '" + colspecs[j].name + "' does not match header '" +
                        header[j] + "'");
  } else {
    colspecs.resize(p);
    for (std::size_t j = 0; j < p; ++j) {
      colspecs[j].name = header[j];
      bool all_numeric = true;
      std::set<std::string> levels;
      for (const auto& row : raw) {
        double d;
        if (!detail::parse_double(row[j], d)) all_numeric = false;
        levels.insert(row[j]);
      }
      if (all_numeric) {
        colspecs[j].kind = ColumnKind::Continuous;
      } else {
        colspecs[j].kind = ColumnKind::Categorical;
        colspecs[j].levels.assign(levels.begin(), levels.end());
      }
    }
  }

  Dataset ds;
  ds.dropped_missing = dropped;
  ds.columns.resize(p);
  for (std::size_t j = 0; j < p; ++j) {
    ds.columns[j].spec = colspecs[j];
    if (colspecs[j].kind == ColumnKind::Categorical && colspecs[j].levels.empty())
      throw DataError("column '" + colspecs[j].name + "': categorical spec has no levels");
  }

  std::vector<std::unordered_map<std::string, std::int32_t>> level_index(p);
  for (std::size_t j = 0; j < p; ++j) {
    if (colspecs[j].kind != ColumnKind::Categorical) continue;
    std::set<std::string> seen;
    for (std::size_t k = 0; k < colspecs[j].levels.size(); ++k) {
      const auto& lv = colspecs[j].levels[k];
      if (!seen.insert(lv).second)
        throw DataError("column '" + colspecs[j].name + "': duplicate level '" + lv + "'");
      level_index[j][lv] = static_cast<std::int32_t>(k);
    }
  }

  for (std::size_t i = 0; i < raw.size(); ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      const std::string& cell = raw[i][j];
      Column& col = ds.columns[j];
      if (col.is_categorical()) {
        auto it = level_index[j].find(cell);
        if (it == level_index[j].end())
          throw DataError("row " + std::to_string(i + 2) + ", column '" + col.spec.name +
                          "': value '" + cell + "' outside declared levels");
        col.codes.push_back(it->second);
      } else {
        double d;
        if (!detail::parse_double(cell, d))
          throw DataError("row " + std::to_string(i + 2) + ", column '" + col.spec.name +
                          "': non-numeric value '" + cell + "' in continuous column");
        col.values.push_back(d);
      }
    }
  }
  ds.row_ids.resize(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) ds.row_ids[i] = i;
  return ds;
}

inline RoledDataset bind_roles(const Dataset& data, const RoleSchema& schema) {
  // role disjointness and existence
  std::vector<std::string> all{schema.sensitive, schema.outcome};
  all.insert(all.end(), schema.confounders.begin(), schema.confounders.end());
  all.insert(all.end(), schema.mediators.begin(), schema.mediators.end());
  std::set<std::string> uniq;
  for (const auto& name : all) {
    if (!data.has_column(name)) throw DataError("schema names missing column: " + name);
    if (!uniq.insert(name).second)
      throw DataError("column '" + name + "' assigned to more than one role");
  }

  const Column& sens = data.column(schema.sensitive);
  if (!sens.is_categorical()) throw DataError("sensitive column must be categorical");
  if (schema.s1_levels.empty()) throw DataError("s1_levels must be non-empty");
  std::set<std::string> s1set(schema.s1_levels.begin(), schema.s1_levels.end());
  std::set<std::string> sens_levels(sens.spec.levels.begin(), sens.spec.levels.end());
  for (const auto& lv : s1set)
    if (!sens_levels.count(lv))
      throw DataError("s1 level '" + lv + "' not a level of column '" + schema.sensitive + "'");
  if (s1set.size() >= sens_levels.size())
    throw DataError("s1_levels must be a strict subset of the sensitive column's levels");

  // A numeric 0/1 column also qualifies as a binary outcome (round-tripped
  // simulated data comes back continuous from type inference).
  const Column& out = data.column(schema.outcome);
  std::int32_t pos_code = -1;
  double pos_value = 1.0;
  if (out.is_categorical()) {
    if (out.spec.levels.size() != 2)
      throw DataError("outcome column must be binary (2 levels or numeric 0/1)");
    for (std::size_t k = 0; k < out.spec.levels.size(); ++k)
      if (out.spec.levels[k] == schema.positive_level) pos_code = static_cast<std::int32_t>(k);
    if (pos_code < 0)
      throw DataError("positive level '" + schema.positive_level + "' not a level of outcome");
  } else {
    if (!is_binary(out.values))
      throw DataError("outcome column must be binary (2 levels or numeric 0/1)");
    if (schema.positive_level == "1" || schema.positive_level == "1.0")
      pos_value = 1.0;
    else if (schema.positive_level == "0" || schema.positive_level == "0.0")
      pos_value = 0.0;
    else
      throw DataError("positive level '" + schema.positive_level +
                      "' does not match a numeric 0/1 outcome");
  }

  std::vector<bool> is_s1(sens.spec.levels.size(), false);
  for (std::size_t k = 0; k < sens.spec.levels.size(); ++k)
    if (s1set.count(sens.spec.levels[k])) is_s1[k] = true;

  RoledDataset rd;
  rd.data = data;
  rd.schema = schema;
  rd.s.resize(data.n_rows());
  rd.y.resize(data.n_rows());
  std::size_t n_s1 = 0, n_s2 = 0;
  for (std::size_t i = 0; i < data.n_rows(); ++i) {
    bool s1 = is_s1[static_cast<std::size_t>(sens.codes[i])];
    rd.s[i] = s1 ? 0.0 : 1.0;
    (s1 ? n_s1 : n_s2)++;
    rd.y[i] = out.is_categorical() ? ((out.codes[i] == pos_code) ? 1.0 : 0.0)
                                   : ((out.values[i] == pos_value) ? 1.0 : 0.0);
  }
  if (n_s1 == 0 || n_s2 == 0) throw DataError("a sensitive group is empty");
  return rd;
}

namespace detail {

inline void append_column_block(const Column& col, bool drop_first, FeatureRole role,
                                std::vector<std::vector<double>>& cols,
                                std::vector<FeatureOrigin>& origins,
                                std::vector<FeatureRole>& roles, std::size_t n) {
  if (col.is_categorical()) {
    const std::size_t start = drop_first ? 1 : 0;
    for (std::size_t k = start; k < col.spec.levels.size(); ++k) {
      std::vector<double> v(n, 0.0);
      for (std::size_t i = 0; i < n; ++i)
        if (static_cast<std::size_t>(col.codes[i]) == k) v[i] = 1.0;
      cols.push_back(std::move(v));
      origins.push_back({col.spec.name, col.spec.levels[k]});
      roles.push_back(role);
    }
  } else {
    cols.push_back(col.values);
    origins.push_back({col.spec.name, ""});
    roles.push_back(role);
  }
}

inline Matrix from_columns(const std::vector<std::vector<double>>& cols, std::size_t n) {
  Matrix m(n, cols.size());
  for (std::size_t j = 0; j < cols.size(); ++j)
    for (std::size_t i = 0; i < n; ++i) m(i, j) = cols[j][i];
  return m;
}

}  // namespace detail

// Column order: S-indicator, then confounders, then mediators, each in schema
// order. Continuous columns pass through unscaled.
inline EncodedView encode(const RoledDataset& rd) {
  const std::size_t n = rd.n_rows();
  EncodedView ev;

  for (int view = 0; view < 2; ++view) {
    const bool drop_first = (view == 1);
    std::vector<std::vector<double>> cols;
    std::vector<FeatureOrigin> origins;
    std::vector<FeatureRole> roles;

    cols.push_back(rd.s);
    origins.push_back({rd.schema.sensitive, "<s2-indicator>"});
    roles.push_back(FeatureRole::SensitiveIndicator);

    for (const auto& name : rd.schema.confounders)
      detail::append_column_block(rd.data.column(name), drop_first, FeatureRole::Confounder,
                                  cols, origins, roles, n);
    for (const auto& name : rd.schema.mediators)
      detail::append_column_block(rd.data.column(name), drop_first, FeatureRole::Mediator,
                                  cols, origins, roles, n);

    if (!drop_first) {
      ev.tree = detail::from_columns(cols, n);
      ev.tree_features = std::move(origins);
      ev.tree_roles = std::move(roles);
      ev.s_column_tree = 0;
    } else {
      ev.linear = detail::from_columns(cols, n);
      ev.linear_features = std::move(origins);
      ev.linear_roles = std::move(roles);
      ev.s_column_linear = 0;
    }
  }
  return ev;
}

// Fixed 6-decimal formatting for continuous cells keeps reruns byte-identical.
inline std::string dataset_csv(const Dataset& data) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(6);
  auto quote = [](const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
      if (c == '"') out += '"';
      out += c;
    }
    return out + "\"";
  };
  for (std::size_t j = 0; j < data.columns.size(); ++j)
    os << (j ? "," : "") << quote(data.columns[j].spec.name);
  os << "\n";
  for (std::size_t i = 0; i < data.n_rows(); ++i) {
    for (std::size_t j = 0; j < data.columns.size(); ++j) {
      const Column& c = data.columns[j];
      if (j) os << ",";
      if (c.is_categorical())
        os << quote(c.spec.levels[static_cast<std::size_t>(c.codes[i])]);
      else
        os << c.values[i];
    }
    os << "\n";
  }
  return os.str();
}

struct SplitResult {
  RoledDataset train;
  RoledDataset test;
  std::vector<std::size_t> train_idx;  // positions in the input dataset
  std::vector<std::size_t> test_idx;
  std::vector<std::string> warnings;
};

// Stratified holdout. Within each stratum round(test_fraction * n_stratum)
// rows go to test; strata smaller than 2 rows stay in train.
template <typename Label>
SplitResult split_stratified(const RoledDataset& data, double test_fraction,
                             const std::vector<Label>& strata, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw ConfigError("test_fraction must be in (0,1)");
  if (strata.size() != data.n_rows())
    throw ConfigError("strata labels must cover every row");

  std::map<Label, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < strata.size(); ++i) groups[strata[i]].push_back(i);

  SplitResult res;
  Rng rng(seed, /*stream=*/7);
  std::uint64_t gid = 0;
  for (auto& [label, idx] : groups) {
    Rng sub = rng.substream(gid++);
    if (idx.size() < 2) {
      std::ostringstream os;
      os << "stratum of size " << idx.size() << " assigned wholly to train";
      res.warnings.push_back(os.str());
      res.train_idx.insert(res.train_idx.end(), idx.begin(), idx.end());
      continue;
    }
    std::vector<std::size_t> shuffled = idx;
    sub.shuffle(shuffled);
    const std::size_t n_test = static_cast<std::size_t>(
        std::llround(test_fraction * static_cast<double>(idx.size())));
    for (std::size_t i = 0; i < shuffled.size(); ++i)
      (i < n_test ? res.test_idx : res.train_idx).push_back(shuffled[i]);
  }
  std::sort(res.train_idx.begin(), res.train_idx.end());
  std::sort(res.test_idx.begin(), res.test_idx.end());
  res.train = data.select_rows(res.train_idx);
  res.test = data.select_rows(res.test_idx);
  return res;
}

}  // namespace causalaudit
