#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "causalaudit/common.hpp"
#include "causalaudit/dataset.hpp"
#include "causalaudit/forest.hpp"

#include <json.hpp>

namespace causalaudit {

struct BinningSpec {
  std::vector<double> thresholds;  // strictly ascending
  std::vector<std::string> labels;

  static BinningSpec make(std::vector<double> thresholds, std::vector<std::string> labels = {}) {
    BinningSpec s;
    s.thresholds = std::move(thresholds);
    if (labels.empty())
      for (std::size_t g = 0; g <= s.thresholds.size(); ++g)
        s.labels.push_back("Sub-group " + std::to_string(g + 1));
    else
      s.labels = std::move(labels);
    s.validate();
    return s;
  }

  void validate() const {
    if (labels.size() != thresholds.size() + 1)
      throw ConfigError("binning: need one more label than thresholds");
    for (std::size_t i = 1; i < thresholds.size(); ++i)
      if (!(thresholds[i - 1] < thresholds[i]))
        throw ConfigError("binning: thresholds must be strictly ascending");
  }

  std::size_t n_groups() const { return labels.size(); }
};

struct SubgroupAssignment {
  std::vector<std::size_t> group;  // per row, 0-based
  BinningSpec spec;
};

// Intervals are [t_{k-1}, t_k): a value equal to a threshold joins the group
// above it.
inline SubgroupAssignment assign(const IndividualEffects& effects, const BinningSpec& spec) {
  spec.validate();
  SubgroupAssignment out;
  out.spec = spec;
  out.group.reserve(effects.tau.size());
  for (double tau : effects.tau) {
    if (!std::isfinite(tau)) throw DataError("assign: non-finite effect value");
    // group index = number of thresholds <= tau, so tau == t_k joins the bin above
    const std::size_t g = static_cast<std::size_t>(
        std::upper_bound(spec.thresholds.begin(), spec.thresholds.end(), tau) -
        spec.thresholds.begin());
    out.group.push_back(g);
  }
  return out;
}

struct LevelShare {
  std::string level;
  std::size_t count = 0;
  double percent = 0.0;
};

struct CategoricalCell {
  bool empty = true;
  LevelShare majority;
  LevelShare minority;  // least-frequent observed level
};

struct ContinuousCell {
  bool empty = true;
  double mean = 0.0;
  double sd = 0.0;
};

struct SubgroupSummary {
  BinningSpec spec;
  std::vector<std::size_t> group_sizes;
  // [group][category(s1=0,s2=1)]
  std::vector<std::array<std::size_t, 2>> counts;
  // [group][category][variable name]
  std::vector<std::array<std::map<std::string, CategoricalCell>, 2>> categorical;
  std::vector<std::array<std::map<std::string, ContinuousCell>, 2>> continuous;
  std::vector<double> group_tv;  // NaN when a sensitive group is empty in the sub-group
};

inline SubgroupSummary summarize(const RoledDataset& data, const SubgroupAssignment& assignment) {
  const std::size_t n = data.n_rows();
  if (assignment.group.size() != n) throw ConfigError("summarize: assignment does not cover data");
  const std::size_t G = assignment.spec.n_groups();

  SubgroupSummary sm;
  sm.spec = assignment.spec;
  sm.group_sizes.assign(G, 0);
  sm.counts.assign(G, {0, 0});
  sm.categorical.resize(G);
  sm.continuous.resize(G);
  sm.group_tv.assign(G, std::numeric_limits<double>::quiet_NaN());

  // variables summarized: everything except the sensitive and outcome columns
  std::vector<const Column*> vars;
  for (const auto& col : data.data.columns) {
    if (col.spec.name == data.schema.sensitive || col.spec.name == data.schema.outcome) continue;
    vars.push_back(&col);
  }

  for (std::size_t g = 0; g < G; ++g) {
    std::array<std::vector<std::size_t>, 2> rows;
    for (std::size_t i = 0; i < n; ++i) {
      if (assignment.group[i] != g) continue;
      ++sm.group_sizes[g];
      rows[data.s[i] == 1.0 ? 1 : 0].push_back(i);
    }
    sm.counts[g] = {rows[0].size(), rows[1].size()};

    for (int cat = 0; cat < 2; ++cat) {
      for (const Column* col : vars) {
        if (col->is_categorical()) {
          CategoricalCell cell;
          if (!rows[cat].empty()) {
            std::vector<std::size_t> freq(col->spec.levels.size(), 0);
            for (std::size_t i : rows[cat]) ++freq[static_cast<std::size_t>(col->codes[i])];
            std::size_t maj = 0, min_lv = col->spec.levels.size();
            for (std::size_t k = 0; k < freq.size(); ++k) {
              if (freq[k] > freq[maj]) maj = k;
              if (freq[k] > 0 && (min_lv == col->spec.levels.size() || freq[k] < freq[min_lv]))
                min_lv = k;
            }
            const double denom = static_cast<double>(rows[cat].size());
            cell.empty = false;
            cell.majority = {col->spec.levels[maj], freq[maj], 100.0 * freq[maj] / denom};
            cell.minority = {col->spec.levels[min_lv], freq[min_lv],
                             100.0 * freq[min_lv] / denom};
          }
          sm.categorical[g][cat][col->spec.name] = cell;
        } else {
          ContinuousCell cell;
          if (!rows[cat].empty()) {
            std::vector<double> vals;
            vals.reserve(rows[cat].size());
            for (std::size_t i : rows[cat]) vals.push_back(col->values[i]);
            cell.empty = false;
            cell.mean = mean(vals);
            cell.sd = stddev(vals);
          }
          sm.continuous[g][cat][col->spec.name] = cell;
        }
      }
    }

    if (!rows[0].empty() && !rows[1].empty()) {
      double y1 = 0.0, y0 = 0.0;
      for (std::size_t i : rows[1]) y1 += data.y[i];
      for (std::size_t i : rows[0]) y0 += data.y[i];
      sm.group_tv[g] = y1 / static_cast<double>(rows[1].size()) -
                       y0 / static_cast<double>(rows[0].size());
    }
  }
  return sm;
}

struct HistogramRecord {
  double bin_width = 0.0;
  std::vector<double> bin_left;
  std::vector<std::size_t> count;
};

// bins aligned to multiples of bin_width covering [min, max]
inline HistogramRecord export_histogram(const IndividualEffects& effects, double bin_width) {
  if (!(bin_width > 0.0)) throw ConfigError("export_histogram: bin_width must be positive");
  HistogramRecord h;
  h.bin_width = bin_width;
  if (effects.tau.empty()) return h;
  double lo = effects.tau[0], hi = effects.tau[0];
  for (double t : effects.tau) {
    lo = std::min(lo, t);
    hi = std::max(hi, t);
  }
  const long long first = static_cast<long long>(std::floor(lo / bin_width));
  const long long last = static_cast<long long>(std::floor(hi / bin_width));
  const std::size_t nb = static_cast<std::size_t>(last - first + 1);
  h.bin_left.resize(nb);
  h.count.assign(nb, 0);
  for (std::size_t b = 0; b < nb; ++b)
    h.bin_left[b] = static_cast<double>(first + static_cast<long long>(b)) * bin_width;
  for (double t : effects.tau) {
    long long b = static_cast<long long>(std::floor(t / bin_width)) - first;
    if (b < 0) b = 0;
    if (b >= static_cast<long long>(nb)) b = static_cast<long long>(nb) - 1;
    ++h.count[static_cast<std::size_t>(b)];
  }
  return h;
}

inline std::string histogram_csv(const HistogramRecord& h) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(6);
  os << "bin_left,bin_right,count\n";
  for (std::size_t b = 0; b < h.bin_left.size(); ++b)
    os << h.bin_left[b] << "," << h.bin_left[b] + h.bin_width << "," << h.count[b] << "\n";
  return os.str();
}

inline nlohmann::json to_json(const SubgroupSummary& sm, const RoleSchema& schema) {
  nlohmann::json groups = nlohmann::json::array();
  const char* cat_names[2] = {"s1", "s2"};
  for (std::size_t g = 0; g < sm.spec.n_groups(); ++g) {
    nlohmann::json jg;
    jg["label"] = sm.spec.labels[g];
    jg["size"] = sm.group_sizes[g];
    jg["tv"] = std::isfinite(sm.group_tv[g]) ? nlohmann::json(sm.group_tv[g])
                                             : nlohmann::json(nullptr);
    for (int cat = 0; cat < 2; ++cat) {
      nlohmann::json jc;
      jc["count"] = sm.counts[g][cat];
      for (const auto& [name, cell] : sm.categorical[g][cat]) {
        if (cell.empty) {
          jc["categorical"][name] = nullptr;
        } else {
          jc["categorical"][name] = {
              {"majority", {{"level", cell.majority.level}, {"percent", cell.majority.percent}}},
              {"minority", {{"level", cell.minority.level}, {"percent", cell.minority.percent}}}};
        }
      }
      for (const auto& [name, cell] : sm.continuous[g][cat]) {
        if (cell.empty)
          jc["continuous"][name] = nullptr;
        else
          jc["continuous"][name] = {{"mean", cell.mean}, {"sd", cell.sd}};
      }
      jg[cat_names[cat]] = jc;
    }
    groups.push_back(jg);
  }
  return nlohmann::json{{"sensitive", schema.sensitive},
                        {"thresholds", sm.spec.thresholds},
                        {"groups", groups}};
}

// flat form: group,category,variable,statistic,value
inline std::string subgroup_csv(const SubgroupSummary& sm) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(6);
  os << "group,category,variable,statistic,value\n";
  const char* cat_names[2] = {"s1", "s2"};
  for (std::size_t g = 0; g < sm.spec.n_groups(); ++g) {
    os << sm.spec.labels[g] << ",," << ",size," << sm.group_sizes[g] << "\n";
    if (std::isfinite(sm.group_tv[g]))
      os << sm.spec.labels[g] << ",,,tv," << sm.group_tv[g] << "\n";
    for (int cat = 0; cat < 2; ++cat) {
      os << sm.spec.labels[g] << "," << cat_names[cat] << ",,count," << sm.counts[g][cat] << "\n";
      for (const auto& [name, cell] : sm.categorical[g][cat]) {
        if (cell.empty) continue;
        os << sm.spec.labels[g] << "," << cat_names[cat] << "," << name << ",majority,\""
           << cell.majority.level << " (" << cell.majority.percent << "%)\"\n";
        os << sm.spec.labels[g] << "," << cat_names[cat] << "," << name << ",minority,\""
           << cell.minority.level << " (" << cell.minority.percent << "%)\"\n";
      }
      for (const auto& [name, cell] : sm.continuous[g][cat]) {
        if (cell.empty) continue;
        os << sm.spec.labels[g] << "," << cat_names[cat] << "," << name << ",mean," << cell.mean
           << "\n";
        os << sm.spec.labels[g] << "," << cat_names[cat] << "," << name << ",sd," << cell.sd
           << "\n";
      }
    }
  }
  return os.str();
}

}  // namespace causalaudit
