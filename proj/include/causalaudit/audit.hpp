#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "causalaudit/common.hpp"
#include "causalaudit/dataset.hpp"
#include "causalaudit/decompose.hpp"
#include "causalaudit/learners.hpp"
#include "causalaudit/subgroup.hpp"

#include <json.hpp>

namespace causalaudit {

struct Prediction {
  std::size_t row_id = 0;
  int predicted = 0;
  int actual = 0;
};

struct PredictionSet {
  std::vector<Prediction> rows;
};

struct ConfusionCounts {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  std::size_t total() const { return tp + fp + fn + tn; }
  void add(int predicted, int actual) {
    if (predicted && actual)
      ++tp;
    else if (predicted && !actual)
      ++fp;
    else if (!predicted && actual)
      ++fn;
    else
      ++tn;
  }
};

// precision undefined iff no predicted positives; recall undefined iff no
// actual positives
struct MetricTriple {
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> accuracy;

  static MetricTriple from_counts(const ConfusionCounts& c) {
    MetricTriple m;
    if (c.tp + c.fp > 0) m.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
    if (c.tp + c.fn > 0) m.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    if (c.total() > 0)
      m.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
    return m;
  }
};

struct MetricInterval {
  std::optional<double> point;
  std::optional<double> ci_low, ci_high;
};

struct MetricCell {
  ConfusionCounts counts;
  MetricInterval precision, recall, accuracy;
};

struct GapTriple {
  MetricInterval precision, recall, accuracy;
};

struct AuditReport {
  MetricCell overall;
  std::vector<MetricCell> per_group;                       // by sub-group
  std::vector<std::array<MetricCell, 2>> per_group_cat;    // [group][s1=0,s2=1]
  std::vector<GapTriple> gaps;                             // s2 - s1 per group
  double positive_gap_fraction = 0.0;
  std::vector<std::string> group_labels;
  std::size_t n_bootstrap = 0;
};

inline FittedModel train_baseline(const RoledDataset& train, const LearnerSpec& spec,
                                  std::uint64_t seed) {
  EncodedView ev = encode(train);
  LearnerSpec s = spec;
  s.objective = Objective::Logistic;
  return fit(ev.tree, train.y, s, seed);
}

inline PredictionSet predict_labels(const FittedModel& model, const RoledDataset& test,
                                    double threshold = 0.5) {
  EncodedView ev = encode(test);
  std::vector<double> p = predict(model, ev.tree);
  PredictionSet ps;
  ps.rows.reserve(test.n_rows());
  for (std::size_t i = 0; i < test.n_rows(); ++i)
    ps.rows.push_back({test.data.row_ids[i], p[i] >= threshold ? 1 : 0,
                       test.y[i] == 1.0 ? 1 : 0});
  return ps;
}

namespace detail {

inline void percentile_interval(std::vector<double>& v, MetricInterval& out) {
  if (v.size() < 2) return;
  std::sort(v.begin(), v.end());
  auto q = [&](double p) {
    const double pos = p * static_cast<double>(v.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] * (1.0 - (pos - lo)) + v[hi] * (pos - lo);
  };
  out.ci_low = q(0.025);
  out.ci_high = q(0.975);
}

inline MetricCell bootstrap_cell(const std::vector<std::size_t>& members,
                                 const std::vector<int>& pred, const std::vector<int>& act,
                                 std::size_t n_bootstrap, Rng cell_rng) {
  MetricCell cell;
  for (std::size_t i : members) cell.counts.add(pred[i], act[i]);
  MetricTriple pt = MetricTriple::from_counts(cell.counts);
  cell.precision.point = pt.precision;
  cell.recall.point = pt.recall;
  cell.accuracy.point = pt.accuracy;

  if (n_bootstrap >= 2 && !members.empty()) {
    std::vector<double> bp, br, ba;
    for (std::size_t rep = 0; rep < n_bootstrap; ++rep) {
      Rng rng = cell_rng.substream(rep);
      ConfusionCounts c;
      for (std::size_t k = 0; k < members.size(); ++k) {
        const std::size_t i = members[rng.uniform_int(members.size())];
        c.add(pred[i], act[i]);
      }
      MetricTriple m = MetricTriple::from_counts(c);
      if (m.precision) bp.push_back(*m.precision);
      if (m.recall) br.push_back(*m.recall);
      if (m.accuracy) ba.push_back(*m.accuracy);
    }
    percentile_interval(bp, cell.precision);
    percentile_interval(br, cell.recall);
    percentile_interval(ba, cell.accuracy);
  }
  return cell;
}

}  // namespace detail

inline AuditReport evaluate(const PredictionSet& preds, const SubgroupAssignment& assignment,
                            const RoledDataset& data, std::size_t n_bootstrap,
                            std::uint64_t seed) {
  const std::size_t n = data.n_rows();
  if (assignment.group.size() != n) throw ConfigError("evaluate: assignment does not cover data");

  // map row_id -> position in data
  std::vector<int> pred(n, 0), act(n, 0);
  std::vector<bool> covered(n, false);
  {
    std::size_t max_id = 0;
    for (std::size_t id : data.data.row_ids) max_id = std::max(max_id, id);
    std::vector<std::size_t> pos(max_id + 1, static_cast<std::size_t>(-1));
    for (std::size_t i = 0; i < n; ++i) pos[data.data.row_ids[i]] = i;
    for (const auto& p : preds.rows) {
      if (p.row_id > max_id || pos[p.row_id] == static_cast<std::size_t>(-1))
        throw DataError("evaluate: prediction for unknown row_id " + std::to_string(p.row_id));
      const std::size_t i = pos[p.row_id];
      if (covered[i]) throw DataError("evaluate: duplicate prediction for row_id " +
                                      std::to_string(p.row_id));
      covered[i] = true;
      pred[i] = p.predicted;
      act[i] = p.actual;
    }
  }
  for (std::size_t i = 0; i < n; ++i)
    if (!covered[i]) throw DataError("evaluate: predictions do not cover all test rows");

  const std::size_t G = assignment.spec.n_groups();
  AuditReport rep;
  rep.n_bootstrap = n_bootstrap;
  rep.group_labels = assignment.spec.labels;

  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;
  Rng root = Rng(seed).substream("audit");
  rep.overall = detail::bootstrap_cell(all, pred, act, n_bootstrap, root.substream("overall"));

  std::size_t defined_gaps = 0, positive_gaps = 0;
  for (std::size_t g = 0; g < G; ++g) {
    std::vector<std::size_t> members, m_s1, m_s2;
    for (std::size_t i = 0; i < n; ++i) {
      if (assignment.group[i] != g) continue;
      members.push_back(i);
      (data.s[i] == 1.0 ? m_s2 : m_s1).push_back(i);
    }
    Rng grng = root.substream(g + 1);
    rep.per_group.push_back(
        detail::bootstrap_cell(members, pred, act, n_bootstrap, grng.substream(0)));
    std::array<MetricCell, 2> cats{
        detail::bootstrap_cell(m_s1, pred, act, n_bootstrap, grng.substream(1)),
        detail::bootstrap_cell(m_s2, pred, act, n_bootstrap, grng.substream(2))};

    MetricTriple t1 = MetricTriple::from_counts(cats[0].counts);
    MetricTriple t2 = MetricTriple::from_counts(cats[1].counts);
    GapTriple gap;
    auto diff = [&](const std::optional<double>& a, const std::optional<double>& b)
        -> std::optional<double> {
      if (a && b) return *b - *a;  // s2 - s1
      return std::nullopt;
    };
    gap.precision.point = diff(t1.precision, t2.precision);
    gap.recall.point = diff(t1.recall, t2.recall);
    gap.accuracy.point = diff(t1.accuracy, t2.accuracy);

    // gap CIs: resample the whole group, split by category per replicate
    if (n_bootstrap >= 2 && !m_s1.empty() && !m_s2.empty()) {
      Rng gap_rng = grng.substream(3);
      std::vector<double> gp, gr, ga;
      for (std::size_t rep_i = 0; rep_i < n_bootstrap; ++rep_i) {
        Rng rng = gap_rng.substream(rep_i);
        ConfusionCounts c1, c2;
        for (std::size_t k = 0; k < members.size(); ++k) {
          const std::size_t i = members[rng.uniform_int(members.size())];
          (data.s[i] == 1.0 ? c2 : c1).add(pred[i], act[i]);
        }
        MetricTriple r1 = MetricTriple::from_counts(c1);
        MetricTriple r2 = MetricTriple::from_counts(c2);
        if (auto v = diff(r1.precision, r2.precision)) gp.push_back(*v);
        if (auto v = diff(r1.recall, r2.recall)) gr.push_back(*v);
        if (auto v = diff(r1.accuracy, r2.accuracy)) ga.push_back(*v);
      }
      detail::percentile_interval(gp, gap.precision);
      detail::percentile_interval(gr, gap.recall);
      detail::percentile_interval(ga, gap.accuracy);
    }

    for (const auto* v : {&gap.precision, &gap.recall, &gap.accuracy}) {
      if (!v->point) continue;
      ++defined_gaps;
      if (*v->point > 0.0) ++positive_gaps;
    }
    rep.per_group_cat.push_back(std::move(cats));
    rep.gaps.push_back(gap);
  }
  rep.positive_gap_fraction =
      defined_gaps ? static_cast<double>(positive_gaps) / static_cast<double>(defined_gaps) : 0.0;
  return rep;
}

// CI alternative to per-cell bootstrap: retrain the baseline n_reruns times
// with distinct seeds and take percentile intervals of each cell metric
// across reruns. Point estimates come from the canonical model (seed itself).
inline AuditReport evaluate_reruns(const RoledDataset& train, const RoledDataset& test,
                                   const SubgroupAssignment& assignment,
                                   const LearnerSpec& baseline_spec, std::size_t n_reruns,
                                   std::uint64_t seed) {
  FittedModel canonical = train_baseline(train, baseline_spec, seed);
  AuditReport rep = evaluate(predict_labels(canonical, test), assignment, test, 0, seed);
  rep.n_bootstrap = n_reruns;
  if (n_reruns < 2) return rep;

  struct CellSamples {
    std::vector<double> precision, recall, accuracy;
  };
  const std::size_t n_cells = 1 + 3 * assignment.spec.n_groups();
  std::vector<CellSamples> samples(n_cells);
  std::vector<CellSamples> gap_samples(assignment.spec.n_groups());

  Rng root = Rng(seed).substream("reruns");
  for (std::size_t r = 0; r < n_reruns; ++r) {
    FittedModel m = train_baseline(train, baseline_spec, root.substream(r).next_u64());
    AuditReport rr = evaluate(predict_labels(m, test), assignment, test, 0, seed);
    auto push = [&](std::size_t cell, const MetricCell& c) {
      if (c.precision.point) samples[cell].precision.push_back(*c.precision.point);
      if (c.recall.point) samples[cell].recall.push_back(*c.recall.point);
      if (c.accuracy.point) samples[cell].accuracy.push_back(*c.accuracy.point);
    };
    push(0, rr.overall);
    for (std::size_t g = 0; g < assignment.spec.n_groups(); ++g) {
      push(1 + 3 * g, rr.per_group[g]);
      push(2 + 3 * g, rr.per_group_cat[g][0]);
      push(3 + 3 * g, rr.per_group_cat[g][1]);
      if (rr.gaps[g].precision.point)
        gap_samples[g].precision.push_back(*rr.gaps[g].precision.point);
      if (rr.gaps[g].recall.point) gap_samples[g].recall.push_back(*rr.gaps[g].recall.point);
      if (rr.gaps[g].accuracy.point) gap_samples[g].accuracy.push_back(*rr.gaps[g].accuracy.point);
    }
  }

  auto apply = [&](CellSamples& s, MetricCell& c) {
    detail::percentile_interval(s.precision, c.precision);
    detail::percentile_interval(s.recall, c.recall);
    detail::percentile_interval(s.accuracy, c.accuracy);
  };
  apply(samples[0], rep.overall);
  for (std::size_t g = 0; g < assignment.spec.n_groups(); ++g) {
    apply(samples[1 + 3 * g], rep.per_group[g]);
    apply(samples[2 + 3 * g], rep.per_group_cat[g][0]);
    apply(samples[3 + 3 * g], rep.per_group_cat[g][1]);
    detail::percentile_interval(gap_samples[g].precision, rep.gaps[g].precision);
    detail::percentile_interval(gap_samples[g].recall, rep.gaps[g].recall);
    detail::percentile_interval(gap_samples[g].accuracy, rep.gaps[g].accuracy);
  }
  return rep;
}

struct GapEntry {
  std::string group;
  std::string metric;
  double gap = 0.0;
};

struct GapSummary {
  std::vector<GapEntry> sorted_by_magnitude;
  double positive_fraction = 0.0;
  std::vector<std::pair<std::string, std::string>> largest_gap_group;  // metric -> group
};

inline GapSummary gap_analysis(const AuditReport& report) {
  GapSummary gs;
  gs.positive_fraction = report.positive_gap_fraction;
  const char* metric_names[3] = {"precision", "recall", "accuracy"};
  std::array<std::optional<std::pair<double, std::string>>, 3> largest;
  bool any = false;
  for (std::size_t g = 0; g < report.gaps.size(); ++g) {
    const auto& gap = report.gaps[g];
    const std::optional<double> vals[3] = {gap.precision.point, gap.recall.point,
                                           gap.accuracy.point};
    for (int m = 0; m < 3; ++m) {
      if (!vals[m]) continue;
      any = true;
      gs.sorted_by_magnitude.push_back({report.group_labels[g], metric_names[m], *vals[m]});
      if (!largest[m] || std::abs(*vals[m]) > largest[m]->first)
        largest[m] = {std::abs(*vals[m]), report.group_labels[g]};
    }
  }
  if (!any) throw DataError("gap_analysis: no defined gaps");
  std::stable_sort(gs.sorted_by_magnitude.begin(), gs.sorted_by_magnitude.end(),
                   [](const GapEntry& a, const GapEntry& b) {
                     return std::abs(a.gap) > std::abs(b.gap);
                   });
  for (int m = 0; m < 3; ++m)
    if (largest[m]) gs.largest_gap_group.emplace_back(metric_names[m], largest[m]->second);
  return gs;
}

// ---------------------------------------------------------------------------
// serialization

inline std::string predictions_csv(const PredictionSet& ps) {
  std::ostringstream os;
  os << "row_id,predicted,actual\n";
  for (const auto& p : ps.rows) os << p.row_id << "," << p.predicted << "," << p.actual << "\n";
  return os.str();
}

inline PredictionSet load_predictions_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open predictions file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty predictions file");
  PredictionSet ps;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream is(line);
    std::string a, b, c;
    if (!std::getline(is, a, ',') || !std::getline(is, b, ',') || !std::getline(is, c, ','))
      throw DataError("predictions row " + std::to_string(lineno) + ": expected 3 fields");
    ps.rows.push_back({static_cast<std::size_t>(std::stoull(a)), std::stoi(b), std::stoi(c)});
  }
  return ps;
}

namespace detail {

inline nlohmann::json interval_json(const MetricInterval& m) {
  nlohmann::json j;
  j["point"] = m.point ? nlohmann::json(*m.point) : nlohmann::json(nullptr);
  j["ci_low"] = m.ci_low ? nlohmann::json(*m.ci_low) : nlohmann::json(nullptr);
  j["ci_high"] = m.ci_high ? nlohmann::json(*m.ci_high) : nlohmann::json(nullptr);
  return j;
}

inline nlohmann::json cell_json(const MetricCell& c) {
  return nlohmann::json{
      {"counts", {{"tp", c.counts.tp}, {"fp", c.counts.fp}, {"fn", c.counts.fn}, {"tn", c.counts.tn}}},
      {"precision", interval_json(c.precision)},
      {"recall", interval_json(c.recall)},
      {"accuracy", interval_json(c.accuracy)}};
}

}  // namespace detail

inline nlohmann::json to_json(const AuditReport& r) {
  nlohmann::json groups = nlohmann::json::array();
  for (std::size_t g = 0; g < r.per_group.size(); ++g) {
    nlohmann::json jg;
    jg["label"] = r.group_labels[g];
    jg["all"] = detail::cell_json(r.per_group[g]);
    jg["s1"] = detail::cell_json(r.per_group_cat[g][0]);
    jg["s2"] = detail::cell_json(r.per_group_cat[g][1]);
    jg["gap"] = {{"precision", detail::interval_json(r.gaps[g].precision)},
                 {"recall", detail::interval_json(r.gaps[g].recall)},
                 {"accuracy", detail::interval_json(r.gaps[g].accuracy)}};
    groups.push_back(jg);
  }
  return nlohmann::json{{"overall", detail::cell_json(r.overall)},
                        {"groups", groups},
                        {"positive_gap_fraction", r.positive_gap_fraction},
                        {"n_bootstrap", r.n_bootstrap}};
}

// plot-data: group,metric,gap
inline std::string gaps_csv(const AuditReport& r) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(6);
  os << "group,metric,gap,ci_low,ci_high\n";
  const char* names[3] = {"precision", "recall", "accuracy"};
  for (std::size_t g = 0; g < r.gaps.size(); ++g) {
    const MetricInterval* vals[3] = {&r.gaps[g].precision, &r.gaps[g].recall,
                                     &r.gaps[g].accuracy};
    for (int m = 0; m < 3; ++m) {
      if (!vals[m]->point) continue;
      os << r.group_labels[g] << "," << names[m] << "," << *vals[m]->point << ",";
      if (vals[m]->ci_low) os << *vals[m]->ci_low;
      os << ",";
      if (vals[m]->ci_high) os << *vals[m]->ci_high;
      os << "\n";
    }
  }
  return os.str();
}

inline std::string audit_csv(const AuditReport& r) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(6);
  os << "cell,metric,point,ci_low,ci_high,tp,fp,fn,tn\n";
  auto emit = [&](const std::string& name, const MetricCell& c) {
    const std::pair<const char*, const MetricInterval*> metrics[3] = {
        {"precision", &c.precision}, {"recall", &c.recall}, {"accuracy", &c.accuracy}};
    for (const auto& [mn, mi] : metrics) {
      os << name << "," << mn << ",";
      if (mi->point) os << *mi->point;
      os << ",";
      if (mi->ci_low) os << *mi->ci_low;
      os << ",";
      if (mi->ci_high) os << *mi->ci_high;
      os << "," << c.counts.tp << "," << c.counts.fp << "," << c.counts.fn << "," << c.counts.tn
         << "\n";
    }
  };
  emit("overall", r.overall);
  for (std::size_t g = 0; g < r.per_group.size(); ++g) {
    emit(r.group_labels[g], r.per_group[g]);
    emit(r.group_labels[g] + "/s1", r.per_group_cat[g][0]);
    emit(r.group_labels[g] + "/s2", r.per_group_cat[g][1]);
  }
  return os.str();
}

}  // namespace causalaudit
