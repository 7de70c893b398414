#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "causalaudit/common.hpp"
#include "causalaudit/dataset.hpp"
#include "causalaudit/learners.hpp"
#include "causalaudit/rng.hpp"

#include <json.hpp>

namespace causalaudit {

struct EffectEstimate {
  double point = 0.0;
  double ci_low = std::numeric_limits<double>::quiet_NaN();
  double ci_high = std::numeric_limits<double>::quiet_NaN();
  double std_error = std::numeric_limits<double>::quiet_NaN();
  std::size_t n_bootstrap = 0;

  bool has_ci() const { return n_bootstrap >= 2; }
};

struct DecomposeConfig {
  LearnerSpec mu_spec;   // outcome regression y ~ (S, X, M)
  LearnerSpec nu_spec;   // nested regression mu-hat ~ X
  std::size_t k = 5;
  std::size_t n_bootstrap = 100;
  std::uint64_t seed = 42;
  std::size_t threads = 1;

  static DecomposeConfig defaults() {
    DecomposeConfig c;
    c.mu_spec.kind = BoostedStumpsSpec{200, 0.1, 3};
    c.mu_spec.objective = Objective::Logistic;
    c.nu_spec.kind = BoostedStumpsSpec{200, 0.1, 3};
    c.nu_spec.objective = Objective::SquaredError;
    return c;
  }
};

struct EffectPoints {
  double tv = 0.0, ctf_de = 0.0, ctf_ie = 0.0, ctf_se = 0.0, nde = 0.0, nie = 0.0;
};

struct DecompositionResult {
  EffectEstimate tv, ctf_de, ctf_ie, ctf_se, nde, nie;
  std::string baseline;  // s1 description
  DecomposeConfig config;
  std::size_t n_rows = 0;
};

inline EffectEstimate total_variation(const RoledDataset& data) {
  double sum1 = 0.0, sum0 = 0.0;
  std::size_t n1 = 0, n0 = 0;
  for (std::size_t i = 0; i < data.n_rows(); ++i) {
    if (data.s[i] == 1.0) {
      sum1 += data.y[i];
      ++n1;
    } else {
      sum0 += data.y[i];
      ++n0;
    }
  }
  if (n0 == 0 || n1 == 0) throw DataError("total_variation: a sensitive group is empty");
  EffectEstimate e;
  e.point = sum1 / static_cast<double>(n1) - sum0 / static_cast<double>(n0);
  return e;
}

namespace detail {

// Per-fold fit of y ~ (S, X, M) scored at both counterfactual S values for
// every row.
inline void mu_cross_fit(const Matrix& x_full, std::size_t s_col, const std::vector<double>& y,
                         const LearnerSpec& spec, const CrossFitPlan& plan,
                         std::vector<double>& mu_s1, std::vector<double>& mu_s2) {
  const std::size_t n = x_full.rows;
  mu_s1.assign(n, 0.0);
  mu_s2.assign(n, 0.0);
  std::vector<double> row(x_full.cols);
  for (std::size_t f = 0; f < plan.k; ++f) {
    std::vector<std::size_t> train_rows, test_rows;
    for (std::size_t i = 0; i < n; ++i)
      (plan.fold_of[i] == f ? test_rows : train_rows).push_back(i);
    if (train_rows.size() < 2) throw ConfigError("decompose: fold with < 2 training rows");
    Matrix xt = x_full.select_rows(train_rows);
    std::vector<double> yt = select(y, train_rows);
    FittedModel m = fit(xt, yt, spec, plan.seed + 1000 * (f + 1));
    for (std::size_t i : test_rows) {
      std::copy(x_full.row_ptr(i), x_full.row_ptr(i) + x_full.cols, row.begin());
      row[s_col] = 0.0;
      mu_s1[i] = m.predict_row(row.data());
      row[s_col] = 1.0;
      mu_s2[i] = m.predict_row(row.data());
    }
  }
}

// Regression of targets on x restricted to rows of one sensitive group; the
// model trained on the group's rows outside fold f scores every row in fold f.
inline std::vector<double> group_cross_fit(const Matrix& x, const std::vector<double>& targets,
                                           const std::vector<double>& s, double group,
                                           const LearnerSpec& spec, const CrossFitPlan& plan,
                                           std::uint64_t seed_offset) {
  const std::size_t n = x.rows;
  std::vector<double> out(n, 0.0);
  for (std::size_t f = 0; f < plan.k; ++f) {
    std::vector<std::size_t> train_rows, test_rows;
    for (std::size_t i = 0; i < n; ++i) {
      if (plan.fold_of[i] == f)
        test_rows.push_back(i);
      else if (s[i] == group)
        train_rows.push_back(i);
    }
    if (train_rows.size() < 2)
      throw ConfigError("decompose: nested regression fold with < 2 group rows");
    Matrix xt = x.select_rows(train_rows);
    std::vector<double> yt = select(targets, train_rows);
    FittedModel m = fit(xt, yt, spec, plan.seed + seed_offset + 1000 * (f + 1));
    for (std::size_t i : test_rows) out[i] = m.predict_row(x.row_ptr(i));
  }
  return out;
}

inline EffectPoints decompose_points(const RoledDataset& data, const DecomposeConfig& cfg,
                                     std::uint64_t seed) {
  const std::size_t n = data.n_rows();
  EncodedView ev = encode(data);
  const Matrix& x_full = ev.tree;

  // confounder-only design
  std::vector<std::size_t> conf_cols;
  for (std::size_t j = 0; j < ev.tree_roles.size(); ++j)
    if (ev.tree_roles[j] == FeatureRole::Confounder) conf_cols.push_back(j);
  Matrix xc(n, conf_cols.size());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < conf_cols.size(); ++j) xc(i, j) = x_full(i, conf_cols[j]);

  LearnerSpec mu_spec = cfg.mu_spec;
  if (!causalaudit::is_binary(data.y)) mu_spec.objective = Objective::SquaredError;

  CrossFitPlan plan = CrossFitPlan::make(n, cfg.k, seed);

  std::vector<double> mu1, mu2;
  mu_cross_fit(x_full, ev.s_column_tree, data.y, mu_spec, plan, mu1, mu2);

  // nested regressions: nu_{ab} = E[mu_a(X,M) | X, S=b]
  std::vector<double> nu22 = group_cross_fit(xc, mu2, data.s, 1.0, cfg.nu_spec, plan, 101);
  std::vector<double> nu21 = group_cross_fit(xc, mu2, data.s, 0.0, cfg.nu_spec, plan, 202);
  std::vector<double> nu11 = group_cross_fit(xc, mu1, data.s, 0.0, cfg.nu_spec, plan, 303);
  std::vector<double> nu12 = group_cross_fit(xc, mu1, data.s, 1.0, cfg.nu_spec, plan, 404);

  double a_sum = 0.0, b_sum = 0.0;
  std::size_t n1 = 0, n0 = 0;
  double mu2_s1 = 0.0, nu22_s1 = 0.0;
  double nde_num = 0.0, nie_num = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (data.s[i] == 1.0) {
      a_sum += data.y[i];
      ++n1;
    } else {
      b_sum += data.y[i];
      ++n0;
      mu2_s1 += mu2[i];
      nu22_s1 += nu22[i];
    }
    nde_num += nu21[i] - nu11[i];
    nie_num += nu12[i] - nu11[i];
  }
  if (n0 == 0 || n1 == 0) throw DataError("decompose: a sensitive group is empty");
  const double A = a_sum / static_cast<double>(n1);
  const double B = b_sum / static_cast<double>(n0);
  mu2_s1 /= static_cast<double>(n0);
  nu22_s1 /= static_cast<double>(n0);

  EffectPoints pts;
  pts.ctf_de = mu2_s1 - B;
  pts.ctf_ie = mu2_s1 - nu22_s1;
  pts.ctf_se = nu22_s1 - A;
  pts.tv = A - B;
  pts.nde = nde_num / static_cast<double>(n);
  pts.nie = nie_num / static_cast<double>(n);
  return pts;
}

inline EffectEstimate summarize(double point, std::vector<double> replicates) {
  EffectEstimate e;
  e.point = point;
  e.n_bootstrap = replicates.size();
  if (replicates.size() >= 2) {
    e.std_error = stddev(replicates);
    std::sort(replicates.begin(), replicates.end());
    auto quantile = [&](double q) {
      const double pos = q * static_cast<double>(replicates.size() - 1);
      const std::size_t lo = static_cast<std::size_t>(pos);
      const std::size_t hi = std::min(lo + 1, replicates.size() - 1);
      const double frac = pos - static_cast<double>(lo);
      return replicates[lo] * (1.0 - frac) + replicates[hi] * frac;
    };
    e.ci_low = std::min(quantile(0.025), point);
    e.ci_high = std::max(quantile(0.975), point);
  }
  return e;
}

}  // namespace detail

inline DecompositionResult estimate_decomposition(const RoledDataset& data,
                                                  const DecomposeConfig& cfg) {
  if (cfg.k < 2) throw ConfigError("estimate_decomposition: k must be >= 2");
  const std::size_t n = data.n_rows();

  EffectPoints point = detail::decompose_points(data, cfg, cfg.seed);

  std::vector<EffectPoints> reps(cfg.n_bootstrap);
  if (cfg.n_bootstrap > 0) {
    Rng boot_root = Rng(cfg.seed).substream("bootstrap");
    auto run_replicate = [&](std::size_t r) {
      Rng rep_rng = boot_root.substream(r);
      std::vector<std::size_t> idx(n);
      for (std::size_t i = 0; i < n; ++i) idx[i] = rep_rng.uniform_int(n);
      RoledDataset resampled = data.select_rows(idx);
      reps[r] = detail::decompose_points(resampled, cfg, cfg.seed ^ (0x5bd1e995ULL * (r + 1)));
    };
    const std::size_t workers = std::max<std::size_t>(1, cfg.threads);
    if (workers == 1) {
      for (std::size_t r = 0; r < cfg.n_bootstrap; ++r) run_replicate(r);
    } else {
      std::vector<std::thread> pool;
      std::atomic<std::size_t> next{0};
      for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&] {
          for (;;) {
            const std::size_t r = next.fetch_add(1);
            if (r >= cfg.n_bootstrap) return;
            run_replicate(r);
          }
        });
      for (auto& t : pool) t.join();
    }
  }

  auto collect = [&](double EffectPoints::*field, double p) {
    std::vector<double> vals;
    vals.reserve(reps.size());
    for (const auto& rp : reps) vals.push_back(rp.*field);
    return detail::summarize(p, std::move(vals));
  };

  DecompositionResult res;
  res.tv = collect(&EffectPoints::tv, point.tv);
  res.ctf_de = collect(&EffectPoints::ctf_de, point.ctf_de);
  res.ctf_ie = collect(&EffectPoints::ctf_ie, point.ctf_ie);
  res.ctf_se = collect(&EffectPoints::ctf_se, point.ctf_se);
  res.nde = collect(&EffectPoints::nde, point.nde);
  res.nie = collect(&EffectPoints::nie, point.nie);
  res.config = cfg;
  res.n_rows = n;
  {
    std::ostringstream os;
    os << data.schema.sensitive << " in {";
    for (std::size_t i = 0; i < data.schema.s1_levels.size(); ++i)
      os << (i ? ", " : "") << data.schema.s1_levels[i];
    os << "}";
    res.baseline = os.str();
  }
  return res;
}

// ---------------------------------------------------------------------------
// reporting

inline std::string format_effect(const EffectEstimate& e) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(6);
  os << e.point;
  if (e.has_ci())
    os << " (" << e.std_error << ")";
  else
    os << " (n/a)";
  return os.str();
}

inline nlohmann::json to_json(const EffectEstimate& e) {
  nlohmann::json j{{"point", e.point}, {"n_bootstrap", e.n_bootstrap}};
  if (e.has_ci()) {
    j["ci_low"] = e.ci_low;
    j["ci_high"] = e.ci_high;
    j["std_error"] = e.std_error;
  } else {
    j["ci_low"] = nullptr;
    j["ci_high"] = nullptr;
    j["std_error"] = nullptr;
  }
  return j;
}

inline nlohmann::json to_json(const DecompositionResult& r) {
  return nlohmann::json{
      {"n_rows", r.n_rows},
      {"baseline_s1", r.baseline},
      {"tv", to_json(r.tv)},
      {"ctf_de", to_json(r.ctf_de)},
      {"ctf_ie", to_json(r.ctf_ie)},
      {"ctf_se", to_json(r.ctf_se)},
      {"nde", to_json(r.nde)},
      {"nie", to_json(r.nie)},
      {"additivity_residual", r.tv.point - (r.ctf_de.point - r.ctf_ie.point - r.ctf_se.point)},
  };
}

// one row per effect, for plotting
inline std::string decomposition_csv(const DecompositionResult& r) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(6);
  os << "effect,point,ci_low,ci_high,std_error,n_bootstrap\n";
  auto row = [&](const char* name, const EffectEstimate& e) {
    os << name << "," << e.point << ",";
    if (e.has_ci())
      os << e.ci_low << "," << e.ci_high << "," << e.std_error;
    else
      os << ",,";
    os << "," << e.n_bootstrap << "\n";
  };
  row("tv", r.tv);
  row("ctf_de", r.ctf_de);
  row("ctf_ie", r.ctf_ie);
  row("ctf_se", r.ctf_se);
  row("nde", r.nde);
  row("nie", r.nie);
  return os.str();
}

}  // namespace causalaudit
