// Acceptance checks: one PASS/FAIL/SKIP line per criterion. Returns nonzero
// iff a runnable criterion fails. Checks that need the census-income CSV are
// skipped with a diagnostic when data/adult.csv is absent.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "causalaudit/audit.hpp"
#include "causalaudit/config.hpp"
#include "causalaudit/decompose.hpp"
#include "causalaudit/forest.hpp"
#include "causalaudit/scm.hpp"
#include "causalaudit/subgroup.hpp"

using namespace causalaudit;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void pass(int c, const std::string& msg) { std::printf("PASS  %d. %s\n", c, msg.c_str()); }
void fail(int c, const std::string& msg) {
  std::printf("FAIL  %d. %s\n", c, msg.c_str());
  ++failures;
}
void skip(int c, const std::string& msg) { std::printf("SKIP  %d. %s\n", c, msg.c_str()); }
void note(const std::string& msg) { std::printf("      %s\n", msg.c_str()); }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

// Well-conditioned random tables: every (s, x, m) cell keeps enough mass that
// the +-0.01 tolerance at n=50,000 sits several sigma above the plug-in
// estimator's sampling noise.
DiscreteScm random_discrete(Rng& rng) {
  const std::size_t nx = 2 + rng.uniform_int(2);
  const std::size_t nm = 2 + rng.uniform_int(2);
  DiscreteScm s;
  auto simplex = [&](std::size_t k) {
    std::vector<double> v(k);
    double total = 0.0;
    for (double& p : v) {
      p = 0.5 + rng.uniform();
      total += p;
    }
    for (double& p : v) p /= total;
    return v;
  };
  s.p_x = simplex(nx);
  s.p_s_given_x.resize(nx);
  for (double& p : s.p_s_given_x) p = 0.35 + 0.3 * rng.uniform();
  s.p_m_given_sx.assign(2, std::vector<std::vector<double>>(nx));
  s.p_y_given_sxm.assign(2, std::vector<std::vector<double>>(nx));
  for (int g = 0; g < 2; ++g)
    for (std::size_t x = 0; x < nx; ++x) {
      s.p_m_given_sx[g][x] = simplex(nm);
      s.p_y_given_sxm[g][x].resize(nm);
      for (double& p : s.p_y_given_sxm[g][x]) p = 0.15 + 0.7 * rng.uniform();
    }
  return s;
}

// heterogeneous direct effect: p(y=1) = 0.3 + 0.4 * 1{x1 > 0} * s
RoledDataset heterogeneous_data(std::size_t n, std::uint64_t seed) {
  LinearScm scm;
  scm.x_dim = 2;
  scm.a = 0.0;
  scm.g = {0.0, 0.0};
  scm.b = 0.0;
  scm.d = 0.0;
  scm.t = {0.0, 0.0};
  RoledDataset rd = sample_roled(scm, n, seed);
  Rng rng(seed, 99);
  const Column& x1 = rd.data.column("x1");
  for (std::size_t i = 0; i < n; ++i) {
    const double tau = x1.values[i] > 0.0 ? 0.4 : 0.0;
    rd.y[i] = rng.bernoulli(0.3 + tau * rd.s[i]) ? 1.0 : 0.0;
  }
  return rd;
}

double additivity_residual(const DecompositionResult& r) {
  return std::abs(r.tv.point - (r.ctf_de.point - r.ctf_ie.point - r.ctf_se.point));
}

std::vector<double> g_residuals;  // collected across every decomposition we run

DecompositionResult decompose_tracked(const RoledDataset& rd, const DecomposeConfig& cfg) {
  DecompositionResult r = estimate_decomposition(rd, cfg);
  g_residuals.push_back(additivity_residual(r));
  return r;
}

DecomposeConfig point_config(std::uint64_t seed) {
  DecomposeConfig cfg = DecomposeConfig::defaults();
  cfg.mu_spec.kind = BoostedStumpsSpec{300, 0.3, 3};
  cfg.nu_spec.kind = BoostedStumpsSpec{300, 0.3, 3};
  cfg.n_bootstrap = 0;
  cfg.seed = seed;
  return cfg;
}

double forest_mean_tau_s1(const RoledDataset& rd, std::size_t trees, std::size_t min_leaf,
                          std::uint64_t seed) {
  ForestParams p;
  p.num_trees = trees;
  p.min_leaf = min_leaf;
  p.subsample_fraction = 0.5;
  CausalForestModel model = fit_direct_effect_forest(rd, p, seed);
  IndividualEffects eff = predict_effects(model, rd);
  double sum = 0.0;
  std::size_t n1 = 0;
  for (std::size_t i = 0; i < rd.n_rows(); ++i)
    if (rd.s[i] == 0.0) {
      sum += eff.tau[i];
      ++n1;
    }
  return sum / static_cast<double>(n1);
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// --------------------------------------------------------------------------
// census-income dataset: loaded once, shared by criteria 4, 6, 7 and 8

struct AdultRun {
  RoledDataset data;
  DecompositionResult decomposition;
  IndividualEffects effects;
  SubgroupSummary summary;
  MetricCell overall;
  double runtime_s = 0.0;
};

std::optional<AdultRun> g_adult;
bool g_adult_tried = false;

const char* kAdultMissing =
    "census dataset missing - place the UCI census-income CSV at data/adult.csv "
    "(header row with the canonical column names; income coded <=50K / >50K)";

std::optional<AdultRun>& adult_run() {
  if (g_adult_tried) return g_adult;
  g_adult_tried = true;
  const fs::path path = fs::path(DATA_DIR) / "adult.csv";
  if (!fs::exists(path)) return g_adult;
  const auto t0 = std::chrono::steady_clock::now();
  AdultRun run;
  run.data = bind_roles(load_csv(path.string()), preset_adult());
  run.decomposition = decompose_tracked(run.data, point_config(2024));

  ForestParams fp;
  fp.num_trees = 400;
  fp.min_leaf = 50;
  fp.subsample_fraction = 0.5;
  CausalForestModel forest = fit_direct_effect_forest(run.data, fp, 77);
  run.effects = predict_effects(forest, run.data);
  SubgroupAssignment assignment = assign(run.effects, preset_binning("adult"));
  run.summary = summarize(run.data, assignment);

  SplitResult split = split_stratified(run.data, 0.2, run.data.s, 31);
  LearnerSpec baseline;
  baseline.kind = BoostedStumpsSpec{200, 0.1, 3};
  baseline.objective = Objective::Logistic;
  FittedModel model = train_baseline(split.train, baseline, 55);
  IndividualEffects test_eff;  // audit on the held-out rows only
  for (std::size_t i : split.test_idx) test_eff.tau.push_back(run.effects.tau[i]);
  AuditReport report = evaluate(predict_labels(model, split.test),
                                assign(test_eff, preset_binning("adult")), split.test, 0, 13);
  run.overall = report.overall;
  run.runtime_s = seconds_since(t0);
  g_adult = std::move(run);
  return g_adult;
}

// --------------------------------------------------------------------------

void criterion1() {
  Rng spec_rng(101);
  std::vector<DiscreteScm> specs;
  specs.push_back(std::get<DiscreteScm>(load_scm(std::string(FIXTURE_DIR) + "/cpt-A.json")));
  for (int i = 0; i < 20; ++i) specs.push_back(random_discrete(spec_rng));

  double worst_err = 0.0, worst_time = 0.0;
  std::string detail;
  bool ok = true;
  for (std::size_t k = 0; k < specs.size(); ++k) {
    const auto t0 = std::chrono::steady_clock::now();
    GroundTruth gt = true_effects(specs[k]);
    RoledDataset rd = sample_roled(specs[k], 50000, 3000 + k);
    DecompositionResult r = decompose_tracked(rd, point_config(4000 + k));

    const double errs[3] = {std::abs(r.ctf_de.point - gt.ctf_de),
                            std::abs(r.ctf_ie.point - gt.ctf_ie),
                            std::abs(r.ctf_se.point - gt.ctf_se)};
    for (double e : errs) worst_err = std::max(worst_err, e);
    if (errs[0] > 0.01 || errs[1] > 0.01 || errs[2] > 0.01) {
      ok = false;
      detail += " spec " + std::to_string(k) + " effect error " +
                fmt(std::max({errs[0], errs[1], errs[2]})) + ";";
    }

    double y2 = 0, y1 = 0;
    std::size_t n2 = 0, n1 = 0;
    for (std::size_t i = 0; i < rd.n_rows(); ++i)
      (rd.s[i] == 1.0 ? (y2 += rd.y[i], ++n2) : (y1 += rd.y[i], ++n1));
    const double p2 = y2 / n2, p1 = y1 / n1;
    const double sigma = std::sqrt(p2 * (1 - p2) / n2 + p1 * (1 - p1) / n1);
    if (std::abs(r.tv.point - gt.tv) > 3.0 * sigma) {
      ok = false;
      detail += " spec " + std::to_string(k) + " tv outside 3 sigma;";
    }
    const double t = seconds_since(t0);
    worst_time = std::max(worst_time, t);
    if (t > 120.0) {
      ok = false;
      detail += " spec " + std::to_string(k) + " took " + fmt(t) + " s;";
    }
  }
  const std::string msg = "discrete oracle: 21 models at n=50000, worst effect error " +
                          fmt(worst_err) + ", slowest " + fmt(worst_time) + " s" + detail;
  ok ? pass(1, msg) : fail(1, msg);
}

void criterion2() {
  LinearScm scm;
  scm.x_dim = 1;
  scm.a = 0.5;
  scm.b = 0.3;
  scm.d = 0.4;
  scm.g = {0.2};
  scm.t = {0.1};  // S independent of X: no confounding terms
  RoledDataset rd = sample_roled(scm, 20000, 71);
  DecomposeConfig cfg = point_config(72);
  cfg.mu_spec.kind = RegularizedLinearSpec{};
  cfg.nu_spec.kind = RegularizedLinearSpec{};
  DecompositionResult r = decompose_tracked(rd, cfg);
  const bool ok = std::abs(r.nde.point - 0.3) <= 0.02 && std::abs(r.nie.point - 0.2) <= 0.02 &&
                  std::abs(r.ctf_se.point) <= 0.02;
  const std::string msg = "linear oracle: nde " + fmt(r.nde.point) + " (want 0.30+-0.02), nie " +
                          fmt(r.nie.point) + " (want 0.20+-0.02), ctf_se " + fmt(r.ctf_se.point) +
                          " (want 0+-0.02)";
  ok ? pass(2, msg) : fail(2, msg);
}

void criterion3() {
  adult_run();  // include the real-data decomposition's residual when available
  double worst = 0.0;
  for (double r : g_residuals) worst = std::max(worst, r);
  const bool ok = !g_residuals.empty() && worst < 1e-12;
  std::ostringstream os;
  os << "additivity: max |tv - (de - ie - se)| = " << worst << " over " << g_residuals.size()
     << " decompositions (limit 1e-12)";
  ok ? pass(3, os.str()) : fail(3, os.str());
}

void criterion4() {
  auto& run = adult_run();
  if (!run) {
    skip(4, std::string("census reproduction: ") + kAdultMissing);
    return;
  }
  const DecompositionResult& r = run->decomposition;
  const bool ok = std::abs(r.tv.point - 0.104) <= 0.010 &&
                  std::abs(r.ctf_de.point - 0.015) <= 0.015 &&
                  std::abs(r.ctf_ie.point - 0.032) <= 0.015 &&
                  std::abs(r.ctf_se.point - 0.057) <= 0.020 && run->runtime_s < 600.0;
  const std::string msg = "census reproduction: tv " + fmt(r.tv.point) + ", ctf_de " +
                          fmt(r.ctf_de.point) + ", ctf_ie " + fmt(r.ctf_ie.point) + ", ctf_se " +
                          fmt(r.ctf_se.point) + " in " + fmt(run->runtime_s) + " s";
  ok ? pass(4, msg) : fail(4, msg);
}

void criterion5() {
  const auto t0 = std::chrono::steady_clock::now();
  RoledDataset rd = heterogeneous_data(20000, 501);
  ForestParams p;
  p.num_trees = 300;
  p.min_leaf = 25;
  p.subsample_fraction = 0.5;
  CausalForestModel model = fit_direct_effect_forest(rd, p, 502);
  IndividualEffects eff = predict_effects(model, rd);
  const Column& x1 = rd.data.column("x1");
  double above = 0, below = 0;
  std::size_t na = 0, nb = 0;
  for (std::size_t i = 0; i < rd.n_rows(); ++i)
    (x1.values[i] > 0.0 ? (above += eff.tau[i], ++na) : (below += eff.tau[i], ++nb));
  const double diff = above / na - below / nb;

  int top1 = 0;
  for (int s = 0; s < 100; ++s) {
    RoledDataset small = heterogeneous_data(2000, 600 + s);
    ForestParams sp;
    sp.num_trees = 60;
    sp.min_leaf = 20;
    sp.subsample_fraction = 0.5;
    CausalForestModel m = fit_direct_effect_forest(small, sp, 700 + s);
    if (importance_by_source(m, variable_importance(m)).front().first == "x1") ++top1;
  }

  const bool ok = std::abs(diff - 0.4) <= 0.05 && top1 >= 95;
  const std::string msg = "forest heterogeneity: stratum-mean difference " + fmt(diff) +
                          " (want 0.40+-0.05); moderator ranked first in " +
                          std::to_string(top1) + "/100 seeds (want >= 95); " +
                          fmt(seconds_since(t0)) + " s";
  ok ? pass(5, msg) : fail(5, msg);
}

void criterion6() {
  bool ok = true;
  std::string detail;

  {  // discrete family
    DiscreteScm scm =
        std::get<DiscreteScm>(load_scm(std::string(FIXTURE_DIR) + "/cpt-A.json"));
    RoledDataset rd = sample_roled(scm, 20000, 601);
    DecompositionResult r = decompose_tracked(rd, point_config(602));
    const double mt = forest_mean_tau_s1(rd, 400, 50, 603);
    const double d = std::abs(mt - r.ctf_de.point);
    detail += "discrete |mean tau(s1) - ctf_de| = " + fmt(d);
    if (d > 0.01) ok = false;
  }
  {  // linear family
    LinearScm scm;
    scm.x_dim = 1;
    scm.a = 0.5;
    scm.b = 0.3;
    scm.d = 0.4;
    scm.g = {0.2};
    scm.t = {0.1};
    RoledDataset rd = sample_roled(scm, 20000, 611);
    DecomposeConfig cfg = point_config(612);
    cfg.mu_spec.kind = RegularizedLinearSpec{};
    cfg.nu_spec.kind = RegularizedLinearSpec{};
    DecompositionResult r = decompose_tracked(rd, cfg);
    const double mt = forest_mean_tau_s1(rd, 400, 50, 613);
    const double d = std::abs(mt - r.ctf_de.point);
    detail += ", linear " + fmt(d);
    if (d > 0.01) ok = false;
  }
  auto& run = adult_run();
  if (run) {
    double sum = 0;
    std::size_t n1 = 0;
    for (std::size_t i = 0; i < run->data.n_rows(); ++i)
      if (run->data.s[i] == 0.0) {
        sum += run->effects.tau[i];
        ++n1;
      }
    const double d = std::abs(sum / n1 - run->decomposition.ctf_de.point);
    detail += ", census " + fmt(d);
    if (d > 0.01) ok = false;
  } else {
    detail += ", census leg skipped (dataset missing)";
  }
  const std::string msg = "cross-estimator agreement (limit 0.01): " + detail;
  ok ? pass(6, msg) : fail(6, msg);
}

void criterion7() {
  bool ok = true;
  std::string detail;

  // partition + monotone group means on a synthetic run
  RoledDataset rd = heterogeneous_data(8000, 701);
  ForestParams p;
  p.num_trees = 150;
  p.min_leaf = 25;
  p.subsample_fraction = 0.5;
  IndividualEffects eff = predict_effects(fit_direct_effect_forest(rd, p, 702), rd);
  BinningSpec spec = BinningSpec::make({-0.01, 0.01, 0.05});
  SubgroupAssignment a = assign(eff, spec);
  std::vector<double> sums(4, 0.0);
  std::vector<std::size_t> counts(4, 0);
  for (std::size_t i = 0; i < eff.tau.size(); ++i) {
    if (a.group[i] >= 4) ok = false;
    sums[a.group[i]] += eff.tau[i];
    ++counts[a.group[i]];
  }
  std::size_t total = 0;
  double prev = -1e9;
  for (std::size_t g = 0; g < 4; ++g) {
    total += counts[g];
    if (!counts[g]) continue;
    const double m = sums[g] / counts[g];
    if (m <= prev) ok = false;
    prev = m;
  }
  if (total != eff.tau.size()) ok = false;
  detail = "partition and monotonicity hold on the synthetic run";

  auto& run = adult_run();
  if (run) {
    const double want[4] = {0.04, 0.09, 0.12, 0.10};
    detail += "; census per-group tv:";
    for (int g = 0; g < 4; ++g) {
      const double tv = run->summary.group_tv[g];
      detail += " " + fmt(tv);
      if (!std::isfinite(tv) || std::abs(tv - want[g]) > 0.03) ok = false;
    }
    detail += " (want 0.04/0.09/0.12/0.10 +-0.03)";
  } else {
    detail += "; census table leg skipped (dataset missing)";
  }
  const std::string msg = "sub-group machinery: " + detail;
  ok ? pass(7, msg) : fail(7, msg);
}

void criterion8() {
  bool ok = true;
  std::string detail;

  {  // confusion arithmetic, exact
    ConfusionCounts c;
    c.tp = 3;
    c.fp = 1;
    c.fn = 1;
    c.tn = 5;
    MetricTriple m = MetricTriple::from_counts(c);
    if (*m.precision != 0.75 || *m.recall != 0.75 || *m.accuracy != 0.8) {
      ok = false;
      detail += " confusion arithmetic wrong;";
    }
  }

  {  // pooled aggregation, exact
    DiscreteScm scm =
        std::get<DiscreteScm>(load_scm(std::string(FIXTURE_DIR) + "/cpt-A.json"));
    RoledDataset rd = sample_roled(scm, 3000, 801);
    Rng prng(802);
    PredictionSet ps;
    IndividualEffects tau;
    for (std::size_t i = 0; i < rd.n_rows(); ++i) {
      const int actual = rd.y[i] == 1.0 ? 1 : 0;
      ps.rows.push_back({rd.data.row_ids[i], prng.bernoulli(0.25) ? 1 - actual : actual, actual});
      tau.tau.push_back(prng.normal() * 0.05);
    }
    AuditReport rep =
        evaluate(ps, assign(tau, BinningSpec::make({-0.01, 0.01, 0.05})), rd, 0, 803);
    ConfusionCounts pooled;
    for (std::size_t g = 0; g < rep.per_group.size(); ++g) {
      if (rep.per_group[g].counts.tp !=
              rep.per_group_cat[g][0].counts.tp + rep.per_group_cat[g][1].counts.tp ||
          rep.per_group[g].counts.total() != rep.per_group_cat[g][0].counts.total() +
                                                 rep.per_group_cat[g][1].counts.total()) {
        ok = false;
        detail += " category counts do not pool;";
      }
      pooled.tp += rep.per_group[g].counts.tp;
      pooled.fp += rep.per_group[g].counts.fp;
      pooled.fn += rep.per_group[g].counts.fn;
      pooled.tn += rep.per_group[g].counts.tn;
    }
    if (pooled.tp != rep.overall.counts.tp || pooled.fp != rep.overall.counts.fp ||
        pooled.fn != rep.overall.counts.fn || pooled.tn != rep.overall.counts.tn) {
      ok = false;
      detail += " group counts do not pool to overall;";
    }
  }

  auto& run = adult_run();
  if (run) {
    const double p = run->overall.precision.point.value_or(-1);
    const double r = run->overall.recall.point.value_or(-1);
    const double acc = run->overall.accuracy.point.value_or(-1);
    detail += " census overall " + fmt(p) + "/" + fmt(r) + "/" + fmt(acc) +
              " (want 0.77/0.66/0.87 +-0.02);";
    if (std::abs(p - 0.77) > 0.02 || std::abs(r - 0.66) > 0.02 || std::abs(acc - 0.87) > 0.02)
      ok = false;
  } else {
    detail += " census metrics leg skipped (dataset missing);";
  }

  {  // null-bias coverage: classifier errors independent of the sensitive bit.
    // The data must also be null in S (precision depends on the base rate, so
    // P(Y=1) may not differ across categories), hence a model with Y, M
    // independent of S.
    DiscreteScm scm =
        std::get<DiscreteScm>(load_scm(std::string(FIXTURE_DIR) + "/cpt-A.json"));
    scm.p_m_given_sx[1] = scm.p_m_given_sx[0];
    scm.p_y_given_sxm[1] = scm.p_y_given_sxm[0];
    for (double& p : scm.p_s_given_x) p = 0.5;
    std::size_t contained = 0, defined = 0;
    for (int r = 0; r < 200; ++r) {
      RoledDataset rd = sample_roled(scm, 2000, 900 + r);
      Rng prng(2900 + r);
      PredictionSet ps;
      IndividualEffects tau;
      for (std::size_t i = 0; i < rd.n_rows(); ++i) {
        const int actual = rd.y[i] == 1.0 ? 1 : 0;
        ps.rows.push_back(
            {rd.data.row_ids[i], prng.bernoulli(0.25) ? 1 - actual : actual, actual});
        tau.tau.push_back(prng.normal() * 0.05);
      }
      AuditReport rep =
          evaluate(ps, assign(tau, BinningSpec::make({-0.01, 0.01, 0.05})), rd, 100, 4900 + r);
      for (const GapTriple& gap : rep.gaps)
        for (const MetricInterval* mi : {&gap.precision, &gap.recall, &gap.accuracy}) {
          if (!mi->point || !mi->ci_low || !mi->ci_high) continue;
          ++defined;
          if (*mi->ci_low <= 0.0 && 0.0 <= *mi->ci_high) ++contained;
        }
    }
    const double coverage = static_cast<double>(contained) / static_cast<double>(defined);
    detail += " null-gap CI coverage " + fmt(coverage) + " over 200 runs (want >= 0.92)";
    if (coverage < 0.92) ok = false;
  }

  const std::string msg = "audit arithmetic:" + detail;
  ok ? pass(8, msg) : fail(8, msg);
}

void criterion9() {
  const fs::path base = fs::temp_directory_path() / "causal_audit_accept9";
  std::error_code ec;
  fs::remove_all(base, ec);
  fs::create_directories(base);

  // simulate a dataset, then run the full pipeline twice with one config
  DiscreteScm scm =
      std::get<DiscreteScm>(load_scm(std::string(FIXTURE_DIR) + "/cpt-A.json"));
  {
    std::ofstream out(base / "schema.json");
    out << to_json(scm_schema(scm)).dump(2) << "\n";
  }
  auto run = [&](const std::string& cmd) {
    const std::string full = std::string(CLI_PATH) + " " + cmd + " > /dev/null 2>&1";
    return std::system(full.c_str());
  };
  if (run("simulate --spec " + std::string(FIXTURE_DIR) + "/cpt-A.json --n 6000 --seed 3 --out " +
          (base / "sim").string()) != 0) {
    fail(9, "determinism: simulate step failed");
    return;
  }
  {
    nlohmann::json cfg{{"dataset", (base / "sim" / "dataset.csv").string()},
                       {"schema", (base / "schema.json").string()},
                       {"seed", 11},
                       {"bootstrap", 20},
                       {"forest", {{"num_trees", 80}, {"min_leaf", 25}}}};
    std::ofstream out(base / "config.json");
    out << cfg.dump(2) << "\n";
  }
  const std::string cfg_flag = "pipeline --config " + (base / "config.json").string() + " --out ";
  if (run(cfg_flag + (base / "run1").string()) != 0 ||
      run(cfg_flag + (base / "run2").string()) != 0) {
    fail(9, "determinism: pipeline run failed");
    return;
  }

  const char* files[] = {"decomposition.json", "effects.csv", "histogram.csv",
                         "subgroup.json",      "audit.json",  "gaps.csv",
                         "manifest.json"};
  bool ok = true;
  std::string bad;
  for (const char* f : files) {
    const std::string a = read_file(base / "run1" / f);
    const std::string b = read_file(base / "run2" / f);
    if (a.empty() || a != b) {
      ok = false;
      bad += std::string(" ") + f;
    }
  }
  const std::string msg = ok ? "determinism: both pipeline runs byte-identical across 7 artifacts"
                             : "determinism: artifacts differ:" + bad;
  ok ? pass(9, msg) : fail(9, msg);
  fs::remove_all(base, ec);
}

void hdma_end_to_end() {
  // not gated: the home-mortgage presets must run end-to-end on a conforming
  // CSV; exercised here with a small synthetic file in that column layout.
  const fs::path base = fs::temp_directory_path() / "causal_audit_hdma";
  std::error_code ec;
  fs::remove_all(base, ec);
  fs::create_directories(base);
  {
    Rng rng(4242);
    std::ofstream out(base / "hdma.csv");
    out << "applicant_race_name_1,loan_status,property_type_name,owner_occupancy_name,"
           "applicant_sex_name,loan_type_name,loan_amount_000s,applicant_income_000s\n";
    const char* races[] = {"White", "Asian", "Black or African American",
                           "American Indian or Alaska Native",
                           "Native Hawaiian or Other Pacific Islander"};
    for (int i = 0; i < 4000; ++i) {
      const char* race = races[rng.uniform_int(5)];
      const bool white = std::string(race) == "White";
      const bool accepted = rng.bernoulli(white ? 0.75 : 0.6);
      out << race << "," << (accepted ? "Accepted" : "Rejected") << ","
          << (rng.bernoulli(0.8) ? "One-to-four family dwelling" : "Manufactured housing") << ","
          << (rng.bernoulli(0.9) ? "Owner-occupied" : "Not owner-occupied") << ","
          << (rng.bernoulli(0.6) ? "Male" : "Female") << ","
          << (rng.bernoulli(0.7) ? "Conventional" : "FHA-insured") << ","
          << 50 + rng.uniform_int(400) << "," << 20 + rng.uniform_int(200) << "\n";
    }
  }
  const std::string cmd = std::string(CLI_PATH) + " pipeline --data " + (base / "hdma.csv").string() +
                          " --preset hdma-white --seed 5 --out " + (base / "out").string() +
                          " > /dev/null 2>&1";
  if (std::system(cmd.c_str()) == 0 && fs::exists(base / "out" / "audit.json"))
    note("home-mortgage preset pipeline ran end-to-end on a conforming CSV (not gated)");
  else {
    std::printf("FAIL  -. home-mortgage preset pipeline did not run end-to-end\n");
    ++failures;
  }
  fs::remove_all(base, ec);
}

}  // namespace

int main() {
  std::printf("acceptance checks\n");
  try {
    criterion1();
    criterion2();
    criterion3();
    criterion4();
    criterion5();
    criterion6();
    criterion7();
    criterion8();
    criterion9();
    hdma_end_to_end();
  } catch (const std::exception& e) {
    std::printf("FAIL  unexpected exception: %s\n", e.what());
    return 1;
  }
  std::printf("%s\n", failures ? "acceptance: FAILURES PRESENT" : "acceptance: all runnable criteria passed");
  return failures ? 1 : 0;
}
