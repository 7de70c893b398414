#include <catch_amalgamated.hpp>

#include <cmath>

#include "causalaudit/decompose.hpp"
#include "causalaudit/scm.hpp"

using namespace causalaudit;

namespace {

DiscreteScm cpt_a() {
  return std::get<DiscreteScm>(load_scm(std::string(FIXTURE_DIR) + "/cpt-A.json"));
}

DecomposeConfig fast_config(std::size_t n_bootstrap = 0) {
  DecomposeConfig cfg = DecomposeConfig::defaults();
  cfg.mu_spec.kind = BoostedStumpsSpec{60, 0.15, 3};
  cfg.nu_spec.kind = BoostedStumpsSpec{60, 0.15, 3};
  cfg.n_bootstrap = n_bootstrap;
  return cfg;
}

}  // namespace

TEST_CASE("total variation matches group means") {
  RoledDataset rd = sample_roled(cpt_a(), 2000, 3);
  EffectEstimate tv = total_variation(rd);
  double y2 = 0, y1 = 0;
  std::size_t n2 = 0, n1 = 0;
  for (std::size_t i = 0; i < rd.n_rows(); ++i)
    (rd.s[i] == 1.0 ? (y2 += rd.y[i], ++n2) : (y1 += rd.y[i], ++n1));
  REQUIRE(tv.point == Catch::Approx(y2 / n2 - y1 / n1).margin(1e-14));
}

TEST_CASE("decomposition satisfies the additivity identity to 1e-12") {
  RoledDataset rd = sample_roled(cpt_a(), 3000, 5);
  DecompositionResult res = estimate_decomposition(rd, fast_config());
  REQUIRE(std::abs(res.tv.point -
                   (res.ctf_de.point - res.ctf_ie.point - res.ctf_se.point)) < 1e-12);
}

TEST_CASE("estimates approach the enumerated truth") {
  GroundTruth gt = true_effects(cpt_a());
  RoledDataset rd = sample_roled(cpt_a(), 10000, 7);
  DecomposeConfig cfg = fast_config();
  cfg.mu_spec.kind = BoostedStumpsSpec{150, 0.1, 3};
  cfg.nu_spec.kind = BoostedStumpsSpec{150, 0.1, 3};
  DecompositionResult res = estimate_decomposition(rd, cfg);
  REQUIRE(res.tv.point == Catch::Approx(gt.tv).margin(0.03));
  REQUIRE(res.ctf_de.point == Catch::Approx(gt.ctf_de).margin(0.03));
  REQUIRE(res.ctf_ie.point == Catch::Approx(gt.ctf_ie).margin(0.03));
  REQUIRE(res.ctf_se.point == Catch::Approx(gt.ctf_se).margin(0.03));
  REQUIRE(res.nde.point == Catch::Approx(gt.nde).margin(0.03));
  REQUIRE(res.nie.point == Catch::Approx(gt.nie).margin(0.03));
}

TEST_CASE("swapping the baseline group negates the observational disparity") {
  RoledDataset rd = sample_roled(cpt_a(), 2000, 9);
  RoledDataset swapped = rd;
  for (double& v : swapped.s) v = 1.0 - v;
  EffectEstimate tv = total_variation(rd);
  EffectEstimate tv2 = total_variation(swapped);
  REQUIRE(tv2.point == Catch::Approx(-tv.point).margin(1e-14));
}

TEST_CASE("bootstrap intervals are deterministic and bracket the point") {
  RoledDataset rd = sample_roled(cpt_a(), 1500, 11);
  DecomposeConfig cfg = fast_config(15);
  DecompositionResult a = estimate_decomposition(rd, cfg);
  DecompositionResult b = estimate_decomposition(rd, cfg);
  REQUIRE(a.tv.ci_low == b.tv.ci_low);
  REQUIRE(a.ctf_de.ci_high == b.ctf_de.ci_high);
  REQUIRE(a.ctf_de.std_error == b.ctf_de.std_error);
  REQUIRE(a.ctf_de.has_ci());
  REQUIRE(a.ctf_de.ci_low <= a.ctf_de.point);
  REQUIRE(a.ctf_de.ci_high >= a.ctf_de.point);

  cfg.seed += 1;
  DecompositionResult c = estimate_decomposition(rd, cfg);
  REQUIRE(a.tv.ci_low != c.tv.ci_low);
}

TEST_CASE("continuous outcomes are accepted and additive") {
  LinearScm scm;
  scm.x_dim = 1;
  scm.a = 0.5;
  scm.b = 0.3;
  scm.d = 0.4;
  scm.g = {0.2};
  scm.t = {0.1};
  RoledDataset rd = sample_roled(scm, 3000, 13);
  DecomposeConfig cfg = fast_config();
  cfg.mu_spec.kind = RegularizedLinearSpec{};
  cfg.nu_spec.kind = RegularizedLinearSpec{};
  DecompositionResult res = estimate_decomposition(rd, cfg);
  REQUIRE(std::abs(res.tv.point -
                   (res.ctf_de.point - res.ctf_ie.point - res.ctf_se.point)) < 1e-12);
  // sigma_y = 1 and n0 ~ 1500 give a ~0.03 standard error on ctf_de
  REQUIRE(res.ctf_de.point == Catch::Approx(0.3).margin(0.1));
  REQUIRE(res.ctf_se.point == Catch::Approx(0.0).margin(0.05));
}

TEST_CASE("reports serialize with additivity residual and n/a intervals") {
  RoledDataset rd = sample_roled(cpt_a(), 1000, 17);
  DecompositionResult res = estimate_decomposition(rd, fast_config());
  nlohmann::json j = to_json(res);
  REQUIRE(std::abs(j.at("additivity_residual").get<double>()) < 1e-12);
  REQUIRE(j.at("tv").at("ci_low").is_null());
  REQUIRE(format_effect(res.tv).find("n/a") != std::string::npos);

  std::string csv = decomposition_csv(res);
  REQUIRE(csv.find("ctf_se") != std::string::npos);
}

TEST_CASE("too few folds are rejected") {
  RoledDataset rd = sample_roled(cpt_a(), 200, 19);
  DecomposeConfig cfg = fast_config();
  cfg.k = 1;
  REQUIRE_THROWS_AS(estimate_decomposition(rd, cfg), ConfigError);
}
