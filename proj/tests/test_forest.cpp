#include <catch_amalgamated.hpp>

#include <cmath>

#include "causalaudit/forest.hpp"
#include "causalaudit/scm.hpp"

using namespace causalaudit;

namespace {

// Synthetic data with a direct effect that jumps at x1 = 0. Column layout
// matches the library's expectations via a LinearScm draw for everything
// except the outcome, which we rebuild with heterogeneity.
RoledDataset heterogeneous_data(std::size_t n, std::uint64_t seed, double lo = 0.0,
                                double hi = 0.4) {
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
    const double tau = x1.values[i] > 0.0 ? hi : lo;
    const double base = 0.3;
    const double p = base + tau * rd.s[i];
    rd.y[i] = rng.bernoulli(p) ? 1.0 : 0.0;
  }
  return rd;
}

ForestParams fast_params(std::size_t trees = 100) {
  ForestParams p;
  p.num_trees = trees;
  p.min_leaf = 20;
  p.subsample_fraction = 0.5;
  return p;
}

}  // namespace

TEST_CASE("forest recovers a two-level heterogeneous effect") {
  const std::size_t n = 6000;
  RoledDataset rd = heterogeneous_data(n, 1);
  CausalForestModel model = fit_direct_effect_forest(rd, fast_params(150), 7);
  IndividualEffects eff = predict_effects(model, rd);
  REQUIRE(eff.out_of_bag);

  const Column& x1 = rd.data.column("x1");
  double above = 0.0, below = 0.0;
  std::size_t na = 0, nb = 0;
  for (std::size_t i = 0; i < n; ++i)
    (x1.values[i] > 0.0 ? (above += eff.tau[i], ++na) : (below += eff.tau[i], ++nb));
  above /= na;
  below /= nb;
  REQUIRE(above - below == Catch::Approx(0.4).margin(0.1));
}

TEST_CASE("importance concentrates on the single moderator") {
  RoledDataset rd = heterogeneous_data(3000, 2);
  CausalForestModel model = fit_direct_effect_forest(rd, fast_params(80), 3);
  VariableImportance vi = variable_importance(model);
  auto by_source = importance_by_source(model, vi);
  REQUIRE(by_source.front().first == "x1");
  double total = 0.0;
  for (double v : vi.score) total += v;
  REQUIRE(total == Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("out-of-bag scoring differs from full-ensemble scoring") {
  RoledDataset rd = heterogeneous_data(800, 3);
  CausalForestModel model = fit_direct_effect_forest(rd, fast_params(40), 5);
  IndividualEffects oob = predict_effects(model, rd);

  RoledDataset copy = rd;
  for (auto& id : copy.data.row_ids) id += 100000;  // no longer the training rows
  IndividualEffects full = predict_effects(model, copy);
  REQUIRE(!full.out_of_bag);
  REQUIRE(oob.tau != full.tau);
}

TEST_CASE("forest fits are deterministic in the seed") {
  RoledDataset rd = heterogeneous_data(600, 4);
  CausalForestModel a = fit_direct_effect_forest(rd, fast_params(30), 11);
  CausalForestModel b = fit_direct_effect_forest(rd, fast_params(30), 11);
  REQUIRE(predict_effects(a, rd).tau == predict_effects(b, rd).tau);
  CausalForestModel c = fit_direct_effect_forest(rd, fast_params(30), 12);
  REQUIRE(predict_effects(a, rd).tau != predict_effects(c, rd).tau);
}

TEST_CASE("thread count does not change forest results") {
  RoledDataset rd = heterogeneous_data(600, 5);
  ForestParams p1 = fast_params(24);
  ForestParams p2 = p1;
  p2.threads = 3;
  CausalForestModel a = fit_direct_effect_forest(rd, p1, 13);
  CausalForestModel b = fit_direct_effect_forest(rd, p2, 13);
  REQUIRE(predict_effects(a, rd).tau == predict_effects(b, rd).tau);
}

TEST_CASE("single-arm data is rejected") {
  RoledDataset rd = heterogeneous_data(200, 6);
  for (double& s : rd.s) s = 1.0;
  REQUIRE_THROWS_AS(fit_direct_effect_forest(rd, fast_params(10), 1), DataError);
}

TEST_CASE("feature-count mismatch at prediction is rejected") {
  RoledDataset rd = heterogeneous_data(300, 7);
  CausalForestModel model = fit_direct_effect_forest(rd, fast_params(10), 1);

  LinearScm other;
  other.x_dim = 3;
  other.g = {0.0, 0.0, 0.0};
  other.t = {0.0, 0.0, 0.0};
  RoledDataset wide = sample_roled(other, 300, 8);
  REQUIRE_THROWS_AS(predict_effects(model, wide), ConfigError);
}
