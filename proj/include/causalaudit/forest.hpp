#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include "causalaudit/common.hpp"
#include "causalaudit/dataset.hpp"
#include "causalaudit/learners.hpp"
#include "causalaudit/rng.hpp"

namespace causalaudit {

struct ForestParams {
  std::size_t num_trees = 500;
  std::size_t min_leaf = 10;
  std::size_t mtry = 0;  // 0 = ceil(sqrt(p))
  double honest_fraction = 0.5;
  double subsample_fraction = 0.5;
  bool local_centering = true;
  std::size_t centering_folds = 5;
  std::size_t threads = 1;

  void validate() const {
    if (num_trees < 1 || min_leaf < 1) throw ConfigError("forest counts must be >= 1");
    if (!(honest_fraction > 0.0 && honest_fraction < 1.0))
      throw ConfigError("honest_fraction must be in (0,1)");
    if (!(subsample_fraction > 0.0 && subsample_fraction <= 1.0))
      throw ConfigError("subsample_fraction must be in (0,1]");
  }
};

struct CausalForestModel {
  ForestParams params;
  std::vector<Tree> trees;
  std::vector<std::vector<std::uint64_t>> in_sample;  // bitset per tree over training rows
  std::size_t n_train = 0;
  std::size_t n_features = 0;
  std::vector<FeatureOrigin> feature_origins;
  std::vector<std::size_t> train_row_ids;

  bool row_in_sample(std::size_t tree, std::size_t row) const {
    return (in_sample[tree][row >> 6] >> (row & 63)) & 1ULL;
  }
};

struct IndividualEffects {
  std::vector<double> tau;
  bool out_of_bag = false;
};

struct VariableImportance {
  std::vector<double> score;  // per design feature, sums to 1 (all zero when no splits)
};

namespace detail {

// feature matrix = confounders + mediators from the tree (full one-hot) view
inline Matrix effect_features(const RoledDataset& data, std::vector<FeatureOrigin>* origins) {
  EncodedView ev = encode(data);
  std::vector<std::size_t> cols;
  for (std::size_t j = 0; j < ev.tree_roles.size(); ++j)
    if (ev.tree_roles[j] != FeatureRole::SensitiveIndicator) cols.push_back(j);
  Matrix x(data.n_rows(), cols.size());
  for (std::size_t i = 0; i < data.n_rows(); ++i)
    for (std::size_t j = 0; j < cols.size(); ++j) x(i, j) = ev.tree(i, cols[j]);
  if (origins) {
    origins->clear();
    for (std::size_t j : cols) origins->push_back(ev.tree_features[j]);
  }
  return x;
}

}  // namespace detail

// Honest causal forest for the per-individual direct effect: treatment is the
// S-indicator, features are confounders and mediators. With local centering
// the outcome and treatment are residualized against cross-fit regressions
// before trees see them.
inline CausalForestModel fit_direct_effect_forest(const RoledDataset& data,
                                                  const ForestParams& params,
                                                  std::uint64_t seed) {
  params.validate();
  const std::size_t n = data.n_rows();
  {
    bool any_t = false, any_c = false;
    for (double v : data.s) (v == 1.0 ? any_t : any_c) = true;
    if (!any_t || !any_c) throw DataError("fit_direct_effect_forest: both arms required");
  }

  CausalForestModel model;
  model.params = params;
  model.n_train = n;
  model.train_row_ids = data.data.row_ids;

  Matrix x = detail::effect_features(data, &model.feature_origins);
  model.n_features = x.cols;

  std::vector<double> w = data.s;
  std::vector<double> y = data.y;
  if (params.local_centering) {
    LearnerSpec center_spec;
    center_spec.kind = BoostedStumpsSpec{100, 0.1, 3};
    CrossFitPlan plan = CrossFitPlan::make(n, params.centering_folds,
                                           Rng(seed).substream("centering").next_u64());
    LearnerSpec y_spec = center_spec;
    if (is_binary(y)) y_spec.objective = Objective::Logistic;
    std::vector<double> y_hat = cross_fit_predict(x, y, y_spec, plan);
    LearnerSpec e_spec = center_spec;
    e_spec.objective = Objective::Logistic;
    std::vector<double> e_hat = cross_fit_predict(x, w, e_spec, plan);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] -= y_hat[i];
      w[i] -= std::clamp(e_hat[i], 0.01, 0.99);
    }
  }

  BinnedFeatures bins = BinnedFeatures::build(x);
  HonestTreeParams tp;
  tp.min_leaf = params.min_leaf;
  tp.mtry = params.mtry
                ? params.mtry
                : static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(x.cols))));
  tp.honest_fraction = params.honest_fraction;
  tp.centered = params.local_centering;

  const std::size_t sub_n = std::max<std::size_t>(
      2, static_cast<std::size_t>(std::llround(params.subsample_fraction * static_cast<double>(n))));
  const std::size_t words = (n + 63) / 64;

  model.trees.resize(params.num_trees);
  model.in_sample.assign(params.num_trees, std::vector<std::uint64_t>(words, 0));
  Rng forest_rng = Rng(seed).substream("forest");

  auto fit_one = [&](std::size_t t) {
    Rng tree_rng = forest_rng.substream(t);
    std::vector<std::size_t> sub = tree_rng.sample_without_replacement(n, sub_n);
    std::sort(sub.begin(), sub.end());
    for (std::size_t r : sub) model.in_sample[t][r >> 6] |= 1ULL << (r & 63);
    model.trees[t] =
        fit_honest_tree(x, w, y, tp, tree_rng.substream("tree").next_u64(), &bins, &sub);
  };

  const std::size_t workers = std::max<std::size_t>(1, params.threads);
  if (workers == 1) {
    for (std::size_t t = 0; t < params.num_trees; ++t) fit_one(t);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t wkr = 0; wkr < workers; ++wkr)
      pool.emplace_back([&] {
        for (;;) {
          const std::size_t t = next.fetch_add(1);
          if (t >= params.num_trees) return;
          fit_one(t);
        }
      });
    for (auto& th : pool) th.join();
  }
  return model;
}

// Training rows (matched by row_ids) are scored only by trees that did not
// train on them; new rows by all trees.
inline IndividualEffects predict_effects(const CausalForestModel& model,
                                         const RoledDataset& data) {
  Matrix x = detail::effect_features(data, nullptr);
  if (x.cols != model.n_features)
    throw ConfigError("predict_effects: feature count mismatch");

  const bool oob = data.data.row_ids == model.train_row_ids && data.n_rows() == model.n_train;
  IndividualEffects eff;
  eff.out_of_bag = oob;
  eff.tau.assign(data.n_rows(), 0.0);
  for (std::size_t i = 0; i < data.n_rows(); ++i) {
    double sum = 0.0;
    std::size_t cnt = 0;
    for (std::size_t t = 0; t < model.trees.size(); ++t) {
      if (oob && model.row_in_sample(t, i)) continue;
      sum += model.trees[t].predict_row(x.row_ptr(i));
      ++cnt;
    }
    // a row contained in every subsample falls back to the full ensemble
    if (cnt == 0) {
      for (const auto& t : model.trees) sum += t.predict_row(x.row_ptr(i));
      cnt = model.trees.size();
    }
    eff.tau[i] = sum / static_cast<double>(cnt);
  }
  return eff;
}

// Depth-weighted split counts: splits on feature f at depth d <= 4 weighted
// 2^-(d-1), d counted from 1 at the root. Normalized to sum 1.
inline VariableImportance variable_importance(const CausalForestModel& model) {
  VariableImportance vi;
  vi.score.assign(model.n_features, 0.0);
  for (const auto& tree : model.trees) {
    for (const auto& node : tree.nodes) {
      if (node.feature < 0) continue;
      const int d = node.depth + 1;
      if (d > 4) continue;
      vi.score[static_cast<std::size_t>(node.feature)] += std::ldexp(1.0, -(d - 1));
    }
  }
  double total = 0.0;
  for (double v : vi.score) total += v;
  if (total > 0.0)
    for (double& v : vi.score) v /= total;
  return vi;
}

// importance rolled up to source columns (one-hot blocks summed)
inline std::vector<std::pair<std::string, double>> importance_by_source(
    const CausalForestModel& model, const VariableImportance& vi) {
  std::map<std::string, double> agg;
  std::vector<std::string> order;
  for (std::size_t j = 0; j < model.feature_origins.size(); ++j) {
    const std::string& src = model.feature_origins[j].source_column;
    if (!agg.count(src)) order.push_back(src);
    agg[src] += vi.score[j];
  }
  std::vector<std::pair<std::string, double>> out;
  for (const auto& src : order) out.emplace_back(src, agg[src]);
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  return out;
}

}  // namespace causalaudit
