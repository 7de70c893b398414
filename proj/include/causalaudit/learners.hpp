#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "causalaudit/common.hpp"
#include "causalaudit/rng.hpp"

namespace causalaudit {

enum class Objective { SquaredError, Logistic };

struct RegressionForestSpec {
  std::size_t num_trees = 200;
  std::size_t min_leaf = 5;
  std::size_t mtry = 0;  // 0 = ceil(sqrt(p))
  double honest_fraction = 0.5;
  bool honest = true;
};

struct BoostedStumpsSpec {
  std::size_t rounds = 200;
  double learning_rate = 0.1;
  std::size_t max_depth = 3;
};

struct RegularizedLinearSpec {
  double l2_penalty = 1e-6;
  std::size_t max_iterations = 100;
  double tolerance = 1e-8;
};

struct LearnerSpec {
  std::variant<RegressionForestSpec, BoostedStumpsSpec, RegularizedLinearSpec> kind =
      BoostedStumpsSpec{};
  Objective objective = Objective::SquaredError;

  void validate() const {
    if (const auto* f = std::get_if<RegressionForestSpec>(&kind)) {
      if (f->num_trees < 1 || f->min_leaf < 1) throw ConfigError("forest counts must be >= 1");
      if (f->honest && !(f->honest_fraction > 0.0 && f->honest_fraction < 1.0))
        throw ConfigError("honest_fraction must be in (0,1)");
    } else if (const auto* b = std::get_if<BoostedStumpsSpec>(&kind)) {
      if (b->rounds < 1 || b->max_depth < 1) throw ConfigError("boosting counts must be >= 1");
      if (!(b->learning_rate > 0.0 && b->learning_rate <= 1.0))
        throw ConfigError("learning_rate must be in (0,1]");
    } else if (const auto* l = std::get_if<RegularizedLinearSpec>(&kind)) {
      if (l->l2_penalty < 0.0) throw ConfigError("l2_penalty must be >= 0");
      if (l->max_iterations < 1) throw ConfigError("max_iterations must be >= 1");
    }
  }
};

// ---------------------------------------------------------------------------
// binned feature representation shared by all tree learners

struct BinnedFeatures {
  std::size_t n = 0;
  std::size_t p = 0;
  std::vector<std::uint16_t> bins;                 // n * p, row-major
  std::vector<std::vector<double>> thresholds;     // per feature, ascending;
                                                   // bin b covers values <= thresholds[b]

  std::uint16_t bin(std::size_t row, std::size_t col) const { return bins[row * p + col]; }
  std::size_t n_bins(std::size_t col) const { return thresholds[col].size() + 1; }

  static BinnedFeatures build(const Matrix& x, std::size_t max_bins = 256) {
    BinnedFeatures bf;
    bf.n = x.rows;
    bf.p = x.cols;
    bf.bins.resize(x.rows * x.cols);
    bf.thresholds.resize(x.cols);
    std::vector<double> col(x.rows);
    for (std::size_t j = 0; j < x.cols; ++j) {
      for (std::size_t i = 0; i < x.rows; ++i) col[i] = x(i, j);
      std::vector<double> sorted = col;
      std::sort(sorted.begin(), sorted.end());
      sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
      std::vector<double>& th = bf.thresholds[j];
      if (sorted.size() <= max_bins) {
        // split points between consecutive distinct values
        for (std::size_t k = 0; k + 1 < sorted.size(); ++k)
          th.push_back(0.5 * (sorted[k] + sorted[k + 1]));
      } else {
        for (std::size_t k = 1; k < max_bins; ++k) {
          std::size_t idx = k * sorted.size() / max_bins;
          th.push_back(0.5 * (sorted[idx - 1] + sorted[idx]));
        }
        th.erase(std::unique(th.begin(), th.end()), th.end());
      }
      for (std::size_t i = 0; i < x.rows; ++i) {
        auto it = std::upper_bound(th.begin(), th.end(), col[i]);
        bf.bins[i * x.cols + j] = static_cast<std::uint16_t>(it - th.begin());
      }
    }
    return bf;
  }
};

// ---------------------------------------------------------------------------
// decision tree (shared node layout for regression and causal trees)

struct TreeNode {
  std::int32_t feature = -1;   // -1 = leaf
  double threshold = 0.0;      // go left if x <= threshold
  std::int32_t left = -1;
  std::int32_t right = -1;
  double value = 0.0;          // leaf prediction / effect estimate
  std::int32_t depth = 0;
};

struct Tree {
  std::vector<TreeNode> nodes;

  double predict_row(const double* x) const {
    std::int32_t i = 0;
    while (nodes[i].feature >= 0)
      i = x[nodes[i].feature] <= nodes[i].threshold ? nodes[i].left : nodes[i].right;
    return nodes[i].value;
  }
};

namespace detail {

// Gradient/hessian tree builder. Squared error: g = target, h = 1 and the
// leaf value is the mean. Logistic boosting passes Newton g/h.
struct GradTreeConfig {
  std::size_t max_depth = 0;  // 0 = unlimited
  std::size_t min_leaf = 1;
  std::size_t mtry = 0;       // 0 = all features
  double min_gain = 0.0;
};

class GradTreeBuilder {
 public:
  GradTreeBuilder(const BinnedFeatures& bf, const std::vector<double>& g,
                  const std::vector<double>& h, const GradTreeConfig& cfg, Rng rng)
      : bf_(bf), g_(g), h_(h), cfg_(cfg), rng_(rng) {}

  Tree build(std::vector<std::size_t> rows) {
    Tree tree;
    grow(tree, std::move(rows), 0);
    return tree;
  }

 private:
  std::int32_t grow(Tree& tree, std::vector<std::size_t> rows, std::int32_t depth) {
    double G = 0.0, H = 0.0;
    for (std::size_t r : rows) {
      G += g_[r];
      H += h_[r];
    }
    const std::int32_t id = static_cast<std::int32_t>(tree.nodes.size());
    tree.nodes.push_back({});
    tree.nodes[id].depth = depth;
    tree.nodes[id].value = H > 0.0 ? G / H : 0.0;

    if ((cfg_.max_depth && static_cast<std::size_t>(depth) >= cfg_.max_depth) ||
        rows.size() < 2 * cfg_.min_leaf) {
      return id;
    }

    std::vector<std::size_t> features = candidate_features();
    const double parent_score = H > 0.0 ? G * G / H : 0.0;
    double best_gain = cfg_.min_gain;
    std::int32_t best_feature = -1;
    double best_threshold = 0.0;

    std::vector<double> bin_g, bin_h;
    std::vector<std::size_t> bin_n;
    for (std::size_t f : features) {
      const std::size_t nb = bf_.n_bins(f);
      if (nb < 2) continue;
      bin_g.assign(nb, 0.0);
      bin_h.assign(nb, 0.0);
      bin_n.assign(nb, 0);
      for (std::size_t r : rows) {
        const std::uint16_t b = bf_.bin(r, f);
        bin_g[b] += g_[r];
        bin_h[b] += h_[r];
        bin_n[b] += 1;
      }
      double GL = 0.0, HL = 0.0;
      std::size_t nL = 0;
      for (std::size_t b = 0; b + 1 < nb; ++b) {
        GL += bin_g[b];
        HL += bin_h[b];
        nL += bin_n[b];
        const std::size_t nR = rows.size() - nL;
        if (nL < cfg_.min_leaf || nR < cfg_.min_leaf) continue;
        const double GR = G - GL, HR = H - HL;
        if (HL <= 0.0 || HR <= 0.0) continue;
        const double gain = GL * GL / HL + GR * GR / HR - parent_score;
        if (gain > best_gain + 1e-12) {
          best_gain = gain;
          best_feature = static_cast<std::int32_t>(f);
          best_threshold = bf_.thresholds[f][b];
        }
      }
    }

    if (best_feature < 0) return id;

    std::vector<std::size_t> left_rows, right_rows;
    const auto& th = bf_.thresholds[best_feature];
    const std::uint16_t split_bin =
        static_cast<std::uint16_t>(std::lower_bound(th.begin(), th.end(), best_threshold) -
                                   th.begin());
    for (std::size_t r : rows)
      (bf_.bin(r, static_cast<std::size_t>(best_feature)) <= split_bin ? left_rows
                                                                       : right_rows)
          .push_back(r);
    rows.clear();
    rows.shrink_to_fit();

    tree.nodes[id].feature = best_feature;
    tree.nodes[id].threshold = best_threshold;
    const std::int32_t l = grow(tree, std::move(left_rows), depth + 1);
    tree.nodes[id].left = l;
    const std::int32_t r = grow(tree, std::move(right_rows), depth + 1);
    tree.nodes[id].right = r;
    return id;
  }

  std::vector<std::size_t> candidate_features() {
    std::vector<std::size_t> all(bf_.p);
    for (std::size_t j = 0; j < bf_.p; ++j) all[j] = j;
    if (cfg_.mtry == 0 || cfg_.mtry >= bf_.p) return all;
    auto picked = rng_.sample_without_replacement(bf_.p, cfg_.mtry);
    std::sort(picked.begin(), picked.end());
    return picked;
  }

  const BinnedFeatures& bf_;
  const std::vector<double>& g_;
  const std::vector<double>& h_;
  GradTreeConfig cfg_;
  Rng rng_;
};

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace detail

// ---------------------------------------------------------------------------
// fitted models

struct BoostedModel {
  double base_score = 0.0;
  std::vector<Tree> trees;
  double learning_rate = 0.1;
};

struct ForestModel {
  std::vector<Tree> trees;
};

struct LinearModel {
  std::vector<double> coef;  // intercept last
};

struct ConstantModel {
  double value = 0.0;
};

struct FittedModel {
  LearnerSpec spec;
  std::size_t n_features = 0;
  std::variant<BoostedModel, ForestModel, LinearModel, ConstantModel> payload = ConstantModel{};
  bool degenerate_warning = false;

  double predict_row(const double* x) const {
    double raw;
    if (const auto* c = std::get_if<ConstantModel>(&payload)) {
      raw = c->value;
      // constant models store the final-scale value
      return raw;
    } else if (const auto* b = std::get_if<BoostedModel>(&payload)) {
      raw = b->base_score;
      for (const auto& t : b->trees) raw += t.predict_row(x);
    } else if (const auto* f = std::get_if<ForestModel>(&payload)) {
      raw = 0.0;
      for (const auto& t : f->trees) raw += t.predict_row(x);
      raw /= static_cast<double>(f->trees.size());
    } else {
      const auto* l = std::get_if<LinearModel>(&payload);
      raw = l->coef.back();
      for (std::size_t j = 0; j + 1 < l->coef.size(); ++j) raw += l->coef[j] * x[j];
    }
    if (spec.objective == Objective::Logistic) return detail::sigmoid(raw);
    return raw;
  }
};

namespace detail {

inline FittedModel fit_boosted(const Matrix& x, const std::vector<double>& y,
                               const LearnerSpec& spec, Rng rng) {
  const auto& bs = std::get<BoostedStumpsSpec>(spec.kind);
  const std::size_t n = x.rows;
  BinnedFeatures bf = BinnedFeatures::build(x);

  BoostedModel model;
  model.learning_rate = bs.learning_rate;
  std::vector<double> raw(n);
  if (spec.objective == Objective::Logistic) {
    double ybar = mean(y);
    ybar = std::clamp(ybar, 1e-12, 1.0 - 1e-12);
    model.base_score = std::log(ybar / (1.0 - ybar));
  } else {
    model.base_score = mean(y);
  }
  std::fill(raw.begin(), raw.end(), model.base_score);

  std::vector<double> g(n), h(n);
  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;

  GradTreeConfig cfg;
  cfg.max_depth = bs.max_depth;
  cfg.min_leaf = 10;
  cfg.min_gain = 1e-12;

  for (std::size_t round = 0; round < bs.rounds; ++round) {
    if (spec.objective == Objective::Logistic) {
      for (std::size_t i = 0; i < n; ++i) {
        const double p = sigmoid(raw[i]);
        g[i] = y[i] - p;
        h[i] = std::max(p * (1.0 - p), 1e-12);
      }
    } else {
      for (std::size_t i = 0; i < n; ++i) {
        g[i] = y[i] - raw[i];
        h[i] = 1.0;
      }
    }
    GradTreeBuilder builder(bf, g, h, cfg, rng.substream(round));
    Tree tree = builder.build(all);
    // shrink leaf values
    bool any_split = false;
    for (auto& node : tree.nodes) {
      if (node.feature >= 0) any_split = true;
      node.value *= bs.learning_rate;
    }
    for (std::size_t i = 0; i < n; ++i) raw[i] += tree.predict_row(x.row_ptr(i));
    model.trees.push_back(std::move(tree));
    if (!any_split && round > 0) break;  // fully converged
  }

  FittedModel fm;
  fm.spec = spec;
  fm.n_features = x.cols;
  fm.payload = std::move(model);
  return fm;
}

inline FittedModel fit_forest(const Matrix& x, const std::vector<double>& y,
                              const LearnerSpec& spec, Rng rng) {
  const auto& fs = std::get<RegressionForestSpec>(spec.kind);
  const std::size_t n = x.rows;
  BinnedFeatures bf = BinnedFeatures::build(x);

  GradTreeConfig cfg;
  cfg.min_leaf = fs.min_leaf;
  cfg.mtry = fs.mtry ? fs.mtry
                     : static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(x.cols))));

  ForestModel model;
  std::vector<double> h(n, 1.0);
  for (std::size_t t = 0; t < fs.num_trees; ++t) {
    Rng tree_rng = rng.substream(t);
    std::vector<std::size_t> sample(n);
    for (std::size_t i = 0; i < n; ++i) sample[i] = tree_rng.uniform_int(n);  // bootstrap
    std::sort(sample.begin(), sample.end());

    if (!fs.honest) {
      GradTreeBuilder builder(bf, y, h, cfg, tree_rng.substream(1));
      model.trees.push_back(builder.build(sample));
      continue;
    }
    // honesty: structure and estimation halves of the per-tree sample
    Rng half_rng = tree_rng.substream(2);
    std::vector<std::size_t> structure, estimation;
    for (std::size_t r : sample)
      (half_rng.uniform() < fs.honest_fraction ? structure : estimation).push_back(r);
    if (structure.size() < 2 * cfg.min_leaf || estimation.empty()) {
      GradTreeBuilder builder(bf, y, h, cfg, tree_rng.substream(1));
      model.trees.push_back(builder.build(sample));
      continue;
    }
    GradTreeBuilder builder(bf, y, h, cfg, tree_rng.substream(1));
    Tree tree = builder.build(structure);
    // replace leaf values with estimation-half means, parent fallback
    std::vector<double> sum(tree.nodes.size(), 0.0);
    std::vector<std::size_t> cnt(tree.nodes.size(), 0);
    for (std::size_t r : estimation) {
      std::int32_t i = 0;
      for (;;) {
        sum[i] += y[r];
        cnt[i] += 1;
        if (tree.nodes[i].feature < 0) break;
        i = x(r, tree.nodes[i].feature) <= tree.nodes[i].threshold ? tree.nodes[i].left
                                                                   : tree.nodes[i].right;
      }
    }
    // walk nodes; node 0 is root
    for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
      if (cnt[i] > 0)
        tree.nodes[i].value = sum[i] / static_cast<double>(cnt[i]);
      // else keep structure value as fallback
    }
    // push parent values into empty descendants
    for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
      const auto& nd = tree.nodes[i];
      if (nd.feature < 0) continue;
      if (cnt[nd.left] == 0) tree.nodes[nd.left].value = tree.nodes[i].value;
      if (cnt[nd.right] == 0) tree.nodes[nd.right].value = tree.nodes[i].value;
    }
    model.trees.push_back(std::move(tree));
  }

  FittedModel fm;
  fm.spec = spec;
  fm.n_features = x.cols;
  fm.payload = std::move(model);
  return fm;
}

inline FittedModel fit_linear(const Matrix& x, const std::vector<double>& y,
                              const LearnerSpec& spec) {
  const auto& ls = std::get<RegularizedLinearSpec>(spec.kind);
  const std::size_t n = x.rows, p = x.cols;
  Eigen::MatrixXd X(n, p + 1);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < p; ++j) X(i, j) = x(i, j);
    X(i, p) = 1.0;
  }
  Eigen::VectorXd Y(n);
  for (std::size_t i = 0; i < n; ++i) Y(i) = y[i];

  Eigen::MatrixXd reg = ls.l2_penalty * Eigen::MatrixXd::Identity(p + 1, p + 1);
  reg(p, p) = 0.0;  // intercept unpenalized

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p + 1);
  if (spec.objective == Objective::SquaredError) {
    Eigen::MatrixXd A = X.transpose() * X + reg;
    // tiny ridge to keep the normal equations solvable on collinear designs
    if (ls.l2_penalty == 0.0) A += 1e-10 * Eigen::MatrixXd::Identity(p + 1, p + 1);
    beta = A.ldlt().solve(X.transpose() * Y);
  } else {
    // IRLS
    for (std::size_t it = 0; it < ls.max_iterations; ++it) {
      Eigen::VectorXd eta = X * beta;
      Eigen::VectorXd mu = eta.unaryExpr([](double z) { return sigmoid(z); });
      Eigen::VectorXd w = mu.array() * (1.0 - mu.array());
      Eigen::VectorXd grad = X.transpose() * (Y - mu) - reg * beta;
      Eigen::MatrixXd Hm = X.transpose() * w.asDiagonal() * X + reg +
                           1e-10 * Eigen::MatrixXd::Identity(p + 1, p + 1);
      Eigen::VectorXd step = Hm.ldlt().solve(grad);
      beta += step;
      if (step.norm() < ls.tolerance) break;
    }
  }

  FittedModel fm;
  fm.spec = spec;
  fm.n_features = p;
  LinearModel lm;
  lm.coef.assign(beta.data(), beta.data() + p + 1);
  fm.payload = std::move(lm);
  return fm;
}

}  // namespace detail

inline FittedModel fit(const Matrix& features, const std::vector<double>& targets,
                       const LearnerSpec& spec, std::uint64_t seed) {
  spec.validate();
  if (features.rows != targets.size()) throw ConfigError("fit: row/target count mismatch");
  if (features.rows < 2) throw ConfigError("fit: need at least 2 rows");
  if (spec.objective == Objective::Logistic)
    for (double t : targets)
      if (t != 0.0 && t != 1.0) throw ConfigError("fit: logistic targets must be 0/1");

  const double first = targets[0];
  bool constant = true;
  for (double t : targets)
    if (t != first) {
      constant = false;
      break;
    }
  if (constant) {
    FittedModel fm;
    fm.spec = spec;
    fm.n_features = features.cols;
    fm.payload = ConstantModel{first};
    fm.degenerate_warning = true;
    return fm;
  }

  Rng rng(seed, /*stream=*/17);
  if (std::holds_alternative<BoostedStumpsSpec>(spec.kind))
    return detail::fit_boosted(features, targets, spec, rng);
  if (std::holds_alternative<RegressionForestSpec>(spec.kind))
    return detail::fit_forest(features, targets, spec, rng);
  return detail::fit_linear(features, targets, spec);
}

inline std::vector<double> predict(const FittedModel& model, const Matrix& features) {
  if (features.cols != model.n_features)
    throw ConfigError("predict: feature count mismatch (" + std::to_string(features.cols) +
                      " vs " + std::to_string(model.n_features) + ")");
  std::vector<double> out(features.rows);
  for (std::size_t i = 0; i < features.rows; ++i)
    out[i] = model.predict_row(features.row_ptr(i));
  return out;
}

// ---------------------------------------------------------------------------
// cross-fitting

struct CrossFitPlan {
  std::size_t k = 5;
  std::vector<std::size_t> fold_of;  // per row
  std::uint64_t seed = 0;

  static CrossFitPlan make(std::size_t n, std::size_t k, std::uint64_t seed) {
    if (k < 2) throw ConfigError("cross-fit requires k >= 2");
    if (k > n) throw ConfigError("cross-fit: more folds than rows");
    CrossFitPlan plan;
    plan.k = k;
    plan.seed = seed;
    plan.fold_of.resize(n);
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    Rng rng(seed, /*stream=*/19);
    rng.shuffle(idx);
    for (std::size_t i = 0; i < n; ++i) plan.fold_of[idx[i]] = i % k;
    return plan;
  }
};

// Out-of-fold predictions. Row i is scored by the model trained on all folds
// except fold_of[i]; predict_features, when given, supplies the feature row
// actually scored (counterfactual scoring).
inline std::vector<double> cross_fit_predict(const Matrix& features,
                                             const std::vector<double>& targets,
                                             const LearnerSpec& spec, const CrossFitPlan& plan,
                                             const std::optional<Matrix>& predict_features =
                                                 std::nullopt) {
  const std::size_t n = features.rows;
  if (plan.fold_of.size() != n) throw ConfigError("cross_fit_predict: plan does not cover rows");
  if (predict_features && (predict_features->rows != n || predict_features->cols != features.cols))
    throw ConfigError("cross_fit_predict: alternate feature shape mismatch");

  std::vector<double> out(n, 0.0);
  for (std::size_t f = 0; f < plan.k; ++f) {
    std::vector<std::size_t> train_rows, test_rows;
    for (std::size_t i = 0; i < n; ++i)
      (plan.fold_of[i] == f ? test_rows : train_rows).push_back(i);
    if (train_rows.size() < 2) throw ConfigError("cross_fit_predict: fold with < 2 training rows");
    if (test_rows.empty()) continue;
    Matrix xt = features.select_rows(train_rows);
    std::vector<double> yt = select(targets, train_rows);
    FittedModel m = fit(xt, yt, spec, plan.seed + 1000 * (f + 1));
    const Matrix& score_src = predict_features ? *predict_features : features;
    for (std::size_t i : test_rows) out[i] = m.predict_row(score_src.row_ptr(i));
  }
  return out;
}

// ---------------------------------------------------------------------------
// honest causal tree

struct HonestTreeParams {
  std::size_t min_leaf = 10;
  std::size_t mtry = 0;        // 0 = all
  double honest_fraction = 0.5;
  std::size_t max_depth = 0;   // 0 = unlimited
  bool centered = false;       // treatment/outcome already residualized
};

namespace detail {

struct CausalNodeStats {
  double swy = 0.0, sww = 0.0;                 // centered mode
  double sy_t = 0.0, sy_c = 0.0;               // raw mode
  std::size_t n_t = 0, n_c = 0, n = 0;

  void add(double w, double y, bool centered) {
    ++n;
    if (centered) {
      swy += w * y;
      sww += w * w;
    } else {
      if (w > 0.5) {
        ++n_t;
        sy_t += y;
      } else {
        ++n_c;
        sy_c += y;
      }
    }
  }

  bool has_effect(bool centered) const {
    return centered ? sww > 0.0 : (n_t > 0 && n_c > 0);
  }

  double tau(bool centered) const {
    if (centered) return sww > 0.0 ? swy / sww : 0.0;
    if (n_t == 0 || n_c == 0) return 0.0;
    return sy_t / static_cast<double>(n_t) - sy_c / static_cast<double>(n_c);
  }
};

}  // namespace detail

// Honest causal tree: splits chosen on the structure half to maximize
// (nL*nR/nP^2)*(tauL - tauR)^2; leaf effects from the estimation half with
// parent inheritance when an arm is missing.
inline Tree fit_honest_tree(const Matrix& features, const std::vector<double>& treatment,
                            const std::vector<double>& outcome, const HonestTreeParams& params,
                            std::uint64_t seed, const BinnedFeatures* shared_bins = nullptr,
                            const std::vector<std::size_t>* subsample = nullptr) {
  const std::size_t n = features.rows;
  if (treatment.size() != n || outcome.size() != n)
    throw ConfigError("fit_honest_tree: size mismatch");
  if (!params.centered) {
    bool any_t = false, any_c = false;
    for (double w : treatment) (w > 0.5 ? any_t : any_c) = true;
    if (!any_t || !any_c) throw ConfigError("fit_honest_tree: both treatment arms required");
  }

  BinnedFeatures local_bins;
  const BinnedFeatures* bf = shared_bins;
  if (!bf) {
    local_bins = BinnedFeatures::build(features);
    bf = &local_bins;
  }

  Rng rng(seed, /*stream=*/23);
  std::vector<std::size_t> rows;
  if (subsample) {
    rows = *subsample;
  } else {
    rows.resize(n);
    for (std::size_t i = 0; i < n; ++i) rows[i] = i;
  }

  // structure / estimation halves
  std::vector<std::size_t> structure, estimation;
  {
    std::vector<std::size_t> shuffled = rows;
    rng.shuffle(shuffled);
    const std::size_t ns = static_cast<std::size_t>(
        std::llround(params.honest_fraction * static_cast<double>(shuffled.size())));
    for (std::size_t i = 0; i < shuffled.size(); ++i)
      (i < ns ? structure : estimation).push_back(shuffled[i]);
  }
  if (structure.empty() || estimation.empty())
    throw ConfigError("fit_honest_tree: empty structure or estimation half");
  if (!params.centered) {
    detail::CausalNodeStats root_check;
    for (std::size_t r : structure) root_check.add(treatment[r], outcome[r], false);
    if (!root_check.has_effect(false))
      throw ConfigError("fit_honest_tree: an arm is absent in the structure half at the root");
  }

  Tree tree;
  Rng feat_rng = rng.substream(1);

  // iterative growth with an explicit stack
  struct Work {
    std::vector<std::size_t> rows;
    std::int32_t node;
    std::int32_t depth;
  };
  std::vector<Work> stack;
  tree.nodes.push_back({});
  stack.push_back({structure, 0, 0});

  const bool centered = params.centered;
  while (!stack.empty()) {
    Work wk = std::move(stack.back());
    stack.pop_back();
    TreeNode& node0 = tree.nodes[wk.node];
    node0.depth = wk.depth;

    detail::CausalNodeStats parent;
    for (std::size_t r : wk.rows) parent.add(treatment[r], outcome[r], centered);
    tree.nodes[wk.node].value = parent.tau(centered);

    if ((params.max_depth && static_cast<std::size_t>(wk.depth) >= params.max_depth) ||
        wk.rows.size() < 2 * params.min_leaf)
      continue;

    std::vector<std::size_t> features_to_try;
    {
      const std::size_t p = bf->p;
      if (params.mtry == 0 || params.mtry >= p) {
        features_to_try.resize(p);
        for (std::size_t j = 0; j < p; ++j) features_to_try[j] = j;
      } else {
        features_to_try = feat_rng.sample_without_replacement(p, params.mtry);
        std::sort(features_to_try.begin(), features_to_try.end());
      }
    }

    double best_crit = 0.0;
    std::int32_t best_feature = -1;
    double best_threshold = 0.0;
    std::vector<detail::CausalNodeStats> bins;
    const double np2 = static_cast<double>(wk.rows.size()) * static_cast<double>(wk.rows.size());
    for (std::size_t f : features_to_try) {
      const std::size_t nb = bf->n_bins(f);
      if (nb < 2) continue;
      bins.assign(nb, {});
      for (std::size_t r : wk.rows)
        bins[bf->bin(r, f)].add(treatment[r], outcome[r], centered);
      detail::CausalNodeStats left;
      for (std::size_t b = 0; b + 1 < nb; ++b) {
        const auto& s = bins[b];
        left.swy += s.swy;
        left.sww += s.sww;
        left.sy_t += s.sy_t;
        left.sy_c += s.sy_c;
        left.n_t += s.n_t;
        left.n_c += s.n_c;
        left.n += s.n;
        const std::size_t nR = wk.rows.size() - left.n;
        if (left.n < params.min_leaf || nR < params.min_leaf) continue;
        detail::CausalNodeStats right;
        right.swy = parent.swy - left.swy;
        right.sww = parent.sww - left.sww;
        right.sy_t = parent.sy_t - left.sy_t;
        right.sy_c = parent.sy_c - left.sy_c;
        right.n_t = parent.n_t - left.n_t;
        right.n_c = parent.n_c - left.n_c;
        right.n = nR;
        if (!left.has_effect(centered) || !right.has_effect(centered)) continue;
        const double dt = left.tau(centered) - right.tau(centered);
        const double crit =
            (static_cast<double>(left.n) * static_cast<double>(nR) / np2) * dt * dt;
        if (crit > best_crit + 1e-15) {
          best_crit = crit;
          best_feature = static_cast<std::int32_t>(f);
          best_threshold = bf->thresholds[f][b];
        }
      }
    }

    if (best_feature < 0) continue;

    std::vector<std::size_t> left_rows, right_rows;
    const auto& th = bf->thresholds[best_feature];
    const std::uint16_t split_bin = static_cast<std::uint16_t>(
        std::lower_bound(th.begin(), th.end(), best_threshold) - th.begin());
    for (std::size_t r : wk.rows)
      (bf->bin(r, static_cast<std::size_t>(best_feature)) <= split_bin ? left_rows : right_rows)
          .push_back(r);

    tree.nodes[wk.node].feature = best_feature;
    tree.nodes[wk.node].threshold = best_threshold;
    const std::int32_t li = static_cast<std::int32_t>(tree.nodes.size());
    tree.nodes.push_back({});
    const std::int32_t ri = static_cast<std::int32_t>(tree.nodes.size());
    tree.nodes.push_back({});
    tree.nodes[wk.node].left = li;
    tree.nodes[wk.node].right = ri;
    stack.push_back({std::move(right_rows), ri, wk.depth + 1});
    stack.push_back({std::move(left_rows), li, wk.depth + 1});
  }

  // honest leaf effects from the estimation half
  std::vector<detail::CausalNodeStats> est(tree.nodes.size());
  for (std::size_t r : estimation) {
    std::int32_t i = 0;
    for (;;) {
      est[i].add(treatment[r], outcome[r], centered);
      if (tree.nodes[i].feature < 0) break;
      i = features(r, tree.nodes[i].feature) <= tree.nodes[i].threshold ? tree.nodes[i].left
                                                                        : tree.nodes[i].right;
    }
  }
  // top-down resolution: nodes with a valid estimation-half effect use it,
  // the rest inherit from their parent (root falls back to the structure tau)
  {
    std::vector<double> eff(tree.nodes.size(), 0.0);
    std::vector<std::int32_t> order, parent(tree.nodes.size(), -1);
    order.push_back(0);
    for (std::size_t q = 0; q < order.size(); ++q) {
      const std::int32_t i = order[q];
      if (tree.nodes[i].feature >= 0) {
        parent[tree.nodes[i].left] = i;
        parent[tree.nodes[i].right] = i;
        order.push_back(tree.nodes[i].left);
        order.push_back(tree.nodes[i].right);
      }
    }
    for (std::int32_t i : order) {
      const double fallback = parent[i] < 0 ? tree.nodes[0].value : eff[parent[i]];
      eff[i] = est[i].has_effect(centered) ? est[i].tau(centered) : fallback;
    }
    for (std::size_t i = 0; i < tree.nodes.size(); ++i) tree.nodes[i].value = eff[i];
  }
  return tree;
}

}  // namespace causalaudit
