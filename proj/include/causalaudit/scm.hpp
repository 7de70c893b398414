#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <string>
#include <variant>
#include <vector>

#include "causalaudit/common.hpp"
#include "causalaudit/dataset.hpp"
#include "causalaudit/rng.hpp"

#include <json.hpp>

namespace causalaudit {

// Fully tabulated SCM over finite states with graph X->S, X->M, X->Y,
// S->M, S->Y, M->Y. Index convention: s in {0 (=s1), 1 (=s2)}.
struct DiscreteScm {
  std::vector<double> p_x;                                    // |X|
  std::vector<double> p_s_given_x;                            // P(S=s2 | x)
  std::vector<std::vector<std::vector<double>>> p_m_given_sx; // [s][x][m]
  std::vector<std::vector<std::vector<double>>> p_y_given_sxm;// [s][x][m] = P(Y=1|s,x,m)

  std::size_t n_x() const { return p_x.size(); }
  std::size_t n_m() const { return p_m_given_sx.empty() || p_m_given_sx[0].empty()
                                 ? 0 : p_m_given_sx[0][0].size(); }

  void validate() const {
    constexpr double tol = 1e-12;
    if (p_x.empty()) throw ConfigError("DiscreteScm: empty confounder state space");
    if (p_x.size() > 64) throw ConfigError("DiscreteScm: confounder state space capped at 64");
    auto check_dist = [&](const std::vector<double>& d, const char* what) {
      double sum = 0.0;
      for (double p : d) {
        if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(std::string(what) + ": probability out of [0,1]");
        sum += p;
      }
      if (std::abs(sum - 1.0) > tol) throw ConfigError(std::string(what) + ": does not sum to 1");
    };
    check_dist(p_x, "p_x");
    if (p_s_given_x.size() != p_x.size()) throw ConfigError("p_s_given_x: wrong size");
    for (double p : p_s_given_x)
      if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("p_s_given_x: probability out of [0,1]");
    if (p_m_given_sx.size() != 2 || p_y_given_sxm.size() != 2)
      throw ConfigError("mediator/outcome tables must have 2 sensitive states");
    const std::size_t nm = n_m();
    if (nm == 0) throw ConfigError("DiscreteScm: empty mediator state space");
    for (int s = 0; s < 2; ++s) {
      if (p_m_given_sx[s].size() != p_x.size() || p_y_given_sxm[s].size() != p_x.size())
        throw ConfigError("table row count does not match confounder states");
      for (std::size_t x = 0; x < p_x.size(); ++x) {
        if (p_m_given_sx[s][x].size() != nm) throw ConfigError("p_m_given_sx: ragged");
        check_dist(p_m_given_sx[s][x], "p_m_given_sx");
        if (p_y_given_sxm[s][x].size() != nm) throw ConfigError("p_y_given_sxm: ragged");
        for (double p : p_y_given_sxm[s][x])
          if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("p_y_given_sxm: probability out of [0,1]");
      }
    }
  }
};

// Linear-Gaussian SCM: x ~ N(0, I), scalar mediator m = a*s + g.x + sm*eps,
// y* = b*s + d*m + t.x + sy*eps. Optional logistic confounding of S on x.
// In binary mode y = 1{y* > cut}.
struct LinearScm {
  double p_s2 = 0.5;
  std::size_t x_dim = 1;
  double a = 0.0;
  std::vector<double> g;  // x -> m, length x_dim
  double b = 0.0;
  double d = 0.0;
  std::vector<double> t;  // x -> y, length x_dim
  double sigma_m = 1.0;
  double sigma_y = 1.0;
  double confound_intercept = 0.0;
  std::vector<double> confound;  // empty = S independent of X
  bool binary = false;
  double cut = 0.0;

  bool confounded() const { return !confound.empty(); }

  void validate() const {
    if (x_dim < 1) throw ConfigError("LinearScm: x_dim must be >= 1");
    if (sigma_m < 0.0 || sigma_y < 0.0) throw ConfigError("LinearScm: negative noise scale");
    if (!(p_s2 > 0.0 && p_s2 < 1.0) && !confounded())
      throw ConfigError("LinearScm: p_s2 must be in (0,1)");
    if (g.size() != x_dim || t.size() != x_dim)
      throw ConfigError("LinearScm: coefficient vectors must have length x_dim");
    if (confounded() && confound.size() != x_dim)
      throw ConfigError("LinearScm: confound vector must have length x_dim");
  }

  double p_s2_given_x(const double* x) const {
    if (!confounded()) return p_s2;
    double z = confound_intercept;
    for (std::size_t j = 0; j < x_dim; ++j) z += confound[j] * x[j];
    return 1.0 / (1.0 + std::exp(-z));
  }
};

using ScmSpec = std::variant<DiscreteScm, LinearScm>;

struct GroundTruth {
  double tv = 0.0;
  double ctf_de = 0.0;
  double ctf_ie = 0.0;
  double ctf_se = 0.0;
  double nde = 0.0;
  double nie = 0.0;
};

// ---------------------------------------------------------------------------
// sampling

inline RoleSchema scm_schema(const DiscreteScm&) {
  return RoleSchema{"s", {"s1"}, "y", "1", {"x"}, {"m"}};
}

inline RoleSchema scm_schema(const LinearScm& spec) {
  RoleSchema sc;
  sc.sensitive = "s";
  sc.s1_levels = {"s1"};
  sc.outcome = "y";
  sc.positive_level = "1";
  for (std::size_t j = 0; j < spec.x_dim; ++j) sc.confounders.push_back("x" + std::to_string(j + 1));
  sc.mediators = {"m"};
  return sc;
}

inline Dataset sample(const DiscreteScm& spec, std::size_t n, std::uint64_t seed) {
  spec.validate();
  if (n < 1) throw ConfigError("sample: n must be >= 1");
  Rng rng(seed, /*stream=*/11);

  Column cx, cs, cm, cy;
  cx.spec.name = "x";
  cx.spec.kind = ColumnKind::Categorical;
  for (std::size_t k = 0; k < spec.n_x(); ++k) cx.spec.levels.push_back("x" + std::to_string(k));
  cs.spec.name = "s";
  cs.spec.kind = ColumnKind::Categorical;
  cs.spec.levels = {"s1", "s2"};
  cm.spec.name = "m";
  cm.spec.kind = ColumnKind::Categorical;
  for (std::size_t k = 0; k < spec.n_m(); ++k) cm.spec.levels.push_back("m" + std::to_string(k));
  cy.spec.name = "y";
  cy.spec.kind = ColumnKind::Categorical;
  cy.spec.levels = {"0", "1"};

  for (std::size_t i = 0; i < n; ++i) {
    std::size_t x = rng.discrete(spec.p_x);
    int s = rng.bernoulli(spec.p_s_given_x[x]) ? 1 : 0;
    std::size_t m = rng.discrete(spec.p_m_given_sx[s][x]);
    int y = rng.bernoulli(spec.p_y_given_sxm[s][x][m]) ? 1 : 0;
    cx.codes.push_back(static_cast<std::int32_t>(x));
    cs.codes.push_back(s);
    cm.codes.push_back(static_cast<std::int32_t>(m));
    cy.codes.push_back(y);
  }

  Dataset ds;
  ds.columns = {cs, cx, cm, cy};
  ds.row_ids.resize(n);
  for (std::size_t i = 0; i < n; ++i) ds.row_ids[i] = i;
  return ds;
}

inline Dataset sample(const LinearScm& spec, std::size_t n, std::uint64_t seed) {
  spec.validate();
  if (n < 1) throw ConfigError("sample: n must be >= 1");
  Rng rng(seed, /*stream=*/13);

  std::vector<Column> xcols(spec.x_dim);
  for (std::size_t j = 0; j < spec.x_dim; ++j) {
    xcols[j].spec.name = "x" + std::to_string(j + 1);
    xcols[j].spec.kind = ColumnKind::Continuous;
  }
  Column cs, cm, cy;
  cs.spec.name = "s";
  cs.spec.kind = ColumnKind::Categorical;
  cs.spec.levels = {"s1", "s2"};
  cm.spec.name = "m";
  cm.spec.kind = ColumnKind::Continuous;
  cy.spec.name = "y";
  if (spec.binary) {
    cy.spec.kind = ColumnKind::Categorical;
    cy.spec.levels = {"0", "1"};
  } else {
    cy.spec.kind = ColumnKind::Continuous;
  }

  std::vector<double> x(spec.x_dim);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < spec.x_dim; ++j) {
      x[j] = rng.normal();
      xcols[j].values.push_back(x[j]);
    }
    int s = rng.bernoulli(spec.p_s2_given_x(x.data())) ? 1 : 0;
    double m = spec.a * s + spec.sigma_m * rng.normal();
    double ystar = spec.b * s + spec.d * m + spec.sigma_y * rng.normal();
    for (std::size_t j = 0; j < spec.x_dim; ++j) {
      m += spec.g[j] * x[j];
      ystar += (spec.d * spec.g[j] + spec.t[j]) * x[j];
    }
    cs.codes.push_back(s);
    cm.values.push_back(m);
    if (spec.binary)
      cy.codes.push_back(ystar > spec.cut ? 1 : 0);
    else
      cy.values.push_back(ystar);
  }

  Dataset ds;
  ds.columns.push_back(cs);
  for (auto& c : xcols) ds.columns.push_back(std::move(c));
  ds.columns.push_back(cm);
  ds.columns.push_back(cy);
  ds.row_ids.resize(n);
  for (std::size_t i = 0; i < n; ++i) ds.row_ids[i] = i;
  return ds;
}

inline Dataset sample(const ScmSpec& spec, std::size_t n, std::uint64_t seed) {
  return std::visit([&](const auto& s) { return sample(s, n, seed); }, spec);
}

// Binds the sampled dataset using the generated schema. For continuous-y
// LinearScm the binary-outcome check does not apply; y carries raw values.
inline RoledDataset sample_roled(const LinearScm& spec, std::size_t n, std::uint64_t seed) {
  Dataset ds = sample(spec, n, seed);
  if (spec.binary) return bind_roles(ds, scm_schema(spec));
  RoledDataset rd;
  rd.schema = scm_schema(spec);
  rd.y = ds.column("y").values;
  const Column& cs = ds.column("s");
  rd.s.resize(ds.n_rows());
  for (std::size_t i = 0; i < ds.n_rows(); ++i) rd.s[i] = cs.codes[i] == 1 ? 1.0 : 0.0;
  rd.data = std::move(ds);
  return rd;
}

inline RoledDataset sample_roled(const DiscreteScm& spec, std::size_t n, std::uint64_t seed) {
  return bind_roles(sample(spec, n, seed), scm_schema(spec));
}

// ---------------------------------------------------------------------------
// exact ground truth

inline GroundTruth true_effects(const DiscreteScm& spec) {
  spec.validate();
  const std::size_t NX = spec.n_x(), NM = spec.n_m();

  // P(x|s) by Bayes
  std::vector<double> px_s1(NX), px_s2(NX);
  double z1 = 0.0, z2 = 0.0;
  for (std::size_t x = 0; x < NX; ++x) {
    px_s1[x] = spec.p_x[x] * (1.0 - spec.p_s_given_x[x]);
    px_s2[x] = spec.p_x[x] * spec.p_s_given_x[x];
    z1 += px_s1[x];
    z2 += px_s2[x];
  }
  if (z1 <= 0.0 || z2 <= 0.0) throw ConfigError("true_effects: a sensitive group has probability 0");
  for (std::size_t x = 0; x < NX; ++x) {
    px_s1[x] /= z1;
    px_s2[x] /= z2;
  }

  auto mu = [&](int s, std::size_t x, std::size_t m) { return spec.p_y_given_sxm[s][x][m]; };
  auto nu = [&](int s, std::size_t x) {
    double v = 0.0;
    for (std::size_t m = 0; m < NM; ++m) v += mu(s, x, m) * spec.p_m_given_sx[s][x][m];
    return v;
  };

  GroundTruth gt;
  for (std::size_t x = 0; x < NX; ++x) {
    double de_x = 0.0, ie_x = 0.0, nde_x = 0.0, nie_x = 0.0;
    for (std::size_t m = 0; m < NM; ++m) {
      de_x += spec.p_m_given_sx[0][x][m] * (mu(1, x, m) - mu(0, x, m));
      ie_x += (spec.p_m_given_sx[0][x][m] - spec.p_m_given_sx[1][x][m]) * mu(1, x, m);
      nde_x += spec.p_m_given_sx[0][x][m] * (mu(1, x, m) - mu(0, x, m));
      nie_x += (spec.p_m_given_sx[1][x][m] - spec.p_m_given_sx[0][x][m]) * mu(0, x, m);
    }
    gt.ctf_de += px_s1[x] * de_x;
    gt.ctf_ie += px_s1[x] * ie_x;
    gt.ctf_se += (px_s1[x] - px_s2[x]) * nu(1, x);
    gt.nde += spec.p_x[x] * nde_x;
    gt.nie += spec.p_x[x] * nie_x;
    gt.tv += px_s2[x] * nu(1, x) - px_s1[x] * nu(0, x);
  }
  return gt;
}

namespace detail {

// Gauss-Hermite nodes/weights for N(0,1) expectation via Golub-Welsch.
inline void gauss_hermite(std::size_t n, std::vector<double>& nodes, std::vector<double>& weights) {
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 1; i < n; ++i) {
    const double beta = std::sqrt(static_cast<double>(i) / 2.0);
    J(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i - 1)) = beta;
    J(static_cast<Eigen::Index>(i - 1), static_cast<Eigen::Index>(i)) = beta;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  nodes.resize(n);
  weights.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    nodes[i] = es.eigenvalues()(static_cast<Eigen::Index>(i)) * std::sqrt(2.0);  // physicists' -> N(0,1)
    const double v0 = es.eigenvectors()(0, static_cast<Eigen::Index>(i));
    weights[i] = v0 * v0;
  }
}

inline double std_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

}  // namespace detail

// Exact effects for the linear-Gaussian family. Unconfounded specs use closed
// forms (Gaussian convolution); confounded specs integrate over x with
// 129-point Gauss-Hermite per dimension (x_dim <= 3).
inline GroundTruth true_effects(const LinearScm& spec) {
  spec.validate();

  // E[Y_s | x set by M from s', outcome arm s], marginal over mediator and
  // outcome noise given x. Continuous mode: the conditional mean; binary
  // mode: P(y* > cut) via the normal convolution identity.
  const double sig2_m_out = spec.d * spec.d * spec.sigma_m * spec.sigma_m +
                            spec.sigma_y * spec.sigma_y;
  auto h_given_x = [&](int s_out, int s_med, const double* x) {
    double mean = spec.b * s_out + spec.d * spec.a * s_med;
    for (std::size_t j = 0; j < spec.x_dim; ++j)
      mean += (spec.d * spec.g[j] + spec.t[j]) * x[j];
    if (!spec.binary) return mean;
    return detail::std_normal_cdf((mean - spec.cut) / std::sqrt(sig2_m_out));
  };

  GroundTruth gt;
  if (!spec.confounded()) {
    double h[2][2];  // [s_out][s_med], marginal over x too
    if (!spec.binary) {
      for (int so = 0; so < 2; ++so)
        for (int sm = 0; sm < 2; ++sm)
          h[so][sm] = spec.b * so + spec.d * spec.a * sm;
    } else {
      double sig2_total = sig2_m_out;
      for (std::size_t j = 0; j < spec.x_dim; ++j) {
        const double u = spec.d * spec.g[j] + spec.t[j];
        sig2_total += u * u;
      }
      for (int so = 0; so < 2; ++so)
        for (int sm = 0; sm < 2; ++sm)
          h[so][sm] = detail::std_normal_cdf(
              (spec.b * so + spec.d * spec.a * sm - spec.cut) / std::sqrt(sig2_total));
    }
    gt.ctf_de = h[1][0] - h[0][0];
    gt.ctf_ie = h[1][0] - h[1][1];
    gt.ctf_se = 0.0;
    gt.tv = h[1][1] - h[0][0];
    gt.nde = h[1][0] - h[0][0];
    gt.nie = h[0][1] - h[0][0];
    return gt;
  }

  if (spec.x_dim > 3)
    throw ConfigError("true_effects: confounded LinearScm limited to x_dim <= 3");
  std::vector<double> nodes, weights;
  detail::gauss_hermite(129, nodes, weights);
  const std::size_t q = nodes.size();

  double z1 = 0.0, z2 = 0.0;
  double acc_de = 0.0, acc_ie = 0.0, acc_nu1_s1 = 0.0, acc_nu1_s2 = 0.0;
  double acc_nu0_s1 = 0.0, acc_nde = 0.0, acc_nie = 0.0;
  std::vector<std::size_t> ix(spec.x_dim, 0);
  std::vector<double> x(spec.x_dim);
  bool done = false;
  while (!done) {
    double w = 1.0;
    for (std::size_t j = 0; j < spec.x_dim; ++j) {
      x[j] = nodes[ix[j]];
      w *= weights[ix[j]];
    }
    const double p2 = spec.p_s2_given_x(x.data());
    const double w1 = w * (1.0 - p2), w2 = w * p2;
    z1 += w1;
    z2 += w2;
    const double h10 = h_given_x(1, 0, x.data());
    const double h00 = h_given_x(0, 0, x.data());
    const double h11 = h_given_x(1, 1, x.data());
    const double h01 = h_given_x(0, 1, x.data());
    acc_de += w1 * (h10 - h00);
    acc_ie += w1 * (h10 - h11);
    acc_nu1_s1 += w1 * h11;
    acc_nu1_s2 += w2 * h11;
    acc_nu0_s1 += w1 * h00;
    acc_nde += w * (h10 - h00);
    acc_nie += w * (h01 - h00);

    for (std::size_t j = 0;; ++j) {
      if (j == spec.x_dim) {
        done = true;
        break;
      }
      if (++ix[j] < q) break;
      ix[j] = 0;
    }
  }
  gt.ctf_de = acc_de / z1;
  gt.ctf_ie = acc_ie / z1;
  gt.ctf_se = acc_nu1_s1 / z1 - acc_nu1_s2 / z2;
  gt.tv = acc_nu1_s2 / z2 - acc_nu0_s1 / z1;
  gt.nde = acc_nde;
  gt.nie = acc_nie;
  return gt;
}

inline GroundTruth true_effects(const ScmSpec& spec) {
  return std::visit([](const auto& s) { return true_effects(s); }, spec);
}

// ---------------------------------------------------------------------------
// JSON spec files: {"discrete": {...}} or {"linear": {...}}

inline DiscreteScm discrete_from_json(const nlohmann::json& j) {
  DiscreteScm s;
  s.p_x = j.at("p_x").get<std::vector<double>>();
  s.p_s_given_x = j.at("p_s_given_x").get<std::vector<double>>();
  s.p_m_given_sx = j.at("p_m_given_sx").get<std::vector<std::vector<std::vector<double>>>>();
  s.p_y_given_sxm = j.at("p_y_given_sxm").get<std::vector<std::vector<std::vector<double>>>>();
  s.validate();
  return s;
}

inline LinearScm linear_from_json(const nlohmann::json& j) {
  LinearScm s;
  s.p_s2 = j.value("p_s2", 0.5);
  s.x_dim = j.at("x_dim").get<std::size_t>();
  s.a = j.value("a", 0.0);
  s.b = j.value("b", 0.0);
  s.d = j.value("d", 0.0);
  s.g = j.value("g", std::vector<double>(s.x_dim, 0.0));
  s.t = j.value("t", std::vector<double>(s.x_dim, 0.0));
  s.sigma_m = j.value("sigma_m", 1.0);
  s.sigma_y = j.value("sigma_y", 1.0);
  s.confound_intercept = j.value("confound_intercept", 0.0);
  s.confound = j.value("confound", std::vector<double>{});
  s.binary = j.value("binary", false);
  s.cut = j.value("cut", 0.0);
  s.validate();
  return s;
}

inline ScmSpec scm_from_json(const nlohmann::json& j) {
  if (j.contains("discrete")) return discrete_from_json(j.at("discrete"));
  if (j.contains("linear")) return linear_from_json(j.at("linear"));
  throw ConfigError("SCM spec must contain a 'discrete' or 'linear' body");
}

inline ScmSpec load_scm(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open SCM spec: " + path);
  nlohmann::json j;
  in >> j;
  return scm_from_json(j);
}

inline nlohmann::json to_json(const GroundTruth& gt) {
  return nlohmann::json{{"tv", gt.tv},     {"ctf_de", gt.ctf_de}, {"ctf_ie", gt.ctf_ie},
                        {"ctf_se", gt.ctf_se}, {"nde", gt.nde},   {"nie", gt.nie}};
}

}  // namespace causalaudit
