#pragma once

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "causalaudit/common.hpp"
#include "causalaudit/dataset.hpp"
#include "causalaudit/decompose.hpp"
#include "causalaudit/forest.hpp"
#include "causalaudit/learners.hpp"
#include "causalaudit/subgroup.hpp"

#include <json.hpp>

namespace causalaudit {

// ---------------------------------------------------------------------------
// role schema (de)serialization and built-in presets

inline nlohmann::json to_json(const RoleSchema& s) {
  return nlohmann::json{{"sensitive", s.sensitive},     {"s1_levels", s.s1_levels},
                        {"outcome", s.outcome},         {"positive_level", s.positive_level},
                        {"confounders", s.confounders}, {"mediators", s.mediators}};
}

inline RoleSchema schema_from_json(const nlohmann::json& j) {
  RoleSchema s;
  try {
    s.sensitive = j.at("sensitive").get<std::string>();
    s.s1_levels = j.at("s1_levels").get<std::vector<std::string>>();
    s.outcome = j.at("outcome").get<std::string>();
    s.positive_level = j.at("positive_level").get<std::string>();
    s.confounders = j.at("confounders").get<std::vector<std::string>>();
    s.mediators = j.at("mediators").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("role schema: ") + e.what());
  }
  return s;
}

// Census-income setting: race as the sensitive attribute with every non-White
// level pooled into s1. The level list covers the dataset's recorded codes;
// pooling them is our reading of "Non-White".
inline RoleSchema preset_adult() {
  RoleSchema s;
  s.sensitive = "race";
  s.s1_levels = {"Amer-Indian-Eskimo", "Asian-Pac-Islander", "Black", "Other"};
  s.outcome = "income";
  s.positive_level = ">50K";
  s.confounders = {"age", "sex", "marital-status"};
  s.mediators = {"education", "workclass",    "occupation",
                 "capital-gain", "capital-loss", "hours-per-week"};
  return s;
}

// Home-mortgage setting. Expects a CSV pre-filtered to the five named race
// codes with the loan outcome collapsed to Accepted/Rejected.
inline RoleSchema preset_hdma_white() {
  RoleSchema s;
  s.sensitive = "applicant_race_name_1";
  s.s1_levels = {"American Indian or Alaska Native", "Asian", "Black or African American",
                 "Native Hawaiian or Other Pacific Islander"};
  s.outcome = "loan_status";
  s.positive_level = "Accepted";
  s.confounders = {"property_type_name", "owner_occupancy_name", "applicant_sex_name",
                   "loan_type_name"};
  s.mediators = {"loan_amount_000s", "applicant_income_000s"};
  return s;
}

inline RoleSchema preset_hdma_asian() {
  RoleSchema s = preset_hdma_white();
  s.s1_levels = {"Asian"};
  return s;
}

inline BinningSpec preset_binning(const std::string& name) {
  if (name == "adult") return BinningSpec::make({-0.01, 0.01, 0.05});
  return BinningSpec::make({-0.005, 0.025, 0.07});
}

inline RoleSchema preset_schema(const std::string& name) {
  if (name == "adult") return preset_adult();
  if (name == "hdma-white") return preset_hdma_white();
  if (name == "hdma-asian") return preset_hdma_asian();
  throw ConfigError("unknown preset '" + name + "' (expected adult, hdma-white, hdma-asian)");
}

// ---------------------------------------------------------------------------
// learner / forest / binning specs in JSON

inline nlohmann::json to_json(const LearnerSpec& s) {
  nlohmann::json j;
  j["objective"] = s.objective == Objective::Logistic ? "logistic" : "squared_error";
  if (const auto* f = std::get_if<RegressionForestSpec>(&s.kind)) {
    j["kind"] = "regression_forest";
    j["num_trees"] = f->num_trees;
    j["min_leaf"] = f->min_leaf;
    j["mtry"] = f->mtry;
    j["honest_fraction"] = f->honest_fraction;
    j["honest"] = f->honest;
  } else if (const auto* b = std::get_if<BoostedStumpsSpec>(&s.kind)) {
    j["kind"] = "boosted_stumps";
    j["rounds"] = b->rounds;
    j["learning_rate"] = b->learning_rate;
    j["max_depth"] = b->max_depth;
  } else {
    const auto& l = std::get<RegularizedLinearSpec>(s.kind);
    j["kind"] = "regularized_linear";
    j["l2_penalty"] = l.l2_penalty;
    j["max_iterations"] = l.max_iterations;
    j["tolerance"] = l.tolerance;
  }
  return j;
}

inline LearnerSpec learner_from_json(const nlohmann::json& j) {
  LearnerSpec s;
  try {
    const std::string kind = j.value("kind", "boosted_stumps");
    if (kind == "regression_forest") {
      RegressionForestSpec f;
      f.num_trees = j.value("num_trees", f.num_trees);
      f.min_leaf = j.value("min_leaf", f.min_leaf);
      f.mtry = j.value("mtry", f.mtry);
      f.honest_fraction = j.value("honest_fraction", f.honest_fraction);
      f.honest = j.value("honest", f.honest);
      s.kind = f;
    } else if (kind == "boosted_stumps") {
      BoostedStumpsSpec b;
      b.rounds = j.value("rounds", b.rounds);
      b.learning_rate = j.value("learning_rate", b.learning_rate);
      b.max_depth = j.value("max_depth", b.max_depth);
      s.kind = b;
    } else if (kind == "regularized_linear") {
      RegularizedLinearSpec l;
      l.l2_penalty = j.value("l2_penalty", l.l2_penalty);
      l.max_iterations = j.value("max_iterations", l.max_iterations);
      l.tolerance = j.value("tolerance", l.tolerance);
      s.kind = l;
    } else {
      throw ConfigError("unknown learner kind '" + kind + "'");
    }
    const std::string obj = j.value("objective", "squared_error");
    if (obj == "logistic")
      s.objective = Objective::Logistic;
    else if (obj == "squared_error")
      s.objective = Objective::SquaredError;
    else
      throw ConfigError("unknown objective '" + obj + "'");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("learner spec: ") + e.what());
  }
  s.validate();
  return s;
}

inline nlohmann::json to_json(const ForestParams& p) {
  return nlohmann::json{{"num_trees", p.num_trees},
                        {"min_leaf", p.min_leaf},
                        {"mtry", p.mtry},
                        {"honest_fraction", p.honest_fraction},
                        {"subsample_fraction", p.subsample_fraction},
                        {"local_centering", p.local_centering},
                        {"centering_folds", p.centering_folds}};
}

inline ForestParams forest_from_json(const nlohmann::json& j) {
  ForestParams p;
  try {
    p.num_trees = j.value("num_trees", p.num_trees);
    p.min_leaf = j.value("min_leaf", p.min_leaf);
    p.mtry = j.value("mtry", p.mtry);
    p.honest_fraction = j.value("honest_fraction", p.honest_fraction);
    p.subsample_fraction = j.value("subsample_fraction", p.subsample_fraction);
    p.local_centering = j.value("local_centering", p.local_centering);
    p.centering_folds = j.value("centering_folds", p.centering_folds);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("forest params: ") + e.what());
  }
  p.validate();
  return p;
}

inline nlohmann::json to_json(const BinningSpec& b) {
  return nlohmann::json{{"thresholds", b.thresholds}, {"labels", b.labels}};
}

inline BinningSpec binning_from_json(const nlohmann::json& j) {
  try {
    return BinningSpec::make(j.at("thresholds").get<std::vector<double>>(),
                             j.value("labels", std::vector<std::string>{}));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("binning spec: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// run configuration

enum class CiMode { Bootstrap, Reruns };

struct RunConfig {
  std::string dataset_path;
  std::string schema_path;  // exactly one of schema_path / preset
  std::string preset;
  RoleSchema schema;

  LearnerSpec mu_spec;
  LearnerSpec nu_spec;
  LearnerSpec baseline_spec;
  ForestParams forest;
  BinningSpec binning;

  double test_fraction = 0.2;
  std::size_t n_bootstrap = 100;
  std::uint64_t seed = 0;
  bool has_seed = false;
  std::size_t threads = 1;
  CiMode ci_mode = CiMode::Bootstrap;
  std::string out_dir = ".";
};

inline nlohmann::json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return j;
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig c;
  try {
    c.dataset_path = j.value("dataset", "");
    c.schema_path = j.value("schema", "");
    c.preset = j.value("preset", "");
    if (!c.schema_path.empty() && !c.preset.empty())
      throw ConfigError("config: give either schema or preset, not both");
    if (!c.preset.empty()) {
      c.schema = preset_schema(c.preset);
      c.binning = preset_binning(c.preset);
    } else {
      c.binning = BinningSpec::make({-0.01, 0.01, 0.05});
    }
    if (!c.schema_path.empty()) c.schema = schema_from_json(load_json_file(c.schema_path));

    DecomposeConfig dd = DecomposeConfig::defaults();
    c.mu_spec = j.contains("mu_learner") ? learner_from_json(j.at("mu_learner")) : dd.mu_spec;
    c.nu_spec = j.contains("nu_learner") ? learner_from_json(j.at("nu_learner")) : dd.nu_spec;
    if (j.contains("baseline_learner")) {
      c.baseline_spec = learner_from_json(j.at("baseline_learner"));
    } else {
      c.baseline_spec.kind = BoostedStumpsSpec{200, 0.1, 3};
      c.baseline_spec.objective = Objective::Logistic;
    }
    if (j.contains("forest")) c.forest = forest_from_json(j.at("forest"));
    if (j.contains("binning")) c.binning = binning_from_json(j.at("binning"));

    c.test_fraction = j.value("test_fraction", c.test_fraction);
    c.n_bootstrap = j.value("bootstrap", c.n_bootstrap);
    if (j.contains("seed")) {
      c.seed = j.at("seed").get<std::uint64_t>();
      c.has_seed = true;
    }
    c.threads = j.value("threads", c.threads);
    const std::string ci = j.value("ci", "bootstrap");
    if (ci == "bootstrap")
      c.ci_mode = CiMode::Bootstrap;
    else if (ci == "reruns")
      c.ci_mode = CiMode::Reruns;
    else
      throw ConfigError("config: ci must be bootstrap or reruns");
    c.out_dir = j.value("out", c.out_dir);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("run config: ") + e.what());
  }
  if (!(c.test_fraction > 0.0 && c.test_fraction < 1.0))
    throw ConfigError("config: test_fraction must be in (0,1)");
  return c;
}

inline nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j;
  j["dataset"] = c.dataset_path;
  if (!c.preset.empty()) j["preset"] = c.preset;
  j["role_schema"] = to_json(c.schema);
  j["mu_learner"] = to_json(c.mu_spec);
  j["nu_learner"] = to_json(c.nu_spec);
  j["baseline_learner"] = to_json(c.baseline_spec);
  j["forest"] = to_json(c.forest);
  j["binning"] = to_json(c.binning);
  j["test_fraction"] = c.test_fraction;
  j["bootstrap"] = c.n_bootstrap;
  j["seed"] = c.seed;
  j["ci"] = c.ci_mode == CiMode::Bootstrap ? "bootstrap" : "reruns";
  return j;
}

// ---------------------------------------------------------------------------
// content hashing for manifests (FNV-1a, 64-bit)

inline std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string hash_hex(const std::string& bytes) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(bytes);
  return os.str();
}

}  // namespace causalaudit
