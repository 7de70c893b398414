// Command-line front end: simulate synthetic data from structural models and
// run the two-step disparity analysis (causal decomposition, then sub-group
// construction and classifier auditing) with reproducible seeds and a
// manifest of every emitted artifact.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "causalaudit/audit.hpp"
#include "causalaudit/config.hpp"
#include "causalaudit/decompose.hpp"
#include "causalaudit/forest.hpp"
#include "causalaudit/scm.hpp"
#include "causalaudit/subgroup.hpp"

namespace fs = std::filesystem;
using namespace causalaudit;

namespace {

// A runtime failure inside a named pipeline stage; maps to exit code 3.
struct StageError : std::runtime_error {
  StageError(const std::string& stage, const std::string& what)
      : std::runtime_error("stage '" + stage + "' failed: " + what) {}
};

template <typename Fn>
auto run_stage(const std::string& name, Fn&& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

class ArtifactWriter {
 public:
  explicit ArtifactWriter(std::string out_dir) : dir_(std::move(out_dir)) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw ConfigError("cannot create output directory: " + dir_);
  }

  void write(const std::string& name, const std::string& content) {
    const fs::path p = fs::path(dir_) / name;
    std::ofstream out(p, std::ios::binary);
    if (!out) throw StageError("write", "cannot open " + p.string());
    out << content;
    hashes_[name] = hash_hex(content);
  }

  void write_manifest(const nlohmann::json& config_echo, std::uint64_t seed) {
    nlohmann::json files;
    for (const auto& [name, hash] : hashes_) files[name] = hash;
    nlohmann::json m{{"config_hash", hash_hex(config_echo.dump())},
                     {"seed", seed},
                     {"files", files}};
    const fs::path p = fs::path(dir_) / "manifest.json";
    std::ofstream out(p, std::ios::binary);
    out << m.dump(2) << "\n";
  }

 private:
  std::string dir_;
  std::map<std::string, std::string> hashes_;
};

struct CommonFlags {
  std::string config_path;
  std::string data_path;
  std::string schema_path;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  std::string out_dir;
  std::string ci;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool needs_data) {
  cmd->add_option("--config", f.config_path, "run configuration JSON");
  if (needs_data) {
    cmd->add_option("--data", f.data_path, "dataset CSV");
    cmd->add_option("--schema", f.schema_path, "role schema JSON");
    cmd->add_option("--preset", f.preset, "built-in schema preset (adult, hdma-white, hdma-asian)");
  }
  cmd->add_option("--seed", f.seed, "root seed (required here or in the config)");
  cmd->add_option("--threads", f.threads, "worker threads for parallel stages");
  cmd->add_option("--out", f.out_dir, "output directory");
  cmd->add_option("--ci", f.ci, "audit CI mode: bootstrap | reruns");
}

RunConfig resolve_config(const CommonFlags& f, bool needs_data) {
  RunConfig c = f.config_path.empty() ? run_config_from_json(nlohmann::json::object())
                                      : run_config_from_json(load_json_file(f.config_path));
  if (!f.data_path.empty()) c.dataset_path = f.data_path;
  if (!f.preset.empty()) {
    c.preset = f.preset;
    c.schema = preset_schema(f.preset);
    c.binning = preset_binning(f.preset);
  }
  if (!f.schema_path.empty()) c.schema = schema_from_json(load_json_file(f.schema_path));
  if (f.seed) {
    c.seed = *f.seed;
    c.has_seed = true;
  }
  if (f.threads) c.threads = *f.threads;
  if (!f.out_dir.empty()) c.out_dir = f.out_dir;
  if (!f.ci.empty()) {
    if (f.ci == "bootstrap")
      c.ci_mode = CiMode::Bootstrap;
    else if (f.ci == "reruns")
      c.ci_mode = CiMode::Reruns;
    else
      throw ConfigError("--ci must be bootstrap or reruns");
  }
  if (!c.has_seed) throw ConfigError("a seed is required (--seed or config \"seed\")");
  if (needs_data) {
    if (c.dataset_path.empty()) throw ConfigError("a dataset is required (--data or config \"dataset\")");
    if (c.schema.sensitive.empty())
      throw ConfigError("a role schema is required (--schema, --preset, or config)");
  }
  return c;
}

RoledDataset load_roled(const RunConfig& c) {
  Dataset raw = load_csv(c.dataset_path);
  RoledDataset rd = bind_roles(raw, c.schema);
  if (raw.dropped_missing > 0)
    std::cerr << "note: dropped " << raw.dropped_missing << " rows with missing cells\n";
  return rd;
}

DecomposeConfig decompose_config(const RunConfig& c) {
  DecomposeConfig dc = DecomposeConfig::defaults();
  dc.mu_spec = c.mu_spec;
  dc.nu_spec = c.nu_spec;
  dc.n_bootstrap = c.n_bootstrap;
  dc.seed = Rng(c.seed).substream("decompose").next_u64();
  dc.threads = c.threads;
  return dc;
}

std::string effects_csv(const RoledDataset& data, const IndividualEffects& eff) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(6);
  os << "row_id,tau\n";
  for (std::size_t i = 0; i < eff.tau.size(); ++i)
    os << data.data.row_ids[i] << "," << eff.tau[i] << "\n";
  return os.str();
}

std::string importance_csv(const CausalForestModel& model, const VariableImportance& vi) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(6);
  os << "variable,importance\n";
  for (const auto& [name, score] : importance_by_source(model, vi))
    os << name << "," << score << "\n";
  return os.str();
}

void print_decomposition(const DecompositionResult& r) {
  std::printf("n = %zu, baseline s1: %s\n", r.n_rows, r.baseline.c_str());
  auto line = [](const char* name, const EffectEstimate& e) {
    std::printf("  %-7s %s\n", name, format_effect(e).c_str());
  };
  line("tv", r.tv);
  line("ctf_de", r.ctf_de);
  line("ctf_ie", r.ctf_ie);
  line("ctf_se", r.ctf_se);
  line("nde", r.nde);
  line("nie", r.nie);
}

// ---------------------------------------------------------------------------
// subcommands

int cmd_simulate(const std::string& spec_path, std::size_t n, const CommonFlags& flags) {
  if (n == 0) throw ConfigError("simulate: n must be positive");
  if (!flags.seed) throw ConfigError("a seed is required (--seed)");
  ScmSpec spec = load_scm(spec_path);
  ArtifactWriter out(flags.out_dir.empty() ? "." : flags.out_dir);

  Dataset data = run_stage("simulate", [&] { return sample(spec, n, *flags.seed); });
  out.write("dataset.csv", dataset_csv(data));
  GroundTruth gt = run_stage("truth", [&] {
    return std::visit([](const auto& s) { return true_effects(s); }, spec);
  });
  out.write("truth.json", to_json(gt).dump(2) + "\n");
  out.write_manifest(nlohmann::json{{"spec", spec_path}, {"n", n}}, *flags.seed);
  std::printf("wrote dataset.csv (%zu rows) and truth.json\n", data.n_rows());
  return 0;
}

int cmd_decompose(const CommonFlags& flags, const std::string& truth_path) {
  RunConfig cfg = resolve_config(flags, true);
  RoledDataset data = load_roled(cfg);
  ArtifactWriter out(cfg.out_dir);

  DecompositionResult res =
      run_stage("decompose", [&] { return estimate_decomposition(data, decompose_config(cfg)); });
  out.write("decomposition.json", to_json(res).dump(2) + "\n");
  out.write("decomposition.csv", decomposition_csv(res));
  out.write_manifest(to_json(cfg), cfg.seed);
  print_decomposition(res);

  if (!truth_path.empty()) {
    GroundTruth gt;
    nlohmann::json j = load_json_file(truth_path);
    gt.tv = j.at("tv");
    gt.ctf_de = j.at("ctf_de");
    gt.ctf_ie = j.at("ctf_ie");
    gt.ctf_se = j.at("ctf_se");
    gt.nde = j.at("nde");
    gt.nie = j.at("nie");
    std::printf("\n%-8s %12s %12s %12s\n", "effect", "estimate", "truth", "diff");
    auto row = [](const char* name, const EffectEstimate& e, double t) {
      std::printf("%-8s %12.6f %12.6f %12.6f\n", name, e.point, t, e.point - t);
    };
    row("tv", res.tv, gt.tv);
    row("ctf_de", res.ctf_de, gt.ctf_de);
    row("ctf_ie", res.ctf_ie, gt.ctf_ie);
    row("ctf_se", res.ctf_se, gt.ctf_se);
    row("nde", res.nde, gt.nde);
    row("nie", res.nie, gt.nie);
  }
  return 0;
}

struct ForestOutput {
  CausalForestModel model;
  IndividualEffects effects;
};

ForestOutput run_forest(const RoledDataset& data, const RunConfig& cfg) {
  return run_stage("forest", [&] {
    ForestParams fp = cfg.forest;
    fp.threads = cfg.threads;
    ForestOutput fo;
    fo.model = fit_direct_effect_forest(data, fp, Rng(cfg.seed).substream("forest").next_u64());
    fo.effects = predict_effects(fo.model, data);
    return fo;
  });
}

int cmd_effects(const CommonFlags& flags, double bin_width) {
  RunConfig cfg = resolve_config(flags, true);
  RoledDataset data = load_roled(cfg);
  ArtifactWriter out(cfg.out_dir);

  ForestOutput fo = run_forest(data, cfg);
  out.write("effects.csv", effects_csv(data, fo.effects));
  out.write("histogram.csv", histogram_csv(export_histogram(fo.effects, bin_width)));
  out.write("importance.csv", importance_csv(fo.model, variable_importance(fo.model)));
  out.write_manifest(to_json(cfg), cfg.seed);
  std::printf("wrote effects.csv, histogram.csv, importance.csv (%zu rows, %zu trees)\n",
              data.n_rows(), fo.model.trees.size());
  return 0;
}

int cmd_subgroup(const CommonFlags& flags, double bin_width) {
  RunConfig cfg = resolve_config(flags, true);
  RoledDataset data = load_roled(cfg);
  ArtifactWriter out(cfg.out_dir);

  ForestOutput fo = run_forest(data, cfg);
  SubgroupAssignment asg = run_stage("assign", [&] { return assign(fo.effects, cfg.binning); });
  SubgroupSummary sm = run_stage("summarize", [&] { return summarize(data, asg); });
  out.write("effects.csv", effects_csv(data, fo.effects));
  out.write("histogram.csv", histogram_csv(export_histogram(fo.effects, bin_width)));
  out.write("subgroup.json", to_json(sm, data.schema).dump(2) + "\n");
  out.write("subgroup.csv", subgroup_csv(sm));
  out.write_manifest(to_json(cfg), cfg.seed);
  for (std::size_t g = 0; g < sm.spec.n_groups(); ++g) {
    if (std::isfinite(sm.group_tv[g]))
      std::printf("%s: n=%zu tv=%.6f\n", sm.spec.labels[g].c_str(), sm.group_sizes[g],
                  sm.group_tv[g]);
    else
      std::printf("%s: n=%zu tv=n/a\n", sm.spec.labels[g].c_str(), sm.group_sizes[g]);
  }
  return 0;
}

int cmd_audit(const CommonFlags& flags, const std::string& predictions_path) {
  RunConfig cfg = resolve_config(flags, true);
  RoledDataset data = load_roled(cfg);
  ArtifactWriter out(cfg.out_dir);

  AuditReport report;
  if (!predictions_path.empty()) {
    // external model: whole dataset is the evaluation set
    ForestOutput fo = run_forest(data, cfg);
    SubgroupAssignment asg = run_stage("assign", [&] { return assign(fo.effects, cfg.binning); });
    PredictionSet preds = load_predictions_csv(predictions_path);
    report = run_stage("evaluate", [&] {
      return evaluate(preds, asg, data, cfg.n_bootstrap,
                      Rng(cfg.seed).substream("audit").next_u64());
    });
  } else {
    ForestOutput fo = run_forest(data, cfg);
    SubgroupAssignment asg = run_stage("assign", [&] { return assign(fo.effects, cfg.binning); });
    SplitResult split = run_stage("split", [&] {
      return split_stratified(data, cfg.test_fraction, asg.group,
                              Rng(cfg.seed).substream("split").next_u64());
    });
    for (const auto& w : split.warnings) std::cerr << "note: " << w << "\n";
    SubgroupAssignment test_asg;
    test_asg.spec = asg.spec;
    for (std::size_t i : split.test_idx) test_asg.group.push_back(asg.group[i]);

    const std::uint64_t audit_seed = Rng(cfg.seed).substream("audit").next_u64();
    if (cfg.ci_mode == CiMode::Reruns) {
      report = run_stage("evaluate", [&] {
        return evaluate_reruns(split.train, split.test, test_asg, cfg.baseline_spec,
                               cfg.n_bootstrap, audit_seed);
      });
    } else {
      FittedModel baseline = run_stage("baseline", [&] {
        return train_baseline(split.train, cfg.baseline_spec,
                              Rng(cfg.seed).substream("baseline").next_u64());
      });
      PredictionSet preds = predict_labels(baseline, split.test);
      out.write("predictions.csv", predictions_csv(preds));
      report = run_stage("evaluate", [&] {
        return evaluate(preds, test_asg, split.test, cfg.n_bootstrap, audit_seed);
      });
    }
  }
  GapSummary gaps = run_stage("gap_analysis", [&] { return gap_analysis(report); });
  out.write("audit.json", to_json(report).dump(2) + "\n");
  out.write("audit.csv", audit_csv(report));
  out.write("gaps.csv", gaps_csv(report));
  out.write_manifest(to_json(cfg), cfg.seed);
  std::printf("positive gap fraction: %.6f\n", gaps.positive_fraction);
  for (const auto& [metric, group] : gaps.largest_gap_group)
    std::printf("largest %s gap: %s\n", metric.c_str(), group.c_str());
  return 0;
}

int cmd_pipeline(const CommonFlags& flags, double bin_width) {
  RunConfig cfg = resolve_config(flags, true);
  RoledDataset data = load_roled(cfg);
  ArtifactWriter out(cfg.out_dir);

  DecompositionResult dres =
      run_stage("decompose", [&] { return estimate_decomposition(data, decompose_config(cfg)); });
  out.write("decomposition.json", to_json(dres).dump(2) + "\n");
  print_decomposition(dres);

  ForestOutput fo = run_forest(data, cfg);
  out.write("effects.csv", effects_csv(data, fo.effects));
  out.write("histogram.csv", histogram_csv(export_histogram(fo.effects, bin_width)));

  SubgroupAssignment asg = run_stage("assign", [&] { return assign(fo.effects, cfg.binning); });
  SubgroupSummary sm = run_stage("summarize", [&] { return summarize(data, asg); });
  out.write("subgroup.json", to_json(sm, data.schema).dump(2) + "\n");

  SplitResult split = run_stage("split", [&] {
    return split_stratified(data, cfg.test_fraction, asg.group,
                            Rng(cfg.seed).substream("split").next_u64());
  });
  for (const auto& w : split.warnings) std::cerr << "note: " << w << "\n";
  SubgroupAssignment test_asg;
  test_asg.spec = asg.spec;
  for (std::size_t i : split.test_idx) test_asg.group.push_back(asg.group[i]);

  const std::uint64_t audit_seed = Rng(cfg.seed).substream("audit").next_u64();
  AuditReport report;
  if (cfg.ci_mode == CiMode::Reruns) {
    report = run_stage("evaluate", [&] {
      return evaluate_reruns(split.train, split.test, test_asg, cfg.baseline_spec,
                             cfg.n_bootstrap, audit_seed);
    });
  } else {
    FittedModel baseline = run_stage("baseline", [&] {
      return train_baseline(split.train, cfg.baseline_spec,
                            Rng(cfg.seed).substream("baseline").next_u64());
    });
    PredictionSet preds = predict_labels(baseline, split.test);
    report = run_stage("evaluate", [&] {
      return evaluate(preds, test_asg, split.test, cfg.n_bootstrap, audit_seed);
    });
  }
  GapSummary gaps = run_stage("gap_analysis", [&] { return gap_analysis(report); });
  out.write("audit.json", to_json(report).dump(2) + "\n");
  out.write("gaps.csv", gaps_csv(report));
  out.write_manifest(to_json(cfg), cfg.seed);
  std::printf("positive gap fraction: %.6f\n", gaps.positive_fraction);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Causal disparity decomposition and sub-group auditing"};
  app.require_subcommand(1);

  CommonFlags sim_flags, dec_flags, eff_flags, sub_flags, aud_flags, pipe_flags;
  std::string sim_spec, dec_truth, aud_predictions;
  std::size_t sim_n = 0;
  double eff_bw = 0.005, sub_bw = 0.005, pipe_bw = 0.005;

  CLI::App* sim = app.add_subcommand("simulate", "sample a dataset from a structural model spec");
  sim->add_option("--spec", sim_spec, "structural model JSON")->required();
  sim->add_option("--n", sim_n, "number of rows")->required();
  add_common(sim, sim_flags, false);

  CLI::App* dec = app.add_subcommand("decompose", "estimate the disparity decomposition");
  dec->add_option("--truth", dec_truth, "ground-truth JSON for side-by-side comparison");
  add_common(dec, dec_flags, true);

  CLI::App* eff = app.add_subcommand("effects", "estimate per-individual direct effects");
  eff->add_option("--bin-width", eff_bw, "histogram bin width");
  add_common(eff, eff_flags, true);

  CLI::App* sub = app.add_subcommand("subgroup", "bin individuals by direct effect and summarize");
  sub->add_option("--bin-width", sub_bw, "histogram bin width");
  add_common(sub, sub_flags, true);

  CLI::App* aud = app.add_subcommand("audit", "train a baseline classifier and audit per sub-group");
  aud->add_option("--predictions", aud_predictions, "external predictions CSV to audit");
  add_common(aud, aud_flags, true);

  CLI::App* pipe = app.add_subcommand("pipeline", "full decompose -> sub-group -> audit pipeline");
  pipe->add_option("--bin-width", pipe_bw, "histogram bin width");
  add_common(pipe, pipe_flags, true);

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) return cmd_simulate(sim_spec, sim_n, sim_flags);
    if (dec->parsed()) return cmd_decompose(dec_flags, dec_truth);
    if (eff->parsed()) return cmd_effects(eff_flags, eff_bw);
    if (sub->parsed()) return cmd_subgroup(sub_flags, sub_bw);
    if (aud->parsed()) return cmd_audit(aud_flags, aud_predictions);
    if (pipe->parsed()) return cmd_pipeline(pipe_flags, pipe_bw);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
