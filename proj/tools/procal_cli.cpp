// procal: command-line harness for pretraining, adaptation, evaluation,
// ablations and the reference oracles.
//
// Exit codes: 0 success, 1 oracle failure, 2 configuration or input error,
// 3 numerical divergence.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "procal/adaptation.hpp"
#include "procal/error.hpp"
#include "procal/experiment_config.hpp"
#include "procal/metrics.hpp"
#include "procal/oracles.hpp"
#include "procal/simd/kernels.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace procal;

namespace {

enum ExitCode { kOk = 0, kOracleFailure = 1, kConfigError = 2, kDiverged = 3 };

enum class LogLevel { quiet, info, debug };
LogLevel g_log = LogLevel::info;

LogLevel log_level_from_env() {
  const char* v = std::getenv("PROCAL_LOG");
  if (!v || std::string_view(v).empty() || std::string_view(v) == "info") return LogLevel::info;
  if (std::string_view(v) == "quiet") return LogLevel::quiet;
  if (std::string_view(v) == "debug") return LogLevel::debug;
  throw ParameterError("PROCAL_LOG must be quiet, info or debug (got '" + std::string(v) + "')");
}

template <class... Args>
void info(const char* fmt, Args... args) {
  if (g_log == LogLevel::quiet) return;
  std::fprintf(stderr, fmt, args...);
  std::fputc('\n', stderr);
}

template <class... Args>
void debug(const char* fmt, Args... args) {
  if (g_log != LogLevel::debug) return;
  std::fprintf(stderr, fmt, args...);
  std::fputc('\n', stderr);
}

// Write-then-rename so an interrupted run never leaves a truncated file.
void write_text(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw InvalidInputError("cannot open " + tmp.string() + " for writing");
    out << text;
    if (!out) throw InvalidInputError("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

struct CommonOptions {
  std::string config;
  std::string checkpoint;
  std::string out;
  std::optional<std::uint64_t> seed;
};

ExperimentConfig resolve_config(const CommonOptions& o) {
  ExperimentConfig c = o.config.empty() ? default_experiment_config()
                                        : load_experiment_config(o.config);
  if (o.seed) c.set_seed(*o.seed);
  if (!o.out.empty()) c.output_dir = o.out;
  c.adaptation.seed = c.seed;
  c.pretrain.seed = c.seed;
  fs::create_directories(c.output_dir);
  return c;
}

ModelParams require_checkpoint(const CommonOptions& o) {
  if (o.checkpoint.empty()) throw ParameterError("--checkpoint is required");
  return load_checkpoint(o.checkpoint);
}

json report_json(const EvaluationReport& r) { return json::parse(to_json(r)); }

int cmd_pretrain(const CommonOptions& o) {
  const ExperimentConfig c = resolve_config(o);
  const DomainPair pair = load_domains(c, c.data_seed());
  const ModelParams theta = pretrain_source(pair.source, c.pretrain);
  const EvaluationReport src = evaluate(theta, pair.source);
  const EvaluationReport tgt = evaluate(theta, pair.target);
  const fs::path ckpt = c.output_dir / "source.ckpt.json";
  write_text(ckpt, to_checkpoint_json(theta) + "\n");
  json doc;
  doc["seed"] = c.seed;
  doc["parameters"] = theta.parameter_count();
  doc["source_accuracy"] = src.accuracy;
  doc["target_accuracy"] = tgt.accuracy;
  doc["source"] = report_json(src);
  doc["target"] = report_json(tgt);
  write_text(c.output_dir / "pretrain_report.json", doc.dump(2) + "\n");
  info("pretrain: source accuracy %.4f, target (source-only) accuracy %.4f -> %s",
       src.accuracy, tgt.accuracy, ckpt.string().c_str());
  return kOk;
}

int cmd_adapt(const CommonOptions& o) {
  const ExperimentConfig c = resolve_config(o);
  const ModelParams theta_s = require_checkpoint(o);
  const DomainPair pair = load_domains(c, c.data_seed());
  const AdaptationConfig& ac = c.adaptation;
  debug("adapt: objective=%s k=%zu tau=%zu epochs=%zu simd=%s",
        std::string(to_string(ac.objective)).c_str(), ac.k, ac.tau, ac.epochs,
        std::string(simd::to_string(simd::active_isa())).c_str());

  AdaptResult r;
  try {
    r = adapt(theta_s, pair.target.unlabeled(), ac, make_label_probe(pair.target, theta_s));
  } catch (const AdaptationDivergence& e) {
    const fs::path last = c.output_dir / "last_good.ckpt.json";
    write_text(last, to_checkpoint_json(e.last_good()) + "\n");
    throw DivergenceError(std::string(e.what()) + "; last good parameters in " + last.string(),
                          e.iteration());
  }

  std::optional<MemoryBank> bank = r.bank;
  if (!bank) {
    const BatchForward fw = forward_batch(theta_s, pair.target.inputs);
    bank = MemoryBank::initialize(fw.probs, fw.features, r.initial_priors, ac.k);
  }
  const double final_gamma = r.schedule.empty() ? 1.0 : r.schedule.back().gamma;
  const SupervisionErrors sup = incorrect_supervision_rate(
      *bank, pair.target.labels, SupervisionKind::procal, final_gamma);

  const EvaluationReport before = evaluate(theta_s, pair.target);
  const EvaluationReport after = evaluate(r.params, pair.target);
  const std::vector<std::size_t> src_pred = predict(theta_s, pair.target.inputs);
  std::vector<bool> mask(src_pred.size());
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = src_pred[i] == pair.target.labels[i];
  const EvaluationReport prior = evaluate_predictions(
      argmax_rows(r.initial_priors), pair.target.labels, pair.target.num_classes);

  json doc;
  doc["objective"] = std::string(to_string(ac.objective));
  doc["seed"] = c.seed;
  doc["noise_rate"] = ac.noise_rate;
  doc["max_iter"] = r.max_iter;
  doc["source_accuracy"] = before.accuracy;
  doc["final_accuracy"] = after.accuracy;
  doc["corrupted_prior_accuracy"] = prior.accuracy;
  doc["forgetting_rate"] = forgetting_rate(mask, predict(r.params, pair.target.inputs),
                                           pair.target.labels);
  doc["incorrect_supervision_rate"] = sup.complete;
  doc["partial_incorrect_rate"] = sup.partial;
  doc["calibrated_incorrect_rate"] = *sup.calibrated;
  doc["evaluation"] = report_json(after);

  write_text(c.output_dir / "adapted.ckpt.json", to_checkpoint_json(r.params) + "\n");
  write_text(c.output_dir / "dynamics.csv", r.log.to_csv());
  write_text(c.output_dir / "report.json", doc.dump(2) + "\n");
  info("adapt (%s): target accuracy %.4f -> %.4f", std::string(to_string(ac.objective)).c_str(),
       before.accuracy, after.accuracy);
  return kOk;
}

int cmd_eval(const CommonOptions& o, const std::string& split) {
  const ExperimentConfig c = resolve_config(o);
  const ModelParams theta = require_checkpoint(o);
  const DomainPair pair = load_domains(c, c.data_seed());
  if (split != "source" && split != "target") throw ParameterError("--split must be source or target");
  const EvaluationReport r = evaluate(theta, split == "source" ? pair.source : pair.target);
  std::cout << to_json(r) << '\n';
  return kOk;
}

int cmd_ablate(const CommonOptions& o) {
  const ExperimentConfig c = resolve_config(o);
  std::vector<AblationRow> rows;
  for (std::uint64_t seed : c.seeds) {
    // Each seed draws its own generated pair unless the data seed is pinned.
    const DomainPair pair = load_domains(c, c.dataset.generator_seed.value_or(seed));
    const std::uint64_t one[] = {seed};
    const auto part = run_ablation_suite(pair.source, pair.target, c.pretrain, c.adaptation, one);
    rows.insert(rows.end(), part.begin(), part.end());
    debug("ablate: seed %llu done", static_cast<unsigned long long>(seed));
  }
  write_text(c.output_dir / "ablation.csv", ablation_csv(rows));
  for (const std::string& v : ablation_variants()) {
    std::vector<double> acc;
    for (const AblationRow& r : rows) {
      if (r.variant == v) acc.push_back(r.accuracy);
    }
    info("%-16s median %.4f", v.c_str(), median(acc));
  }
  return kOk;
}

int cmd_oracles(std::optional<std::size_t> trials, std::uint64_t seed, const std::string& mutate) {
  const oracles::Mutation m = oracles::mutation_from_string(mutate);
  std::vector<oracles::OracleOutcome> results;
  for (oracles::GradientObjective obj : oracles::all_gradient_objectives()) {
    results.push_back(oracles::run_gradient_oracle(obj, trials.value_or(20), seed, m));
  }
  results.push_back(oracles::run_soft_identity_oracle(trials.value_or(1000), seed, m));
  results.push_back(oracles::run_fixed_point_oracle(trials.value_or(10000), seed));
  results.push_back(oracles::run_knn_oracle(trials.value_or(100), seed));

  bool all = true;
  std::printf("%-28s %8s %12s %10s %8s  %s\n", "oracle", "trials", "worst", "tolerance", "seconds",
              "result");
  for (const auto& r : results) {
    std::printf("%-28s %8zu %12.3e %10.1e %8.3f  %s\n", r.name.c_str(), r.trials, r.worst,
                r.tolerance, r.seconds, r.passed ? "PASS" : "FAIL");
    all = all && r.passed;
  }
  return all ? kOk : kOracleFailure;
}

int cmd_fixed_point_check(std::size_t trials, std::uint64_t seed, const std::string& out) {
  std::string csv = "trial,C,gamma,simplex_residual,stationarity_residual,feasible\n";
  bool ok = true;
  for (std::size_t t = 0; t < trials; ++t) {
    const oracles::FixedPointCheck c = oracles::check_fixed_point(seed + t);
    ok = ok && c.sum_error <= oracles::kFixedPointSumTolerance &&
         c.stationarity <= oracles::kStationarityTolerance;
    csv += std::to_string(t) + ',' + std::to_string(c.classes) + ',' + format_double(c.gamma) +
           ',' + format_double(c.sum_error) + ',' + format_double(c.stationarity) + ',' +
           (c.feasible ? "true" : "false") + '\n';
  }
  if (out.empty()) {
    std::cout << csv;
  } else {
    fs::create_directories(out);
    write_text(fs::path(out) / "fixed_point_check.csv", csv);
  }
  info("fixed-point-check: %zu trials, %s", trials, ok ? "all within tolerance" : "FAILED");
  return ok ? kOk : kOracleFailure;
}

int cmd_gen_data(const CommonOptions& o) {
  const ExperimentConfig c = resolve_config(o);
  if (!c.dataset.generator) throw ParameterError("gen-data needs a dataset.generator section");
  const DomainPair pair = load_domains(c, c.data_seed());
  write_text(c.output_dir / "source.csv", format_feature_table(pair.source));
  write_text(c.output_dir / "target.csv", format_feature_table(pair.target));
  info("gen-data: %zu source and %zu target rows -> %s", pair.source.size(), pair.target.size(),
       c.output_dir.string().c_str());
  return kOk;
}

int cmd_export_features(const CommonOptions& o) {
  const ExperimentConfig c = resolve_config(o);
  const ModelParams theta = require_checkpoint(o);
  const DomainPair pair = load_domains(c, c.data_seed());
  const BatchForward fw = forward_batch(theta, pair.target.inputs);
  LabeledDataset features;
  features.inputs = fw.features;
  features.labels = pair.target.labels;
  features.num_classes = pair.target.num_classes;
  write_text(c.output_dir / "target_features.csv", format_feature_table(features));
  const MemoryBank bank = MemoryBank::initialize(fw.probs, fw.features, c.adaptation.k);
  write_text(c.output_dir / "bank.csv", bank.to_csv());
  info("export-features: %zu x %zu features -> %s", fw.features.rows, fw.features.cols,
       c.output_dir.string().c_str());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neighborhood-calibrated source-free domain adaptation laboratory"};
  app.require_subcommand(1);

  CommonOptions common;
  std::optional<std::size_t> trials;
  std::uint64_t oracle_seed = 0;
  std::string mutate = "none";
  std::string split = "target";

  auto add_common = [&](CLI::App* sub, bool checkpoint) {
    sub->add_option("--config", common.config, "Experiment config JSON");
    sub->add_option("--out", common.out, "Output directory (overrides output_dir)");
    sub->add_option("--seed", common.seed, "Run seed (overrides the config)");
    if (checkpoint) sub->add_option("--checkpoint", common.checkpoint, "Model checkpoint JSON");
  };

  CLI::App* pretrain = app.add_subcommand("pretrain", "Train the source model");
  add_common(pretrain, false);
  CLI::App* adapt_cmd = app.add_subcommand("adapt", "Adapt a source checkpoint to the target");
  add_common(adapt_cmd, true);
  CLI::App* eval = app.add_subcommand("eval", "Print an evaluation report as JSON");
  add_common(eval, true);
  eval->add_option("--split", split, "source or target")->capture_default_str();
  CLI::App* ablate = app.add_subcommand("ablate", "Run the component ablation over the seeds");
  add_common(ablate, false);
  CLI::App* oracle_cmd = app.add_subcommand("oracles", "Run the reference oracle suite");
  oracle_cmd->add_option("--trials", trials, "Instances per oracle");
  oracle_cmd->add_option("--seed", oracle_seed, "First instance seed")->capture_default_str();
  oracle_cmd->add_option("--mutate", mutate, "Inject a defect: none or soft-sign")
      ->capture_default_str();
  CLI::App* fp = app.add_subcommand("fixed-point-check", "Fixed-point residuals as CSV");
  fp->add_option("--trials", trials, "Number of random draws (default 10000)");
  fp->add_option("--seed", oracle_seed, "First draw seed")->capture_default_str();
  fp->add_option("--out", common.out, "Write fixed_point_check.csv here instead of stdout");
  CLI::App* gen = app.add_subcommand("gen-data", "Write the generated source/target tables");
  add_common(gen, false);
  CLI::App* exp = app.add_subcommand("export-features", "Write target features and a bank dump");
  add_common(exp, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    g_log = log_level_from_env();
    if (*pretrain) return cmd_pretrain(common);
    if (*adapt_cmd) return cmd_adapt(common);
    if (*eval) return cmd_eval(common, split);
    if (*ablate) return cmd_ablate(common);
    if (*oracle_cmd) return cmd_oracles(trials, oracle_seed, mutate);
    if (*fp) return cmd_fixed_point_check(trials.value_or(10000), oracle_seed, common.out);
    if (*gen) return cmd_gen_data(common);
    if (*exp) return cmd_export_features(common);
  } catch (const DivergenceError& e) {
    std::fprintf(stderr, "error: divergence: %s\n", e.what());
    return kDiverged;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kConfigError;
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kConfigError;
  }
  return kConfigError;
}
