#pragma once

// JSON experiment configuration for the command-line harness. Parsing is
// strict: unknown keys, wrong types and out-of-range values raise
// ParseError naming the offending key.
//
// {
//   "seed": 0,
//   "seeds": [0, 1, 2],
//   "output_dir": "out",
//   "dataset": {
//     "generator": {"preset": "blobs-rot60", "num_classes": 4, "dim": 4,
//                   "n_per_class": 150, "cluster_std": 0.15,
//                   "rotation_deg": 60, "translation": [..], "scale": 1,
//                   "noise": 0, "seed": <defaults to "seed">},
//     "source_table": "path.csv", "target_table": "path.csv"
//   },
//   "model": {"hidden": [32, 16], "hidden_act": ["tanh", "identity"]},
//   "pretrain": {"epochs": 50, "batch_size": 64, "lr": 0.05, "momentum": 0.9,
//                "smoothing": 0.1},
//   "adaptation": {"preset": "blobs-rot60", "gamma1": .., "beta1": .., "k": ..,
//                  "tau": .., "lambda2": .., "epochs": .., "batch_size": ..,
//                  "lr_base": .., "lr_head": .., "momentum": .., "objective": ..,
//                  "freeze_head": .., "detach_self_term": .., "tau_is_period": ..,
//                  "paper_exact_scaling": .., "lr_power_decay": ..,
//                  "noise_rate": .., "terms": {"target": .., "source": ..},
//                  "aad_background": ..},
//   "eval_interval": 0
// }
//
// "dataset" holds either "generator" or both table paths. Adaptation keys
// override the preset, which is applied first.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "procal/adaptation.hpp"
#include "procal/data.hpp"

namespace procal {

struct DatasetSource {
  std::optional<GaussianDomainSpec> generator;
  std::optional<std::uint64_t> generator_seed;
  std::filesystem::path source_table;
  std::filesystem::path target_table;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> seeds = {0, 1, 2};
  std::filesystem::path output_dir = "out";
  DatasetSource dataset;
  PretrainConfig pretrain;
  AdaptationConfig adaptation;

  /// Overrides the run seed (and, for generated data without an explicit
  /// generator seed, the data seed).
  void set_seed(std::uint64_t value);
  std::uint64_t data_seed() const;
};

/// Defaults: blobs-rot60 data and adaptation preset, seed 0.
ExperimentConfig default_experiment_config();

ExperimentConfig parse_experiment_config(const std::string& text);
/// Relative table paths resolve against the config file's directory.
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Generated pair for `data_seed`, or the two feature tables.
DomainPair load_domains(const ExperimentConfig& config, std::uint64_t data_seed);

}  // namespace procal
