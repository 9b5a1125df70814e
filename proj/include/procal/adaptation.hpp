#pragma once

// Source pretraining, the neighborhood-calibrated target adaptation loop,
// its baselines, and the ablation / prior-noise experiments built on top.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "procal/data.hpp"
#include "procal/error.hpp"
#include "procal/memory_bank.hpp"
#include "procal/model.hpp"
#include "procal/objectives.hpp"

namespace procal {

enum class Objective { procal, im, aad, soft_only, div_only };

std::string_view to_string(Objective objective);
Objective objective_from_string(std::string_view name);

struct AdaptationConfig {
  double gamma1 = 0.0;  // calibration decay exponent
  double beta1 = 0.0;   // diversity decay exponent
  std::size_t k = 6;
  std::size_t tau = 1;
  double lambda2 = 1.0;
  std::size_t epochs = 15;
  std::size_t batch_size = 64;
  double lr_base = 1e-3;
  double lr_head = 1e-2;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  Objective objective = Objective::procal;
  bool freeze_head = false;
  bool detach_self_term = false;
  bool tau_is_period = false;
  bool paper_exact_scaling = false;
  bool lr_power_decay = false;
  double noise_rate = 0.0;
  /// Which calibration terms enter p_cal (ablation rows).
  CalibrationTerms terms;
  /// Background-set size for the AaD baseline; unset means k, 0 means empty.
  std::optional<std::size_t> aad_background;
  /// DynamicsLog cadence in mini-batches; 0 means ceil(batches_per_epoch / 2).
  std::size_t eval_interval = 0;

  void validate() const;

  /// (gamma1, beta1, k, tau) per dataset family: office31, office-home,
  /// visda, domainnet; blobs-rot60 for the synthetic benchmark.
  static AdaptationConfig preset(std::string_view family);
};

/// Raised by adapt() when a step produces a non-finite loss or gradient;
/// carries the parameters from before that step.
class AdaptationDivergence : public DivergenceError {
 public:
  AdaptationDivergence(const std::string& what, std::size_t iteration, ModelParams last_good)
      : DivergenceError(what, iteration), last_good_(std::move(last_good)) {}
  const ModelParams& last_good() const noexcept { return last_good_; }

 private:
  ModelParams last_good_;
};

/// (1 - iter / max_iter)^exponent with 0^0 = 1. Throws ParameterError when
/// iter > max_iter, max_iter == 0 or exponent < 0.
double decay_schedule(std::size_t iter, std::size_t max_iter, double exponent);

struct DynamicsRow {
  std::size_t iteration = 0;  // mini-batches completed
  std::size_t epoch = 0;
  double target_accuracy = 0.0;
  double forgetting_rate = 0.0;
  double incorrect_supervision_rate = 0.0;
  double loss_total = 0.0;
  double loss_soft = 0.0;
  double loss_div = 0.0;
  double gamma_value = 0.0;
  double beta_value = 0.0;

  friend bool operator==(const DynamicsRow&, const DynamicsRow&) = default;
};

struct DynamicsLog {
  std::vector<DynamicsRow> rows;
  std::string to_csv() const;
};

/// Diagnostics at one evaluation point. The adaptation driver never sees
/// labels; whoever builds the probe does.
struct ProbeSample {
  double target_accuracy = 0.0;
  double forgetting_rate = 0.0;
  double incorrect_supervision_rate = 0.0;
};
using DynamicsProbe =
    std::function<ProbeSample(const ModelParams& model, const MemoryBank& bank, double gamma)>;

/// Probe computing accuracy, forgetting (against theta_s) and completely
/// incorrect supervision from the labeled target set.
DynamicsProbe make_label_probe(const LabeledDataset& target, const ModelParams& theta_s);

struct ScheduleSample {
  std::size_t iteration = 0;
  double gamma = 0.0;
  double beta = 0.0;
};

struct AdaptResult {
  ModelParams params;
  DynamicsLog log;
  std::vector<ScheduleSample> schedule;  // one per mini-batch
  Matrix source_outputs;                 // theta_s predictions on the target
  Matrix initial_priors;                 // after optional corruption
  std::size_t max_iter = 0;
  std::optional<MemoryBank> bank;        // final state; empty when epochs == 0
};

AdaptResult adapt(const ModelParams& theta_s, const UnlabeledView& target,
                  const AdaptationConfig& config, const DynamicsProbe& probe = {});

/// adapt() restricted to im, aad, soft_only and div_only.
AdaptResult adapt_baseline(const ModelParams& theta_s, const UnlabeledView& target,
                           const AdaptationConfig& config, const DynamicsProbe& probe = {});

struct PretrainConfig {
  std::vector<std::size_t> hidden = {32, 16};
  std::vector<Activation> hidden_act = {Activation::tanh, Activation::identity};
  std::size_t epochs = 50;
  std::size_t batch_size = 64;
  double lr = 0.05;
  double momentum = 0.9;
  double smoothing = 0.1;
  std::uint64_t seed = 0;
};

/// Supervised cross-entropy training on the labeled source set.
ModelParams pretrain_source(const LabeledDataset& source, const PretrainConfig& config);

struct AblationRow {
  std::string variant;
  std::uint64_t seed = 0;
  double accuracy = 0.0;
};

/// Variants in output order: source_only, soft_only, div_only, joint,
/// joint_wo_target, joint_wo_source, joint_wo_both.
std::vector<std::string> ablation_variants();

/// One pretraining per seed (PretrainConfig::seed and AdaptationConfig::seed
/// both set to it), then every variant adapted from that source model.
std::vector<AblationRow> run_ablation_suite(const LabeledDataset& source,
                                            const LabeledDataset& target,
                                            const PretrainConfig& pretrain,
                                            const AdaptationConfig& base,
                                            std::span<const std::uint64_t> seeds);
std::string ablation_csv(std::span<const AblationRow> rows);

struct NoiseRow {
  double noise_rate = 0.0;
  std::uint64_t seed = 0;
  double prior_accuracy = 0.0;   // argmax of (corrupted) priors vs labels
  double adapted_accuracy = 0.0;
};

std::vector<NoiseRow> run_noise_robustness(const LabeledDataset& source,
                                           const LabeledDataset& target,
                                           const PretrainConfig& pretrain,
                                           const AdaptationConfig& base,
                                           std::span<const double> noise_rates,
                                           std::span<const std::uint64_t> seeds);

double median(std::vector<double> values);

}  // namespace procal
