#pragma once

// Small multilayer perceptron split into a feature extractor f (layers
// 0..split) and a classifier head g (layers split+1..end), with exact
// reverse-mode gradients and SGD with momentum.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "procal/core_math.hpp"

namespace procal {

enum class Activation { identity, tanh, relu };

std::string_view to_string(Activation act);
Activation activation_from_string(std::string_view name);

struct Layer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> weight;  // out x in, row-major
  std::vector<double> bias;    // out
  Activation act = Activation::identity;

  friend bool operator==(const Layer&, const Layer&) = default;
};

struct ModelParams {
  std::vector<Layer> layers;
  /// The output of layers[split] is the feature z.
  std::size_t split = 0;

  std::size_t input_dim() const { return layers.front().in; }
  std::size_t feature_dim() const { return layers.at(split).out; }
  std::size_t num_classes() const { return layers.back().out; }
  std::size_t parameter_count() const;

  /// Throws ShapeError / InvalidInputError when the invariants break.
  void validate() const;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// Per-layer gradient slots, shape-congruent with ModelParams.
struct GradientBuffer {
  struct Slot {
    std::vector<double> weight;
    std::vector<double> bias;
    friend bool operator==(const Slot&, const Slot&) = default;
  };
  std::vector<Slot> layers;

  static GradientBuffer zeros_like(const ModelParams& params);
  bool all_finite() const;
  friend bool operator==(const GradientBuffer&, const GradientBuffer&) = default;
};

/// Layer widths; the final entry of `hidden` is the feature layer.
struct Architecture {
  std::size_t input_dim = 2;
  std::vector<std::size_t> hidden = {32, 16};
  std::vector<Activation> hidden_act = {Activation::tanh, Activation::identity};
  std::size_t num_classes = 4;
};

/// Glorot-uniform weights, zero biases. Deterministic in seed.
ModelParams init_params(const Architecture& arch, std::uint64_t seed);

struct ForwardResult {
  FeatureVector z;
  ScoreVector logits;
  ProbVector p;
};

ForwardResult forward(const ModelParams& params, std::span<const double> x);

/// Row-wise forward over the selected rows of `inputs` (all rows if `rows` is empty).
struct BatchForward {
  Matrix features;
  Matrix logits;
  Matrix probs;
};
BatchForward forward_batch(const ModelParams& params, const Matrix& inputs,
                           std::span<const std::size_t> rows = {});

/// Accumulates dL/dtheta over the selected rows given dL/dlogits per row
/// (logit_grads row r belongs to inputs row rows[r]).
GradientBuffer backward(const ModelParams& params, const Matrix& inputs,
                        std::span<const std::size_t> rows, const Matrix& logit_grads);
GradientBuffer backward(const ModelParams& params, const Matrix& inputs,
                        std::span<const ScoreVector> logit_grads);

/// (diag(p) - p p^T) * dL_dp: maps a probability-space gradient to logit space.
ScoreVector softmax_jacobian_vector_product(const ProbVector& p, const ScoreVector& dL_dp);
void softmax_jvp_into(std::span<const double> p, std::span<const double> dL_dp,
                      std::span<double> out);

struct OptimizerConfig {
  double lr_base = 1e-3;
  double lr_head = 1e-2;
  double momentum = 0.9;
  /// Freezes the classifier head g (layers after split).
  bool freeze_head = false;
};

struct OptimizerState {
  std::vector<GradientBuffer::Slot> velocity;
  std::vector<double> layer_lr;  // 0 for frozen layers
  double momentum = 0.9;
  /// Multiplies every layer rate (learning-rate schedules).
  double lr_scale = 1.0;
  std::size_t steps = 0;
};

/// Layers split..end use lr_head (the bottleneck and classifier, i.e. the
/// "final FC layers"); earlier layers use lr_base.
OptimizerState make_optimizer_state(const ModelParams& params, const OptimizerConfig& config);

/// v <- m v + g ; theta <- theta - lr v. Throws DivergenceError on non-finite grads.
void sgd_step(ModelParams& params, const GradientBuffer& grads, OptimizerState& state);

/// Parameter vector in layer order (weight then bias); used by finite differences.
std::vector<double> flatten(const ModelParams& params);
std::vector<double> flatten(const GradientBuffer& grads);
void assign_flat(ModelParams& params, std::span<const double> flat);

// Checkpoint JSON: {"layers":[{"w":[[..]],"b":[..],"act":".."}],"split":..,"h":..,"C":..}
std::string to_checkpoint_json(const ModelParams& params);
ModelParams from_checkpoint_json(std::string_view text);
void save_checkpoint(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace procal
