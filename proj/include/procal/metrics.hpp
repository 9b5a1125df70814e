#pragma once

// Accuracy reports and the adaptation diagnostics (source-knowledge
// forgetting and completely incorrect supervision). These are the only
// consumers of target labels.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "procal/data.hpp"
#include "procal/memory_bank.hpp"
#include "procal/model.hpp"

namespace procal {

struct EvaluationReport {
  std::size_t num_samples = 0;
  double accuracy = 0.0;
  std::vector<double> per_class_accuracy;  // 0 for classes without samples
  double mean_per_class_accuracy = 0.0;    // over classes that have samples
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
};

/// argmax predictions, ties to the lowest class.
std::vector<std::size_t> predict(const ModelParams& model, const Matrix& inputs);
std::vector<std::size_t> argmax_rows(const Matrix& probs);

EvaluationReport evaluate_predictions(std::span<const std::size_t> predictions,
                                      std::span<const std::size_t> labels,
                                      std::size_t num_classes);
/// Throws ParameterError on an empty dataset.
EvaluationReport evaluate(const ModelParams& model, const LabeledDataset& data);

std::string to_json(const EvaluationReport& report);

/// Error rate of the current predictions on the samples the source model got
/// right (mask). 0 when the mask is empty.
double forgetting_rate(const std::vector<bool>& source_correct,
                       std::span<const std::size_t> predictions,
                       std::span<const std::size_t> labels);

enum class SupervisionKind { neighborhood, procal };

struct SupervisionErrors {
  /// Every neighbor's cached argmax differs from the sample's label.
  double complete = 0.0;
  /// At least one neighbor's cached argmax differs from the label.
  double partial = 0.0;
  /// argmax of p_cal = p_N + gamma (p_t + p_s) differs from the label; p_t
  /// is the sample's cached prediction. Only for SupervisionKind::procal.
  std::optional<double> calibrated;
};

SupervisionErrors incorrect_supervision_rate(const MemoryBank& bank,
                                             std::span<const std::size_t> labels,
                                             SupervisionKind kind, double gamma = 0.0);

}  // namespace procal
