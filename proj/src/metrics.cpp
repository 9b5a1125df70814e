#include "procal/metrics.hpp"

#include <json.hpp>

#include "procal/error.hpp"

namespace procal {

std::vector<std::size_t> argmax_rows(const Matrix& probs) {
  std::vector<std::size_t> out(probs.rows);
  for (std::size_t i = 0; i < probs.rows; ++i) out[i] = argmax(probs.row(i));
  return out;
}

std::vector<std::size_t> predict(const ModelParams& model, const Matrix& inputs) {
  return argmax_rows(forward_batch(model, inputs).logits);
}

EvaluationReport evaluate_predictions(std::span<const std::size_t> predictions,
                                      std::span<const std::size_t> labels,
                                      std::size_t num_classes) {
  if (labels.empty()) throw ParameterError("cannot evaluate an empty dataset");
  if (predictions.size() != labels.size()) throw ShapeError("evaluate: length mismatch");
  EvaluationReport r;
  r.num_samples = labels.size();
  r.confusion.assign(num_classes, std::vector<std::size_t>(num_classes, 0));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes || predictions[i] >= num_classes) {
      throw ParameterError("evaluate: class index out of range");
    }
    ++r.confusion[labels[i]][predictions[i]];
    if (labels[i] == predictions[i]) ++correct;
  }
  r.accuracy = static_cast<double>(correct) / static_cast<double>(labels.size());
  r.per_class_accuracy.assign(num_classes, 0.0);
  std::size_t present = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    std::size_t row_total = 0;
    for (std::size_t v : r.confusion[c]) row_total += v;
    if (row_total == 0) continue;
    ++present;
    r.per_class_accuracy[c] = static_cast<double>(r.confusion[c][c]) / static_cast<double>(row_total);
    r.mean_per_class_accuracy += r.per_class_accuracy[c];
  }
  if (present) r.mean_per_class_accuracy /= static_cast<double>(present);
  return r;
}

EvaluationReport evaluate(const ModelParams& model, const LabeledDataset& data) {
  if (data.size() == 0) throw ParameterError("cannot evaluate an empty dataset");
  return evaluate_predictions(predict(model, data.inputs), data.labels, model.num_classes());
}

std::string to_json(const EvaluationReport& report) {
  nlohmann::json doc;
  doc["num_samples"] = report.num_samples;
  doc["accuracy"] = report.accuracy;
  doc["per_class_accuracy"] = report.per_class_accuracy;
  doc["mean_per_class_accuracy"] = report.mean_per_class_accuracy;
  doc["confusion"] = report.confusion;
  return doc.dump(2);
}

double forgetting_rate(const std::vector<bool>& source_correct,
                       std::span<const std::size_t> predictions,
                       std::span<const std::size_t> labels) {
  if (source_correct.size() != predictions.size() || predictions.size() != labels.size()) {
    throw ShapeError("forgetting_rate: length mismatch");
  }
  std::size_t masked = 0;
  std::size_t forgotten = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!source_correct[i]) continue;
    ++masked;
    if (predictions[i] != labels[i]) ++forgotten;
  }
  return masked ? static_cast<double>(forgotten) / static_cast<double>(masked) : 0.0;
}

SupervisionErrors incorrect_supervision_rate(const MemoryBank& bank,
                                             std::span<const std::size_t> labels,
                                             SupervisionKind kind, double gamma) {
  if (labels.size() != bank.size()) throw ShapeError("incorrect_supervision_rate: length mismatch");
  const std::size_t N = bank.size();
  const std::size_t C = bank.num_classes();
  const std::vector<std::size_t> cached = argmax_rows(bank.probs());
  std::size_t complete = 0;
  std::size_t partial = 0;
  std::size_t calibrated = 0;
  std::vector<double> pcal(C);
  for (std::size_t i = 0; i < N; ++i) {
    std::size_t wrong = 0;
    const auto nb = bank.neighbors(i);
    for (std::size_t j : nb) {
      if (cached[j] != labels[i]) ++wrong;
    }
    if (wrong == nb.size()) ++complete;
    if (wrong > 0) ++partial;
    if (kind == SupervisionKind::procal) {
      bank.neighborhood_probability_into(i, pcal);
      for (std::size_t c = 0; c < C; ++c) {
        pcal[c] += gamma * (bank.probs()(i, c) + bank.source_priors()(i, c));
      }
      if (argmax(pcal) != labels[i]) ++calibrated;
    }
  }
  const double n = static_cast<double>(N);
  SupervisionErrors out{static_cast<double>(complete) / n, static_cast<double>(partial) / n, {}};
  if (kind == SupervisionKind::procal) out.calibrated = static_cast<double>(calibrated) / n;
  return out;
}

}  // namespace procal
