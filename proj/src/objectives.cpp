#include "procal/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "procal/error.hpp"
#include "procal/model.hpp"

namespace procal {
namespace {

// log clamped away from zero; softmax outputs only reach 0 by underflow.
double safe_log(double x) { return std::log(std::max(x, std::numeric_limits<double>::min())); }

void require_batch(const Matrix& probs) {
  if (probs.rows == 0) throw ParameterError("empty batch");
  if (probs.cols == 0) throw ShapeError("zero classes");
}

std::vector<double> batch_mean(const Matrix& probs) {
  std::vector<double> mean(probs.cols, 0.0);
  for (std::size_t i = 0; i < probs.rows; ++i) {
    for (std::size_t c = 0; c < probs.cols; ++c) mean[c] += probs(i, c);
  }
  for (double& v : mean) v /= static_cast<double>(probs.rows);
  return mean;
}

}  // namespace

CalibratedTarget calibrate(const ScoreVector& p_N, const ProbVector& p_t, const ProbVector& p_s,
                           double gamma, CalibrationTerms terms) {
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) {
    throw ParameterError("calibration strength gamma must be a finite value >= 0");
  }
  if (p_t.size() != p_N.size() || p_s.size() != p_N.size()) {
    throw ShapeError("calibrate: vectors must share the class count");
  }
  std::vector<double> cal(p_N.begin(), p_N.end());
  for (std::size_t c = 0; c < cal.size(); ++c) {
    if (terms.target) cal[c] += gamma * p_t[c];
    if (terms.source) cal[c] += gamma * p_s[c];
  }
  return {ScoreVector(std::move(cal)), p_N, p_t, p_s, gamma, terms};
}

void push_to_logits(const Matrix& probs, LossResult& result) {
  result.grad_logits = Matrix(probs.rows, probs.cols);
  for (std::size_t i = 0; i < probs.rows; ++i) {
    softmax_jvp_into(probs.row(i), result.grad_p.row(i), result.grad_logits.row(i));
  }
}

LossResult soft_loss(std::span<const CalibratedTarget> targets, const Matrix& probs,
                     bool detach_self_term) {
  require_batch(probs);
  if (targets.size() != probs.rows) throw ShapeError("soft_loss: one target per sample");
  const double n = static_cast<double>(probs.rows);
  LossResult out;
  out.grad_p = Matrix(probs.rows, probs.cols);
  for (std::size_t i = 0; i < probs.rows; ++i) {
    const CalibratedTarget& t = targets[i];
    if (t.p_cal.size() != probs.cols) throw ShapeError("soft_loss: class count mismatch");
    const auto p = probs.row(i);
    // Product rule on p_cal(p) . p: the online term gamma * p_t contributes
    // gamma * p a second time.
    const double self = (t.terms.target && !detach_self_term) ? t.gamma : 0.0;
    double dot = 0.0;
    for (std::size_t c = 0; c < probs.cols; ++c) {
      dot += t.p_cal[c] * p[c];
      out.grad_p(i, c) = -(t.p_cal[c] + self * p[c]) / n;
    }
    out.value -= dot / n;
  }
  push_to_logits(probs, out);
  return out;
}

LossResult diversity_loss(const Matrix& probs) {
  require_batch(probs);
  const std::vector<double> mean = batch_mean(probs);
  LossResult out;
  out.grad_p = Matrix(probs.rows, probs.cols);
  for (std::size_t i = 0; i < probs.rows; ++i) {
    for (std::size_t c = 0; c < probs.cols; ++c) {
      out.value += probs(i, c) * mean[c];
      out.grad_p(i, c) = 2.0 * mean[c];
    }
  }
  push_to_logits(probs, out);
  return out;
}

ProcalLossResult procal_loss(std::span<const std::size_t> rows, const Matrix& probs,
                             const MemoryBank& bank, double gamma, double beta,
                             const ProcalOptions& options) {
  require_batch(probs);
  if (rows.size() != probs.rows || probs.cols != bank.num_classes()) {
    throw ShapeError("procal_loss: batch does not match the bank");
  }
  if (!(beta >= 0.0)) throw ParameterError("beta must be >= 0");
  const std::size_t n = probs.rows;
  const std::size_t C = probs.cols;

  ProcalLossResult out;
  // With use_soft off the objective is L_div alone, unweighted.
  out.loss.beta = options.use_soft ? beta : 1.0;
  out.grad_p = Matrix(n, C);

  if (options.use_soft) {
    out.targets.reserve(n);
    for (std::size_t r = 0; r < n; ++r) {
      if (rows[r] >= bank.size()) throw ParameterError("procal_loss: row out of range");
      const auto prior = bank.source_priors().row(rows[r]);
      out.targets.push_back(calibrate(bank.neighborhood_probability(rows[r]),
                                      ProbVector::trusted({probs.row(r).begin(), probs.row(r).end()}),
                                      ProbVector::trusted({prior.begin(), prior.end()}), gamma,
                                      options.terms));
    }
    const LossResult soft = soft_loss(out.targets, probs, options.detach_self_term);
    out.loss.soft_term = soft.value;
    for (std::size_t k = 0; k < out.grad_p.data.size(); ++k) out.grad_p.data[k] += soft.grad_p.data[k];
  }

  if (options.use_div) {
    const LossResult div = diversity_loss(probs);
    const double scale = options.paper_exact_scaling ? 1.0 : 1.0 / static_cast<double>(n);
    const double weight = out.loss.beta;
    out.loss.div_term = div.value * scale;
    for (std::size_t k = 0; k < out.grad_p.data.size(); ++k) {
      out.grad_p.data[k] += weight * scale * div.grad_p.data[k];
    }
    out.loss.total = out.loss.soft_term + weight * out.loss.div_term;
  } else {
    out.loss.total = out.loss.soft_term;
  }

  out.grad_logits = Matrix(n, C);
  for (std::size_t i = 0; i < n; ++i) {
    softmax_jvp_into(probs.row(i), out.grad_p.row(i), out.grad_logits.row(i));
  }
  return out;
}

LossResult im_loss(const Matrix& probs) {
  require_batch(probs);
  const double n = static_cast<double>(probs.rows);
  const std::vector<double> mean = batch_mean(probs);
  LossResult out;
  out.grad_p = Matrix(probs.rows, probs.cols);
  for (std::size_t i = 0; i < probs.rows; ++i) {
    for (std::size_t c = 0; c < probs.cols; ++c) {
      const double p = probs(i, c);
      if (p > 0.0) out.value -= p * std::log(p) / n;
      out.grad_p(i, c) = (-(safe_log(p) + 1.0) + (safe_log(mean[c]) + 1.0)) / n;
    }
  }
  for (double m : mean) {
    if (m > 0.0) out.value += m * std::log(m);
  }
  push_to_logits(probs, out);
  return out;
}

LossResult aad_loss(std::span<const std::size_t> rows, const Matrix& probs,
                    const MemoryBank& bank,
                    std::span<const std::vector<std::size_t>> background, double lambda2) {
  require_batch(probs);
  if (rows.size() != probs.rows || background.size() != probs.rows ||
      probs.cols != bank.num_classes()) {
    throw ShapeError("aad_loss: batch, background sets and bank disagree");
  }
  if (!(lambda2 >= 0.0)) throw ParameterError("lambda2 must be >= 0");
  const double n = static_cast<double>(probs.rows);
  const Matrix& cached = bank.probs();
  LossResult out;
  out.grad_p = Matrix(probs.rows, probs.cols);
  for (std::size_t r = 0; r < probs.rows; ++r) {
    const std::size_t i = rows[r];
    const auto nb = bank.neighbors(i);
    const auto p = probs.row(r);
    for (std::size_t m : background[r]) {
      if (m == i || std::find(nb.begin(), nb.end(), m) != nb.end() || m >= bank.size()) {
        throw ParameterError("aad_loss: background set of sample " + std::to_string(i) +
                             " overlaps its neighborhood");
      }
    }
    double attract_dot = 0.0;
    double disperse_dot = 0.0;
    for (std::size_t c = 0; c < probs.cols; ++c) {
      double attract = 0.0;
      for (std::size_t j : nb) attract += cached(j, c);
      double disperse = 0.0;
      for (std::size_t m : background[r]) disperse += cached(m, c);
      attract_dot += attract * p[c];
      disperse_dot += disperse * p[c];
      out.grad_p(r, c) = -(attract - lambda2 * disperse) / n;
    }
    out.value -= attract_dot / n;
    out.value += lambda2 * disperse_dot / n;
  }
  push_to_logits(probs, out);
  return out;
}

CrossEntropy cross_entropy(const ProbVector& p, std::size_t label, double smoothing) {
  const std::size_t C = p.size();
  if (label >= C) {
    throw ParameterError("label " + std::to_string(label) + " out of range for C=" +
                         std::to_string(C));
  }
  if (!(smoothing >= 0.0 && smoothing < 1.0)) throw ParameterError("smoothing must be in [0,1)");
  CrossEntropy out{0.0, ScoreVector::zeros(C), ScoreVector::zeros(C)};
  for (std::size_t c = 0; c < C; ++c) {
    const double y = (c == label ? 1.0 - smoothing : 0.0) + smoothing / static_cast<double>(C);
    if (y > 0.0) {
      out.value -= y * safe_log(p[c]);
      out.grad_p[c] = -y / std::max(p[c], std::numeric_limits<double>::min());
    }
    out.grad_logits[c] = p[c] - y;
  }
  return out;
}

LossResult cross_entropy_loss(const Matrix& probs, std::span<const std::size_t> labels,
                              double smoothing) {
  require_batch(probs);
  if (labels.size() != probs.rows) throw ShapeError("cross_entropy_loss: one label per row");
  const double n = static_cast<double>(probs.rows);
  LossResult out;
  out.grad_p = Matrix(probs.rows, probs.cols);
  out.grad_logits = Matrix(probs.rows, probs.cols);
  for (std::size_t i = 0; i < probs.rows; ++i) {
    const CrossEntropy ce = cross_entropy(
        ProbVector::trusted({probs.row(i).begin(), probs.row(i).end()}), labels[i], smoothing);
    out.value += ce.value / n;
    for (std::size_t c = 0; c < probs.cols; ++c) {
      out.grad_p(i, c) = ce.grad_p[c] / n;
      out.grad_logits(i, c) = ce.grad_logits[c] / n;
    }
  }
  return out;
}

}  // namespace procal
