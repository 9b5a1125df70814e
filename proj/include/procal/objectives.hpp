#pragma once

// Adaptation objectives with probability-space and logit-space gradients.
//
// Every batch loss returns dL/dp per sample (grad_p) and the same gradient
// pushed through the softmax Jacobian (grad_logits), ready for backward().
// Cached neighbor probabilities and source priors are constants; only the
// online predictions of the batch carry gradient.

#include <cstddef>
#include <span>
#include <vector>

#include "procal/core_math.hpp"
#include "procal/memory_bank.hpp"

namespace procal {

/// Which calibration terms enter the soft target (ablation switches).
struct CalibrationTerms {
  bool target = true;  // gamma * p_t
  bool source = true;  // gamma * p_s
};

/// p_cal = p_N + gamma (p_t + p_s), with the components kept for gradient routing.
struct CalibratedTarget {
  ScoreVector p_cal;
  ScoreVector p_N;
  ProbVector p_t;
  ProbVector p_s;
  double gamma = 0.0;
  CalibrationTerms terms;
};

/// Throws ParameterError for gamma < 0, ShapeError for length mismatch.
CalibratedTarget calibrate(const ScoreVector& p_N, const ProbVector& p_t, const ProbVector& p_s,
                           double gamma, CalibrationTerms terms = {});

/// total = soft_term + beta * div_term
struct BatchLoss {
  double total = 0.0;
  double soft_term = 0.0;
  double div_term = 0.0;
  double beta = 0.0;
};

struct LossResult {
  double value = 0.0;
  Matrix grad_p;       // n x C
  Matrix grad_logits;  // n x C
};

/// Fills grad_logits from grad_p through the softmax Jacobian of `probs`.
void push_to_logits(const Matrix& probs, LossResult& result);

/// -mean_i p_cal,i . p_i. The online term gamma * p_t is identified with
/// p_i and differentiated (giving -(q_i + 2 gamma p_i) / n) unless
/// detach_self_term is set.
LossResult soft_loss(std::span<const CalibratedTarget> targets, const Matrix& probs,
                     bool detach_self_term = false);

/// sum_i sum_k p_ik phat_k with phat the batch mean; equals ||sum_i p_i||^2 / n.
/// Gradient 2 phat for every sample.
LossResult diversity_loss(const Matrix& probs);

struct ProcalOptions {
  CalibrationTerms terms;
  bool detach_self_term = false;
  /// Literal sum-over-samples L_div instead of the batch-mean form.
  bool paper_exact_scaling = false;
  bool use_soft = true;
  bool use_div = true;
};

struct ProcalLossResult {
  BatchLoss loss;
  Matrix grad_p;
  Matrix grad_logits;
  std::vector<CalibratedTarget> targets;
};

/// L_cal = L_soft + beta L_div over the batch `rows` whose online
/// predictions are `probs` (row r of probs belongs to sample rows[r]).
/// By default div_term is the batch-mean diversity ||phat||^2.
ProcalLossResult procal_loss(std::span<const std::size_t> rows, const Matrix& probs,
                             const MemoryBank& bank, double gamma, double beta,
                             const ProcalOptions& options = {});

/// mean_i sum_k -p log p + sum_k phat log phat.
LossResult im_loss(const Matrix& probs);

/// -E_i sum_{j in C_i} p_i.p_j + lambda2 E_i sum_{m in B_i} p_i.p_m with C_i
/// the bank neighbor lists and B_i the supplied background sets.
/// Throws ParameterError when B_i intersects C_i or contains i.
LossResult aad_loss(std::span<const std::size_t> rows, const Matrix& probs,
                    const MemoryBank& bank,
                    std::span<const std::vector<std::size_t>> background, double lambda2);

/// -sum_k y_k log p_k with y = (1 - eps) onehot(label) + eps / C.
struct CrossEntropy {
  double value = 0.0;
  ScoreVector grad_p;
  ScoreVector grad_logits;  // p - y
};
CrossEntropy cross_entropy(const ProbVector& p, std::size_t label, double smoothing = 0.0);

/// Batch mean of cross_entropy.
LossResult cross_entropy_loss(const Matrix& probs, std::span<const std::size_t> labels,
                              double smoothing = 0.0);

}  // namespace procal
