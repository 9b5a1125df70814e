#pragma once

// Closed-form analysis of the soft loss with the online term folded in:
//   L_soft(p) = -(q . p + gamma ||p||^2),   q = p_N + gamma p_s,
// its gradient, the unprojected descent map, and the stationary point under
// the equality constraint 1^T p = 1.

#include <cstddef>
#include <span>
#include <vector>

#include "procal/memory_bank.hpp"

namespace procal::theory {

struct ExternalSignal {
  std::vector<double> q;
  double gamma = 0.0;
  std::size_t num_classes = 0;
};

/// q = neighborhood_probability(bank, i) + gamma * source_priors[i]; gamma > 0.
ExternalSignal build_external_signal(const MemoryBank& bank, std::size_t i, double gamma);

/// -(q + 2 gamma p)
std::vector<double> soft_gradient(std::span<const double> q, double gamma,
                                  std::span<const double> p);

/// p + step_size (q + 2 gamma p), exactly as printed; one descent step on
/// L_soft without projection.
std::vector<double> update_map(std::span<const double> p, std::span<const double> q, double gamma,
                               double step_size);

struct FixedPoint {
  std::vector<double> p_star;
  double lambda = 0.0;
  /// All entries >= -1e-12. The closed form ignores p >= 0, so this can fail.
  bool feasible = false;
};

/// p* = ((2 gamma + 1^T q) / C * 1 - q) / (2 gamma), lambda = (2 gamma + 1^T q) / C.
/// Throws ParameterError for gamma <= 0 or q.size() != C.
FixedPoint fixed_point(std::span<const double> q, double gamma, std::size_t num_classes);

struct Stationarity {
  double lambda_hat = 0.0;
  double residual = 0.0;
};

/// Least-squares multiplier lambda_hat = mean_k (q_k + 2 gamma p_k) and the
/// largest violation max_k |lambda_hat - (q_k + 2 gamma p_k)|.
Stationarity stationarity_residual(std::span<const double> p, std::span<const double> q,
                                   double gamma);

}  // namespace procal::theory
