#pragma once

// Independent reference checks: central finite differences against the
// analytic parameter gradients, the closed-form probability gradient of the
// soft loss, the stationary point, and a brute-force neighbor search.

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "procal/core_math.hpp"

namespace procal::oracles {

enum class GradientObjective { procal, soft_only, div_only, im, aad, cross_entropy };

std::string_view to_string(GradientObjective objective);
std::vector<GradientObjective> all_gradient_objectives();

/// Deliberate defects for checking that the oracles can fail.
enum class Mutation { none, soft_sign };

Mutation mutation_from_string(std::string_view name);

struct GradientCheck {
  double max_rel_error = 0.0;
  std::size_t parameters = 0;
  std::size_t classes = 0;
  std::size_t batch = 0;
};

/// Relative error |a - n| / max(|a|, |n|, floor) per coordinate.
inline constexpr double kRelErrorFloor = 1e-6;
inline constexpr double kFiniteDifferenceStep = 1e-5;

/// One random instance: a small MLP (<= 200 parameters), C in [2, 5], a
/// batch of 1..8 drawn from a random bank.
GradientCheck check_parameter_gradient(GradientObjective objective, std::uint64_t seed,
                                       Mutation mutation = Mutation::none);

/// Probability-space L_soft gradient of the composed loss against
/// -(q + 2 gamma p) / n; returns the max absolute deviation.
double check_soft_gradient_identity(std::uint64_t seed, Mutation mutation = Mutation::none);

struct FixedPointCheck {
  std::size_t classes = 0;
  double gamma = 0.0;
  bool feasible = false;
  double sum_error = 0.0;       // |1^T p* - 1|
  double stationarity = 0.0;    // max_k |q_k + 2 gamma p*_k - lambda|
  double lambda_error = 0.0;    // |lambda - (2 gamma + sum q) / C|
};
/// Random C in [2, 10], gamma in [0.05, 5], q = (sum of k <= 10 random
/// probability vectors) + gamma * (random prior).
FixedPointCheck check_fixed_point(std::uint64_t seed);
inline constexpr double kFixedPointSumTolerance = 1e-12;
inline constexpr double kStationarityTolerance = 1e-10;

/// Plain loop over all rows of unit-norm `features`, full sort by
/// (similarity desc, index asc), self excluded.
std::vector<std::size_t> brute_force_neighbors(const Matrix& features, std::size_t i,
                                               std::size_t k);

/// Random bank of N <= 200 (with duplicated rows to force exact ties);
/// true when every sample's top_k_neighbors equals the brute-force list.
bool check_knn(std::uint64_t seed);

struct OracleOutcome {
  std::string name;
  bool passed = false;
  std::size_t trials = 0;
  double worst = 0.0;  // worst observed error, or failing instances for k-NN
  double tolerance = 0.0;
  double seconds = 0.0;
};

OracleOutcome run_gradient_oracle(GradientObjective objective, std::size_t trials,
                                  std::uint64_t seed, Mutation mutation = Mutation::none);
OracleOutcome run_soft_identity_oracle(std::size_t trials, std::uint64_t seed,
                                       Mutation mutation = Mutation::none);
OracleOutcome run_fixed_point_oracle(std::size_t trials, std::uint64_t seed);
OracleOutcome run_knn_oracle(std::size_t trials, std::uint64_t seed);

}  // namespace procal::oracles
