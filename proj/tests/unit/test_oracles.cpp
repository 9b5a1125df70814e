#include <doctest.h>

#include "procal/oracles.hpp"

using namespace procal;

TEST_CASE("gradient oracle passes for every objective") {
  for (oracles::GradientObjective obj : oracles::all_gradient_objectives()) {
    CAPTURE(oracles::to_string(obj));
    const oracles::OracleOutcome r = oracles::run_gradient_oracle(obj, 5, 77);
    CHECK(r.passed);
    CHECK(r.worst <= 1e-4);
  }
}

TEST_CASE("instances respect the size limits") {
  for (std::uint64_t s = 0; s < 30; ++s) {
    const oracles::GradientCheck c =
        oracles::check_parameter_gradient(oracles::GradientObjective::procal, s);
    CHECK(c.parameters <= 200);
    CHECK(c.classes >= 2);
    CHECK(c.classes <= 5);
    CHECK(c.batch >= 1);
    CHECK(c.batch <= 8);
  }
}

TEST_CASE("a sign error in the soft gradient is detected") {
  const auto grad = oracles::run_gradient_oracle(oracles::GradientObjective::soft_only, 5, 1,
                                                 oracles::Mutation::soft_sign);
  CHECK_FALSE(grad.passed);
  const auto ident = oracles::run_soft_identity_oracle(5, 1, oracles::Mutation::soft_sign);
  CHECK_FALSE(ident.passed);
  CHECK(oracles::mutation_from_string("soft-sign") == oracles::Mutation::soft_sign);
}

TEST_CASE("soft identity, fixed point and k-NN oracles") {
  CHECK(oracles::run_soft_identity_oracle(200, 3).passed);
  CHECK(oracles::run_fixed_point_oracle(1000, 3).passed);
  CHECK(oracles::run_knn_oracle(20, 3).passed);
}

TEST_CASE("brute-force neighbors on a tiny bank") {
  Matrix f(4, 2);
  f(0, 0) = 1;
  f(1, 0) = 1;
  f(2, 1) = 1;
  f(3, 0) = -1;
  CHECK(oracles::brute_force_neighbors(f, 0, 3) == std::vector<std::size_t>{1, 2, 3});
  CHECK(oracles::brute_force_neighbors(f, 2, 2) == std::vector<std::size_t>{0, 1});
}
