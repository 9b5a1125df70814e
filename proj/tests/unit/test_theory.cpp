#include <doctest.h>

#include <cmath>
#include <random>

#include "procal/error.hpp"
#include "procal/theory.hpp"

using namespace procal;

TEST_CASE("external signal") {
  Matrix probs(2, 2, 0.5);
  Matrix feats(2, 2);
  feats(0, 0) = feats(1, 1) = 1.0;
  const MemoryBank b = MemoryBank::initialize(probs, feats, 1);
  const theory::ExternalSignal s = theory::build_external_signal(b, 0, 1.0);
  CHECK(s.q == std::vector<double>{1.0, 1.0});
  CHECK_THROWS_AS(theory::build_external_signal(b, 0, 0.0), ParameterError);

  Matrix p3(3, 2), prior(3, 2), f3(3, 2);
  const double rows[3][2] = {{0.5, 0.5}, {0.6, 0.4}, {0.8, 0.2}};
  for (std::size_t i = 0; i < 3; ++i) {
    p3(i, 0) = rows[i][0];
    p3(i, 1) = rows[i][1];
    f3(i, 0) = 1.0;
    f3(i, 1) = 0.1 * static_cast<double>(i);
  }
  prior(0, 0) = 0.7;
  prior(0, 1) = 0.3;
  prior(1, 0) = prior(1, 1) = prior(2, 0) = prior(2, 1) = 0.5;
  MemoryBank b3 = MemoryBank::initialize(p3, f3, prior, 2);
  const theory::ExternalSignal q = theory::build_external_signal(b3, 0, 0.5);
  CHECK(q.q[0] == doctest::Approx(1.75));
  CHECK(q.q[1] == doctest::Approx(0.75));
}

TEST_CASE("soft gradient") {
  const std::vector<double> q = {1.0, 0.0};
  const std::vector<double> p = {0.5, 0.5};
  CHECK(theory::soft_gradient(q, 0.5, p) == std::vector<double>{-1.5, -0.5});
  CHECK(theory::soft_gradient(q, 0.0, p) == std::vector<double>{-1.0, -0.0});
  const std::vector<double> zero = {0.0, 0.0};
  CHECK(theory::soft_gradient(q, 0.9, zero) == std::vector<double>{-1.0, -0.0});
}

TEST_CASE("update map") {
  const std::vector<double> p = {0.5, 0.5};
  const std::vector<double> q = {1.0, 1.0};
  // 0.5 + 0.1 * (1 + 2 * 0.5 * 0.5)
  const std::vector<double> u = theory::update_map(p, q, 0.5, 0.1);
  CHECK(u[0] == doctest::Approx(0.65));
  CHECK(u[1] == doctest::Approx(0.65));
  CHECK(theory::update_map(p, q, 0.5, 0.0) == p);
}

TEST_CASE("iterating the update map grows the norm without projection") {
  std::vector<double> p = {0.3, 0.7};
  const std::vector<double> q = {0.2, 0.1};
  double prev = std::hypot(p[0], p[1]);
  for (int t = 0; t < 20; ++t) {
    p = theory::update_map(p, q, 0.5, 0.1);
    const double norm = std::hypot(p[0], p[1]);
    CHECK(norm > prev);
    prev = norm;
  }
  CHECK(p[0] + p[1] > 5.0);
}

TEST_CASE("update map is one descent step on the soft gradient") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> p(4), q(4);
    for (double& v : p) v = u(rng);
    for (double& v : q) v = u(rng);
    const double gamma = u(rng), eta = u(rng);
    const std::vector<double> g = theory::soft_gradient(q, gamma, p);
    const std::vector<double> m = theory::update_map(p, q, gamma, eta);
    for (std::size_t k = 0; k < 4; ++k) CHECK(m[k] == doctest::Approx(p[k] - eta * g[k]).epsilon(1e-14));
  }
}

TEST_CASE("fixed point examples") {
  const std::vector<double> sym = {0.5, 0.5};
  const theory::FixedPoint a = theory::fixed_point(sym, 1.0, 2);
  CHECK(a.p_star == std::vector<double>{0.5, 0.5});
  CHECK(a.lambda == doctest::Approx(1.5));
  CHECK(a.feasible);

  const std::vector<double> q2 = {1.0, 0.0};
  const theory::FixedPoint b = theory::fixed_point(q2, 0.5, 2);
  CHECK(b.lambda == doctest::Approx(1.0));
  CHECK(b.p_star[0] == doctest::Approx(0.0));
  CHECK(b.p_star[1] == doctest::Approx(1.0));

  const std::vector<double> q3 = {3.0, 0.0, 0.0};
  const theory::FixedPoint c = theory::fixed_point(q3, 1.0, 3);
  CHECK(c.lambda == doctest::Approx(5.0 / 3.0));
  CHECK(c.p_star[0] == doctest::Approx(-2.0 / 3.0));
  CHECK(c.p_star[1] == doctest::Approx(5.0 / 6.0));
  CHECK(c.p_star[2] == doctest::Approx(5.0 / 6.0));
  CHECK_FALSE(c.feasible);

  CHECK_THROWS_AS(theory::fixed_point(q2, 0.0, 2), ParameterError);
  CHECK_THROWS_AS(theory::fixed_point(q2, 1.0, 3), ParameterError);
}

TEST_CASE("fixed point is shift invariant in q") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> q(5);
    for (double& v : q) v = u(rng);
    const double gamma = 0.1 + u(rng), c = u(rng) - 1.5;
    std::vector<double> shifted = q;
    for (double& v : shifted) v += c;
    const auto a = theory::fixed_point(q, gamma, 5);
    const auto b = theory::fixed_point(shifted, gamma, 5);
    for (std::size_t k = 0; k < 5; ++k) CHECK(b.p_star[k] == doctest::Approx(a.p_star[k]).epsilon(1e-12));
  }
}

TEST_CASE("stationarity residual") {
  const std::vector<double> q = {0.3, 1.2, 0.4};
  const auto fp = theory::fixed_point(q, 0.8, 3);
  CHECK(theory::stationarity_residual(fp.p_star, q, 0.8).residual <= 1e-10);
  const std::vector<double> uni = {1.0 / 3, 1.0 / 3, 1.0 / 3};
  CHECK(theory::stationarity_residual(uni, q, 0.8).residual > 0.0);
  const std::vector<double> flat = {2.0, 2.0, 2.0};
  CHECK(theory::stationarity_residual(uni, flat, 0.8).residual == 0.0);
}
