#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "procal/error.hpp"
#include "procal/model.hpp"

using namespace procal;

namespace {

ModelParams linear(std::size_t in, std::size_t out, std::vector<double> w, std::vector<double> b) {
  ModelParams p;
  p.layers.push_back({in, out, std::move(w), std::move(b), Activation::identity});
  p.split = 0;
  return p;
}

ModelParams two_layer(std::uint64_t seed) {
  Architecture arch;
  arch.input_dim = 3;
  arch.hidden = {5};
  arch.hidden_act = {Activation::tanh};
  arch.num_classes = 3;
  ModelParams p = init_params(arch, seed);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 0.3);
  for (Layer& l : p.layers) {
    for (double& b : l.bias) b = g(rng);
  }
  return p;
}

}  // namespace

TEST_CASE("identity layer forwards the input as logits") {
  const ModelParams p = linear(2, 2, {1, 0, 0, 1}, {0, 0});
  const std::vector<double> x = {1.0, 2.0};
  const ForwardResult r = forward(p, x);
  CHECK(r.logits == ScoreVector({1.0, 2.0}));
  CHECK(r.p == softmax({1.0, 2.0}));
}

TEST_CASE("zero weights give a uniform prediction") {
  const ModelParams p = linear(3, 4, std::vector<double>(12, 0.0), std::vector<double>(4, 0.0));
  const std::vector<double> x = {0.3, -9.0, 4.0};
  for (double v : forward(p, x).p) CHECK(v == 0.25);
}

TEST_CASE("forward is deterministic and rejects wrong input dimension") {
  const ModelParams p = two_layer(3);
  const std::vector<double> x = {0.1, 0.2, 0.3};
  const ForwardResult a = forward(p, x);
  const ForwardResult b = forward(p, x);
  CHECK(a.logits == b.logits);
  CHECK(a.z == b.z);
  const std::vector<double> bad = {0.1, 0.2};
  CHECK_THROWS_AS(forward(p, bad), ShapeError);
}

TEST_CASE("backward: zero logit gradient gives zero gradients") {
  const ModelParams p = two_layer(4);
  Matrix x(2, 3, 0.5);
  const std::vector<std::size_t> rows = {0, 1};
  const GradientBuffer g = backward(p, x, rows, Matrix(2, 3, 0.0));
  CHECK(g == GradientBuffer::zeros_like(p));
}

TEST_CASE("backward: squared error on a 2x2 linear layer is input outer residual") {
  const ModelParams p = linear(2, 2, {1.0, 2.0, -1.0, 0.5}, {0.1, -0.2});
  Matrix x(1, 2);
  x(0, 0) = 3.0;
  x(0, 1) = -1.0;
  const ForwardResult f = forward(p, x.row(0));
  const std::vector<double> y = {0.0, 1.0};
  Matrix residual(1, 2);
  for (std::size_t k = 0; k < 2; ++k) residual(0, k) = f.logits[k] - y[k];
  const std::vector<std::size_t> rows = {0};
  const GradientBuffer g = backward(p, x, rows, residual);
  for (std::size_t o = 0; o < 2; ++o) {
    for (std::size_t i = 0; i < 2; ++i) CHECK(g.layers[0].weight[o * 2 + i] == residual(0, o) * x(0, i));
    CHECK(g.layers[0].bias[o] == residual(0, o));
  }
}

TEST_CASE("backward agrees with central finite differences") {
  const ModelParams p = two_layer(9);
  Matrix x(3, 3);
  Matrix gl(3, 3);
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g;
  for (double& v : x.data) v = g(rng);
  for (double& v : gl.data) v = g(rng);
  const std::vector<std::size_t> rows = {0, 1, 2};
  // L = sum_r gl_r . logits_r
  auto loss = [&](const ModelParams& m) {
    double s = 0.0;
    for (std::size_t r = 0; r < 3; ++r) {
      const ForwardResult f = forward(m, x.row(r));
      for (std::size_t k = 0; k < 3; ++k) s += gl(r, k) * f.logits[k];
    }
    return s;
  };
  const std::vector<double> analytic = flatten(backward(p, x, rows, gl));
  std::vector<double> theta = flatten(p);
  const double h = 1e-5;
  for (std::size_t j = 0; j < theta.size(); ++j) {
    ModelParams plus = p, minus = p;
    std::vector<double> t = theta;
    t[j] += h;
    assign_flat(plus, t);
    t[j] -= 2 * h;
    assign_flat(minus, t);
    const double numeric = (loss(plus) - loss(minus)) / (2 * h);
    const double denom = std::max({std::abs(numeric), std::abs(analytic[j]), 1e-6});
    CHECK(std::abs(numeric - analytic[j]) / denom <= 1e-4);
  }
}

TEST_CASE("softmax JVP examples") {
  const ScoreVector a = softmax_jacobian_vector_product({0.5, 0.5}, {1.0, 0.0});
  CHECK(a[0] == doctest::Approx(0.25));
  CHECK(a[1] == doctest::Approx(-0.25));

  const ScoreVector c = softmax_jacobian_vector_product({0.2, 0.3, 0.5}, {4.0, 4.0, 4.0});
  for (double v : c) CHECK(v == doctest::Approx(0.0).epsilon(1e-15));

  const ScoreVector h = softmax_jacobian_vector_product(ProbVector::one_hot(3, 1), {1.0, -2.0, 5.0});
  for (double v : h) CHECK(v == 0.0);
}

TEST_CASE("softmax JVP output sums to zero") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g;
  for (int t = 0; t < 100; ++t) {
    std::vector<double> z(4), d(4);
    for (double& v : z) v = g(rng);
    for (double& v : d) v = g(rng);
    const ScoreVector out = softmax_jacobian_vector_product(softmax(ScoreVector(z)), ScoreVector(d));
    double s = 0.0;
    for (double v : out) s += v;
    CHECK(std::abs(s) < 1e-14);
  }
}

TEST_CASE("sgd examples") {
  SUBCASE("zero gradient leaves params unchanged") {
    ModelParams p = two_layer(1);
    const ModelParams before = p;
    OptimizerState s = make_optimizer_state(p, {0.1, 0.1, 0.9, false});
    sgd_step(p, GradientBuffer::zeros_like(p), s);
    CHECK(p == before);
  }
  SUBCASE("m=0, lr=1, g=theta zeroes the params") {
    ModelParams p = two_layer(1);
    GradientBuffer g = GradientBuffer::zeros_like(p);
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
      g.layers[l].weight = p.layers[l].weight;
      g.layers[l].bias = p.layers[l].bias;
    }
    OptimizerState s = make_optimizer_state(p, {1.0, 1.0, 0.0, false});
    sgd_step(p, g, s);
    for (double v : flatten(p)) CHECK(v == 0.0);
  }
  SUBCASE("two momentum steps move by -0.1g - 0.19g") {
    ModelParams p = linear(1, 2, {0.0, 0.0}, {0.0, 0.0});
    GradientBuffer g = GradientBuffer::zeros_like(p);
    g.layers[0].weight = {1.0, -2.0};
    g.layers[0].bias = {0.5, 3.0};
    OptimizerState s = make_optimizer_state(p, {0.1, 0.1, 0.9, false});
    sgd_step(p, g, s);
    sgd_step(p, g, s);
    const std::vector<double> gf = flatten(g);
    const std::vector<double> pf = flatten(p);
    for (std::size_t j = 0; j < gf.size(); ++j) CHECK(pf[j] == doctest::Approx(-0.29 * gf[j]).epsilon(1e-14));
  }
  SUBCASE("non-finite gradient is a divergence") {
    ModelParams p = two_layer(1);
    GradientBuffer g = GradientBuffer::zeros_like(p);
    g.layers[0].bias[0] = std::nan("");
    OptimizerState s = make_optimizer_state(p, {});
    CHECK_THROWS_AS(sgd_step(p, g, s), DivergenceError);
  }
}

TEST_CASE("freeze_head keeps the classifier layers fixed") {
  Architecture arch;
  arch.input_dim = 2;
  arch.hidden = {4, 3};
  arch.num_classes = 2;
  ModelParams p = init_params(arch, 8);
  const ModelParams before = p;
  GradientBuffer g = GradientBuffer::zeros_like(p);
  for (auto& slot : g.layers) {
    for (double& v : slot.weight) v = 1.0;
  }
  OptimizerState s = make_optimizer_state(p, {0.1, 0.1, 0.0, true});
  sgd_step(p, g, s);
  CHECK(p.layers[0] != before.layers[0]);
  for (std::size_t l = p.split + 1; l < p.layers.size(); ++l) CHECK(p.layers[l] == before.layers[l]);
}

TEST_CASE("checkpoint round-trips exactly") {
  const ModelParams p = two_layer(12);
  const std::string text = to_checkpoint_json(p);
  const ModelParams q = from_checkpoint_json(text);
  CHECK(p == q);
  CHECK(to_checkpoint_json(q) == text);

  const auto path = std::filesystem::temp_directory_path() / "procal_unit_ckpt.json";
  save_checkpoint(p, path);
  CHECK(load_checkpoint(path) == p);
  std::filesystem::remove(path);

  CHECK_THROWS_AS(from_checkpoint_json("{\"layers\": 3}"), ParseError);
}

TEST_CASE("init_params is deterministic in the seed") {
  Architecture arch;
  CHECK(init_params(arch, 4) == init_params(arch, 4));
  CHECK(init_params(arch, 4) != init_params(arch, 5));
}
