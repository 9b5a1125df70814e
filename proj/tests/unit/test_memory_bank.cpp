#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "procal/error.hpp"
#include "procal/memory_bank.hpp"

using namespace procal;

namespace {

Matrix rows_of(std::initializer_list<std::vector<double>> rows) {
  Matrix m(rows.size(), rows.begin()->size());
  std::size_t i = 0;
  for (const auto& r : rows) {
    for (std::size_t j = 0; j < r.size(); ++j) m(i, j) = r[j];
    ++i;
  }
  return m;
}

Matrix uniform_probs(std::size_t n, std::size_t c) { return Matrix(n, c, 1.0 / static_cast<double>(c)); }

std::vector<std::size_t> list(std::span<const std::size_t> s) { return {s.begin(), s.end()}; }

}  // namespace

TEST_CASE("N=2: each sample's neighbor is the other") {
  const MemoryBank b = MemoryBank::initialize(uniform_probs(2, 2), rows_of({{1, 0}, {0, 1}}), 5);
  CHECK(b.k() == 1);
  CHECK(list(b.neighbors(0)) == std::vector<std::size_t>{1});
  CHECK(list(b.neighbors(1)) == std::vector<std::size_t>{0});
}

TEST_CASE("N<2 is rejected") {
  CHECK_THROWS_AS(MemoryBank::initialize(uniform_probs(1, 2), rows_of({{1, 0}}), 1),
                  InsufficientDataError);
}

TEST_CASE("angles 0, 10, 90 degrees") {
  const double r = std::numbers::pi / 180.0;
  const Matrix f = rows_of({{1, 0}, {std::cos(10 * r), std::sin(10 * r)}, {0, 1}});
  const MemoryBank b = MemoryBank::initialize(uniform_probs(3, 2), f, 1);
  CHECK(b.top_k_neighbors(0, 1) == std::vector<std::size_t>{1});
  CHECK(b.top_k_neighbors(0, 2) == std::vector<std::size_t>{1, 2});
  CHECK(b.top_k_neighbors(2, 2) == std::vector<std::size_t>{1, 0});
  CHECK_THROWS_AS(b.top_k_neighbors(0, 3), ParameterError);
  CHECK_THROWS_AS(b.top_k_neighbors(0, 0), ParameterError);
}

TEST_CASE("identical features tie toward the lowest indices") {
  const Matrix f = rows_of({{1, 1}, {1, 1}, {1, 1}, {1, 1}});
  const MemoryBank b = MemoryBank::initialize(uniform_probs(4, 2), f, 2);
  CHECK(b.top_k_neighbors(0, 2) == std::vector<std::size_t>{1, 2});
  CHECK(b.top_k_neighbors(2, 2) == std::vector<std::size_t>{0, 1});
  CHECK(list(b.neighbors(3)) == std::vector<std::size_t>{0, 1});
}

TEST_CASE("neighborhood probability sums") {
  SUBCASE("k=2 hand addition") {
    const Matrix probs = rows_of({{0.5, 0.5}, {0.6, 0.4}, {0.8, 0.2}});
    MemoryBank b = MemoryBank::initialize(probs, rows_of({{1, 0}, {1, 0.1}, {1, 0.2}}), 2);
    b.set_neighbors(0, {1, 2});
    const ScoreVector s = b.neighborhood_probability(0);
    CHECK(s[0] == doctest::Approx(1.4));
    CHECK(s[1] == doctest::Approx(0.6));
  }
  SUBCASE("uniform neighbors, C=4, k=8") {
    Matrix f(9, 3);
    std::mt19937_64 rng(1);
    std::normal_distribution<double> g;
    for (double& v : f.data) v = g(rng);
    const MemoryBank b = MemoryBank::initialize(uniform_probs(9, 4), f, 8);
    CHECK(b.neighborhood_probability(4) == ScoreVector({2.0, 2.0, 2.0, 2.0}));
  }
  SUBCASE("k=1 equals the neighbor's probabilities") {
    const Matrix probs = rows_of({{0.1, 0.9}, {0.7, 0.3}});
    const MemoryBank b = MemoryBank::initialize(probs, rows_of({{1, 0}, {0, 1}}), 1);
    CHECK(b.neighborhood_probability(0) == ScoreVector({0.7, 0.3}));
  }
}

TEST_CASE("neighborhood probability sums to k on random banks") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  for (int t = 0; t < 20; ++t) {
    const std::size_t n = 5 + t, c = 2 + t % 4, k = 1 + t % 4;
    Matrix f(n, 3), logits(n, c), probs(n, c);
    for (double& v : f.data) v = g(rng);
    for (double& v : logits.data) v = g(rng);
    for (std::size_t i = 0; i < n; ++i) softmax_into(logits.row(i), probs.row(i));
    const MemoryBank b = MemoryBank::initialize(probs, f, k);
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (double v : b.neighborhood_probability(i)) s += v;
      CHECK(s == doctest::Approx(static_cast<double>(k)).epsilon(1e-12));
      const auto nb = list(b.neighbors(i));
      CHECK(std::find(nb.begin(), nb.end(), i) == nb.end());
    }
  }
}

TEST_CASE("priors are write-once") {
  MemoryBank b = MemoryBank::initialize(uniform_probs(2, 2), rows_of({{1, 0}, {0, 1}}), 1);
  CHECK_THROWS_AS(b.freeze_priors(uniform_probs(2, 2)), WriteOnceError);
}

TEST_CASE("refresh") {
  Architecture arch;
  arch.input_dim = 2;
  arch.hidden = {6, 4};
  arch.num_classes = 3;
  const ModelParams model = init_params(arch, 2);
  Matrix x(12, 2);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  for (double& v : x.data) v = g(rng);
  const UnlabeledView view(x);
  const BatchForward fw = forward_batch(model, x);
  MemoryBank b = MemoryBank::initialize(fw.probs, fw.features, 3);

  SUBCASE("unchanged model leaves the bank unchanged") {
    const Matrix probs = b.probs(), feats = b.features(), priors = b.source_priors();
    std::vector<std::vector<std::size_t>> nbs;
    for (std::size_t i = 0; i < b.size(); ++i) nbs.push_back(list(b.neighbors(i)));
    b.refresh(model, view, 5);
    CHECK(b.probs() == probs);
    CHECK(b.features() == feats);
    CHECK(b.source_priors() == priors);
    for (std::size_t i = 0; i < b.size(); ++i) CHECK(list(b.neighbors(i)) == nbs[i]);
    CHECK(b.last_full_refresh() == 5);
  }
  SUBCASE("updated model changes probs but not priors") {
    ModelParams moved = model;
    moved.layers.back().bias[0] += 1.0;
    const Matrix priors = b.source_priors();
    b.refresh(moved, view, 1);
    CHECK(b.source_priors() == priors);
    CHECK(b.probs() != priors);
    CHECK(b.probs() == forward_batch(moved, x).probs);
  }
  SUBCASE("dimension drift is a shape error") {
    Matrix wide(12, 3, 1.0);
    CHECK_THROWS_AS(b.refresh(model, UnlabeledView(wide), 1), ShapeError);
  }
}

TEST_CASE("RefreshPolicy") {
  CHECK(RefreshPolicy::from_tau(1, 10).period == 10);
  CHECK(RefreshPolicy::from_tau(2, 10).period == 5);
  CHECK(RefreshPolicy::from_tau(3, 10).period == 4);
  CHECK(RefreshPolicy::from_tau(100, 10).period == 1);
  CHECK(RefreshPolicy::from_tau(7, 10, true).period == 7);
  const RefreshPolicy p{4};
  CHECK(p.fires(0));
  CHECK_FALSE(p.fires(3));
  CHECK(p.fires(8));
}
