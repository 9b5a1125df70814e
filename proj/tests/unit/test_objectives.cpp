#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "procal/error.hpp"
#include "procal/objectives.hpp"

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

Matrix random_probs(std::size_t n, std::size_t c, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Matrix logits(n, c), p(n, c);
  for (double& v : logits.data) v = 2.0 * g(rng);
  for (std::size_t i = 0; i < n; ++i) softmax_into(logits.row(i), p.row(i));
  return p;
}

Matrix random_features(std::size_t n, std::size_t d, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Matrix f(n, d);
  for (double& v : f.data) v = g(rng);
  return f;
}

Matrix permute_cols(const Matrix& m, const std::vector<std::size_t>& perm) {
  Matrix out(m.rows, m.cols);
  for (std::size_t i = 0; i < m.rows; ++i) {
    for (std::size_t c = 0; c < m.cols; ++c) out(i, perm[c]) = m(i, c);
  }
  return out;
}

void check_close(const Matrix& a, const Matrix& b, double tol) {
  REQUIRE(a.rows == b.rows);
  REQUIRE(a.cols == b.cols);
  for (std::size_t k = 0; k < a.data.size(); ++k) CHECK(std::abs(a.data[k] - b.data[k]) <= tol);
}

}  // namespace

TEST_CASE("calibrate examples") {
  const CalibratedTarget t = calibrate({1.4, 0.6}, {0.5, 0.5}, {0.7, 0.3}, 0.5);
  CHECK(t.p_cal[0] == doctest::Approx(2.0));
  CHECK(t.p_cal[1] == doctest::Approx(1.0));
  CHECK(calibrate({1.4, 0.6}, {0.5, 0.5}, {0.7, 0.3}, 0.0).p_cal == ScoreVector({1.4, 0.6}));
  CHECK(calibrate({0.0, 0.0}, {0.5, 0.5}, {0.5, 0.5}, 1.0).p_cal == ScoreVector({1.0, 1.0}));
  CHECK_THROWS_AS(calibrate({1.0, 1.0}, {0.5, 0.5}, {0.5, 0.5}, -0.1), ParameterError);
  CHECK_THROWS_AS(calibrate({1.0, 1.0, 1.0}, {0.5, 0.5}, {0.5, 0.5}, 0.1), ShapeError);
}

TEST_CASE("calibration terms can be switched off") {
  const CalibratedTarget t = calibrate({1.0, 0.0}, {0.5, 0.5}, {1.0, 0.0}, 1.0, {false, true});
  CHECK(t.p_cal == ScoreVector({2.0, 0.0}));
  const CalibratedTarget u = calibrate({1.0, 0.0}, {0.5, 0.5}, {1.0, 0.0}, 1.0, {true, false});
  CHECK(u.p_cal == ScoreVector({1.5, 0.5}));
}

TEST_CASE("soft loss examples") {
  const CalibratedTarget t = calibrate({2.0, 1.0}, {0.5, 0.5}, {0.5, 0.5}, 0.0);
  const LossResult r = soft_loss(std::span(&t, 1), rows_of({{0.5, 0.5}}));
  CHECK(r.value == doctest::Approx(-1.5));

  // q = p_N + gamma p_s = [1, 0] with gamma = 0.5 and p = [0.5, 0.5]
  const CalibratedTarget full = calibrate({1.0, -0.5}, {0.5, 0.5}, {0.0, 1.0}, 0.5);
  const LossResult d = soft_loss(std::span(&full, 1), rows_of({{0.5, 0.5}}));
  CHECK(d.grad_p(0, 0) == doctest::Approx(-1.5));
  CHECK(d.grad_p(0, 1) == doctest::Approx(-0.5));
}

TEST_CASE("soft loss with neighbors equal to p is -k ||p||^2") {
  const std::size_t n = 6, k = 5;
  Matrix probs(n, 3);
  for (std::size_t i = 0; i < n; ++i) {
    probs(i, 0) = 0.2;
    probs(i, 1) = 0.5;
    probs(i, 2) = 0.3;
  }
  std::mt19937_64 rng(1);
  const MemoryBank bank = MemoryBank::initialize(probs, random_features(n, 3, rng), k);
  const std::vector<std::size_t> rows = {0, 1, 2};
  Matrix batch(3, 3);
  for (std::size_t i = 0; i < 3; ++i) std::copy_n(probs.row(i).begin(), 3, batch.row(i).begin());
  const ProcalLossResult r = procal_loss(rows, batch, bank, 0.0, 0.0);
  CHECK(r.loss.soft_term == doctest::Approx(-(0.04 + 0.25 + 0.09) * 5.0));
}

TEST_CASE("diversity loss examples") {
  CHECK(diversity_loss(rows_of({{1, 0}, {0, 1}})).value == doctest::Approx(1.0));
  Matrix u(5, 4, 0.25);
  CHECK(diversity_loss(u).value == doctest::Approx(5.0 / 4.0));
  CHECK(diversity_loss(rows_of({{0, 1, 0}})).value == doctest::Approx(1.0));
  CHECK_THROWS_AS(diversity_loss(Matrix(0, 3)), ParameterError);
}

TEST_CASE("diversity loss equals ||sum p||^2 / n") {
  std::mt19937_64 rng(7);
  for (int t = 0; t < 50; ++t) {
    const Matrix p = random_probs(1 + t % 8, 2 + t % 5, rng);
    std::vector<double> s(p.cols, 0.0);
    for (std::size_t i = 0; i < p.rows; ++i) {
      for (std::size_t c = 0; c < p.cols; ++c) s[c] += p(i, c);
    }
    const double want = std::inner_product(s.begin(), s.end(), s.begin(), 0.0) / static_cast<double>(p.rows);
    CHECK(diversity_loss(p).value == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("procal loss: beta=0 total equals the soft term") {
  std::mt19937_64 rng(2);
  const Matrix probs = random_probs(10, 3, rng);
  const MemoryBank bank = MemoryBank::initialize(probs, random_features(10, 4, rng), 3);
  const std::vector<std::size_t> rows = {1, 4, 7};
  const Matrix batch = random_probs(3, 3, rng);
  const ProcalLossResult r = procal_loss(rows, batch, bank, 0.4, 0.0);
  CHECK(r.loss.total == r.loss.soft_term);
  CHECK_THROWS_AS(procal_loss(rows, batch, bank, 0.4, -1.0), ParameterError);
}

TEST_CASE("procal with gamma=0, beta=0 collapses to the AaD attraction term") {
  std::mt19937_64 rng(3);
  for (std::size_t k : {1u, 3u}) {
    const Matrix probs = random_probs(12, 4, rng);
    const MemoryBank bank = MemoryBank::initialize(probs, random_features(12, 3, rng), k);
    const std::vector<std::size_t> rows = {0, 5, 9, 11};
    const Matrix batch = random_probs(4, 4, rng);
    const ProcalLossResult p = procal_loss(rows, batch, bank, 0.0, 0.0);
    const std::vector<std::vector<std::size_t>> empty(4);
    const LossResult a = aad_loss(rows, batch, bank, empty, 0.0);
    CHECK(p.loss.total == doctest::Approx(a.value).epsilon(1e-14));
    check_close(p.grad_p, a.grad_p, 1e-15);
    check_close(p.grad_logits, a.grad_logits, 1e-15);
  }
}

TEST_CASE("IM loss examples") {
  CHECK(std::abs(im_loss(Matrix(3, 4, 0.25)).value) < 1e-15);
  CHECK(im_loss(rows_of({{1, 0}, {0, 1}})).value == doctest::Approx(-std::log(2.0)));
  CHECK(im_loss(rows_of({{0, 1}, {0, 1}, {0, 1}})).value == 0.0);
  CHECK_THROWS_AS(im_loss(Matrix(0, 2)), ParameterError);
}

TEST_CASE("AaD loss examples") {
  const Matrix bank_probs = rows_of({{1, 0}, {1, 0}, {0, 1}});
  const MemoryBank bank = MemoryBank::initialize(bank_probs, rows_of({{1, 0}, {1, 0.01}, {0, 1}}), 1);
  const std::vector<std::size_t> rows = {0};
  const Matrix p = rows_of({{1, 0}});
  REQUIRE(bank.neighbors(0)[0] == 1);
  const std::vector<std::vector<std::size_t>> bg = {{2}};
  CHECK(aad_loss(rows, p, bank, bg, 1.0).value == doctest::Approx(-1.0));
  CHECK(aad_loss(rows, p, bank, bg, 0.0).value == doctest::Approx(-1.0));
  const std::vector<std::vector<std::size_t>> empty(1);
  CHECK(aad_loss(rows, rows_of({{0.3, 0.7}}), bank, empty, 5.0).value == doctest::Approx(-0.3));

  const std::vector<std::vector<std::size_t>> overlap = {{1}};
  CHECK_THROWS_AS(aad_loss(rows, p, bank, overlap, 1.0), ParameterError);
  const std::vector<std::vector<std::size_t>> self = {{0}};
  CHECK_THROWS_AS(aad_loss(rows, p, bank, self, 1.0), ParameterError);
}

TEST_CASE("cross entropy examples") {
  CHECK(cross_entropy(ProbVector::one_hot(3, 2), 2).value == 0.0);
  CHECK(cross_entropy(ProbVector::uniform(5), 1).value == doctest::Approx(std::log(5.0)));
  CHECK(cross_entropy({0.25, 0.75}, 1).value == doctest::Approx(0.2877).epsilon(1e-4));
  const CrossEntropy s = cross_entropy({0.25, 0.75}, 1, 0.1);
  CHECK(s.grad_logits[0] == doctest::Approx(0.25 - 0.05));
  CHECK(s.grad_logits[1] == doctest::Approx(0.75 - 0.95));
  CHECK_THROWS_AS(cross_entropy({0.5, 0.5}, 2), ParameterError);
}

TEST_CASE("losses are permutation-equivariant in the class index") {
  std::mt19937_64 rng(21);
  for (int t = 0; t < 20; ++t) {
    const std::size_t C = 2 + t % 4, N = 10, n = 4;
    std::vector<std::size_t> perm(C);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);

    const Matrix probs = random_probs(N, C, rng);
    const Matrix priors = random_probs(N, C, rng);
    const Matrix feats = random_features(N, 3, rng);
    const MemoryBank bank = MemoryBank::initialize(probs, feats, priors, 3);
    const MemoryBank pbank =
        MemoryBank::initialize(permute_cols(probs, perm), feats, permute_cols(priors, perm), 3);
    const std::vector<std::size_t> rows = {2, 3, 5, 8};
    const Matrix batch = random_probs(n, C, rng);
    const Matrix pbatch = permute_cols(batch, perm);

    const ProcalLossResult a = procal_loss(rows, batch, bank, 0.7, 1.3);
    const ProcalLossResult b = procal_loss(rows, pbatch, pbank, 0.7, 1.3);
    CHECK(b.loss.total == doctest::Approx(a.loss.total).epsilon(1e-12));
    check_close(permute_cols(a.grad_logits, perm), b.grad_logits, 1e-12);

    const LossResult ia = im_loss(batch);
    const LossResult ib = im_loss(pbatch);
    CHECK(ib.value == doctest::Approx(ia.value).epsilon(1e-12));
    check_close(permute_cols(ia.grad_logits, perm), ib.grad_logits, 1e-12);

    const std::vector<std::vector<std::size_t>> bg(n);
    const LossResult aa = aad_loss(rows, batch, bank, bg, 0.5);
    const LossResult ab = aad_loss(rows, pbatch, pbank, bg, 0.5);
    CHECK(ab.value == doctest::Approx(aa.value).epsilon(1e-12));

    const std::vector<std::size_t> labels = {0, C - 1, 1, 0};
    std::vector<std::size_t> plabels(n);
    for (std::size_t i = 0; i < n; ++i) plabels[i] = perm[labels[i]];
    CHECK(cross_entropy_loss(pbatch, plabels, 0.1).value ==
          doctest::Approx(cross_entropy_loss(batch, labels, 0.1).value).epsilon(1e-12));
  }
}

TEST_CASE("paper_exact_scaling scales the diversity term by n") {
  std::mt19937_64 rng(4);
  const Matrix probs = random_probs(10, 3, rng);
  const MemoryBank bank = MemoryBank::initialize(probs, random_features(10, 4, rng), 3);
  const std::vector<std::size_t> rows = {1, 2, 3, 4, 5};
  const Matrix batch = random_probs(5, 3, rng);
  ProcalOptions exact;
  exact.paper_exact_scaling = true;
  const double mean_form = procal_loss(rows, batch, bank, 0.5, 1.0).loss.div_term;
  const double sum_form = procal_loss(rows, batch, bank, 0.5, 1.0, exact).loss.div_term;
  CHECK(sum_form == doctest::Approx(5.0 * mean_form).epsilon(1e-13));
}
