#include "procal/core_math.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "procal/error.hpp"
#include "procal/simd/kernels.hpp"

namespace procal {

bool all_finite(std::span<const double> v) noexcept {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

bool is_simplex(std::span<const double> v) noexcept {
  if (v.empty()) return false;
  double sum = 0.0;
  for (double x : v) {
    if (!std::isfinite(x) || x < 0.0) return false;
    sum += x;
  }
  return std::abs(sum - 1.0) <= kSimplexTolerance;
}

ScoreVector::ScoreVector(std::vector<double> v) : DenseVector(std::move(v)) {
  if (!all_finite(values_)) throw InvalidInputError("score vector has non-finite entries");
}

ProbVector::ProbVector(std::vector<double> v) : DenseVector(std::move(v)) {
  if (!is_simplex(values_)) throw InvalidInputError("vector is not on the probability simplex");
}

ProbVector ProbVector::uniform(std::size_t n) {
  if (n == 0) throw InvalidInputError("uniform: empty class set");
  return trusted(std::vector<double>(n, 1.0 / static_cast<double>(n)));
}

ProbVector ProbVector::one_hot(std::size_t n, std::size_t k) {
  if (k >= n) throw ParameterError("one_hot: class index out of range");
  std::vector<double> v(n, 0.0);
  v[k] = 1.0;
  return trusted(std::move(v));
}

FeatureVector::FeatureVector(std::vector<double> v) : DenseVector(std::move(v)) {
  if (!all_finite(values_)) throw InvalidInputError("feature vector has non-finite entries");
}

void softmax_into(std::span<const double> logits, std::span<double> out) {
  if (logits.empty() || out.size() != logits.size()) throw ShapeError("softmax: bad lengths");
  if (!all_finite(logits)) throw InvalidInputError("softmax: non-finite logits");
  const double peak = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    out[k] = std::exp(logits[k] - peak);
    total += out[k];
  }
  for (double& x : out) x /= total;
}

ProbVector softmax(const ScoreVector& logits) {
  std::vector<double> out(logits.size());
  softmax_into(logits.values(), out);
  return ProbVector::trusted(std::move(out));
}

void l2_normalize_into(std::span<const double> v, std::span<double> out) {
  if (out.size() != v.size()) throw ShapeError("l2_normalize: bad lengths");
  const double norm = std::sqrt(simd::dot(v, v));
  if (!(norm > kDegenerateNorm)) {
    throw DegenerateFeatureError("cannot normalize a feature with norm " + std::to_string(norm));
  }
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / norm;
}

FeatureVector l2_normalize(const FeatureVector& v) {
  std::vector<double> out(v.size());
  l2_normalize_into(v.values(), out);
  return FeatureVector(std::move(out));
}

double cosine_similarity(const FeatureVector& a, const FeatureVector& b) {
  if (a.size() != b.size()) throw ShapeError("cosine_similarity: length mismatch");
  const FeatureVector na = l2_normalize(a);
  const FeatureVector nb = l2_normalize(b);
  return std::clamp(simd::dot(na.values(), nb.values()), -1.0, 1.0);
}

double entropy(const ProbVector& p) {
  if (!is_simplex(p.values())) throw InvalidInputError("entropy: input is not a distribution");
  double h = 0.0;
  for (double x : p) {
    if (x > 0.0) h -= x * std::log(x);
  }
  return std::max(h, 0.0);
}

std::size_t argmax(std::span<const double> v) {
  if (v.empty()) throw InvalidInputError("argmax: empty vector");
  std::size_t best = 0;
  for (std::size_t k = 1; k < v.size(); ++k) {
    if (v[k] > v[best]) best = k;
  }
  return best;
}

}  // namespace procal
