#pragma once

// Simplex-valued vectors and the elementary numerics every other module uses.

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace procal {

/// Tolerance on |sum - 1| accepted for a probability vector.
inline constexpr double kSimplexTolerance = 1e-9;
/// Norms at or below this are treated as zero.
inline constexpr double kDegenerateNorm = 1e-12;

namespace detail {

/// Read-only dense vector; derived types add their own invariants.
class DenseVector {
 public:
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }
  double operator[](std::size_t i) const { return values_[i]; }
  std::span<const double> values() const noexcept { return values_; }
  const std::vector<double>& vec() const noexcept { return values_; }
  auto begin() const noexcept { return values_.begin(); }
  auto end() const noexcept { return values_.end(); }

  friend bool operator==(const DenseVector&, const DenseVector&) = default;

 protected:
  DenseVector() = default;
  explicit DenseVector(std::vector<double> v) : values_(std::move(v)) {}
  std::vector<double> values_;
};

}  // namespace detail

/// Unconstrained finite reals: logits, neighbor aggregates, calibrated targets.
class ScoreVector : public detail::DenseVector {
 public:
  ScoreVector() = default;
  /// Throws InvalidInputError on NaN/Inf.
  explicit ScoreVector(std::vector<double> v);
  ScoreVector(std::initializer_list<double> v) : ScoreVector(std::vector<double>(v)) {}
  static ScoreVector zeros(std::size_t n) { return ScoreVector(std::vector<double>(n, 0.0)); }

  double& operator[](std::size_t i) { return values_[i]; }
  using DenseVector::operator[];
  std::span<double> mutable_values() noexcept { return values_; }
};

/// Point on the probability simplex: entries >= 0, sum within kSimplexTolerance of 1.
class ProbVector : public detail::DenseVector {
 public:
  ProbVector() = default;
  /// Throws InvalidInputError unless v lies on the simplex.
  explicit ProbVector(std::vector<double> v);
  ProbVector(std::initializer_list<double> v) : ProbVector(std::vector<double>(v)) {}

  static ProbVector uniform(std::size_t n);
  static ProbVector one_hot(std::size_t n, std::size_t k);
  /// Skips validation; for callers that produced v by a construction that
  /// already guarantees the invariants (softmax).
  static ProbVector trusted(std::vector<double> v) {
    ProbVector p;
    p.values_ = std::move(v);
    return p;
  }
};

/// Embedding vector of dimension h.
class FeatureVector : public detail::DenseVector {
 public:
  FeatureVector() = default;
  explicit FeatureVector(std::vector<double> v);
  FeatureVector(std::initializer_list<double> v) : FeatureVector(std::vector<double>(v)) {}
};

/// Row-major dense matrix; rows are samples throughout the library.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
  std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

/// True when v is on the simplex within kSimplexTolerance.
bool is_simplex(std::span<const double> v) noexcept;
bool all_finite(std::span<const double> v) noexcept;

/// Max-subtracted softmax. Throws InvalidInputError on non-finite input.
ProbVector softmax(const ScoreVector& logits);
/// In-place friendly variant used by the model; out.size() == logits.size().
void softmax_into(std::span<const double> logits, std::span<double> out);

/// Throws DegenerateFeatureError when the norm is <= kDegenerateNorm.
FeatureVector l2_normalize(const FeatureVector& v);
void l2_normalize_into(std::span<const double> v, std::span<double> out);

double cosine_similarity(const FeatureVector& a, const FeatureVector& b);

/// Shannon entropy in nats with 0 log 0 = 0.
double entropy(const ProbVector& p);

/// Index of the largest entry; ties go to the lowest index.
std::size_t argmax(std::span<const double> v);

}  // namespace procal
