#pragma once

// Synthetic source/target domain pairs, feature-table I/O and source-prior
// corruption.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "procal/core_math.hpp"

namespace procal {

class UnlabeledView;

struct LabeledDataset {
  Matrix inputs;                    // N x d
  std::vector<std::size_t> labels;  // N, each in [0, num_classes)
  std::size_t num_classes = 0;
  std::string domain;
  std::uint64_t seed = 0;

  std::size_t size() const { return inputs.rows; }
  std::size_t dim() const { return inputs.cols; }

  /// Every class present, N >= 2C, finite inputs. Throws InvalidInputError.
  void validate() const;

  /// The only form in which target data reaches the adaptation driver.
  UnlabeledView unlabeled() const;
};

/// Inputs only. Holds no reference to labels, so code that receives this
/// type cannot read them.
class UnlabeledView {
 public:
  explicit UnlabeledView(const Matrix& inputs) : inputs_(&inputs) {}
  const Matrix& inputs() const { return *inputs_; }
  std::size_t size() const { return inputs_->rows; }
  std::size_t dim() const { return inputs_->cols; }

 private:
  const Matrix* inputs_;
};

/// Target transform: x_t = R(mu_c + scale * sigma * e) + translation + noise * e',
/// with R a rotation in the (x0, x1) plane.
struct ShiftSpec {
  double rotation = 0.0;  // radians
  std::vector<double> translation;  // empty means zero
  double scale = 1.0;
  double noise = 0.0;
};

struct GaussianDomainSpec {
  std::size_t num_classes = 4;
  std::size_t dim = 2;
  std::size_t n_per_class = 150;
  double cluster_std = 0.15;
  ShiftSpec shift;
};

struct DomainPair {
  LabeledDataset source;
  LabeledDataset target;
  Matrix means;  // C x d source class means
};

/// C Gaussian blobs around unit-norm means at pairwise distance >= 2 sigma.
/// Throws GenerationError if 1000 rejection rounds cannot separate the means.
DomainPair make_gaussian_domains(const GaussianDomainSpec& spec, std::uint64_t seed);

/// The default desk-scale benchmark: C=4, d=4, 150/class, 60 degree
/// rotation in the (x0, x1) plane, translation [0.5, -0.3, 0, 0], sigma 0.15.
/// In d=2 the rotation carries nearly every blob onto another class.
GaussianDomainSpec blobs_rot60();

// Feature table CSV:
//   #meta,C=<int>,d=<int>
//   id,label,x0,...,x{d-1}
//   <rows>
LabeledDataset load_feature_table(const std::filesystem::path& path);
LabeledDataset parse_feature_table(const std::string& text);
std::string format_feature_table(const LabeledDataset& data);
void write_feature_table(const LabeledDataset& data, const std::filesystem::path& path);

/// Replaces the priors of a uniformly random floor(rate * N) subset with a
/// one-hot on a uniformly random class other than the prior's argmax.
std::vector<ProbVector> corrupt_source_priors(const std::vector<ProbVector>& priors,
                                              double noise_rate, std::uint64_t seed);
Matrix corrupt_source_priors(const Matrix& priors, double noise_rate, std::uint64_t seed);

/// Shortest decimal string that parses back to exactly `v`.
std::string format_double(double v);

}  // namespace procal
