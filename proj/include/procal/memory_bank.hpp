#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "procal/core_math.hpp"
#include "procal/data.hpp"
#include "procal/model.hpp"

namespace procal {

/// When the whole bank (features, probabilities, neighbor lists) is rebuilt.
struct RefreshPolicy {
  std::size_t period = 1;  // in mini-batches

  /// period = max(1, ceil(batches_per_epoch / tau)), or tau itself when
  /// tau_is_period is set.
  static RefreshPolicy from_tau(std::size_t tau, std::size_t batches_per_epoch,
                                bool tau_is_period = false);
  bool fires(std::size_t batch_count) const { return batch_count % period == 0; }
};

/// Per-sample cache over the whole target set: normalized features, the
/// latest predicted probabilities, frozen source priors, and top-k neighbor
/// lists (self excluded, similarity descending, ties to the lower index).
class MemoryBank {
 public:
  /// probs and priors both start as `outputs`. Throws InsufficientDataError for N < 2.
  static MemoryBank initialize(const Matrix& outputs, const Matrix& features, std::size_t k);
  /// Same, but with separately supplied (for example corrupted) priors.
  static MemoryBank initialize(const Matrix& outputs, const Matrix& features,
                               const Matrix& priors, std::size_t k);
  static MemoryBank initialize(const std::vector<ProbVector>& outputs,
                               const std::vector<FeatureVector>& features, std::size_t k);

  std::size_t size() const { return probs_.rows; }
  std::size_t num_classes() const { return probs_.cols; }
  std::size_t feature_dim() const { return features_.cols; }
  /// Effective neighborhood size min(k_config, N - 1).
  std::size_t k() const { return k_; }

  const Matrix& features() const { return features_; }
  const Matrix& probs() const { return probs_; }
  const Matrix& source_priors() const { return priors_; }
  std::span<const std::size_t> neighbors(std::size_t i) const;
  std::size_t last_full_refresh() const { return last_full_refresh_; }

  /// Fresh exact top-k cosine query against the stored features.
  std::vector<std::size_t> top_k_neighbors(std::size_t i, std::size_t k) const;

  /// Sum of the cached probabilities of i's neighbors (unnormalized; sums to k).
  ScoreVector neighborhood_probability(std::size_t i) const;
  void neighborhood_probability_into(std::size_t i, std::span<double> out) const;

  /// Write-once; the bank already freezes priors in initialize(), so any
  /// call on an initialized bank throws WriteOnceError.
  void freeze_priors(const Matrix& priors);

  /// Recomputes features and probs under `model` for every sample and
  /// rebuilds all neighbor lists. Priors are untouched.
  void refresh(const ModelParams& model, const UnlabeledView& data, std::size_t iteration);

  /// Overwrites cached probabilities for the given rows (fresh online predictions).
  void update_probs(std::span<const std::size_t> rows, const Matrix& probs);

  /// Replaces one neighbor list; used by tests and metrics experiments.
  void set_neighbors(std::size_t i, std::vector<std::size_t> list);

  /// sample_id,neighbor_ids,prior_0..,prob_0..
  std::string to_csv() const;
  void dump_csv(const std::filesystem::path& path) const;

 private:
  MemoryBank() = default;
  void set_features(const Matrix& raw);
  void rebuild_neighbors();

  Matrix features_;
  Matrix probs_;
  Matrix priors_;
  bool priors_frozen_ = false;
  std::vector<std::size_t> neighbor_index_;  // N x k_
  std::size_t k_ = 0;
  std::size_t last_full_refresh_ = 0;
};

}  // namespace procal
