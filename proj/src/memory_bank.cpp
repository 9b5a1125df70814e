#include "procal/memory_bank.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "procal/error.hpp"
#include "procal/simd/kernels.hpp"

namespace procal {
namespace {

Matrix to_matrix(const auto& rows) {
  if (rows.empty()) return {};
  Matrix m(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != m.cols) throw ShapeError("rows have inconsistent lengths");
    std::copy(rows[i].begin(), rows[i].end(), m.row(i).begin());
  }
  return m;
}

}  // namespace

RefreshPolicy RefreshPolicy::from_tau(std::size_t tau, std::size_t batches_per_epoch,
                                      bool tau_is_period) {
  if (tau == 0) throw ParameterError("tau must be positive");
  if (tau_is_period) return {tau};
  return {std::max<std::size_t>(1, (batches_per_epoch + tau - 1) / tau)};
}

MemoryBank MemoryBank::initialize(const Matrix& outputs, const Matrix& features, std::size_t k) {
  return initialize(outputs, features, outputs, k);
}

MemoryBank MemoryBank::initialize(const std::vector<ProbVector>& outputs,
                                  const std::vector<FeatureVector>& features, std::size_t k) {
  const Matrix p = to_matrix(outputs);
  return initialize(p, to_matrix(features), p, k);
}

MemoryBank MemoryBank::initialize(const Matrix& outputs, const Matrix& features,
                                  const Matrix& priors, std::size_t k) {
  const std::size_t N = outputs.rows;
  if (N < 2) throw InsufficientDataError("memory bank needs at least two samples");
  if (features.rows != N || priors.rows != N || priors.cols != outputs.cols) {
    throw ShapeError("memory bank: outputs, features and priors disagree in shape");
  }
  if (k == 0) throw ParameterError("k must be positive");
  for (std::size_t i = 0; i < N; ++i) {
    if (!is_simplex(outputs.row(i)) || !is_simplex(priors.row(i))) {
      throw InvalidInputError("memory bank: row " + std::to_string(i) + " is not a distribution");
    }
  }
  MemoryBank bank;
  bank.probs_ = outputs;
  bank.freeze_priors(priors);
  bank.k_ = std::min(k, N - 1);
  bank.set_features(features);
  bank.rebuild_neighbors();
  return bank;
}

void MemoryBank::freeze_priors(const Matrix& priors) {
  if (priors_frozen_) throw WriteOnceError("source priors are already frozen");
  priors_ = priors;
  priors_frozen_ = true;
}

void MemoryBank::set_features(const Matrix& raw) {
  features_ = Matrix(raw.rows, raw.cols);
  for (std::size_t i = 0; i < raw.rows; ++i) l2_normalize_into(raw.row(i), features_.row(i));
}

std::vector<std::size_t> MemoryBank::top_k_neighbors(std::size_t i, std::size_t k) const {
  const std::size_t N = size();
  if (i >= N) throw ParameterError("sample index out of range");
  if (k < 1 || k > N - 1) throw ParameterError("k must lie in [1, N-1]");
  const auto query = features_.row(i);
  const auto& kt = simd::kernels(simd::active_isa());
  std::vector<double> sim(N);
  for (std::size_t j = 0; j < N; ++j) {
    sim[j] = kt.dot(query.data(), features_.row(j).data(), features_.cols);
  }
  std::vector<std::size_t> cand;
  cand.reserve(N - 1);
  for (std::size_t j = 0; j < N; ++j) {
    if (j != i) cand.push_back(j);
  }
  auto better = [&](std::size_t a, std::size_t b) {
    return sim[a] > sim[b] || (sim[a] == sim[b] && a < b);
  };
  std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end(), better);
  cand.resize(k);
  return cand;
}

void MemoryBank::rebuild_neighbors() {
  const std::size_t N = size();
  neighbor_index_.assign(N * k_, 0);
  for (std::size_t i = 0; i < N; ++i) {
    const auto list = top_k_neighbors(i, k_);
    std::copy(list.begin(), list.end(), neighbor_index_.begin() + static_cast<std::ptrdiff_t>(i * k_));
  }
}

std::span<const std::size_t> MemoryBank::neighbors(std::size_t i) const {
  if (i >= size()) throw ParameterError("sample index out of range");
  return {neighbor_index_.data() + i * k_, k_};
}

void MemoryBank::set_neighbors(std::size_t i, std::vector<std::size_t> list) {
  if (i >= size()) throw ParameterError("sample index out of range");
  if (list.size() != k_) throw ShapeError("neighbor list must have exactly k entries");
  for (std::size_t j : list) {
    if (j >= size() || j == i) throw ParameterError("invalid neighbor index");
  }
  std::copy(list.begin(), list.end(), neighbor_index_.begin() + static_cast<std::ptrdiff_t>(i * k_));
}

void MemoryBank::neighborhood_probability_into(std::size_t i, std::span<double> out) const {
  if (out.size() != num_classes()) throw ShapeError("neighborhood_probability: output length");
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t j : neighbors(i)) {
    const auto p = probs_.row(j);
    for (std::size_t c = 0; c < out.size(); ++c) out[c] += p[c];
  }
}

ScoreVector MemoryBank::neighborhood_probability(std::size_t i) const {
  auto out = ScoreVector::zeros(num_classes());
  neighborhood_probability_into(i, out.mutable_values());
  return out;
}

void MemoryBank::refresh(const ModelParams& model, const UnlabeledView& data,
                         std::size_t iteration) {
  if (data.size() != size() || model.num_classes() != num_classes() ||
      model.feature_dim() != feature_dim()) {
    throw ShapeError("refresh: model or data no longer match the bank dimensions");
  }
  const BatchForward fw = forward_batch(model, data.inputs());
  set_features(fw.features);
  probs_ = fw.probs;
  rebuild_neighbors();
  last_full_refresh_ = iteration;
}

void MemoryBank::update_probs(std::span<const std::size_t> rows, const Matrix& probs) {
  if (probs.rows != rows.size() || probs.cols != num_classes()) {
    throw ShapeError("update_probs: shape mismatch");
  }
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= size()) throw ParameterError("update_probs: row out of range");
    std::copy(probs.row(r).begin(), probs.row(r).end(), probs_.row(rows[r]).begin());
  }
}

std::string MemoryBank::to_csv() const {
  std::string out = "sample_id,neighbor_ids";
  for (std::size_t c = 0; c < num_classes(); ++c) out += ",prior_" + std::to_string(c);
  for (std::size_t c = 0; c < num_classes(); ++c) out += ",prob_" + std::to_string(c);
  out += '\n';
  for (std::size_t i = 0; i < size(); ++i) {
    out += std::to_string(i) + ',';
    const auto nb = neighbors(i);
    for (std::size_t t = 0; t < nb.size(); ++t) {
      if (t) out += ';';
      out += std::to_string(nb[t]);
    }
    for (double v : priors_.row(i)) out += ',' + format_double(v);
    for (double v : probs_.row(i)) out += ',' + format_double(v);
    out += '\n';
  }
  return out;
}

void MemoryBank::dump_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInputError("cannot open " + path.string() + " for writing");
  out << to_csv();
}

}  // namespace procal
