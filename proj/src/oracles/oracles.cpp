#include "procal/oracles.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>

#include "procal/error.hpp"
#include "procal/memory_bank.hpp"
#include "procal/model.hpp"
#include "procal/objectives.hpp"
#include "procal/theory.hpp"

namespace procal::oracles {
namespace {

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

Matrix gaussian_matrix(Rng& rng, std::size_t rows, std::size_t cols, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(rows, cols);
  for (double& v : m.data) v = n(rng);
  return m;
}

Matrix random_probs(Rng& rng, std::size_t rows, std::size_t cols) {
  Matrix logits = gaussian_matrix(rng, rows, cols, 2.0);
  Matrix out(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) softmax_into(logits.row(i), out.row(i));
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t c = 0; c < a.size(); ++c) s += a[c] * b[c];
  return s;
}

struct Instance {
  ModelParams params;
  Matrix inputs;
  std::vector<std::size_t> rows;
  std::optional<MemoryBank> bank;
  std::vector<std::vector<std::size_t>> background;
  std::vector<std::size_t> labels;
  double gamma = 0.0;
  double beta = 0.0;
  double lambda2 = 0.0;
  double smoothing = 0.0;
};

Instance make_instance(std::uint64_t seed) {
  Rng rng(seed);
  Instance in;
  const std::size_t C = pick(rng, 2, 5);
  const std::size_t n = pick(rng, 1, 8);
  const std::size_t N = n + pick(rng, 4, 12);
  Architecture arch;
  arch.input_dim = 3;
  arch.hidden = {6, 5};
  arch.hidden_act = {Activation::tanh, Activation::identity};
  arch.num_classes = C;
  in.params = init_params(arch, seed ^ 0xA5A5A5A5ULL);
  // Non-zero biases so every parameter has a generic gradient.
  for (Layer& l : in.params.layers) {
    for (double& b : l.bias) b = uniform(rng, -0.5, 0.5);
  }
  in.inputs = gaussian_matrix(rng, N, arch.input_dim);

  std::vector<std::size_t> all(N);
  std::iota(all.begin(), all.end(), 0);
  std::shuffle(all.begin(), all.end(), rng);
  in.rows.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n));

  in.bank = MemoryBank::initialize(random_probs(rng, N, C), gaussian_matrix(rng, N, 4),
                                   random_probs(rng, N, C), pick(rng, 1, 4));
  for (std::size_t i : in.rows) {
    const auto nb = in.bank->neighbors(i);
    std::vector<std::size_t> pool;
    for (std::size_t m = 0; m < N; ++m) {
      if (m != i && std::find(nb.begin(), nb.end(), m) == nb.end()) pool.push_back(m);
    }
    std::shuffle(pool.begin(), pool.end(), rng);
    pool.resize(std::min<std::size_t>(pool.size(), pick(rng, 1, 5)));
    in.background.push_back(pool);
    in.labels.push_back(pick(rng, 0, C - 1));
  }
  in.gamma = uniform(rng, 0.0, 2.0);
  in.beta = uniform(rng, 0.0, 2.0);
  in.lambda2 = uniform(rng, 0.0, 2.0);
  in.smoothing = uniform(rng, 0.0, 0.2);
  return in;
}

// Loss values written out from the definitions, independent of the
// objective implementations.
double reference_loss(GradientObjective obj, const Instance& in, const Matrix& P) {
  const MemoryBank& bank = *in.bank;
  const std::size_t n = P.rows;
  const std::size_t C = P.cols;
  const double dn = static_cast<double>(n);
  std::vector<double> mean(C, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < C; ++c) mean[c] += P(r, c) / dn;
  }

  double soft = 0.0;
  double div = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t i = in.rows[r];
    for (std::size_t c = 0; c < C; ++c) {
      double pn = 0.0;
      for (std::size_t j : bank.neighbors(i)) pn += bank.probs()(j, c);
      const double cal = pn + in.gamma * P(r, c) + in.gamma * bank.source_priors()(i, c);
      soft -= cal * P(r, c) / dn;
      div += P(r, c) * mean[c] / dn;
    }
  }

  switch (obj) {
    case GradientObjective::procal:
      return soft + in.beta * div;
    case GradientObjective::soft_only:
      return soft;
    case GradientObjective::div_only:
      return div;
    case GradientObjective::im: {
      double v = 0.0;
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < C; ++c) v -= P(r, c) * std::log(P(r, c)) / dn;
      }
      for (double m : mean) v += m * std::log(m);
      return v;
    }
    case GradientObjective::aad: {
      double v = 0.0;
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t j : bank.neighbors(in.rows[r])) v -= dot(P.row(r), bank.probs().row(j)) / dn;
        for (std::size_t m : in.background[r]) {
          v += in.lambda2 * dot(P.row(r), bank.probs().row(m)) / dn;
        }
      }
      return v;
    }
    case GradientObjective::cross_entropy: {
      double v = 0.0;
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < C; ++c) {
          const double y = (c == in.labels[r] ? 1.0 - in.smoothing : 0.0) +
                           in.smoothing / static_cast<double>(C);
          v -= y * std::log(P(r, c)) / dn;
        }
      }
      return v;
    }
  }
  return 0.0;
}

Matrix analytic_logit_grads(GradientObjective obj, const Instance& in, const Matrix& P,
                            Mutation mutation) {
  ProcalOptions options;
  switch (obj) {
    case GradientObjective::procal:
    case GradientObjective::soft_only: {
      options.use_div = obj == GradientObjective::procal;
      ProcalLossResult r = procal_loss(in.rows, P, *in.bank, in.gamma,
                                       obj == GradientObjective::procal ? in.beta : 0.0, options);
      if (mutation == Mutation::soft_sign) {
        const LossResult soft = soft_loss(r.targets, P);
        for (std::size_t k = 0; k < r.grad_logits.data.size(); ++k) {
          r.grad_logits.data[k] -= 2.0 * soft.grad_logits.data[k];
        }
      }
      return r.grad_logits;
    }
    case GradientObjective::div_only:
      options.use_soft = false;
      return procal_loss(in.rows, P, *in.bank, in.gamma, in.beta, options).grad_logits;
    case GradientObjective::im:
      return im_loss(P).grad_logits;
    case GradientObjective::aad:
      return aad_loss(in.rows, P, *in.bank, in.background, in.lambda2).grad_logits;
    case GradientObjective::cross_entropy:
      return cross_entropy_loss(P, in.labels, in.smoothing).grad_logits;
  }
  return {};
}

double elapsed(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

std::string_view to_string(GradientObjective objective) {
  switch (objective) {
    case GradientObjective::procal:
      return "procal";
    case GradientObjective::soft_only:
      return "soft_only";
    case GradientObjective::div_only:
      return "div_only";
    case GradientObjective::im:
      return "im";
    case GradientObjective::aad:
      return "aad";
    case GradientObjective::cross_entropy:
      return "cross_entropy";
  }
  return "procal";
}

std::vector<GradientObjective> all_gradient_objectives() {
  return {GradientObjective::procal, GradientObjective::soft_only, GradientObjective::div_only,
          GradientObjective::im,     GradientObjective::aad,       GradientObjective::cross_entropy};
}

Mutation mutation_from_string(std::string_view name) {
  if (name == "none") return Mutation::none;
  if (name == "soft-sign") return Mutation::soft_sign;
  throw ParameterError("unknown mutation '" + std::string(name) + "'");
}

GradientCheck check_parameter_gradient(GradientObjective objective, std::uint64_t seed,
                                       Mutation mutation) {
  Instance in = make_instance(seed);
  const BatchForward fw = forward_batch(in.params, in.inputs, in.rows);
  const Matrix g = analytic_logit_grads(objective, in, fw.probs, mutation);
  const std::vector<double> analytic = flatten(backward(in.params, in.inputs, in.rows, g));

  std::vector<double> theta = flatten(in.params);
  ModelParams probe = in.params;
  auto loss_at = [&](const std::vector<double>& flat) {
    assign_flat(probe, flat);
    return reference_loss(objective, in, forward_batch(probe, in.inputs, in.rows).probs);
  };

  GradientCheck out;
  out.parameters = theta.size();
  out.classes = in.params.num_classes();
  out.batch = in.rows.size();
  const double h = kFiniteDifferenceStep;
  for (std::size_t k = 0; k < theta.size(); ++k) {
    const double saved = theta[k];
    theta[k] = saved + h;
    const double up = loss_at(theta);
    theta[k] = saved - h;
    const double down = loss_at(theta);
    theta[k] = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double denom = std::max({std::abs(analytic[k]), std::abs(numeric), kRelErrorFloor});
    out.max_rel_error = std::max(out.max_rel_error, std::abs(analytic[k] - numeric) / denom);
  }
  return out;
}

double check_soft_gradient_identity(std::uint64_t seed, Mutation mutation) {
  Instance in = make_instance(seed);
  in.gamma = std::max(in.gamma, 1e-3);
  Rng rng(seed + 7);
  const Matrix P = random_probs(rng, in.rows.size(), in.params.num_classes());
  ProcalOptions options;
  options.use_div = false;
  ProcalLossResult r = procal_loss(in.rows, P, *in.bank, in.gamma, 0.0, options);
  if (mutation == Mutation::soft_sign) {
    for (double& v : r.grad_p.data) v = -v;
  }
  const double n = static_cast<double>(P.rows);
  double worst = 0.0;
  for (std::size_t row = 0; row < P.rows; ++row) {
    const theory::ExternalSignal s = theory::build_external_signal(*in.bank, in.rows[row], in.gamma);
    const std::vector<double> g = theory::soft_gradient(s.q, in.gamma, P.row(row));
    for (std::size_t c = 0; c < P.cols; ++c) {
      worst = std::max(worst, std::abs(r.grad_p(row, c) - g[c] / n));
    }
  }
  return worst;
}

FixedPointCheck check_fixed_point(std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t C = pick(rng, 2, 10);
  const std::size_t k = pick(rng, 1, 10);
  const double gamma = uniform(rng, 0.05, 5.0);
  const Matrix neighbors = random_probs(rng, k, C);
  const Matrix prior = random_probs(rng, 1, C);
  std::vector<double> q(C, 0.0);
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t j = 0; j < k; ++j) q[c] += neighbors(j, c);
    q[c] += gamma * prior(0, c);
  }
  const theory::FixedPoint fp = theory::fixed_point(q, gamma, C);

  FixedPointCheck out;
  out.classes = C;
  out.gamma = gamma;
  out.feasible = fp.feasible;
  double total = 0.0;
  for (double v : fp.p_star) total += v;
  out.sum_error = std::abs(total - 1.0);
  for (std::size_t c = 0; c < C; ++c) {
    out.stationarity = std::max(out.stationarity, std::abs(q[c] + 2.0 * gamma * fp.p_star[c] - fp.lambda));
  }
  double qsum = 0.0;
  for (double v : q) qsum += v;
  out.lambda_error = std::abs(fp.lambda - (2.0 * gamma + qsum) / static_cast<double>(C));
  return out;
}

std::vector<std::size_t> brute_force_neighbors(const Matrix& features, std::size_t i,
                                               std::size_t k) {
  std::vector<std::pair<double, std::size_t>> scored;
  for (std::size_t j = 0; j < features.rows; ++j) {
    if (j == i) continue;
    double s = 0.0;
    for (std::size_t d = 0; d < features.cols; ++d) s += features(i, d) * features(j, d);
    scored.emplace_back(s, j);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  std::vector<std::size_t> out;
  for (std::size_t r = 0; r < k && r < scored.size(); ++r) out.push_back(scored[r].second);
  return out;
}

bool check_knn(std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t N = pick(rng, 2, 200);
  const std::size_t dim = pick(rng, 1, 16);
  const std::size_t k = pick(rng, 1, std::min<std::size_t>(N - 1, 20));
  Matrix features = gaussian_matrix(rng, N, dim);
  // Exact duplicates give exact similarity ties under any summation order.
  const std::size_t copies = pick(rng, 0, N / 4);
  for (std::size_t c = 0; c < copies; ++c) {
    const std::size_t from = pick(rng, 0, N - 1);
    const std::size_t to = pick(rng, 0, N - 1);
    std::copy(features.row(from).begin(), features.row(from).end(), features.row(to).begin());
  }
  const MemoryBank bank = MemoryBank::initialize(random_probs(rng, N, 3), features, k);
  for (std::size_t i = 0; i < N; ++i) {
    const std::vector<std::size_t> expected = brute_force_neighbors(bank.features(), i, k);
    const auto cached = bank.neighbors(i);
    if (!std::equal(cached.begin(), cached.end(), expected.begin(), expected.end())) return false;
    if (bank.top_k_neighbors(i, k) != expected) return false;
  }
  return true;
}

OracleOutcome run_gradient_oracle(GradientObjective objective, std::size_t trials,
                                  std::uint64_t seed, Mutation mutation) {
  const auto start = std::chrono::steady_clock::now();
  OracleOutcome out{"gradient/" + std::string(to_string(objective)), true, trials, 0.0, 1e-4, 0.0};
  for (std::size_t t = 0; t < trials; ++t) {
    const GradientCheck c = check_parameter_gradient(objective, seed + t, mutation);
    out.worst = std::max(out.worst, c.max_rel_error);
  }
  out.passed = out.worst <= out.tolerance;
  out.seconds = elapsed(start);
  return out;
}

OracleOutcome run_soft_identity_oracle(std::size_t trials, std::uint64_t seed, Mutation mutation) {
  const auto start = std::chrono::steady_clock::now();
  OracleOutcome out{"soft-gradient-identity", true, trials, 0.0, 1e-12, 0.0};
  for (std::size_t t = 0; t < trials; ++t) {
    out.worst = std::max(out.worst, check_soft_gradient_identity(seed + t, mutation));
  }
  out.passed = out.worst <= out.tolerance;
  out.seconds = elapsed(start);
  return out;
}

OracleOutcome run_fixed_point_oracle(std::size_t trials, std::uint64_t seed) {
  const auto start = std::chrono::steady_clock::now();
  OracleOutcome out{"fixed-point", true, trials, 0.0, kFixedPointSumTolerance, 0.0};
  for (std::size_t t = 0; t < trials; ++t) {
    const FixedPointCheck c = check_fixed_point(seed + t);
    if (c.sum_error > kFixedPointSumTolerance || c.stationarity > kStationarityTolerance ||
        c.lambda_error > kFixedPointSumTolerance) {
      out.passed = false;
    }
    out.worst = std::max({out.worst, c.sum_error, c.lambda_error});
  }
  out.seconds = elapsed(start);
  return out;
}

OracleOutcome run_knn_oracle(std::size_t trials, std::uint64_t seed) {
  const auto start = std::chrono::steady_clock::now();
  OracleOutcome out{"knn-brute-force", true, trials, 0.0, 0.0, 0.0};
  for (std::size_t t = 0; t < trials; ++t) {
    if (!check_knn(seed + t)) out.worst += 1.0;
  }
  out.passed = out.worst == 0.0;
  out.seconds = elapsed(start);
  return out;
}

}  // namespace procal::oracles
