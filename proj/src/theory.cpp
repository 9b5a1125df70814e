#include "procal/theory.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "procal/error.hpp"

namespace procal::theory {

ExternalSignal build_external_signal(const MemoryBank& bank, std::size_t i, double gamma) {
  if (!(gamma > 0.0)) throw ParameterError("external signal needs gamma > 0");
  ExternalSignal s;
  s.gamma = gamma;
  s.num_classes = bank.num_classes();
  const ScoreVector pn = bank.neighborhood_probability(i);
  const auto prior = bank.source_priors().row(i);
  s.q.resize(s.num_classes);
  for (std::size_t c = 0; c < s.num_classes; ++c) s.q[c] = pn[c] + gamma * prior[c];
  return s;
}

std::vector<double> soft_gradient(std::span<const double> q, double gamma,
                                  std::span<const double> p) {
  if (q.size() != p.size()) throw ShapeError("soft_gradient: length mismatch");
  std::vector<double> g(q.size());
  for (std::size_t k = 0; k < q.size(); ++k) g[k] = -(q[k] + 2.0 * gamma * p[k]);
  return g;
}

std::vector<double> update_map(std::span<const double> p, std::span<const double> q, double gamma,
                               double step_size) {
  if (q.size() != p.size()) throw ShapeError("update_map: length mismatch");
  if (step_size < 0.0) throw ParameterError("step size must be non-negative");
  std::vector<double> out(p.size());
  for (std::size_t k = 0; k < p.size(); ++k) out[k] = p[k] + step_size * (q[k] + 2.0 * gamma * p[k]);
  return out;
}

FixedPoint fixed_point(std::span<const double> q, double gamma, std::size_t num_classes) {
  if (!(gamma > 0.0)) throw ParameterError("fixed point requires gamma > 0");
  if (num_classes == 0 || q.size() != num_classes) throw ParameterError("q must have C entries");
  const double C = static_cast<double>(num_classes);
  const double total = std::accumulate(q.begin(), q.end(), 0.0);
  FixedPoint fp;
  fp.lambda = (2.0 * gamma + total) / C;
  fp.p_star.resize(num_classes);
  for (std::size_t k = 0; k < num_classes; ++k) fp.p_star[k] = (fp.lambda - q[k]) / (2.0 * gamma);
  fp.feasible = std::all_of(fp.p_star.begin(), fp.p_star.end(), [](double v) { return v >= -1e-12; });
  return fp;
}

Stationarity stationarity_residual(std::span<const double> p, std::span<const double> q,
                                   double gamma) {
  if (q.size() != p.size() || p.empty()) throw ShapeError("stationarity_residual: lengths");
  std::vector<double> g(p.size());
  for (std::size_t k = 0; k < p.size(); ++k) g[k] = q[k] + 2.0 * gamma * p[k];
  Stationarity s;
  s.lambda_hat = std::accumulate(g.begin(), g.end(), 0.0) / static_cast<double>(g.size());
  for (double v : g) s.residual = std::max(s.residual, std::abs(-v + s.lambda_hat));
  return s;
}

}  // namespace procal::theory
