#include "procal/adaptation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "procal/error.hpp"
#include "procal/metrics.hpp"

namespace procal {
namespace {

// Independent RNG streams from one user seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

enum Stream : std::uint64_t { kShuffle = 1, kNoise = 2, kBackground = 3 };

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

// B_i: `count` distinct samples outside i's neighborhood and != i.
std::vector<std::size_t> sample_background(const MemoryBank& bank, std::size_t i,
                                           std::size_t count, std::mt19937_64& rng) {
  const auto nb = bank.neighbors(i);
  const std::size_t available = bank.size() - 1 - nb.size();
  count = std::min(count, available);
  std::vector<std::size_t> out;
  out.reserve(count);
  std::uniform_int_distribution<std::size_t> pick(0, bank.size() - 1);
  while (out.size() < count) {
    const std::size_t m = pick(rng);
    if (m == i || std::find(nb.begin(), nb.end(), m) != nb.end() ||
        std::find(out.begin(), out.end(), m) != out.end()) {
      continue;
    }
    out.push_back(m);
  }
  return out;
}

}  // namespace

std::string_view to_string(Objective objective) {
  switch (objective) {
    case Objective::procal:
      return "procal";
    case Objective::im:
      return "im";
    case Objective::aad:
      return "aad";
    case Objective::soft_only:
      return "soft_only";
    case Objective::div_only:
      return "div_only";
  }
  return "procal";
}

Objective objective_from_string(std::string_view name) {
  for (Objective o : {Objective::procal, Objective::im, Objective::aad, Objective::soft_only,
                      Objective::div_only}) {
    if (to_string(o) == name) return o;
  }
  throw ParameterError("unknown objective '" + std::string(name) + "'");
}

void AdaptationConfig::validate() const {
  if (gamma1 < 0.0 || beta1 < 0.0) throw ParameterError("decay exponents must be >= 0");
  if (k == 0) throw ParameterError("k must be positive");
  if (tau == 0) throw ParameterError("tau must be positive");
  if (lambda2 < 0.0) throw ParameterError("lambda2 must be >= 0");
  if (batch_size == 0) throw ParameterError("batch_size must be positive");
  if (!(lr_base > 0.0) || !(lr_head > 0.0)) throw ParameterError("learning rates must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ParameterError("momentum must lie in [0, 1)");
  if (!(noise_rate >= 0.0 && noise_rate <= 1.0)) throw ParameterError("noise_rate must lie in [0, 1]");
}

AdaptationConfig AdaptationConfig::preset(std::string_view family) {
  AdaptationConfig c;
  auto set = [&](double g1, double b1, std::size_t k, std::size_t tau) {
    c.gamma1 = g1;
    c.beta1 = b1;
    c.k = k;
    c.tau = tau;
  };
  if (family == "office31") {
    set(0, 1, 6, 2);
  } else if (family == "office-home") {
    set(0, 0, 6, 1);
  } else if (family == "visda") {
    set(30, 30, 8, 10);
    c.lr_base = 1e-4;
    c.lr_head = 1e-3;
  } else if (family == "domainnet") {
    set(10, 5, 2, 2);
  } else if (family == "blobs-rot60") {
    // With batch-mean diversity and beta <= 1 the soft term swamps the
    // diversity term and neighboring blobs merge; the summed form is used.
    set(0, 0, 6, 1);
    c.paper_exact_scaling = true;
  } else {
    throw ParameterError("unknown preset '" + std::string(family) + "'");
  }
  return c;
}

double decay_schedule(std::size_t iter, std::size_t max_iter, double exponent) {
  if (max_iter == 0) throw ParameterError("decay_schedule: max_iter must be positive");
  if (iter > max_iter) throw ParameterError("decay_schedule: iter exceeds max_iter");
  if (!(exponent >= 0.0)) throw ParameterError("decay_schedule: exponent must be >= 0");
  return std::pow(1.0 - static_cast<double>(iter) / static_cast<double>(max_iter), exponent);
}

std::string DynamicsLog::to_csv() const {
  std::string out =
      "iteration,epoch,target_accuracy,forgetting_rate,incorrect_supervision_rate,"
      "loss_total,loss_soft,loss_div,gamma_value,beta_value\n";
  for (const DynamicsRow& r : rows) {
    out += std::to_string(r.iteration) + ',' + std::to_string(r.epoch);
    for (double v : {r.target_accuracy, r.forgetting_rate, r.incorrect_supervision_rate,
                     r.loss_total, r.loss_soft, r.loss_div, r.gamma_value, r.beta_value}) {
      out += ',' + format_double(v);
    }
    out += '\n';
  }
  return out;
}

DynamicsProbe make_label_probe(const LabeledDataset& target, const ModelParams& theta_s) {
  const std::vector<std::size_t> labels = target.labels;
  const std::vector<std::size_t> source_pred = predict(theta_s, target.inputs);
  std::vector<bool> mask(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) mask[i] = source_pred[i] == labels[i];
  const Matrix* inputs = &target.inputs;
  return [labels, mask, inputs](const ModelParams& model, const MemoryBank& bank, double) {
    const std::vector<std::size_t> pred = predict(model, *inputs);
    ProbeSample s;
    s.target_accuracy = evaluate_predictions(pred, labels, model.num_classes()).accuracy;
    s.forgetting_rate = forgetting_rate(mask, pred, labels);
    s.incorrect_supervision_rate =
        incorrect_supervision_rate(bank, labels, SupervisionKind::neighborhood).complete;
    return s;
  };
}

AdaptResult adapt(const ModelParams& theta_s, const UnlabeledView& target,
                  const AdaptationConfig& config, const DynamicsProbe& probe) {
  config.validate();
  theta_s.validate();
  if (target.dim() != theta_s.input_dim()) {
    throw ShapeError("adapt: target inputs do not match the model input dimension");
  }
  const Matrix& X = target.inputs();
  const std::size_t N = target.size();

  AdaptResult result;
  result.params = theta_s;
  const BatchForward initial = forward_batch(theta_s, X);
  result.source_outputs = initial.probs;
  result.initial_priors = config.noise_rate > 0.0
                              ? corrupt_source_priors(initial.probs, config.noise_rate,
                                                      derive_seed(config.seed, kNoise))
                              : initial.probs;
  if (config.epochs == 0) return result;

  MemoryBank bank =
      MemoryBank::initialize(initial.probs, initial.features, result.initial_priors, config.k);
  ModelParams& theta = result.params;
  OptimizerState opt = make_optimizer_state(
      theta, {config.lr_base, config.lr_head, config.momentum, config.freeze_head});

  const std::size_t per_epoch = ceil_div(N, config.batch_size);
  const std::size_t max_iter = config.epochs * per_epoch;
  result.max_iter = max_iter;
  const RefreshPolicy policy = RefreshPolicy::from_tau(config.tau, per_epoch, config.tau_is_period);
  const std::size_t eval_every =
      config.eval_interval ? config.eval_interval : std::max<std::size_t>(1, ceil_div(per_epoch, 2));
  const std::size_t background_size = config.aad_background.value_or(bank.k());

  ProcalOptions options;
  options.terms = config.terms;
  options.detach_self_term = config.detach_self_term;
  options.paper_exact_scaling = config.paper_exact_scaling;
  options.use_soft = config.objective != Objective::div_only;
  options.use_div = config.objective != Objective::soft_only;

  std::mt19937_64 shuffle_rng(derive_seed(config.seed, kShuffle));
  std::vector<std::size_t> order(N);
  std::iota(order.begin(), order.end(), 0);

  std::size_t t = 0;
  ModelParams last_good = theta;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    std::mt19937_64 background_rng(derive_seed(config.seed ^ epoch, kBackground));
    for (std::size_t b = 0; b < per_epoch; ++b, ++t) {
      // Finite parameters can still overflow the logits, which surfaces as
      // InvalidInputError from softmax anywhere in the step.
      try {
        if (t > 0 && policy.fires(t)) bank.refresh(theta, target, t);

        const double gamma = decay_schedule(t, max_iter, config.gamma1);
        const double beta = config.objective == Objective::soft_only
                                ? 0.0
                                : decay_schedule(t, max_iter, config.beta1);
        const std::size_t lo = b * config.batch_size;
        const std::size_t hi = std::min(N, lo + config.batch_size);
        const std::span<const std::size_t> rows(order.data() + lo, hi - lo);

        const BatchForward fw = forward_batch(theta, X, rows);
        BatchLoss loss;
        Matrix logit_grads;
        switch (config.objective) {
          case Objective::procal:
          case Objective::soft_only:
          case Objective::div_only: {
            ProcalLossResult r = procal_loss(rows, fw.probs, bank, gamma, beta, options);
            loss = r.loss;
            logit_grads = std::move(r.grad_logits);
            break;
          }
          case Objective::im: {
            LossResult r = im_loss(fw.probs);
            loss.total = r.value;
            logit_grads = std::move(r.grad_logits);
            break;
          }
          case Objective::aad: {
            std::vector<std::vector<std::size_t>> background;
            background.reserve(rows.size());
            for (std::size_t i : rows) {
              background.push_back(sample_background(bank, i, background_size, background_rng));
            }
            LossResult r = aad_loss(rows, fw.probs, bank, background, config.lambda2);
            loss.total = r.value;
            loss.soft_term = r.value;
            logit_grads = std::move(r.grad_logits);
            break;
          }
        }
        if (!std::isfinite(loss.total)) {
          throw AdaptationDivergence("non-finite loss at iteration " + std::to_string(t), t, theta);
        }

        const GradientBuffer grads = backward(theta, X, rows, logit_grads);
        if (config.lr_power_decay) {
          opt.lr_scale = std::pow(1.0 + 10.0 * static_cast<double>(t) / static_cast<double>(max_iter),
                                  -0.75);
        }
        if (!grads.all_finite()) {
          throw AdaptationDivergence("non-finite gradient at iteration " + std::to_string(t), t, theta);
        }
        last_good = theta;
        sgd_step(theta, grads, opt);
        if (!all_finite(flatten(theta))) {
          throw AdaptationDivergence("non-finite parameters at iteration " + std::to_string(t), t,
                                     last_good);
        }
        bank.update_probs(rows, fw.probs);
        result.schedule.push_back({t, gamma, beta});

        if ((t + 1) % eval_every == 0 || t + 1 == max_iter) {
          DynamicsRow row;
          row.iteration = t + 1;
          row.epoch = epoch;
          row.loss_total = loss.total;
          row.loss_soft = loss.soft_term;
          row.loss_div = loss.div_term;
          row.gamma_value = gamma;
          row.beta_value = beta;
          if (probe) {
            const ProbeSample s = probe(theta, bank, gamma);
            row.target_accuracy = s.target_accuracy;
            row.forgetting_rate = s.forgetting_rate;
            row.incorrect_supervision_rate = s.incorrect_supervision_rate;
          } else {
            row.target_accuracy = row.forgetting_rate = row.incorrect_supervision_rate =
                std::numeric_limits<double>::quiet_NaN();
          }
          result.log.rows.push_back(row);
        }
      } catch (const InvalidInputError& e) {
        throw AdaptationDivergence(std::string(e.what()) + " at iteration " + std::to_string(t), t,
                                   last_good);
      }
    }
  }
  try {
    (void)forward_batch(theta, X);
  } catch (const InvalidInputError& e) {
    throw AdaptationDivergence(std::string(e.what()) + " after the last iteration", max_iter,
                               last_good);
  }
  result.bank = std::move(bank);
  return result;
}

AdaptResult adapt_baseline(const ModelParams& theta_s, const UnlabeledView& target,
                           const AdaptationConfig& config, const DynamicsProbe& probe) {
  if (config.objective == Objective::procal) {
    throw ParameterError("adapt_baseline: objective must be im, aad, soft_only or div_only");
  }
  return adapt(theta_s, target, config, probe);
}

ModelParams pretrain_source(const LabeledDataset& source, const PretrainConfig& config) {
  source.validate();
  if (config.batch_size == 0) throw ParameterError("batch_size must be positive");
  Architecture arch;
  arch.input_dim = source.dim();
  arch.hidden = config.hidden;
  arch.hidden_act = config.hidden_act;
  arch.num_classes = source.num_classes;
  ModelParams params = init_params(arch, config.seed);
  if (config.epochs == 0) return params;

  OptimizerState opt = make_optimizer_state(params, {config.lr, config.lr, config.momentum, false});
  std::mt19937_64 rng(derive_seed(config.seed, kShuffle));
  const std::size_t N = source.size();
  std::vector<std::size_t> order(N);
  std::iota(order.begin(), order.end(), 0);
  std::vector<std::size_t> labels;
  std::size_t t = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t lo = 0; lo < N; lo += config.batch_size, ++t) {
      const std::size_t hi = std::min(N, lo + config.batch_size);
      const std::span<const std::size_t> rows(order.data() + lo, hi - lo);
      labels.clear();
      for (std::size_t i : rows) labels.push_back(source.labels[i]);
      BatchForward fw;
      try {
        fw = forward_batch(params, source.inputs, rows);
      } catch (const InvalidInputError& e) {
        throw DivergenceError(std::string(e.what()) + " at source iteration " + std::to_string(t), t);
      }
      const LossResult ce = cross_entropy_loss(fw.probs, labels, config.smoothing);
      if (!std::isfinite(ce.value)) {
        throw DivergenceError("non-finite source loss at iteration " + std::to_string(t), t);
      }
      sgd_step(params, backward(params, source.inputs, rows, ce.grad_logits), opt);
    }
  }
  return params;
}

std::vector<std::string> ablation_variants() {
  return {"source_only", "soft_only",       "div_only",     "joint",
          "joint_wo_target", "joint_wo_source", "joint_wo_both"};
}

std::vector<AblationRow> run_ablation_suite(const LabeledDataset& source,
                                            const LabeledDataset& target,
                                            const PretrainConfig& pretrain,
                                            const AdaptationConfig& base,
                                            std::span<const std::uint64_t> seeds) {
  target.validate();
  std::vector<AblationRow> rows;
  for (std::uint64_t seed : seeds) {
    PretrainConfig pc = pretrain;
    pc.seed = seed;
    const ModelParams theta_s = pretrain_source(source, pc);
    rows.push_back({"source_only", seed, evaluate(theta_s, target).accuracy});
    for (const std::string& variant : ablation_variants()) {
      if (variant == "source_only") continue;
      AdaptationConfig c = base;
      c.seed = seed;
      c.objective = Objective::procal;
      c.terms = {};
      if (variant == "soft_only") c.objective = Objective::soft_only;
      if (variant == "div_only") c.objective = Objective::div_only;
      if (variant == "joint_wo_target") c.terms.target = false;
      if (variant == "joint_wo_source") c.terms.source = false;
      if (variant == "joint_wo_both") c.terms = {false, false};
      const AdaptResult r = adapt(theta_s, target.unlabeled(), c);
      rows.push_back({variant, seed, evaluate(r.params, target).accuracy});
    }
  }
  return rows;
}

std::string ablation_csv(std::span<const AblationRow> rows) {
  std::string out = "variant,seed,accuracy\n";
  for (const AblationRow& r : rows) {
    out += r.variant + ',' + std::to_string(r.seed) + ',' + format_double(r.accuracy) + '\n';
  }
  return out;
}

std::vector<NoiseRow> run_noise_robustness(const LabeledDataset& source,
                                           const LabeledDataset& target,
                                           const PretrainConfig& pretrain,
                                           const AdaptationConfig& base,
                                           std::span<const double> noise_rates,
                                           std::span<const std::uint64_t> seeds) {
  target.validate();
  std::vector<NoiseRow> rows;
  for (std::uint64_t seed : seeds) {
    PretrainConfig pc = pretrain;
    pc.seed = seed;
    const ModelParams theta_s = pretrain_source(source, pc);
    for (double rate : noise_rates) {
      AdaptationConfig c = base;
      c.seed = seed;
      c.noise_rate = rate;
      const AdaptResult r = adapt(theta_s, target.unlabeled(), c);
      const auto prior_pred = argmax_rows(r.initial_priors);
      rows.push_back({rate, seed,
                      evaluate_predictions(prior_pred, target.labels, target.num_classes).accuracy,
                      evaluate(r.params, target).accuracy});
    }
  }
  return rows;
}

double median(std::vector<double> values) {
  if (values.empty()) throw ParameterError("median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace procal
