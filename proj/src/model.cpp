#include "procal/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "procal/error.hpp"
#include "procal/simd/kernels.hpp"

namespace procal {
namespace {

double activate(Activation act, double v) {
  switch (act) {
    case Activation::identity:
      return v;
    case Activation::tanh:
      return std::tanh(v);
    case Activation::relu:
      return v > 0.0 ? v : 0.0;
  }
  return v;
}

// Derivative expressed through the pre-activation and the activation output.
double activate_grad(Activation act, double pre, double post) {
  switch (act) {
    case Activation::identity:
      return 1.0;
    case Activation::tanh:
      return 1.0 - post * post;
    case Activation::relu:
      return pre > 0.0 ? 1.0 : 0.0;
  }
  return 1.0;
}

// Pre- and post-activation values for one sample, layer by layer.
struct Trace {
  std::vector<std::vector<double>> pre;
  std::vector<std::vector<double>> post;
};

void run_layers(const ModelParams& params, std::span<const double> x, Trace& trace) {
  if (x.size() != params.input_dim()) {
    throw ShapeError("forward: input has dimension " + std::to_string(x.size()) + ", expected " +
                     std::to_string(params.input_dim()));
  }
  const std::size_t n_layers = params.layers.size();
  trace.pre.resize(n_layers);
  trace.post.resize(n_layers);
  std::span<const double> in = x;
  for (std::size_t l = 0; l < n_layers; ++l) {
    const Layer& layer = params.layers[l];
    auto& pre = trace.pre[l];
    auto& post = trace.post[l];
    pre.resize(layer.out);
    post.resize(layer.out);
    simd::gemv(layer.weight, layer.out, layer.in, in, layer.bias, pre);
    for (std::size_t j = 0; j < layer.out; ++j) post[j] = activate(layer.act, pre[j]);
    in = post;
  }
}

}  // namespace

std::string_view to_string(Activation act) {
  switch (act) {
    case Activation::identity:
      return "identity";
    case Activation::tanh:
      return "tanh";
    case Activation::relu:
      return "relu";
  }
  return "identity";
}

Activation activation_from_string(std::string_view name) {
  if (name == "identity") return Activation::identity;
  if (name == "tanh") return Activation::tanh;
  if (name == "relu") return Activation::relu;
  throw InvalidInputError("unknown activation '" + std::string(name) + "'");
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const Layer& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

void ModelParams::validate() const {
  if (layers.empty()) throw ShapeError("model has no layers");
  if (split >= layers.size()) throw ShapeError("split index out of range");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const Layer& layer = layers[l];
    if (layer.in == 0 || layer.out == 0) throw ShapeError("layer with zero width");
    if (layer.weight.size() != layer.in * layer.out || layer.bias.size() != layer.out) {
      throw ShapeError("layer " + std::to_string(l) + " storage does not match its shape");
    }
    if (l > 0 && layers[l - 1].out != layer.in) {
      throw ShapeError("layer " + std::to_string(l) + " input does not chain");
    }
    if (!all_finite(layer.weight) || !all_finite(layer.bias)) {
      throw InvalidInputError("layer " + std::to_string(l) + " has non-finite parameters");
    }
  }
  if (num_classes() < 2) throw ShapeError("classifier needs at least two classes");
}

GradientBuffer GradientBuffer::zeros_like(const ModelParams& params) {
  GradientBuffer g;
  g.layers.reserve(params.layers.size());
  for (const Layer& l : params.layers) {
    g.layers.push_back({std::vector<double>(l.weight.size(), 0.0),
                        std::vector<double>(l.bias.size(), 0.0)});
  }
  return g;
}

bool GradientBuffer::all_finite() const {
  return std::all_of(layers.begin(), layers.end(), [](const Slot& s) {
    return procal::all_finite(s.weight) && procal::all_finite(s.bias);
  });
}

ModelParams init_params(const Architecture& arch, std::uint64_t seed) {
  if (arch.hidden.empty() || arch.hidden.size() != arch.hidden_act.size()) {
    throw ShapeError("architecture needs matching hidden widths and activations");
  }
  std::mt19937_64 rng(seed);
  ModelParams params;
  std::size_t in = arch.input_dim;
  auto add_layer = [&](std::size_t out, Activation act) {
    Layer layer{in, out, std::vector<double>(in * out), std::vector<double>(out, 0.0), act};
    const double a = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> dist(-a, a);
    for (double& w : layer.weight) w = dist(rng);
    params.layers.push_back(std::move(layer));
    in = out;
  };
  for (std::size_t i = 0; i < arch.hidden.size(); ++i) add_layer(arch.hidden[i], arch.hidden_act[i]);
  params.split = arch.hidden.size() - 1;
  add_layer(arch.num_classes, Activation::identity);
  params.validate();
  return params;
}

ForwardResult forward(const ModelParams& params, std::span<const double> x) {
  Trace trace;
  run_layers(params, x, trace);
  std::vector<double> p(params.num_classes());
  softmax_into(trace.post.back(), p);
  return {FeatureVector(trace.post[params.split]), ScoreVector(trace.post.back()),
          ProbVector::trusted(std::move(p))};
}

BatchForward forward_batch(const ModelParams& params, const Matrix& inputs,
                           std::span<const std::size_t> rows) {
  const std::size_t n = rows.empty() ? inputs.rows : rows.size();
  BatchForward out{Matrix(n, params.feature_dim()), Matrix(n, params.num_classes()),
                   Matrix(n, params.num_classes())};
  Trace trace;
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t src = rows.empty() ? r : rows[r];
    if (src >= inputs.rows) throw ShapeError("forward_batch: row index out of range");
    run_layers(params, inputs.row(src), trace);
    std::copy(trace.post[params.split].begin(), trace.post[params.split].end(),
              out.features.row(r).begin());
    std::copy(trace.post.back().begin(), trace.post.back().end(), out.logits.row(r).begin());
    softmax_into(out.logits.row(r), out.probs.row(r));
  }
  return out;
}

GradientBuffer backward(const ModelParams& params, const Matrix& inputs,
                        std::span<const std::size_t> rows, const Matrix& logit_grads) {
  const std::size_t n = rows.empty() ? inputs.rows : rows.size();
  if (logit_grads.rows != n || logit_grads.cols != params.num_classes()) {
    throw ShapeError("backward: logit gradient shape does not match the batch");
  }
  GradientBuffer grads = GradientBuffer::zeros_like(params);
  Trace trace;
  std::vector<double> delta;
  std::vector<double> delta_in;
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t src = rows.empty() ? r : rows[r];
    if (src >= inputs.rows) throw ShapeError("backward: row index out of range");
    const auto seed = logit_grads.row(r);
    if (std::all_of(seed.begin(), seed.end(), [](double v) { return v == 0.0; })) continue;
    const auto x = inputs.row(src);
    run_layers(params, x, trace);
    delta.assign(seed.begin(), seed.end());
    for (std::size_t l = params.layers.size(); l-- > 0;) {
      const Layer& layer = params.layers[l];
      for (std::size_t j = 0; j < layer.out; ++j) {
        delta[j] *= activate_grad(layer.act, trace.pre[l][j], trace.post[l][j]);
      }
      std::span<const double> a_in = l == 0 ? x : std::span<const double>(trace.post[l - 1]);
      auto& slot = grads.layers[l];
      for (std::size_t j = 0; j < layer.out; ++j) {
        simd::axpy(delta[j], a_in, std::span<double>(slot.weight).subspan(j * layer.in, layer.in));
        slot.bias[j] += delta[j];
      }
      if (l > 0) {
        delta_in.assign(layer.in, 0.0);
        simd::gemv_transposed_acc(layer.weight, layer.out, layer.in, delta, delta_in);
        delta.swap(delta_in);
      }
    }
  }
  return grads;
}

GradientBuffer backward(const ModelParams& params, const Matrix& inputs,
                        std::span<const ScoreVector> logit_grads) {
  Matrix g(logit_grads.size(), params.num_classes());
  for (std::size_t r = 0; r < logit_grads.size(); ++r) {
    if (logit_grads[r].size() != g.cols) throw ShapeError("backward: logit gradient length");
    std::copy(logit_grads[r].begin(), logit_grads[r].end(), g.row(r).begin());
  }
  return backward(params, inputs, {}, g);
}

void softmax_jvp_into(std::span<const double> p, std::span<const double> dL_dp,
                      std::span<double> out) {
  if (p.size() != dL_dp.size() || out.size() != p.size()) throw ShapeError("softmax_jvp: lengths");
  double pg = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) pg += p[k] * dL_dp[k];
  for (std::size_t k = 0; k < p.size(); ++k) out[k] = p[k] * (dL_dp[k] - pg);
}

ScoreVector softmax_jacobian_vector_product(const ProbVector& p, const ScoreVector& dL_dp) {
  auto out = ScoreVector::zeros(p.size());
  softmax_jvp_into(p.values(), dL_dp.values(), out.mutable_values());
  return out;
}

OptimizerState make_optimizer_state(const ModelParams& params, const OptimizerConfig& config) {
  if (!(config.lr_base > 0.0) || !(config.lr_head > 0.0)) {
    throw ParameterError("learning rates must be positive");
  }
  if (!(config.momentum >= 0.0 && config.momentum < 1.0)) {
    throw ParameterError("momentum must lie in [0, 1)");
  }
  OptimizerState state;
  state.momentum = config.momentum;
  state.velocity = GradientBuffer::zeros_like(params).layers;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    double lr = l >= params.split ? config.lr_head : config.lr_base;
    if (config.freeze_head && l > params.split) lr = 0.0;
    state.layer_lr.push_back(lr);
  }
  return state;
}

void sgd_step(ModelParams& params, const GradientBuffer& grads, OptimizerState& state) {
  if (grads.layers.size() != params.layers.size() ||
      state.velocity.size() != params.layers.size()) {
    throw ShapeError("sgd_step: gradient/optimizer state not congruent with parameters");
  }
  if (!grads.all_finite()) {
    throw DivergenceError("non-finite gradient at optimizer step " + std::to_string(state.steps),
                          state.steps);
  }
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    Layer& layer = params.layers[l];
    const auto& g = grads.layers[l];
    auto& v = state.velocity[l];
    if (g.weight.size() != layer.weight.size() || g.bias.size() != layer.bias.size()) {
      throw ShapeError("sgd_step: layer " + std::to_string(l) + " gradient shape");
    }
    const double lr = state.layer_lr[l] * state.lr_scale;
    if (lr == 0.0) continue;
    auto update = [&](std::vector<double>& theta, const std::vector<double>& grad,
                      std::vector<double>& vel) {
      for (std::size_t i = 0; i < theta.size(); ++i) {
        vel[i] = state.momentum * vel[i] + grad[i];
        theta[i] -= lr * vel[i];
      }
    };
    update(layer.weight, g.weight, v.weight);
    update(layer.bias, g.bias, v.bias);
  }
  ++state.steps;
}

std::vector<double> flatten(const ModelParams& params) {
  std::vector<double> out;
  out.reserve(params.parameter_count());
  for (const Layer& l : params.layers) {
    out.insert(out.end(), l.weight.begin(), l.weight.end());
    out.insert(out.end(), l.bias.begin(), l.bias.end());
  }
  return out;
}

std::vector<double> flatten(const GradientBuffer& grads) {
  std::vector<double> out;
  for (const auto& s : grads.layers) {
    out.insert(out.end(), s.weight.begin(), s.weight.end());
    out.insert(out.end(), s.bias.begin(), s.bias.end());
  }
  return out;
}

void assign_flat(ModelParams& params, std::span<const double> flat) {
  if (flat.size() != params.parameter_count()) throw ShapeError("assign_flat: length mismatch");
  std::size_t at = 0;
  for (Layer& l : params.layers) {
    std::copy_n(flat.begin() + at, l.weight.size(), l.weight.begin());
    at += l.weight.size();
    std::copy_n(flat.begin() + at, l.bias.size(), l.bias.begin());
    at += l.bias.size();
  }
}

std::string to_checkpoint_json(const ModelParams& params) {
  params.validate();
  nlohmann::json doc;
  doc["layers"] = nlohmann::json::array();
  for (const Layer& l : params.layers) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t j = 0; j < l.out; ++j) {
      rows.push_back(std::vector<double>(l.weight.begin() + j * l.in,
                                         l.weight.begin() + (j + 1) * l.in));
    }
    doc["layers"].push_back({{"w", rows}, {"b", l.bias}, {"act", to_string(l.act)}});
  }
  doc["split"] = params.split;
  doc["h"] = params.feature_dim();
  doc["C"] = params.num_classes();
  return doc.dump();
}

ModelParams from_checkpoint_json(std::string_view text) {
  ModelParams params;
  try {
    const auto doc = nlohmann::json::parse(text);
    for (const auto& jl : doc.at("layers")) {
      Layer l;
      const auto& rows = jl.at("w");
      l.out = rows.size();
      l.in = l.out ? rows.at(0).size() : 0;
      for (const auto& row : rows) {
        if (row.size() != l.in) throw ShapeError("checkpoint: ragged weight matrix");
        for (const auto& v : row) l.weight.push_back(v.get<double>());
      }
      l.bias = jl.at("b").get<std::vector<double>>();
      l.act = activation_from_string(jl.at("act").get<std::string>());
      params.layers.push_back(std::move(l));
    }
    params.split = doc.at("split").get<std::size_t>();
    params.validate();
    if (doc.at("h").get<std::size_t>() != params.feature_dim() ||
        doc.at("C").get<std::size_t>() != params.num_classes()) {
      throw ShapeError("checkpoint: declared h/C disagree with the layer shapes");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint: ") + e.what(), 0);
  }
  return params;
}

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInputError("cannot open " + path.string() + " for writing");
  out << to_checkpoint_json(params) << '\n';
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInputError("cannot open checkpoint " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return from_checkpoint_json(buf.str());
}

}  // namespace procal
