#include "procal/experiment_config.hpp"

#include <concepts>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include <json.hpp>

#include "procal/error.hpp"

namespace procal {
namespace {

using nlohmann::json;

// Reads the keys of one JSON object and rejects whatever was not consumed.
class StrictObject {
 public:
  StrictObject(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ParseError(path_ + " must be a JSON object", 0);
  }

  bool has(const char* key) const { return j_.contains(key); }

  const json* take(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void read(const char* key, double& out) {
    if (const json* v = take(key)) {
      if (!v->is_number()) fail(key, "a number");
      out = v->get<double>();
    }
  }
  void read(const char* key, bool& out) {
    if (const json* v = take(key)) {
      if (!v->is_boolean()) fail(key, "true or false");
      out = v->get<bool>();
    }
  }
  template <std::unsigned_integral U>
    requires(!std::same_as<U, bool>)
  void read(const char* key, U& out) {
    if (const json* v = take(key)) {
      if (!v->is_number_unsigned()) fail(key, "a non-negative integer");
      out = v->get<U>();
    }
  }
  void read(const char* key, std::string& out) {
    if (const json* v = take(key)) {
      if (!v->is_string()) fail(key, "a string");
      out = v->get<std::string>();
    }
  }
  template <class T>
  void read(const char* key, std::vector<T>& out) {
    if (const json* v = take(key)) {
      if (!v->is_array()) fail(key, "an array");
      out.clear();
      for (const json& e : *v) {
        if constexpr (std::is_same_v<T, double>) {
          if (!e.is_number()) fail(key, "an array of numbers");
        } else if constexpr (std::is_same_v<T, std::string>) {
          if (!e.is_string()) fail(key, "an array of strings");
        } else {
          if (!e.is_number_unsigned()) fail(key, "an array of non-negative integers");
        }
        out.push_back(e.get<T>());
      }
    }
  }

  std::string child(const char* key) const { return path_ + "." + key; }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) {
        throw ParseError("unknown key '" + path_ + "." + item.key() + "'", 0);
      }
    }
  }

 private:
  [[noreturn]] void fail(const char* key, const char* expected) const {
    throw ParseError("'" + path_ + "." + key + "' must be " + expected, 0);
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

GaussianDomainSpec parse_generator(const json& j, std::optional<std::uint64_t>& seed) {
  StrictObject o(j, "dataset.generator");
  GaussianDomainSpec spec;
  std::string preset;
  o.read("preset", preset);
  if (preset == "blobs-rot60") {
    spec = blobs_rot60();
  } else if (!preset.empty()) {
    throw ParseError("unknown generator preset '" + preset + "'", 0);
  }
  o.read("num_classes", spec.num_classes);
  o.read("dim", spec.dim);
  o.read("n_per_class", spec.n_per_class);
  o.read("cluster_std", spec.cluster_std);
  double degrees = spec.shift.rotation * 180.0 / std::numbers::pi;
  o.read("rotation_deg", degrees);
  spec.shift.rotation = degrees * std::numbers::pi / 180.0;
  o.read("translation", spec.shift.translation);
  o.read("scale", spec.shift.scale);
  o.read("noise", spec.shift.noise);
  if (o.has("seed")) {
    std::uint64_t s = 0;
    o.read("seed", s);
    seed = s;
  }
  o.finish();
  // A preset translation written for another dim is padded or cut with zeros.
  if (!spec.shift.translation.empty() && spec.shift.translation.size() != spec.dim &&
      !j.contains("translation")) {
    spec.shift.translation.resize(spec.dim, 0.0);
  }
  return spec;
}

void parse_adaptation(const json& j, AdaptationConfig& c) {
  StrictObject o(j, "adaptation");
  std::string preset;
  o.read("preset", preset);
  if (!preset.empty()) {
    try {
      c = AdaptationConfig::preset(preset);
    } catch (const ParameterError& e) {
      throw ParseError(std::string("adaptation.preset: ") + e.what(), 0);
    }
  }
  o.read("gamma1", c.gamma1);
  o.read("beta1", c.beta1);
  o.read("k", c.k);
  o.read("tau", c.tau);
  o.read("lambda2", c.lambda2);
  o.read("epochs", c.epochs);
  o.read("batch_size", c.batch_size);
  o.read("lr_base", c.lr_base);
  o.read("lr_head", c.lr_head);
  o.read("momentum", c.momentum);
  std::string objective;
  o.read("objective", objective);
  if (!objective.empty()) {
    try {
      c.objective = objective_from_string(objective);
    } catch (const ParameterError& e) {
      throw ParseError(std::string("adaptation.objective: ") + e.what(), 0);
    }
  }
  o.read("freeze_head", c.freeze_head);
  o.read("detach_self_term", c.detach_self_term);
  o.read("tau_is_period", c.tau_is_period);
  o.read("paper_exact_scaling", c.paper_exact_scaling);
  o.read("lr_power_decay", c.lr_power_decay);
  o.read("noise_rate", c.noise_rate);
  if (const json* terms = o.take("terms")) {
    StrictObject t(*terms, o.child("terms"));
    t.read("target", c.terms.target);
    t.read("source", c.terms.source);
    t.finish();
  }
  if (o.has("aad_background")) {
    std::size_t b = 0;
    o.read("aad_background", b);
    c.aad_background = b;
  }
  o.finish();
}

}  // namespace

void ExperimentConfig::set_seed(std::uint64_t value) { seed = value; }

std::uint64_t ExperimentConfig::data_seed() const {
  return dataset.generator_seed.value_or(seed);
}

ExperimentConfig default_experiment_config() {
  ExperimentConfig c;
  c.dataset.generator = blobs_rot60();
  c.adaptation = AdaptationConfig::preset("blobs-rot60");
  return c;
}

ExperimentConfig parse_experiment_config(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("invalid JSON: ") + e.what(), 0);
  }
  ExperimentConfig c = default_experiment_config();
  StrictObject root(doc, "config");
  root.read("seed", c.seed);
  root.read("seeds", c.seeds);
  std::string out_dir = c.output_dir.string();
  root.read("output_dir", out_dir);
  c.output_dir = out_dir;

  if (const json* ds = root.take("dataset")) {
    StrictObject d(*ds, "dataset");
    const bool has_gen = d.has("generator");
    const bool has_tables = d.has("source_table") || d.has("target_table");
    if (has_gen == has_tables) {
      throw ParseError("dataset needs either 'generator' or both table paths", 0);
    }
    if (const json* gen = d.take("generator")) {
      c.dataset.generator = parse_generator(*gen, c.dataset.generator_seed);
    } else {
      std::string src;
      std::string tgt;
      d.read("source_table", src);
      d.read("target_table", tgt);
      if (src.empty() || tgt.empty()) {
        throw ParseError("dataset needs both 'source_table' and 'target_table'", 0);
      }
      c.dataset.generator.reset();
      c.dataset.source_table = src;
      c.dataset.target_table = tgt;
    }
    d.finish();
  }

  if (const json* m = root.take("model")) {
    StrictObject o(*m, "model");
    o.read("hidden", c.pretrain.hidden);
    std::vector<std::string> acts;
    o.read("hidden_act", acts);
    if (!acts.empty()) {
      c.pretrain.hidden_act.clear();
      for (const std::string& a : acts) {
        try {
          c.pretrain.hidden_act.push_back(activation_from_string(a));
        } catch (const ParameterError& e) {
          throw ParseError(std::string("model.hidden_act: ") + e.what(), 0);
        }
      }
    }
    o.finish();
    if (c.pretrain.hidden.empty() || c.pretrain.hidden.size() != c.pretrain.hidden_act.size()) {
      throw ParseError("model.hidden and model.hidden_act must be non-empty and equally long", 0);
    }
  }

  if (const json* p = root.take("pretrain")) {
    StrictObject o(*p, "pretrain");
    o.read("epochs", c.pretrain.epochs);
    o.read("batch_size", c.pretrain.batch_size);
    o.read("lr", c.pretrain.lr);
    o.read("momentum", c.pretrain.momentum);
    o.read("smoothing", c.pretrain.smoothing);
    o.finish();
  }

  if (const json* a = root.take("adaptation")) parse_adaptation(*a, c.adaptation);
  root.read("eval_interval", c.adaptation.eval_interval);
  root.finish();

  if (c.seeds.empty()) throw ParseError("'config.seeds' must not be empty", 0);
  try {
    c.adaptation.validate();
  } catch (const ParameterError& e) {
    throw ParseError(std::string("adaptation: ") + e.what(), 0);
  }
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInputError("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  ExperimentConfig c = parse_experiment_config(buf.str());
  const std::filesystem::path base = path.parent_path();
  for (std::filesystem::path* p : {&c.dataset.source_table, &c.dataset.target_table}) {
    if (!p->empty() && p->is_relative()) *p = base / *p;
  }
  return c;
}

DomainPair load_domains(const ExperimentConfig& config, std::uint64_t data_seed) {
  if (config.dataset.generator) return make_gaussian_domains(*config.dataset.generator, data_seed);
  DomainPair pair;
  pair.source = load_feature_table(config.dataset.source_table);
  pair.target = load_feature_table(config.dataset.target_table);
  if (pair.source.num_classes != pair.target.num_classes || pair.source.dim() != pair.target.dim()) {
    throw InvalidInputError("source and target tables disagree on C or d");
  }
  pair.source.domain = "source";
  pair.target.domain = "target";
  return pair;
}

}  // namespace procal
