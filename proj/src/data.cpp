#include "procal/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>
#include <string_view>

#include "procal/error.hpp"

namespace procal {
namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <class T>
bool parse_number(std::string_view s, T& out) {
  const auto* first = s.data();
  const auto* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

std::size_t meta_value(std::string_view field, std::string_view key, std::size_t line) {
  const std::string prefix = std::string(key) + "=";
  if (field.substr(0, prefix.size()) != prefix) {
    throw ParseError("expected '" + prefix + "<int>' in #meta line", line);
  }
  std::size_t v = 0;
  if (!parse_number(field.substr(prefix.size()), v)) {
    throw ParseError("bad integer for " + std::string(key), line);
  }
  return v;
}

}  // namespace

void LabeledDataset::validate() const {
  if (labels.size() != inputs.rows) throw InvalidInputError("label count differs from row count");
  if (num_classes < 2) throw InvalidInputError("dataset needs at least two classes");
  if (inputs.rows < 2 * num_classes) {
    throw InvalidInputError("dataset needs at least 2C samples");
  }
  if (!all_finite(inputs.data)) throw InvalidInputError("dataset has non-finite inputs");
  std::vector<std::size_t> counts(num_classes, 0);
  for (std::size_t y : labels) {
    if (y >= num_classes) throw InvalidInputError("label out of range");
    ++counts[y];
  }
  if (std::find(counts.begin(), counts.end(), 0u) != counts.end()) {
    throw InvalidInputError("every class must be present at least once");
  }
}

UnlabeledView LabeledDataset::unlabeled() const { return UnlabeledView(inputs); }

GaussianDomainSpec blobs_rot60() {
  GaussianDomainSpec spec;
  spec.num_classes = 4;
  spec.dim = 4;
  spec.n_per_class = 150;
  spec.cluster_std = 0.15;
  spec.shift.rotation = std::numbers::pi / 3.0;
  spec.shift.translation = {0.5, -0.3, 0.0, 0.0};
  return spec;
}

DomainPair make_gaussian_domains(const GaussianDomainSpec& spec, std::uint64_t seed) {
  const std::size_t C = spec.num_classes;
  const std::size_t d = spec.dim;
  if (C < 2 || d < 2 || spec.n_per_class < 10) {
    throw ParameterError("make_gaussian_domains needs C >= 2, d >= 2, n_per_class >= 10");
  }
  if (!(spec.cluster_std > 0.0) || !(spec.shift.scale > 0.0) || spec.shift.noise < 0.0) {
    throw ParameterError("cluster_std and scale must be positive, noise non-negative");
  }
  if (!spec.shift.translation.empty() && spec.shift.translation.size() != d) {
    throw ParameterError("translation must have d entries");
  }

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  Matrix means(C, d);
  const double min_sep = 2.0 * spec.cluster_std;
  bool separated = false;
  for (int attempt = 0; attempt < 1000 && !separated; ++attempt) {
    for (std::size_t c = 0; c < C; ++c) {
      auto mu = means.row(c);
      double norm = 0.0;
      do {
        for (double& v : mu) v = gauss(rng);
        norm = std::sqrt(std::inner_product(mu.begin(), mu.end(), mu.begin(), 0.0));
      } while (norm < 1e-9);
      for (double& v : mu) v /= norm;
    }
    separated = true;
    for (std::size_t a = 0; a < C && separated; ++a) {
      for (std::size_t b = a + 1; b < C && separated; ++b) {
        double dist2 = 0.0;
        for (std::size_t j = 0; j < d; ++j) dist2 += std::pow(means(a, j) - means(b, j), 2);
        separated = std::sqrt(dist2) >= min_sep;
      }
    }
  }
  if (!separated) throw GenerationError("could not separate class means after 1000 attempts");

  const double cr = std::cos(spec.shift.rotation);
  const double sr = std::sin(spec.shift.rotation);
  auto draw = [&](bool shifted, const std::string& tag) {
    LabeledDataset out;
    out.inputs = Matrix(C * spec.n_per_class, d);
    out.labels.resize(C * spec.n_per_class);
    out.num_classes = C;
    out.domain = tag;
    out.seed = seed;
    std::size_t r = 0;
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t n = 0; n < spec.n_per_class; ++n, ++r) {
        auto x = out.inputs.row(r);
        const double spread = shifted ? spec.shift.scale * spec.cluster_std : spec.cluster_std;
        for (std::size_t j = 0; j < d; ++j) x[j] = means(c, j) + spread * gauss(rng);
        if (shifted) {
          const double x0 = x[0];
          const double x1 = x[1];
          x[0] = cr * x0 - sr * x1;
          x[1] = sr * x0 + cr * x1;
          for (std::size_t j = 0; j < d; ++j) {
            if (!spec.shift.translation.empty()) x[j] += spec.shift.translation[j];
            if (spec.shift.noise > 0.0) x[j] += spec.shift.noise * gauss(rng);
          }
        }
        out.labels[r] = c;
      }
    }
    return out;
  };

  DomainPair pair;
  pair.means = means;
  pair.source = draw(false, "source");
  pair.target = draw(true, "target");
  return pair;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw InvalidInputError("cannot format double");
  return std::string(buf, ptr);
}

std::string format_feature_table(const LabeledDataset& data) {
  std::string out = "#meta,C=" + std::to_string(data.num_classes) +
                    ",d=" + std::to_string(data.dim()) + "\nid,label";
  for (std::size_t j = 0; j < data.dim(); ++j) out += ",x" + std::to_string(j);
  out += '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    out += std::to_string(i) + ',' + std::to_string(data.labels[i]);
    for (double v : data.inputs.row(i)) out += ',' + format_double(v);
    out += '\n';
  }
  return out;
}

void write_feature_table(const LabeledDataset& data, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInputError("cannot open " + path.string() + " for writing");
  out << format_feature_table(data);
}

LabeledDataset parse_feature_table(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;

  auto next_line = [&]() {
    if (!std::getline(in, line)) return false;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  };

  if (!next_line()) throw ParseError("empty feature table", 1);
  const auto meta = split_commas(line);
  if (meta.size() != 3 || meta[0] != "#meta") {
    throw ParseError("first line must be '#meta,C=<int>,d=<int>'", line_no);
  }
  const std::size_t C = meta_value(meta[1], "C", line_no);
  const std::size_t d = meta_value(meta[2], "d", line_no);
  if (C < 2 || d < 1) throw ParseError("need C >= 2 and d >= 1", line_no);

  if (!next_line()) throw ParseError("missing header line", line_no + 1);
  const auto header = split_commas(line);
  if (header.size() != d + 2 || header[0] != "id" || header[1] != "label") {
    throw ParseError("header must be 'id,label,x0,...,x" + std::to_string(d - 1) + "'", line_no);
  }
  for (std::size_t j = 0; j < d; ++j) {
    if (header[j + 2] != "x" + std::to_string(j)) {
      throw ParseError("unexpected column name '" + std::string(header[j + 2]) + "'", line_no);
    }
  }

  LabeledDataset data;
  data.num_classes = C;
  data.domain = "table";
  data.inputs.cols = d;
  while (next_line()) {
    if (line.empty()) continue;
    const auto fields = split_commas(line);
    if (fields.size() != d + 2) {
      throw ParseError("expected " + std::to_string(d + 2) + " fields, got " +
                           std::to_string(fields.size()),
                       line_no);
    }
    long long id = 0;
    if (!parse_number(fields[0], id)) throw ParseError("bad id", line_no);
    std::size_t label = 0;
    if (!parse_number(fields[1], label)) throw ParseError("bad label", line_no);
    if (label >= C) {
      throw ParseError("label " + std::to_string(label) + " is not below C=" + std::to_string(C),
                       line_no);
    }
    for (std::size_t j = 0; j < d; ++j) {
      double v = 0.0;
      if (!parse_number(fields[j + 2], v) || !std::isfinite(v)) {
        throw ParseError("bad value in column x" + std::to_string(j), line_no);
      }
      data.inputs.data.push_back(v);
    }
    data.labels.push_back(label);
    ++data.inputs.rows;
  }
  return data;
}

LabeledDataset load_feature_table(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInputError("cannot open feature table " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_feature_table(buf.str());
}

Matrix corrupt_source_priors(const Matrix& priors, double noise_rate, std::uint64_t seed) {
  if (!(noise_rate >= 0.0 && noise_rate <= 1.0)) {
    throw ParameterError("noise rate must lie in [0, 1]");
  }
  const std::size_t N = priors.rows;
  const std::size_t C = priors.cols;
  const auto m = static_cast<std::size_t>(std::floor(noise_rate * static_cast<double>(N)));
  Matrix out = priors;
  if (m == 0) return out;
  if (C < 2) throw ParameterError("corruption needs at least two classes");

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(N);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::uniform_int_distribution<std::size_t> pick(0, C - 2);
  for (std::size_t t = 0; t < m; ++t) {
    const std::size_t i = order[t];
    const std::size_t top = argmax(priors.row(i));
    std::size_t cls = pick(rng);
    if (cls >= top) ++cls;
    auto row = out.row(i);
    std::fill(row.begin(), row.end(), 0.0);
    row[cls] = 1.0;
  }
  return out;
}

std::vector<ProbVector> corrupt_source_priors(const std::vector<ProbVector>& priors,
                                              double noise_rate, std::uint64_t seed) {
  if (priors.empty()) return {};
  Matrix m(priors.size(), priors.front().size());
  for (std::size_t i = 0; i < priors.size(); ++i) {
    if (priors[i].size() != m.cols) throw ShapeError("priors have inconsistent lengths");
    std::copy(priors[i].begin(), priors[i].end(), m.row(i).begin());
  }
  const Matrix out = corrupt_source_priors(m, noise_rate, seed);
  std::vector<ProbVector> result;
  result.reserve(priors.size());
  for (std::size_t i = 0; i < out.rows; ++i) {
    result.push_back(ProbVector::trusted({out.row(i).begin(), out.row(i).end()}));
  }
  return result;
}

}  // namespace procal
