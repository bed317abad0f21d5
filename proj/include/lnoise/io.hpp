#pragma once

// File formats: dataset CSV, mixture / noise spec / network checkpoint /
// sweep config / injection report JSON, injection label CSV.

#include "lnoise/channels.hpp"
#include "lnoise/embednoise.hpp"
#include "lnoise/experiment.hpp"
#include "lnoise/learner.hpp"
#include "lnoise/mixture.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <sstream>
#include <string>

namespace lnoise::io {

using json = nlohmann::json;

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(what + ": " + e.what());
  }
}

/// Runs `fn` and turns JSON type/shape errors into ParseError.
template <typename Fn>
auto guarded(const std::string& what, Fn&& fn) {
  try {
    return fn();
  } catch (const json::exception& e) {
    throw ParseError(what + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Dataset CSV: id,label,noisy_label,f0,...,f{d-1}
// ---------------------------------------------------------------------------

inline std::string dataset_to_csv(const LabeledDataset& ds) {
  ds.validate();
  std::string out = "id,label,noisy_label";
  for (int j = 0; j < ds.dim(); ++j) out += ",f" + std::to_string(j);
  out += '\n';
  for (int i = 0; i < ds.size(); ++i) {
    out += std::to_string(i) + "," + std::to_string(ds.true_labels[static_cast<std::size_t>(i)]) + ",";
    if (ds.noisy_labels) out += std::to_string((*ds.noisy_labels)[static_cast<std::size_t>(i)]);
    for (int j = 0; j < ds.dim(); ++j) out += "," + format_double(ds.features(i, j));
    out += '\n';
  }
  return out;
}

inline LabeledDataset dataset_from_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw ParseError("empty dataset file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = embed::detail::split_csv(line);
  if (header.size() < 4 || header[0] != "id" || header[1] != "label" || header[2] != "noisy_label")
    throw ParseError("header must be id,label,noisy_label,f0,...", line_no);
  const std::size_t d = header.size() - 3;
  for (std::size_t j = 0; j < d; ++j)
    if (header[j + 3] != "f" + std::to_string(j)) throw ParseError("feature column " + std::to_string(j) + " must be named f" + std::to_string(j), line_no);

  Labels truth, noisy;
  std::vector<double> values;
  std::size_t with_noisy = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = embed::detail::split_csv(line);
    if (cells.size() != d + 3)
      throw ParseError("expected " + std::to_string(d + 3) + " fields, found " + std::to_string(cells.size()), line_no);
    long y = 0;
    if (!embed::detail::parse_integer(cells[1], y) || y < 0) throw ParseError("label must be a nonnegative integer", line_no);
    truth.push_back(static_cast<int>(y));
    if (!cells[2].empty()) {
      long z = 0;
      if (!embed::detail::parse_integer(cells[2], z) || z < 0)
        throw ParseError("noisy_label must be empty or a nonnegative integer", line_no);
      noisy.push_back(static_cast<int>(z));
      ++with_noisy;
    } else {
      noisy.push_back(-1);
    }
    for (std::size_t j = 0; j < d; ++j) {
      double v = 0.0;
      if (!embed::detail::parse_number(cells[j + 3], v) || !std::isfinite(v))
        throw ParseError("feature f" + std::to_string(j) + " is not a finite number", line_no);
      values.push_back(v);
    }
  }
  if (truth.empty()) throw ParseError("dataset file has no rows");
  if (with_noisy != 0 && with_noisy != truth.size())
    throw ParseError("noisy_label must be filled on every row or on none");

  LabeledDataset ds;
  ds.features.resize(static_cast<Eigen::Index>(truth.size()), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < truth.size(); ++i)
    for (std::size_t j = 0; j < d; ++j) ds.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = values[i * d + j];
  ds.true_labels = std::move(truth);
  if (with_noisy) ds.set_noisy(std::move(noisy));
  return ds;
}

inline LabeledDataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open dataset '" + path + "'");
  return dataset_from_csv(in);
}

// ---------------------------------------------------------------------------
// Mixture JSON: {priors, means, covariances}
// ---------------------------------------------------------------------------

inline json to_json(const Vector& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline json to_json(const Matrix& m) {
  json a = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) a.push_back(to_json(Vector(m.row(i).transpose())));
  return a;
}

inline Vector vector_from_json(const json& j) {
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j.at(i).get<double>();
  return v;
}

inline Matrix matrix_from_json(const json& j) {
  const auto rows = j.size();
  const auto cols = rows ? j.at(0).size() : 0;
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < rows; ++i) {
    if (j.at(i).size() != cols) throw ParseError("ragged matrix in JSON");
    for (std::size_t k = 0; k < cols; ++k)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = j.at(i).at(k).get<double>();
  }
  return m;
}

inline json mixture_to_json(const GaussianMixture& m) {
  json means = json::array(), covs = json::array();
  for (const auto& comp : m.components()) {
    means.push_back(to_json(comp.mean()));
    covs.push_back(to_json(comp.covariance()));
  }
  return {{"priors", m.priors()}, {"means", means}, {"covariances", covs}};
}

inline GaussianMixture mixture_from_json(const json& j) {
  return guarded("mixture JSON", [&] {
    const auto priors = j.at("priors").get<std::vector<double>>();
    const auto& means = j.at("means");
    const auto& covs = j.at("covariances");
    if (means.size() != priors.size() || covs.size() != priors.size())
      throw ParseError("mixture JSON: priors, means and covariances must have equal length");
    std::vector<GaussianComponent> comps;
    for (std::size_t k = 0; k < priors.size(); ++k)
      comps.emplace_back(vector_from_json(means.at(k)), matrix_from_json(covs.at(k)));
    return GaussianMixture(std::move(comps), priors);
  });
}

// ---------------------------------------------------------------------------
// NoiseSpec JSON: {kind, epsilon, spread?, targets?, alpha?, log_alpha?}
// ---------------------------------------------------------------------------

inline json spec_to_json(const NoiseSpec& s) {
  json j{{"kind", std::string(to_string(s.kind))}, {"epsilon", s.epsilon}};
  if (s.spread) j["spread"] = *s.spread;
  if (s.targets) j["targets"] = *s.targets;
  if (s.log_alpha) {
    const double a = std::exp(*s.log_alpha);
    if (std::isfinite(a)) j["alpha"] = a;
    if (std::isfinite(*s.log_alpha)) j["log_alpha"] = *s.log_alpha;
    else j["log_alpha"] = *s.log_alpha > 0 ? "inf" : "-inf";
  }
  return j;
}

inline NoiseSpec spec_from_json(const json& j) {
  return guarded("noise spec JSON", [&] {
    NoiseSpec s;
    s.kind = parse_noise_kind(j.at("kind").get<std::string>());
    s.epsilon = j.at("epsilon").get<double>();
    if (j.contains("spread")) s.spread = j.at("spread").get<int>();
    if (j.contains("targets")) s.targets = j.at("targets").get<std::vector<std::vector<int>>>();
    if (j.contains("log_alpha")) {
      const auto& la = j.at("log_alpha");
      if (la.is_string()) {
        const auto t = la.get<std::string>();
        if (t != "inf" && t != "-inf") throw ParseError("noise spec JSON: log_alpha must be a number, \"inf\" or \"-inf\"");
        s.log_alpha = (t == "inf" ? 1.0 : -1.0) * std::numeric_limits<double>::infinity();
      } else {
        s.log_alpha = la.get<double>();
      }
    } else if (j.contains("alpha")) {
      const double a = j.at("alpha").get<double>();
      if (!(a >= 0.0)) throw ParseError("noise spec JSON: alpha must be >= 0");
      s.log_alpha = std::log(a);
    }
    return s;
  });
}

// ---------------------------------------------------------------------------
// Network checkpoint: {"layers": [{"weights": {rows, cols, values}, "bias": [...]}, ...]}
// values are row-major.
// ---------------------------------------------------------------------------

inline json params_to_json(const MLPParams& p) {
  json layers = json::array();
  for (int l = 0; l < 3; ++l) {
    json values = json::array();
    for (Eigen::Index i = 0; i < p.weights[l].rows(); ++i)
      for (Eigen::Index k = 0; k < p.weights[l].cols(); ++k) values.push_back(p.weights[l](i, k));
    layers.push_back({{"weights", {{"rows", p.weights[l].rows()}, {"cols", p.weights[l].cols()}, {"values", values}}},
                      {"bias", to_json(p.biases[l])}});
  }
  return {{"architecture", "tanh-mlp"}, {"layers", layers}};
}

inline MLPParams params_from_json(const json& j) {
  return guarded("network checkpoint JSON", [&] {
    const auto& layers = j.at("layers");
    if (layers.size() != 3) throw ParseError("network checkpoint JSON: expected 3 layers");
    MLPParams p;
    for (int l = 0; l < 3; ++l) {
      const auto& w = layers.at(static_cast<std::size_t>(l)).at("weights");
      const auto rows = w.at("rows").get<Eigen::Index>(), cols = w.at("cols").get<Eigen::Index>();
      const auto values = w.at("values").get<std::vector<double>>();
      if (rows < 1 || cols < 1 || static_cast<Eigen::Index>(values.size()) != rows * cols)
        throw ParseError("network checkpoint JSON: weight shape does not match values");
      p.weights[l].resize(rows, cols);
      for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index k = 0; k < cols; ++k) p.weights[l](i, k) = values[static_cast<std::size_t>(i * cols + k)];
      p.biases[l] = vector_from_json(layers.at(static_cast<std::size_t>(l)).at("bias"));
      if (p.biases[l].size() != cols) throw ParseError("network checkpoint JSON: bias length does not match weights");
      if (l > 0 && p.weights[l].rows() != p.weights[l - 1].cols())
        throw ParseError("network checkpoint JSON: layer shapes do not chain");
    }
    if (!p.all_finite()) throw ParseError("network checkpoint JSON: non-finite parameter");
    return p;
  });
}

// ---------------------------------------------------------------------------
// Sweep config JSON
// ---------------------------------------------------------------------------

inline SweepConfig sweep_config_from_json(const json& j) {
  return guarded("sweep config JSON", [&] {
    static const std::vector<std::string> known{"classes", "dim", "separation", "layout", "n_train_per_class", "n_test_per_class",
                                                "epsilons", "eps_grid", "noise", "classifiers", "replicates",
                                                "master_seed", "flip_mode", "train"};
    for (const auto& [key, _] : j.items())
      if (std::find(known.begin(), known.end(), key) == known.end())
        throw ParseError("sweep config JSON: unknown key '" + key + "'");
    SweepConfig cfg;
    if (j.contains("classes")) cfg.classes = j.at("classes").get<std::vector<int>>();
    if (j.contains("dim")) cfg.dim = j.at("dim").get<int>();
    if (j.contains("separation")) cfg.separation = j.at("separation").get<double>();
    if (j.contains("layout")) cfg.layout = parse_layout(j.at("layout").get<std::string>());
    if (j.contains("n_train_per_class")) cfg.n_train_per_class = j.at("n_train_per_class").get<int>();
    if (j.contains("n_test_per_class")) cfg.n_test_per_class = j.at("n_test_per_class").get<int>();
    if (j.contains("epsilons") && j.contains("eps_grid"))
      throw ParseError("sweep config JSON: give either epsilons or eps_grid");
    if (j.contains("epsilons")) cfg.epsilons = j.at("epsilons").get<std::vector<double>>();
    if (j.contains("eps_grid")) cfg.epsilons = theory::parse_epsilon_grid(j.at("eps_grid").get<std::string>());
    if (j.contains("noise")) {
      cfg.noise.clear();
      for (const auto& n : j.at("noise")) {
        NoiseSetting s;
        s.kind = parse_noise_kind(n.at("kind").get<std::string>());
        if (n.contains("spreads")) s.spreads = n.at("spreads").get<std::vector<int>>();
        cfg.noise.push_back(std::move(s));
      }
    }
    if (j.contains("classifiers")) {
      cfg.classifiers.clear();
      for (const auto& c : j.at("classifiers")) cfg.classifiers.push_back(parse_classifier(c.get<std::string>()));
    }
    if (j.contains("replicates")) cfg.replicates = j.at("replicates").get<int>();
    if (j.contains("master_seed")) cfg.master_seed = j.at("master_seed").get<std::uint64_t>();
    if (j.contains("flip_mode")) cfg.flip_mode = parse_flip_mode(j.at("flip_mode").get<std::string>());
    if (j.contains("train")) {
      const auto& t = j.at("train");
      if (t.contains("learning_rate")) cfg.train.learning_rate = t.at("learning_rate").get<double>();
      if (t.contains("epochs")) cfg.train.epochs = t.at("epochs").get<int>();
      if (t.contains("batch_size")) cfg.train.batch_size = t.at("batch_size").get<int>();
      if (t.contains("adam_beta1")) cfg.train.adam_beta1 = t.at("adam_beta1").get<double>();
      if (t.contains("adam_beta2")) cfg.train.adam_beta2 = t.at("adam_beta2").get<double>();
      if (t.contains("adam_eps")) cfg.train.adam_eps = t.at("adam_eps").get<double>();
    }
    cfg.validate();
    return cfg;
  });
}

/// JSON Schema describing the sweep config accepted by sweep_config_from_json.
inline json sweep_config_schema() {
  const json kinds = json::array({"uniform", "class_dependent", "uniform_x", "resampling", "inverse_resampling",
                                  "gap_min", "gap_max"});
  return {
      {"$schema", "https://json-schema.org/draft/2020-12/schema"},
      {"title", "sweep-run config"},
      {"type", "object"},
      {"additionalProperties", false},
      {"properties",
       {{"classes", {{"type", "array"}, {"items", {{"type", "integer"}, {"minimum", 2}}}, {"default", {10}}}},
        {"dim", {{"type", "integer"}, {"minimum", 1}, {"default", 2}}},
        {"separation", {{"type", "number"}, {"exclusiveMinimum", 0}, {"default", 3.0}}},
        {"layout", {{"enum", {"benchmark", "grid"}}, {"default", "benchmark"}}},
        {"n_train_per_class", {{"type", "integer"}, {"minimum", 1}, {"default", 100}}},
        {"n_test_per_class", {{"type", "integer"}, {"minimum", 1}, {"default", 100}}},
        {"epsilons", {{"type", "array"}, {"items", {{"type", "number"}, {"minimum", 0}, {"maximum", 1}}}}},
        {"eps_grid", {{"type", "string"}, {"pattern", "^[^:]+:[^:]+:[^:]+$"}, {"default", "0:1:0.1"}}},
        {"noise",
         {{"type", "array"},
          {"items",
           {{"type", "object"},
            {"required", {"kind"}},
            {"properties",
             {{"kind", {{"enum", kinds}}}, {"spreads", {{"type", "array"}, {"items", {{"type", "integer"}, {"minimum", 1}}}}}}}}},
          {"default", json::array({{{"kind", "uniform"}}})}}},
        {"classifiers",
         {{"type", "array"},
          {"items", {{"enum", {"bayes_plugin", "bayes_sample", "mlp"}}}},
          {"default", {"bayes_plugin"}}}},
        {"replicates", {{"type", "integer"}, {"minimum", 1}, {"default", 5}}},
        {"master_seed", {{"type", "integer"}, {"minimum", 0}, {"default", 0}}},
        {"flip_mode", {{"enum", {"bernoulli", "exact_count"}}, {"default", "bernoulli"}}},
        {"train",
         {{"type", "object"},
          {"properties",
           {{"learning_rate", {{"type", "number"}, {"default", 0.001}}},
            {"epochs", {{"type", "integer"}, {"default", 200}}},
            {"batch_size", {{"type", "integer"}, {"default", 32}}},
            {"adam_beta1", {{"type", "number"}, {"default", 0.9}}},
            {"adam_beta2", {{"type", "number"}, {"default", 0.999}}},
            {"adam_eps", {{"type", "number"}, {"default", 1e-8}}}}}}}}}};
}

// ---------------------------------------------------------------------------
// Injection outputs
// ---------------------------------------------------------------------------

/// CSV id,label,noisy_label,flipped; labels are written in the source file's
/// numbering when the dataset was remapped on load.
inline std::string injection_to_csv(const embed::EmbeddedDataset& ds, const embed::InjectionResult& r) {
  const auto original = [&](int k) -> long {
    return ds.original_labels ? (*ds.original_labels)[static_cast<std::size_t>(k)] : k;
  };
  std::string out = "id,label,noisy_label,flipped\n";
  for (int i = 0; i < ds.size(); ++i) {
    const auto ui = static_cast<std::size_t>(i);
    out += ds.ids[ui] + "," + std::to_string(original(ds.labels[ui])) + "," +
           std::to_string(original(r.noisy_labels[ui])) + "," + (r.flip_mask[ui] ? "1" : "0") + "\n";
  }
  return out;
}

inline json report_to_json(const embed::InjectionReport& r, const embed::EmbeddedDataset* ds = nullptr) {
  json j{{"epsilon", r.epsilon},
         {"realized_rate", r.realized_rate},
         {"mode", std::string(embed::to_string(r.mode))},
         {"s", r.s},
         {"seed", r.seed},
         {"transition_counts", r.transition_counts}};
  if (r.log_alpha && std::isfinite(*r.log_alpha)) j["log_alpha"] = *r.log_alpha;
  if (ds && ds->original_labels) j["label_remap"] = *ds->original_labels;
  return j;
}

}  // namespace lnoise::io
