#pragma once

// Label-noise injection for external datasets given as precomputed feature
// (embedding or hash) vectors. Each class is summarized by its center, the
// mean feature vector; flips go to the s nearest other-class centers.
//
//   class_dependent:   every sample flips with probability eps, target uniform
//                      over its class's s nearest centers.
//   feature_dependent: flip weight 1 / (delta + distance to the nearest candidate
//                      center), scaled by a calibrated alpha so the mean flip
//                      probability is eps; target drawn with probability
//                      proportional to 1 / (delta + distance) over the candidates.

#include "lnoise/channels.hpp"
#include "lnoise/core.hpp"

#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

namespace lnoise::embed {

inline constexpr double kDistanceFloor = 1e-9;

struct EmbeddedDataset {
  std::vector<std::string> ids;
  Labels labels;
  Matrix features;  // n x d
  /// original_labels[k] is the label value in the source file for class k,
  /// present when non-contiguous labels were remapped on load.
  std::optional<std::vector<long>> original_labels;

  int size() const { return static_cast<int>(labels.size()); }
  int dim() const { return static_cast<int>(features.cols()); }
  int classes() const { return labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1; }

  void validate() const {
    require(ids.size() == labels.size() && features.rows() == static_cast<Eigen::Index>(labels.size()),
            "ids, labels and features must have one entry per sample");
    require(!labels.empty(), "dataset is empty");
    std::vector<int> count(static_cast<std::size_t>(classes()), 0);
    for (int y : labels) {
      require(y >= 0, "labels must be nonnegative");
      ++count[static_cast<std::size_t>(y)];
    }
    for (std::size_t k = 0; k < count.size(); ++k)
      require(count[k] > 0, "class " + std::to_string(k) + " has no samples");
  }
};

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline bool parse_number(const std::string& text, double& out) {
  if (text.empty()) return false;
  char* end = nullptr;
  out = std::strtod(text.c_str(), &end);
  return end == text.c_str() + text.size();
}

inline bool parse_integer(const std::string& text, long& out) {
  if (text.empty()) return false;
  char* end = nullptr;
  out = std::strtol(text.c_str(), &end, 10);
  return end == text.c_str() + text.size();
}

}  // namespace detail

/// Parses `id,label,f0,...,f{d-1}`. Non-contiguous label sets are rejected
/// unless `remap` is set, in which case labels are renumbered in sorted order
/// and the mapping is kept in `original_labels`.
inline EmbeddedDataset parse_features(std::istream& in, bool remap = false) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw ParseError("empty feature file");
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = detail::split_csv(line);
  if (header.size() < 3 || header[0] != "id" || header[1] != "label")
    throw ParseError("header must be id,label,f0,...", line_no);
  const std::size_t d = header.size() - 2;
  for (std::size_t j = 0; j < d; ++j)
    if (header[j + 2] != "f" + std::to_string(j)) throw ParseError("feature column " + std::to_string(j) + " must be named f" + std::to_string(j), line_no);

  EmbeddedDataset ds;
  std::vector<long> raw_labels;
  std::vector<double> values;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = detail::split_csv(line);
    if (cells.size() != d + 2)
      throw ParseError("expected " + std::to_string(d + 2) + " fields, found " + std::to_string(cells.size()), line_no);
    long label = 0;
    if (!detail::parse_integer(cells[1], label) || label < 0)
      throw ParseError("label must be a nonnegative integer", line_no);
    for (std::size_t j = 0; j < d; ++j) {
      double v = 0.0;
      if (!detail::parse_number(cells[j + 2], v)) throw ParseError("feature f" + std::to_string(j) + " is not a number", line_no);
      if (!std::isfinite(v)) throw ParseError("feature f" + std::to_string(j) + " is not finite", line_no);
      values.push_back(v);
    }
    ds.ids.push_back(cells[0]);
    raw_labels.push_back(label);
  }
  if (raw_labels.empty()) throw ParseError("feature file has no rows");

  std::vector<long> distinct = raw_labels;
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  const bool contiguous = distinct.front() == 0 && distinct.back() == static_cast<long>(distinct.size()) - 1;
  if (!contiguous && !remap)
    throw ParseError("labels are not contiguous from 0 (found " + std::to_string(distinct.size()) +
                     " distinct labels up to " + std::to_string(distinct.back()) + "); enable remapping");
  std::map<long, int> index;
  for (std::size_t k = 0; k < distinct.size(); ++k) index[distinct[k]] = static_cast<int>(k);
  if (!contiguous) ds.original_labels = distinct;

  const auto n = static_cast<Eigen::Index>(raw_labels.size());
  ds.features.resize(n, static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j)
      ds.features(i, static_cast<Eigen::Index>(j)) = values[static_cast<std::size_t>(i) * d + j];
  ds.labels.reserve(raw_labels.size());
  for (long y : raw_labels) ds.labels.push_back(index[y]);
  ds.validate();
  return ds;
}

inline EmbeddedDataset load_features(const std::string& path, bool remap = false) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open feature file '" + path + "'");
  return parse_features(in, remap);
}

struct CenterTable {
  Matrix centers;                              // c x d
  std::vector<std::vector<int>> neighbor_lists;  // per class, s nearest other classes

  int classes() const { return static_cast<int>(centers.rows()); }
};

inline CenterTable class_centers(const EmbeddedDataset& ds, int s) {
  ds.validate();
  const int c = ds.classes();
  require(c >= 2, "center table needs at least two classes");
  require(s >= 1 && s <= c - 1, "spread must be in [1, c-1]");
  CenterTable table;
  table.centers = Matrix::Zero(c, ds.dim());
  std::vector<int> count(static_cast<std::size_t>(c), 0);
  for (int i = 0; i < ds.size(); ++i) {
    table.centers.row(ds.labels[static_cast<std::size_t>(i)]) += ds.features.row(i);
    ++count[static_cast<std::size_t>(ds.labels[static_cast<std::size_t>(i)])];
  }
  for (int k = 0; k < c; ++k) table.centers.row(k) /= count[static_cast<std::size_t>(k)];

  table.neighbor_lists.resize(static_cast<std::size_t>(c));
  for (int k = 0; k < c; ++k) {
    std::vector<std::pair<double, int>> dist;
    for (int j = 0; j < c; ++j)
      if (j != k) dist.emplace_back((table.centers.row(k) - table.centers.row(j)).norm(), j);
    std::sort(dist.begin(), dist.end());  // ties by class index
    for (int j = 0; j < s; ++j) table.neighbor_lists[static_cast<std::size_t>(k)].push_back(dist[static_cast<std::size_t>(j)].second);
  }
  return table;
}

enum class InjectMode { class_dependent, feature_dependent };

inline std::string_view to_string(InjectMode m) {
  return m == InjectMode::class_dependent ? "class_dependent" : "feature_dependent";
}

inline InjectMode parse_inject_mode(std::string_view s) {
  if (s == "class_dependent") return InjectMode::class_dependent;
  if (s == "feature_dependent") return InjectMode::feature_dependent;
  throw ParameterError("unknown injection mode '" + std::string(s) + "'");
}

struct InjectionReport {
  double epsilon = 0.0;
  double realized_rate = 0.0;
  InjectMode mode = InjectMode::class_dependent;
  int s = 1;
  std::uint64_t seed = 0;
  std::vector<std::vector<long>> transition_counts;  // [true][noisy]
  std::optional<double> log_alpha;                   // feature_dependent only
};

struct InjectionResult {
  Labels noisy_labels;
  std::vector<bool> flip_mask;
  CenterTable centers;
  InjectionReport report;
};

inline InjectionResult inject(const EmbeddedDataset& ds, double epsilon, int s, InjectMode mode, std::uint64_t seed,
                              FlipMode count_mode = FlipMode::bernoulli, double tolerance = 1e-6) {
  require(std::isfinite(epsilon) && epsilon >= 0.0 && epsilon <= 1.0, "epsilon must be in [0, 1]");
  InjectionResult out;
  out.centers = class_centers(ds, s);
  const int c = ds.classes();
  const int n = ds.size();
  out.report.epsilon = epsilon;
  out.report.mode = mode;
  out.report.s = s;
  out.report.seed = seed;

  if (mode == InjectMode::class_dependent) {
    const NoiseSpec spec = NoiseSpec::class_dependent(epsilon, out.centers.neighbor_lists);
    LabeledDataset tmp;
    tmp.features = ds.features;
    tmp.true_labels = ds.labels;
    tmp = apply(spec, tmp, c, seed, count_mode);
    out.noisy_labels = std::move(*tmp.noisy_labels);
  } else {
    std::vector<double> log_w(static_cast<std::size_t>(n));
    std::vector<Vector> target_probs(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      const int k = ds.labels[static_cast<std::size_t>(i)];
      const auto& cand = out.centers.neighbor_lists[static_cast<std::size_t>(k)];
      Vector probs = Vector::Zero(c);
      double nearest = std::numeric_limits<double>::infinity();
      for (int j : cand) {
        const double dist = (ds.features.row(i) - out.centers.centers.row(j)).norm();
        nearest = std::min(nearest, dist);
        probs[j] = 1.0 / (kDistanceFloor + dist);
      }
      target_probs[static_cast<std::size_t>(i)] = probs / probs.sum();
      log_w[static_cast<std::size_t>(i)] = -std::log(kDistanceFloor + nearest);
    }
    const double la = calibrate_log_scale(log_w, epsilon, tolerance);
    out.report.log_alpha = la;
    std::vector<double> p(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < p.size(); ++i)
      p[i] = std::isinf(la) ? (la > 0 ? 1.0 : 0.0) : std::exp(std::min(0.0, la + log_w[i]));

    std::mt19937_64 rng(derive_seed(seed, 0x656d626564ULL));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<bool> flip(static_cast<std::size_t>(n), false);
    if (count_mode == FlipMode::bernoulli) {
      for (int i = 0; i < n; ++i) flip[static_cast<std::size_t>(i)] = unit(rng) < p[static_cast<std::size_t>(i)];
    } else {
      const int count = static_cast<int>(std::lround(epsilon * n));
      for (int i : weighted_sample_without_replacement(p, count, rng)) flip[static_cast<std::size_t>(i)] = true;
    }
    out.noisy_labels = ds.labels;
    for (int i = 0; i < n; ++i) {
      const double u = unit(rng);
      if (flip[static_cast<std::size_t>(i)]) out.noisy_labels[static_cast<std::size_t>(i)] = draw_index(target_probs[static_cast<std::size_t>(i)], u);
    }
  }

  out.flip_mask.resize(static_cast<std::size_t>(n));
  out.report.transition_counts.assign(static_cast<std::size_t>(c), std::vector<long>(static_cast<std::size_t>(c), 0));
  long flips = 0;
  for (int i = 0; i < n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    out.flip_mask[ui] = out.noisy_labels[ui] != ds.labels[ui];
    flips += out.flip_mask[ui];
    ++out.report.transition_counts[static_cast<std::size_t>(ds.labels[ui])][static_cast<std::size_t>(out.noisy_labels[ui])];
  }
  out.report.realized_rate = static_cast<double>(flips) / n;
  return out;
}

/// Distance from each sample to the nearest center among its class's candidates.
inline std::vector<double> nearest_candidate_distance(const EmbeddedDataset& ds, const CenterTable& table) {
  std::vector<double> out(static_cast<std::size_t>(ds.size()));
  for (int i = 0; i < ds.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (int j : table.neighbor_lists[static_cast<std::size_t>(ds.labels[static_cast<std::size_t>(i)])])
      best = std::min(best, (ds.features.row(i) - table.centers.row(j)).norm());
    out[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

}  // namespace lnoise::embed
