#pragma once

// Label-noise channels eta_k.(x) = P[Y = . | Y* = k, X = x].
//
// Class-level channels (uniform, class-dependent) are constant transition
// matrices. Feature-dependent channels take a per-sample keep weight computed
// from the clean posterior; the keep probability is clip(alpha * weight, 0, 1)
// with alpha calibrated on a reference set so that the mean flip probability
// equals epsilon. Weights and alpha are handled in log space throughout.

#include "lnoise/core.hpp"
#include "lnoise/mixture.hpp"

#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace lnoise {

enum class NoiseKind {
  uniform,
  class_dependent,
  uniform_x,
  resampling,
  inverse_resampling,
  gap_min,
  gap_max,
};

inline constexpr NoiseKind kAllNoiseKinds[] = {
    NoiseKind::uniform,     NoiseKind::class_dependent,    NoiseKind::uniform_x, NoiseKind::resampling,
    NoiseKind::inverse_resampling, NoiseKind::gap_min, NoiseKind::gap_max,
};

inline std::string_view to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::uniform: return "uniform";
    case NoiseKind::class_dependent: return "class_dependent";
    case NoiseKind::uniform_x: return "uniform_x";
    case NoiseKind::resampling: return "resampling";
    case NoiseKind::inverse_resampling: return "inverse_resampling";
    case NoiseKind::gap_min: return "gap_min";
    case NoiseKind::gap_max: return "gap_max";
  }
  return "?";
}

inline NoiseKind parse_noise_kind(std::string_view name) {
  for (NoiseKind k : kAllNoiseKinds)
    if (to_string(k) == name) return k;
  throw ParameterError("unknown noise kind '" + std::string(name) + "'");
}

/// Kinds whose flip probability depends on x.
constexpr bool is_feature_dependent(NoiseKind kind) {
  return kind != NoiseKind::uniform && kind != NoiseKind::class_dependent;
}

/// Kinds that carry an alpha after calibration.
constexpr bool needs_calibration(NoiseKind kind) {
  return is_feature_dependent(kind) && kind != NoiseKind::uniform_x;
}

/// Floor applied to m*_k before inversion in inverse resampling.
inline constexpr double kInverseResamplingFloor = 1e-12;

struct NoiseSpec {
  NoiseKind kind = NoiseKind::uniform;
  double epsilon = 0.0;
  std::optional<int> spread;                         // class_dependent only
  std::optional<std::vector<std::vector<int>>> targets;  // class_dependent only
  std::optional<double> log_alpha;                   // calibrated feature kinds

  static NoiseSpec uniform(double epsilon) { return {NoiseKind::uniform, epsilon, {}, {}, {}}; }

  /// Class-dependent spec; class k flips to (k+1, ..., k+spread) mod c.
  static NoiseSpec class_dependent(int c, double epsilon, int spread) {
    require(c >= 2, "class-dependent noise needs c >= 2");
    require(spread >= 1 && spread <= c - 1, "spread must be in [1, c-1]");
    std::vector<std::vector<int>> t(static_cast<std::size_t>(c));
    for (int k = 0; k < c; ++k)
      for (int j = 1; j <= spread; ++j) t[static_cast<std::size_t>(k)].push_back((k + j) % c);
    return class_dependent(epsilon, std::move(t));
  }

  static NoiseSpec class_dependent(double epsilon, std::vector<std::vector<int>> targets) {
    NoiseSpec spec{NoiseKind::class_dependent, epsilon, {}, std::move(targets), {}};
    spec.spread = spec.targets->empty() ? 0 : static_cast<int>(spec.targets->front().size());
    spec.validate(static_cast<int>(spec.targets->size()));
    return spec;
  }

  static NoiseSpec feature(NoiseKind kind, double epsilon) {
    require(is_feature_dependent(kind), "feature() needs a feature-dependent kind");
    return {kind, epsilon, {}, {}, {}};
  }

  bool calibrated() const { return !needs_calibration(kind) || log_alpha.has_value(); }

  /// alpha itself; may be +inf (epsilon = 0) or 0 (epsilon = 1).
  double alpha() const {
    if (!log_alpha) throw StateError("noise spec is not calibrated");
    return std::exp(*log_alpha);
  }

  /// Checks this noise spec against a class count c.
  void validate(int c) const {
    require(c >= 2, "noise channels need c >= 2");
    require(std::isfinite(epsilon) && epsilon >= 0.0 && epsilon <= 1.0, "epsilon must be in [0, 1]");
    if (kind == NoiseKind::class_dependent) {
      require(spread.has_value() && targets.has_value(), "class-dependent noise needs spread and targets");
      const int s = *spread;
      require(s >= 1 && s <= c - 1, "spread must be in [1, c-1]");
      require(static_cast<int>(targets->size()) == c, "class-dependent noise needs one target list per class");
      for (int k = 0; k < c; ++k) {
        const auto& row = (*targets)[static_cast<std::size_t>(k)];
        require(static_cast<int>(row.size()) == s,
                "class " + std::to_string(k) + " must list exactly `spread` targets");
        std::vector<bool> seen(static_cast<std::size_t>(c), false);
        for (int t : row) {
          require(t >= 0 && t < c, "target out of range for class " + std::to_string(k));
          require(t != k, "class " + std::to_string(k) + " lists itself as a target");
          require(!seen[static_cast<std::size_t>(t)], "duplicate target for class " + std::to_string(k));
          seen[static_cast<std::size_t>(t)] = true;
        }
      }
    } else {
      require(!spread && !targets, "spread/targets apply to class-dependent noise only");
    }
    if (!needs_calibration(kind)) require(!log_alpha, "alpha applies to calibrated feature-dependent kinds only");
  }
};

// ---------------------------------------------------------------------------
// Transition matrices
// ---------------------------------------------------------------------------

/// Entry (k, i) = P[Y = i | Y* = k].
struct TransitionMatrix {
  Matrix rows;

  int classes() const { return static_cast<int>(rows.rows()); }
  double operator()(int k, int i) const { return rows(k, i); }

  void validate() const {
    require(rows.rows() == rows.cols(), "transition matrix must be square");
    for (Eigen::Index k = 0; k < rows.rows(); ++k) {
      require((rows.row(k).array() >= 0.0).all() && (rows.row(k).array() <= 1.0).all(),
              "transition entries must lie in [0, 1]");
      require(std::abs(rows.row(k).sum() - 1.0) <= 1e-12, "transition rows must sum to 1");
    }
  }

  std::string to_csv() const {
    std::string out = "true_label";
    for (int i = 0; i < classes(); ++i) out += ",p" + std::to_string(i);
    out += '\n';
    for (int k = 0; k < classes(); ++k) {
      out += std::to_string(k);
      for (int i = 0; i < classes(); ++i) out += "," + format_double(rows(k, i));
      out += '\n';
    }
    return out;
  }
};

inline TransitionMatrix uniform_channel(int c, double epsilon) {
  require(c >= 2, "uniform channel needs c >= 2");
  require(std::isfinite(epsilon) && epsilon >= 0.0 && epsilon <= 1.0, "epsilon must be in [0, 1]");
  const double off = epsilon / (c - 1);
  TransitionMatrix m{Matrix::Constant(c, c, off)};
  m.rows.diagonal().setConstant(1.0 - epsilon);
  return m;
}

inline TransitionMatrix class_channel(int c, double epsilon, const std::vector<std::vector<int>>& targets) {
  const auto spec = NoiseSpec::class_dependent(epsilon, targets);
  spec.validate(c);
  const int s = *spec.spread;
  TransitionMatrix m{Matrix::Zero(c, c)};
  for (int k = 0; k < c; ++k) {
    m.rows(k, k) = 1.0 - epsilon;
    for (int t : targets[static_cast<std::size_t>(k)]) m.rows(k, t) = epsilon / s;
  }
  return m;
}

/// Class-dependent matrix with targets (k+1, ..., k+spread) mod c.
inline TransitionMatrix class_channel(int c, double epsilon, int spread) {
  return class_channel(c, epsilon, *NoiseSpec::class_dependent(c, epsilon, spread).targets);
}

/// Matrix form of a class-level spec.
inline TransitionMatrix transition_matrix(const NoiseSpec& spec, int c) {
  if (spec.kind == NoiseKind::uniform) return uniform_channel(c, spec.epsilon);
  if (spec.kind == NoiseKind::class_dependent) return class_channel(c, spec.epsilon, *spec.targets);
  throw ParameterError("feature-dependent noise has no constant transition matrix");
}

// ---------------------------------------------------------------------------
// Feature-dependent weights
// ---------------------------------------------------------------------------

/// log r(x) = log m*_k(x) - max_{j != k} log m*_j(x).
inline double log_margin(const Vector& log_post, int k) {
  return log_post[k] - log_post[argmax_excluding(log_post, k)];
}

/// log of the unnormalized keep weight for true class k.
inline double log_keep_weight(NoiseKind kind, const Vector& log_post, int k) {
  switch (kind) {
    case NoiseKind::resampling: return log_post[k];
    case NoiseKind::inverse_resampling: return -std::max(log_post[k], std::log(kInverseResamplingFloor));
    case NoiseKind::gap_min: return log_margin(log_post, k);
    case NoiseKind::gap_max: return -log_margin(log_post, k);
    default: throw ParameterError("noise kind " + std::string(to_string(kind)) + " has no keep weight");
  }
}

/// Keep weight from a probability vector m*(x).
inline double keep_weight(NoiseKind kind, const Vector& posterior, int k) {
  return std::exp(log_keep_weight(kind, posterior.array().log().matrix(), k));
}

/// Probability that a sample of class k keeps its label.
inline double keep_probability(const NoiseSpec& spec, const Vector& log_post, int k) {
  if (!needs_calibration(spec.kind)) return 1.0 - spec.epsilon;
  if (!spec.log_alpha) throw StateError("feature-dependent noise spec is not calibrated");
  const double la = *spec.log_alpha;
  if (la == std::numeric_limits<double>::infinity()) return 1.0;
  if (la == -std::numeric_limits<double>::infinity()) return 0.0;
  return std::exp(std::min(0.0, la + log_keep_weight(spec.kind, log_post, k)));
}

/// Conditional distribution of the noisy label given that a flip happens.
inline Vector flip_distribution(const NoiseSpec& spec, int c, const Vector* log_post, int k) {
  Vector dist = Vector::Zero(c);
  switch (spec.kind) {
    case NoiseKind::uniform:
      dist.setConstant(1.0 / (c - 1));
      dist[k] = 0.0;
      return dist;
    case NoiseKind::class_dependent: {
      const auto& row = spec.targets->at(static_cast<std::size_t>(k));
      for (int t : row) dist[t] = 1.0 / static_cast<double>(row.size());
      return dist;
    }
    case NoiseKind::gap_min:
    case NoiseKind::gap_max:
      dist[argmax_excluding(*log_post, k)] = 1.0;
      return dist;
    default: break;
  }
  // Proportional to m*_j over j != k.
  double hi = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < c; ++j)
    if (j != k) hi = std::max(hi, (*log_post)[j]);
  if (!std::isfinite(hi)) {
    dist.setConstant(1.0 / (c - 1));
    dist[k] = 0.0;
    return dist;
  }
  for (int j = 0; j < c; ++j)
    if (j != k) dist[j] = std::exp((*log_post)[j] - hi);
  dist /= dist.sum();
  return dist;
}

/// Row eta_k.(x) given the clean log posterior at x (ignored for class-level kinds).
inline Vector eta_row(const NoiseSpec& spec, int c, const Vector* log_post, int k) {
  require(k >= 0 && k < c, "true class out of range");
  if (is_feature_dependent(spec.kind)) require(log_post != nullptr, "feature-dependent noise needs x");
  if (spec.kind == NoiseKind::uniform) {
    Vector row = Vector::Constant(c, spec.epsilon / (c - 1));
    row[k] = 1.0 - spec.epsilon;
    return row;
  }
  if (spec.kind == NoiseKind::class_dependent) {
    Vector row = Vector::Zero(c);
    for (int t : spec.targets->at(static_cast<std::size_t>(k))) row[t] = spec.epsilon / *spec.spread;
    row[k] = 1.0 - spec.epsilon;
    return row;
  }
  const double keep = keep_probability(spec, *log_post, k);
  Vector row = (1.0 - keep) * flip_distribution(spec, c, log_post, k);
  row[k] = keep;
  return row;
}

inline Vector eta_at(const NoiseSpec& spec, const GaussianMixture& mixture, const Vector& x, int k) {
  spec.validate(mixture.classes());
  const Vector lp = mixture.clean_log_posterior(x);
  return eta_row(spec, mixture.classes(), &lp, k);
}

/// m_k(x) = sum_i eta_ik(x) m*_i(x), from the clean log posterior at x.
inline Vector noisy_posterior_from_log(const NoiseSpec& spec, int c, const Vector& log_post) {
  const Vector post = log_post.array().exp();
  if (spec.kind == NoiseKind::uniform) {
    // Affine form; exactly flat at eps = (c-1)/c so ties resolve to class 0.
    const double a = spec.epsilon * c / (c - 1);
    return (post.array() * (1.0 - a) + spec.epsilon / (c - 1)).matrix();
  }
  Vector out = Vector::Zero(c);
  for (int i = 0; i < c; ++i) out += post[i] * eta_row(spec, c, &log_post, i);
  return out;
}

inline Vector noisy_posterior(const GaussianMixture& mixture, const NoiseSpec& spec, const Vector& x) {
  spec.validate(mixture.classes());
  return noisy_posterior_from_log(spec, mixture.classes(), mixture.clean_log_posterior(x));
}

// ---------------------------------------------------------------------------
// Calibration
// ---------------------------------------------------------------------------

/// Finds log(alpha) such that mean_i min(1, alpha * exp(log_weights[i])) = target
/// to within `tolerance`, by bisection. Returns +inf for target >= 1 and -inf
/// for target <= 0.
inline double calibrate_log_scale(std::span<const double> log_weights, double target, double tolerance,
                                  int max_steps = 200) {
  require(!log_weights.empty(), "calibration needs at least one weight");
  require(tolerance > 0.0, "calibration tolerance must be > 0");
  if (target >= 1.0) return std::numeric_limits<double>::infinity();
  if (target <= 0.0) return -std::numeric_limits<double>::infinity();
  double lo_w = std::numeric_limits<double>::infinity(), hi_w = -lo_w;
  for (double w : log_weights) {
    if (!std::isfinite(w)) throw NumericalError("non-finite calibration weight");
    lo_w = std::min(lo_w, w);
    hi_w = std::max(hi_w, w);
  }
  const auto mean_at = [&](double s) {
    double acc = 0.0;
    for (double w : log_weights) acc += std::exp(std::min(0.0, s + w));
    return acc / static_cast<double>(log_weights.size());
  };
  double lo = -hi_w - 60.0;  // mean <= e^-60
  double hi = -lo_w;         // mean == 1
  for (int step = 0; step < max_steps; ++step) {
    const double mid = 0.5 * (lo + hi);
    const double m = mean_at(mid);
    if (std::abs(m - target) <= tolerance) return mid;
    (m < target ? lo : hi) = mid;
  }
  throw ConvergenceError("calibration did not reach tolerance in " + std::to_string(max_steps) + " steps");
}

struct CalibrationResult {
  double log_alpha = 0.0;
  double achieved_flip_rate = 0.0;
  NoiseSpec spec;  // copy of the input with log_alpha filled in

  double alpha() const { return std::exp(log_alpha); }
};

/// Mean flip probability of a calibrated spec over a labeled reference set.
inline double mean_flip_probability(const NoiseSpec& spec, const LabeledDataset& reference,
                                    const GaussianMixture& mixture) {
  double acc = 0.0;
  for (int i = 0; i < reference.size(); ++i) {
    const Vector lp = mixture.clean_log_posterior(reference.row(i));
    acc += 1.0 - keep_probability(spec, lp, reference.true_labels[static_cast<std::size_t>(i)]);
  }
  return acc / reference.size();
}

inline CalibrationResult calibrate(const NoiseSpec& spec, const LabeledDataset& reference,
                                   const GaussianMixture& mixture, double tolerance = 1e-4) {
  require(needs_calibration(spec.kind), "calibrate() applies to resampling, inverse_resampling, gap_min and gap_max");
  require(reference.size() >= 1, "calibration reference set is empty");
  NoiseSpec base = spec;
  base.log_alpha.reset();
  base.validate(mixture.classes());
  std::vector<double> lw(static_cast<std::size_t>(reference.size()));
  for (int i = 0; i < reference.size(); ++i) {
    const int y = reference.true_labels[static_cast<std::size_t>(i)];
    require(y >= 0 && y < mixture.classes(), "reference label out of range");
    lw[static_cast<std::size_t>(i)] = log_keep_weight(spec.kind, mixture.clean_log_posterior(reference.row(i)), y);
  }
  CalibrationResult out;
  out.log_alpha = calibrate_log_scale(lw, 1.0 - spec.epsilon, tolerance);
  out.spec = base;
  out.spec.log_alpha = out.log_alpha;
  double keep = 0.0;
  for (double w : lw) keep += std::exp(std::min(0.0, out.log_alpha + w));
  out.achieved_flip_rate = std::isinf(out.log_alpha) ? (out.log_alpha > 0 ? 0.0 : 1.0)
                                                     : 1.0 - keep / static_cast<double>(lw.size());
  return out;
}

/// Returns the noise spec ready for use: calibrated against `reference` when needed.
inline NoiseSpec prepare(const NoiseSpec& spec, const LabeledDataset& reference, const GaussianMixture& mixture,
                         double tolerance = 1e-4) {
  if (spec.calibrated()) return spec;
  return calibrate(spec, reference, mixture, tolerance).spec;
}

/// Calibrated gap_max channel: keep probability inversely proportional to the
/// margin r(x), all flip mass on the most likely wrong class. This is the
/// worst case for clean-label prediction.
inline NoiseSpec worst_case_channel(const GaussianMixture& mixture, double epsilon, const LabeledDataset& reference) {
  return calibrate(NoiseSpec::feature(NoiseKind::gap_max, epsilon), reference, mixture).spec;
}

// ---------------------------------------------------------------------------
// Application
// ---------------------------------------------------------------------------

enum class FlipMode { bernoulli, exact_count };

inline std::string_view to_string(FlipMode m) { return m == FlipMode::bernoulli ? "bernoulli" : "exact_count"; }

inline FlipMode parse_flip_mode(std::string_view s) {
  if (s == "bernoulli") return FlipMode::bernoulli;
  if (s == "exact_count") return FlipMode::exact_count;
  throw ParameterError("unknown flip mode '" + std::string(s) + "'");
}

/// Inverse-CDF draw from a probability vector.
inline int draw_index(const Vector& probs, double u) {
  double acc = 0.0;
  int last = -1;
  for (int j = 0; j < probs.size(); ++j) {
    if (probs[j] <= 0.0) continue;
    acc += probs[j];
    last = j;
    if (u < acc) return j;
  }
  return last;
}

/// Picks `count` indices by weighted sampling without replacement
/// (Efraimidis-Spirakis keys). Zero-weight items are only taken once every
/// positive-weight item is chosen, in uniformly random order.
inline std::vector<int> weighted_sample_without_replacement(std::span<const double> weights, int count,
                                                            std::mt19937_64& rng) {
  require(count >= 0 && count <= static_cast<int>(weights.size()), "sample count out of range");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  struct Key {
    double key, tie;
    int index;
  };
  std::vector<Key> keys(weights.size());
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double u = std::max(unit(rng), std::numeric_limits<double>::min());
    const double w = weights[i];
    keys[i] = {w > 0.0 ? std::log(u) / w : -std::numeric_limits<double>::infinity(), u, static_cast<int>(i)};
  }
  const auto better = [](const Key& a, const Key& b) {
    if (a.key != b.key) return a.key > b.key;
    if (a.tie != b.tie) return a.tie > b.tie;
    return a.index < b.index;
  };
  std::partial_sort(keys.begin(), keys.begin() + count, keys.end(), better);
  std::vector<int> out(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) out[static_cast<std::size_t>(i)] = keys[static_cast<std::size_t>(i)].index;
  std::sort(out.begin(), out.end());
  return out;
}

namespace detail {

inline LabeledDataset apply_impl(const NoiseSpec& spec, const LabeledDataset& dataset, int c,
                                 const GaussianMixture* mixture, std::uint64_t seed, FlipMode mode) {
  spec.validate(c);
  if (!spec.calibrated()) throw StateError("feature-dependent noise spec is not calibrated");
  if (is_feature_dependent(spec.kind)) require(mixture != nullptr, "feature-dependent noise needs the mixture");
  const int n = dataset.size();
  for (int y : dataset.true_labels) require(y >= 0 && y < c, "true label out of range for the channel");

  std::vector<double> keep(static_cast<std::size_t>(n));
  std::vector<Vector> dists(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const int k = dataset.true_labels[static_cast<std::size_t>(i)];
    if (mixture) {
      const Vector lp = mixture->clean_log_posterior(dataset.row(i));
      keep[static_cast<std::size_t>(i)] = keep_probability(spec, lp, k);
      dists[static_cast<std::size_t>(i)] = flip_distribution(spec, c, &lp, k);
    } else {
      keep[static_cast<std::size_t>(i)] = 1.0 - spec.epsilon;
      dists[static_cast<std::size_t>(i)] = flip_distribution(spec, c, nullptr, k);
    }
  }

  std::mt19937_64 rng(derive_seed(seed, 0x6e6f697365ULL));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<bool> flip(static_cast<std::size_t>(n), false);
  if (mode == FlipMode::bernoulli) {
    for (int i = 0; i < n; ++i) flip[static_cast<std::size_t>(i)] = unit(rng) >= keep[static_cast<std::size_t>(i)];
  } else {
    std::vector<double> w(keep.size());
    for (std::size_t i = 0; i < keep.size(); ++i) w[i] = 1.0 - keep[i];
    const int count = static_cast<int>(std::lround(spec.epsilon * n));
    for (int i : weighted_sample_without_replacement(w, count, rng)) flip[static_cast<std::size_t>(i)] = true;
  }

  Labels noisy = dataset.true_labels;
  for (int i = 0; i < n; ++i) {
    const double u = unit(rng);  // drawn for every row to keep the stream aligned
    if (flip[static_cast<std::size_t>(i)]) noisy[static_cast<std::size_t>(i)] = draw_index(dists[static_cast<std::size_t>(i)], u);
  }
  LabeledDataset out = dataset;
  out.set_noisy(std::move(noisy));
  return out;
}

}  // namespace detail

/// Applies a class-level spec (uniform or class-dependent) over c classes.
inline LabeledDataset apply(const NoiseSpec& spec, const LabeledDataset& dataset, int c, std::uint64_t seed,
                            FlipMode mode = FlipMode::bernoulli) {
  return detail::apply_impl(spec, dataset, c, nullptr, seed, mode);
}

/// Applies any calibrated spec; the mixture supplies clean posteriors.
inline LabeledDataset apply(const NoiseSpec& spec, const LabeledDataset& dataset, const GaussianMixture& mixture,
                            std::uint64_t seed, FlipMode mode = FlipMode::bernoulli) {
  return detail::apply_impl(spec, dataset, mixture.classes(), &mixture, seed, mode);
}

}  // namespace lnoise
