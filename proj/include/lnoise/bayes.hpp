#pragma once

// Plug-in classifiers built from known posteriors and their Monte Carlo
// accuracy against clean or freshly noised labels.

#include "lnoise/channels.hpp"
#include "lnoise/mixture.hpp"

#include <optional>
#include <random>
#include <variant>

namespace lnoise {

enum class PluginMode { clean_plugin, noisy_plugin };

/// How a prediction is read off the posterior. `argmax` is the plug-in
/// decision rule; `posterior_sample` predicts class k with probability m_k(x)
/// (a Gibbs classifier), whose expected accuracy is the pointwise average
/// sum_k m_k(x) P[label = k | x].
enum class Decision { argmax, posterior_sample };

class ClassifierHandle {
 public:
  static ClassifierHandle clean(const GaussianMixture& mixture, Decision decision = Decision::argmax) {
    return ClassifierHandle(PluginMode::clean_plugin, mixture, std::nullopt, decision);
  }

  static ClassifierHandle noisy(const GaussianMixture& mixture, NoiseSpec spec, Decision decision = Decision::argmax) {
    spec.validate(mixture.classes());
    if (!spec.calibrated()) throw StateError("noisy plug-in requires a calibrated noise spec");
    return ClassifierHandle(PluginMode::noisy_plugin, mixture, std::move(spec), decision);
  }

  PluginMode mode() const { return mode_; }
  Decision decision() const { return decision_; }
  const GaussianMixture& mixture() const { return *mixture_; }
  const std::optional<NoiseSpec>& spec() const { return spec_; }

  /// Posterior the classifier decides on: m*(x) or m(x).
  Vector posterior(const Vector& x) const { return posterior_from_log(mixture_->clean_log_posterior(x)); }

  Vector posterior_from_log(const Vector& log_post) const {
    if (mode_ == PluginMode::clean_plugin) return log_post.array().exp();
    if (matrix_) return matrix_->rows.transpose() * log_post.array().exp().matrix();
    return noisy_posterior_from_log(*spec_, mixture_->classes(), log_post);
  }

 private:
  ClassifierHandle(PluginMode mode, const GaussianMixture& mixture, std::optional<NoiseSpec> spec, Decision decision)
      : mode_(mode), mixture_(&mixture), spec_(std::move(spec)), decision_(decision) {
    if (spec_ && spec_->kind == NoiseKind::class_dependent) matrix_ = transition_matrix(*spec_, mixture.classes());
  }

  PluginMode mode_;
  const GaussianMixture* mixture_;
  std::optional<NoiseSpec> spec_;
  std::optional<TransitionMatrix> matrix_;
  Decision decision_;
};

/// Argmax of the handle's posterior, lowest index on ties.
inline int classify(const ClassifierHandle& handle, const Vector& x) { return argmax(handle.posterior(x)); }

/// Prediction under the handle's decision rule; `u` is a uniform draw used by
/// posterior sampling.
inline int predict(const ClassifierHandle& handle, const Vector& log_post, double u) {
  const Vector p = handle.posterior_from_log(log_post);
  if (handle.decision() == Decision::argmax) return argmax(p);
  return draw_index(p / p.sum(), u);
}

/// argmax_{i != k} m*_i(x), lowest index on ties.
inline int worst_flip_target(const GaussianMixture& mixture, const Vector& x, int k) {
  require(mixture.classes() >= 2, "worst flip target needs c >= 2");
  require(k >= 0 && k < mixture.classes(), "true class out of range");
  return argmax_excluding(mixture.clean_log_posterior(x), k);
}

struct AccuracyEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  long n = 0;

  static AccuracyEstimate from_counts(long correct, long n) {
    require(n >= 1, "accuracy needs n >= 1");
    const double p = static_cast<double>(correct) / static_cast<double>(n);
    return {p, std::sqrt(p * (1.0 - p) / static_cast<double>(n)), n};
  }
};

/// Labels used for scoring: the clean labels or labels passed through a spec.
using LabelChannel = std::variant<std::monostate, NoiseSpec>;

inline constexpr std::monostate kCleanLabels{};

/// Draws n prior-weighted points, labels them cleanly or through `labels`
/// (fresh noise, independent of any training labels), and scores the handle.
inline AccuracyEstimate mc_accuracy(const ClassifierHandle& handle, const GaussianMixture& mixture,
                                    const LabelChannel& labels, int n, std::uint64_t seed,
                                    FlipMode mode = FlipMode::bernoulli) {
  require(n >= 1, "mc_accuracy needs n >= 1");
  LabeledDataset data = draw(mixture, n, derive_seed(seed, 1));
  const Labels* target = &data.true_labels;
  if (const auto* spec = std::get_if<NoiseSpec>(&labels)) {
    if (!spec->calibrated()) throw StateError("label noise spec is not calibrated");
    data = apply(*spec, data, mixture, derive_seed(seed, 2), mode);
    target = &*data.noisy_labels;
  }
  std::mt19937_64 rng(derive_seed(seed, 3));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  long correct = 0;
  for (int i = 0; i < n; ++i) {
    const Vector lp = mixture.clean_log_posterior(data.row(i));
    if (predict(handle, lp, unit(rng)) == (*target)[static_cast<std::size_t>(i)]) ++correct;
  }
  return AccuracyEstimate::from_counts(correct, n);
}

/// Scores the handle on a fixed labeled dataset.
inline AccuracyEstimate evaluate_plugin(const ClassifierHandle& handle, const LabeledDataset& data,
                                        LabelSource source, std::uint64_t seed = 0) {
  require(data.size() >= 1, "evaluation needs a nonempty dataset");
  const Labels& target = data.labels(source);
  std::mt19937_64 rng(derive_seed(seed, 3));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  long correct = 0;
  for (int i = 0; i < data.size(); ++i) {
    const Vector lp = handle.mixture().clean_log_posterior(data.row(i));
    if (predict(handle, lp, unit(rng)) == target[static_cast<std::size_t>(i)]) ++correct;
  }
  return AccuracyEstimate::from_counts(correct, data.size());
}

/// Empirical mean of max_k m*_k(x) over prior-weighted draws.
inline double estimate_m_bar(const GaussianMixture& mixture, int n, std::uint64_t seed) {
  const LabeledDataset data = draw(mixture, n, seed);
  double acc = 0.0;
  for (int i = 0; i < n; ++i) acc += std::exp(mixture.clean_log_posterior(data.row(i)).maxCoeff());
  return acc / n;
}

}  // namespace lnoise
