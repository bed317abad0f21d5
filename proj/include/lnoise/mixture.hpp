#pragma once

// Gaussian class-conditional generative model: class priors plus one Gaussian
// density per class, stratified sampling, and the exact clean posterior
// evaluated in log space.

#include "lnoise/core.hpp"

#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace lnoise {

class GaussianComponent {
 public:
  GaussianComponent(Vector mean, Matrix covariance)
      : mean_(std::move(mean)), covariance_(std::move(covariance)) {
    const auto d = mean_.size();
    require(d >= 1, "component dimension must be >= 1");
    require(covariance_.rows() == d && covariance_.cols() == d,
            "covariance must be d x d with d = mean length");
    require(mean_.allFinite() && covariance_.allFinite(), "component parameters must be finite");
    require((covariance_ - covariance_.transpose()).cwiseAbs().maxCoeff() <=
                1e-12 * std::max(1.0, covariance_.cwiseAbs().maxCoeff()),
            "covariance must be symmetric");
    llt_.compute(covariance_);
    require(llt_.info() == Eigen::Success, "covariance must be positive definite");
    const Matrix l = llt_.matrixL();
    double log_det = 0.0;
    for (Eigen::Index i = 0; i < d; ++i) log_det += 2.0 * std::log(l(i, i));
    log_norm_ = -0.5 * (static_cast<double>(d) * std::log(2.0 * std::numbers::pi) + log_det);
  }

  /// Isotropic component with variance `variance` in every direction.
  static GaussianComponent isotropic(Vector mean, double variance = 1.0) {
    const auto d = mean.size();
    return {std::move(mean), Matrix::Identity(d, d) * variance};
  }

  int dim() const { return static_cast<int>(mean_.size()); }
  const Vector& mean() const { return mean_; }
  const Matrix& covariance() const { return covariance_; }

  double log_density(const Vector& x) const {
    const Vector z = llt_.matrixL().solve(x - mean_);
    return log_norm_ - 0.5 * z.squaredNorm();
  }

  /// mean + L z for a standard-normal z.
  Vector transform(const Vector& z) const { return mean_ + llt_.matrixL() * z; }

 private:
  Vector mean_;
  Matrix covariance_;
  Eigen::LLT<Matrix> llt_;
  double log_norm_ = 0.0;
};

class GaussianMixture {
 public:
  GaussianMixture(std::vector<GaussianComponent> components, std::vector<double> priors)
      : components_(std::move(components)), priors_(std::move(priors)) {
    require(!components_.empty(), "mixture needs at least one component");
    require(components_.size() == priors_.size(), "one prior per component required");
    double total = 0.0;
    for (double p : priors_) {
      require(std::isfinite(p) && p >= 0.0, "priors must be nonnegative");
      total += p;
    }
    require(std::abs(total - 1.0) <= 1e-12, "priors must sum to 1");
    const int d = components_.front().dim();
    for (const auto& comp : components_)
      require(comp.dim() == d, "all components must share one dimension");
    log_priors_.resize(priors_.size());
    for (std::size_t k = 0; k < priors_.size(); ++k) log_priors_[k] = std::log(priors_[k]);
  }

  /// Equal-prior mixture over the given components.
  static GaussianMixture uniform(std::vector<GaussianComponent> components) {
    const auto c = components.size();
    return {std::move(components), std::vector<double>(c, 1.0 / static_cast<double>(c))};
  }

  int classes() const { return static_cast<int>(components_.size()); }
  int dim() const { return components_.front().dim(); }
  const std::vector<GaussianComponent>& components() const { return components_; }
  const GaussianComponent& component(int k) const { return components_.at(static_cast<std::size_t>(k)); }
  const std::vector<double>& priors() const { return priors_; }

  /// log(pi_k) + log f_k(x) for every class.
  Vector log_joint(const Vector& x) const {
    require(x.size() == dim(), "point dimension does not match mixture");
    Vector out(classes());
    for (int k = 0; k < classes(); ++k)
      out[k] = log_priors_[static_cast<std::size_t>(k)] + components_[static_cast<std::size_t>(k)].log_density(x);
    return out;
  }

  /// log m*_k(x), normalized with log-sum-exp.
  Vector clean_log_posterior(const Vector& x) const {
    Vector lj = log_joint(x);
    const double norm = log_sum_exp(lj);
    if (!std::isfinite(norm)) throw NumericalError("all class densities vanish at the query point");
    lj.array() -= norm;
    return lj;
  }

 private:
  std::vector<GaussianComponent> components_;
  std::vector<double> priors_;
  std::vector<double> log_priors_;
};

/// m*(x): probability of each true class given x.
inline Vector clean_posterior(const GaussianMixture& mixture, const Vector& x) {
  Vector post = mixture.clean_log_posterior(x).array().exp();
  post /= post.sum();
  return post;
}

enum class LabelSource { truth, noisy };

struct LabeledDataset {
  Matrix features;  // n x d, one row per sample
  Labels true_labels;
  std::optional<Labels> noisy_labels;
  std::optional<std::vector<bool>> flip_mask;

  int size() const { return static_cast<int>(true_labels.size()); }
  int dim() const { return static_cast<int>(features.cols()); }
  Vector row(int i) const { return features.row(i).transpose(); }

  const Labels& labels(LabelSource source) const {
    if (source == LabelSource::truth) return true_labels;
    if (!noisy_labels) throw StateError("dataset carries no noisy labels");
    return *noisy_labels;
  }

  /// Largest label + 1 across true and noisy labels.
  int label_count() const {
    int hi = -1;
    for (int y : true_labels) hi = std::max(hi, y);
    if (noisy_labels)
      for (int y : *noisy_labels) hi = std::max(hi, y);
    return hi + 1;
  }

  void validate() const {
    require(features.rows() == static_cast<Eigen::Index>(true_labels.size()),
            "feature rows must match label count");
    for (int y : true_labels) require(y >= 0, "labels must be nonnegative");
    require(noisy_labels.has_value() == flip_mask.has_value(),
            "noisy labels and flip mask must be present together");
    if (noisy_labels) {
      require(noisy_labels->size() == true_labels.size() && flip_mask->size() == true_labels.size(),
              "noisy labels and flip mask must match dataset length");
      for (std::size_t i = 0; i < true_labels.size(); ++i)
        require((*flip_mask)[i] == ((*noisy_labels)[i] != true_labels[i]),
                "flip mask disagrees with noisy labels at row " + std::to_string(i));
    }
  }

  void set_noisy(Labels noisy) {
    require(noisy.size() == true_labels.size(), "noisy labels must match dataset length");
    std::vector<bool> mask(noisy.size());
    for (std::size_t i = 0; i < noisy.size(); ++i) mask[i] = noisy[i] != true_labels[i];
    noisy_labels = std::move(noisy);
    flip_mask = std::move(mask);
  }

  /// Copy of rows [begin, end).
  LabeledDataset slice(int begin, int end) const {
    LabeledDataset out;
    out.features = features.middleRows(begin, end - begin);
    out.true_labels.assign(true_labels.begin() + begin, true_labels.begin() + end);
    if (noisy_labels) {
      out.noisy_labels = Labels(noisy_labels->begin() + begin, noisy_labels->begin() + end);
      out.flip_mask = std::vector<bool>(flip_mask->begin() + begin, flip_mask->begin() + end);
    }
    return out;
  }
};

// ---------------------------------------------------------------------------
// Benchmark layout
//
// Classes sit on a jittered grid of "sites" spaced max(2 * separation, 5)
// apart. Every third class (k % 3 == 2) shares the site of class k - 1 at an
// offset of length 1.0-1.5 in a seeded direction, so such pairs overlap
// (distance < 2 sigma) while sites are far apart (> 6 sigma for any
// mixture with c >= 4). Covariances are unit isotropic, priors equal.
// ---------------------------------------------------------------------------

inline GaussianMixture make_benchmark_mixture(int c, int d, double separation, std::uint64_t seed) {
  require(c >= 2, "benchmark mixture needs c >= 2");
  require(d >= 1, "benchmark mixture needs d >= 1");
  require(std::isfinite(separation) && separation > 0.0, "separation must be > 0");

  std::mt19937_64 rng(derive_seed(seed, 0x6d6978ULL));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  const double spacing = std::max(2.0 * separation, 5.0);
  const double jitter = 0.05 * spacing;

  int sites = 0;
  for (int k = 0; k < c; ++k)
    if (k % 3 != 2) ++sites;
  const int width = d == 1 ? sites : static_cast<int>(std::ceil(std::sqrt(static_cast<double>(sites))));

  std::vector<GaussianComponent> comps;
  comps.reserve(static_cast<std::size_t>(c));
  int site = 0;
  for (int k = 0; k < c; ++k) {
    Vector mean = Vector::Zero(d);
    if (k % 3 == 2) {
      Vector dir(d);
      for (int j = 0; j < d; ++j) dir[j] = gauss(rng);
      if (dir.norm() == 0.0) dir[0] = 1.0;
      dir.normalize();
      mean = comps.back().mean() + (1.0 + 0.5 * unit(rng)) * dir;
    } else {
      mean[0] = spacing * (site % width);
      if (d >= 2) mean[1] = spacing * (site / width);
      for (int j = 0; j < d; ++j) mean[j] += jitter * (2.0 * unit(rng) - 1.0);
      ++site;
    }
    comps.push_back(GaussianComponent::isotropic(std::move(mean)));
  }
  return GaussianMixture::uniform(std::move(comps));
}

/// Equal-prior unit-variance classes on a square grid with the given spacing;
/// every pair of means is at least `spacing` apart.
inline GaussianMixture make_grid_mixture(int c, int d, double spacing) {
  require(c >= 1 && d >= 1, "grid mixture needs c >= 1, d >= 1");
  require(spacing > 0.0, "spacing must be > 0");
  const int width = d == 1 ? c : static_cast<int>(std::ceil(std::sqrt(static_cast<double>(c))));
  std::vector<GaussianComponent> comps;
  for (int k = 0; k < c; ++k) {
    Vector mean = Vector::Zero(d);
    mean[0] = spacing * (k % width);
    if (d >= 2) mean[1] = spacing * (k / width);
    comps.push_back(GaussianComponent::isotropic(std::move(mean)));
  }
  return GaussianMixture::uniform(std::move(comps));
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

namespace detail {

inline void fill_point(const GaussianComponent& comp, std::mt19937_64& rng,
                       std::normal_distribution<double>& gauss, Matrix& out, int row) {
  Vector z(comp.dim());
  for (int j = 0; j < comp.dim(); ++j) z[j] = gauss(rng);
  out.row(row) = comp.transform(z).transpose();
}

}  // namespace detail

/// Stratified draw: exactly `n_per_class` rows per class, class 0 first.
inline LabeledDataset sample(const GaussianMixture& mixture, int n_per_class, std::uint64_t seed) {
  require(n_per_class >= 1, "n_per_class must be >= 1");
  const int c = mixture.classes();
  LabeledDataset out;
  out.features.resize(static_cast<Eigen::Index>(c) * n_per_class, mixture.dim());
  out.true_labels.resize(static_cast<std::size_t>(c) * static_cast<std::size_t>(n_per_class));
  std::mt19937_64 rng(derive_seed(seed, 0x737472ULL));
  std::normal_distribution<double> gauss(0.0, 1.0);
  int row = 0;
  for (int k = 0; k < c; ++k)
    for (int i = 0; i < n_per_class; ++i, ++row) {
      detail::fill_point(mixture.component(k), rng, gauss, out.features, row);
      out.true_labels[static_cast<std::size_t>(row)] = k;
    }
  return out;
}

/// Prior-weighted draw of `n` i.i.d. pairs; used by Monte Carlo scoring.
inline LabeledDataset draw(const GaussianMixture& mixture, int n, std::uint64_t seed) {
  require(n >= 1, "n must be >= 1");
  LabeledDataset out;
  out.features.resize(n, mixture.dim());
  out.true_labels.resize(static_cast<std::size_t>(n));
  std::mt19937_64 rng(derive_seed(seed, 0x696964ULL));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::discrete_distribution<int> pick(mixture.priors().begin(), mixture.priors().end());
  for (int i = 0; i < n; ++i) {
    const int k = pick(rng);
    detail::fill_point(mixture.component(k), rng, gauss, out.features, i);
    out.true_labels[static_cast<std::size_t>(i)] = k;
  }
  return out;
}

/// Clean log posteriors for every row, one row per sample (n x c).
inline Matrix clean_log_posteriors(const GaussianMixture& mixture, const Matrix& features) {
  Matrix out(features.rows(), mixture.classes());
  for (Eigen::Index i = 0; i < features.rows(); ++i)
    out.row(i) = mixture.clean_log_posterior(features.row(i).transpose()).transpose();
  return out;
}

}  // namespace lnoise
