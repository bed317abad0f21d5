#pragma once

// Small multilayer perceptron d -> 10 -> 10 -> c with tanh hidden units and a
// softmax output, trained with minibatch Adam on cross-entropy.

#include "lnoise/bayes.hpp"
#include "lnoise/mixture.hpp"

#include <array>
#include <numeric>
#include <random>

namespace lnoise {

struct TrainingError : NumericalError {
  using NumericalError::NumericalError;
};

inline constexpr int kHiddenWidth = 10;

/// Layer l maps activations through `weights[l]` (fan_in x fan_out) plus `biases[l]`.
struct MLPParams {
  std::array<Matrix, 3> weights;
  std::array<Vector, 3> biases;

  int input_dim() const { return static_cast<int>(weights[0].rows()); }
  int classes() const { return static_cast<int>(weights[2].cols()); }

  std::size_t size() const {
    std::size_t n = 0;
    for (int l = 0; l < 3; ++l) n += static_cast<std::size_t>(weights[l].size() + biases[l].size());
    return n;
  }

  /// Flat coordinate access: layer by layer, weights (column-major) then biases.
  double& coeff(std::size_t index) {
    for (int l = 0; l < 3; ++l) {
      const auto nw = static_cast<std::size_t>(weights[l].size());
      if (index < nw) return weights[l].data()[index];
      index -= nw;
      const auto nb = static_cast<std::size_t>(biases[l].size());
      if (index < nb) return biases[l].data()[index];
      index -= nb;
    }
    throw ParameterError("parameter index out of range");
  }

  double coeff(std::size_t index) const { return const_cast<MLPParams&>(*this).coeff(index); }

  bool all_finite() const {
    for (int l = 0; l < 3; ++l)
      if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
    return true;
  }

  static MLPParams zeros_like(const MLPParams& p) {
    MLPParams z;
    for (int l = 0; l < 3; ++l) {
      z.weights[l] = Matrix::Zero(p.weights[l].rows(), p.weights[l].cols());
      z.biases[l] = Vector::Zero(p.biases[l].size());
    }
    return z;
  }

  bool operator==(const MLPParams& o) const {
    for (int l = 0; l < 3; ++l)
      if (weights[l] != o.weights[l] || biases[l] != o.biases[l]) return false;
    return true;
  }
};

struct TrainConfig {
  double learning_rate = 0.001;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int epochs = 200;
  int batch_size = 32;
  std::uint64_t seed = 0;

  void validate() const {
    require(learning_rate > 0.0 && std::isfinite(learning_rate), "learning_rate must be > 0");
    require(epochs >= 1, "epochs must be >= 1");
    require(batch_size >= 1, "batch_size must be >= 1");
    require(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0,
            "Adam betas must be in [0, 1)");
    require(adam_eps > 0.0, "adam_eps must be > 0");
  }
};

/// Glorot-uniform weights, zero biases.
inline MLPParams init(int d, int c, std::uint64_t seed) {
  require(d >= 1, "input dimension must be >= 1");
  require(c >= 2, "class count must be >= 2");
  const std::array<int, 4> widths{d, kHiddenWidth, kHiddenWidth, c};
  std::mt19937_64 rng(derive_seed(seed, 0x696e6974ULL));
  MLPParams p;
  for (int l = 0; l < 3; ++l) {
    const int fan_in = widths[static_cast<std::size_t>(l)], fan_out = widths[static_cast<std::size_t>(l) + 1];
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> u(-bound, bound);
    p.weights[l].resize(fan_in, fan_out);
    for (int i = 0; i < fan_in; ++i)
      for (int j = 0; j < fan_out; ++j) p.weights[l](i, j) = u(rng);
    p.biases[l] = Vector::Zero(fan_out);
  }
  return p;
}

namespace detail {

struct Forward {
  Matrix a1, a2, log_probs;  // hidden activations and log-softmax outputs, one row per sample
};

inline Forward forward(const MLPParams& p, const Matrix& x) {
  require(x.cols() == p.input_dim(), "input dimension does not match the network");
  Forward f;
  f.a1 = ((x * p.weights[0]).rowwise() + p.biases[0].transpose()).array().tanh();
  f.a2 = ((f.a1 * p.weights[1]).rowwise() + p.biases[1].transpose()).array().tanh();
  Matrix logits = (f.a2 * p.weights[2]).rowwise() + p.biases[2].transpose();
  const Vector hi = logits.rowwise().maxCoeff();
  logits.colwise() -= hi;
  const Vector lse = logits.array().exp().rowwise().sum().log();
  logits.colwise() -= lse;
  f.log_probs = std::move(logits);
  return f;
}

}  // namespace detail

/// Softmax outputs, one row per input row.
inline Matrix predict_proba(const MLPParams& params, const Matrix& x) {
  return detail::forward(params, x).log_probs.array().exp();
}

struct LossAndGrad {
  double loss = 0.0;
  MLPParams grad;
};

/// Mean cross-entropy over the batch and its full gradient.
inline LossAndGrad loss_and_grad(const MLPParams& params, const LabeledDataset& batch, LabelSource source) {
  const int n = batch.size();
  require(n >= 1, "loss needs a nonempty batch");
  const Labels& y = batch.labels(source);
  const int c = params.classes();
  for (int label : y) require(label >= 0 && label < c, "label out of range for the network");

  const auto f = detail::forward(params, batch.features);
  if (!f.log_probs.allFinite()) throw NumericalError("non-finite activations in forward pass");

  LossAndGrad out;
  Matrix delta = f.log_probs.array().exp();  // softmax - onehot, scaled by 1/n
  for (int i = 0; i < n; ++i) {
    const int yi = y[static_cast<std::size_t>(i)];
    out.loss -= f.log_probs(i, yi);
    delta(i, yi) -= 1.0;
  }
  out.loss /= n;
  delta /= n;

  out.grad.weights[2] = f.a2.transpose() * delta;
  out.grad.biases[2] = delta.colwise().sum().transpose();
  Matrix d2 = (delta * params.weights[2].transpose()).array() * (1.0 - f.a2.array().square());
  out.grad.weights[1] = f.a1.transpose() * d2;
  out.grad.biases[1] = d2.colwise().sum().transpose();
  Matrix d1 = (d2 * params.weights[1].transpose()).array() * (1.0 - f.a1.array().square());
  out.grad.weights[0] = batch.features.transpose() * d1;
  out.grad.biases[0] = d1.colwise().sum().transpose();
  if (!std::isfinite(out.loss) || !out.grad.all_finite())
    throw NumericalError("non-finite loss or gradient (loss = " + format_double(out.loss) + ")");
  return out;
}

/// Minibatch Adam for `config.epochs` epochs, reshuffling every epoch.
inline MLPParams train(const LabeledDataset& dataset, const TrainConfig& config, LabelSource source,
                       int classes = 0) {
  config.validate();
  const int n = dataset.size();
  require(n >= 1, "training needs a nonempty dataset");
  const Labels& labels = dataset.labels(source);
  int c = classes;
  if (c == 0) c = std::max(2, dataset.label_count());

  MLPParams params = init(dataset.dim(), c, config.seed);
  MLPParams m = MLPParams::zeros_like(params), v = MLPParams::zeros_like(params);
  std::mt19937_64 rng(derive_seed(config.seed, 0x7368756666ULL));
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  LabeledDataset batch;
  long step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (int start = 0; start < n; start += config.batch_size) {
      const int len = std::min(config.batch_size, n - start);
      batch.features.resize(len, dataset.dim());
      batch.true_labels.resize(static_cast<std::size_t>(len));
      for (int i = 0; i < len; ++i) {
        const int src = order[static_cast<std::size_t>(start + i)];
        batch.features.row(i) = dataset.features.row(src);
        batch.true_labels[static_cast<std::size_t>(i)] = labels[static_cast<std::size_t>(src)];
      }
      LossAndGrad lg;
      try {
        lg = loss_and_grad(params, batch, LabelSource::truth);
      } catch (const NumericalError& e) {
        throw TrainingError("training diverged at epoch " + std::to_string(epoch) + ": " + e.what());
      }
      ++step;
      const double bc1 = 1.0 - std::pow(config.adam_beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(config.adam_beta2, static_cast<double>(step));
      const auto update = [&](auto& p, auto& mm, auto& vv, const auto& g) {
        mm = config.adam_beta1 * mm + (1.0 - config.adam_beta1) * g;
        vv = (config.adam_beta2 * vv.array() + (1.0 - config.adam_beta2) * g.array().square()).matrix();
        p.array() -= config.learning_rate * (mm.array() / bc1) / ((vv.array() / bc2).sqrt() + config.adam_eps);
      };
      for (int l = 0; l < 3; ++l) {
        update(params.weights[l], m.weights[l], v.weights[l], lg.grad.weights[l]);
        update(params.biases[l], m.biases[l], v.biases[l], lg.grad.biases[l]);
      }
    }
  }
  if (!params.all_finite()) throw TrainingError("training produced non-finite parameters");
  return params;
}

/// Predicted class per row (argmax, lowest index on ties).
inline Labels predict(const MLPParams& params, const Matrix& x) {
  const Matrix lp = detail::forward(params, x).log_probs;
  Labels out(static_cast<std::size_t>(lp.rows()));
  for (Eigen::Index i = 0; i < lp.rows(); ++i) {
    const Vector row = lp.row(i).transpose();
    out[static_cast<std::size_t>(i)] = argmax(row);
  }
  return out;
}

inline AccuracyEstimate evaluate(const MLPParams& params, const LabeledDataset& dataset, LabelSource source) {
  require(dataset.size() >= 1, "evaluation needs a nonempty dataset");
  const Labels& y = dataset.labels(source);
  const Labels pred = predict(params, dataset.features);
  long correct = 0;
  for (std::size_t i = 0; i < y.size(); ++i) correct += pred[i] == y[i];
  return AccuracyEstimate::from_counts(correct, dataset.size());
}

}  // namespace lnoise
