#pragma once

// Sweep engine: noise kinds x epsilon x replicate seeds x classifiers on
// benchmark mixtures, producing a tidy, totally ordered result table.
//
// Seeding: every cell derives its seed from (master_seed, cell key) with
// derive_seed(), a chain of SplitMix64 finalizers over the key fields, so a
// cell's randomness does not depend on which worker runs it or in what order.
// Features are drawn once per class count and shared by every noise setting;
// only labels are resampled per cell.

#include "lnoise/bayes.hpp"
#include "lnoise/channels.hpp"
#include "lnoise/learner.hpp"
#include "lnoise/mixture.hpp"
#include "lnoise/theory.hpp"

#include <atomic>
#include <cstring>
#include <exception>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

namespace lnoise {

enum class ClassifierKind { bayes_plugin, bayes_sample, mlp };

inline std::string_view to_string(ClassifierKind k) {
  switch (k) {
    case ClassifierKind::bayes_plugin: return "bayes_plugin";
    case ClassifierKind::bayes_sample: return "bayes_sample";
    case ClassifierKind::mlp: return "mlp";
  }
  return "?";
}

inline ClassifierKind parse_classifier(std::string_view s) {
  if (s == "bayes_plugin") return ClassifierKind::bayes_plugin;
  if (s == "bayes_sample") return ClassifierKind::bayes_sample;
  if (s == "mlp") return ClassifierKind::mlp;
  throw ParameterError("unknown classifier '" + std::string(s) + "'");
}

struct NoiseSetting {
  NoiseKind kind = NoiseKind::uniform;
  std::vector<int> spreads;  // class_dependent only
};

/// `benchmark`: overlapping pairs plus distant sites (make_benchmark_mixture);
/// `grid`: every pair of means at least `separation` apart (make_grid_mixture).
enum class MixtureLayout { benchmark, grid };

inline std::string_view to_string(MixtureLayout l) { return l == MixtureLayout::benchmark ? "benchmark" : "grid"; }

inline MixtureLayout parse_layout(std::string_view s) {
  if (s == "benchmark") return MixtureLayout::benchmark;
  if (s == "grid") return MixtureLayout::grid;
  throw ParameterError("unknown mixture layout '" + std::string(s) + "'");
}

struct SweepConfig {
  std::vector<int> classes{10};
  int dim = 2;
  double separation = 3.0;
  MixtureLayout layout = MixtureLayout::benchmark;
  int n_train_per_class = 100;
  int n_test_per_class = 100;
  std::vector<double> epsilons = theory::epsilon_grid(0.0, 1.0, 0.1);
  std::vector<NoiseSetting> noise{{NoiseKind::uniform, {}}};
  std::vector<ClassifierKind> classifiers{ClassifierKind::bayes_plugin};
  int replicates = 5;
  std::uint64_t master_seed = 0;
  FlipMode flip_mode = FlipMode::bernoulli;
  TrainConfig train;  // seed field ignored; derived per cell

  void validate() const {
    require(!classes.empty(), "sweep needs at least one class count");
    for (int c : classes) require(c >= 2, "class counts must be >= 2");
    require(dim >= 1, "dim must be >= 1");
    require(separation > 0.0, "separation must be > 0");
    require(n_train_per_class >= 1 && n_test_per_class >= 1, "per-class sample counts must be >= 1");
    require(!epsilons.empty(), "sweep needs a nonempty epsilon grid");
    for (double e : epsilons) require(e >= 0.0 && e <= 1.0, "epsilon values must be in [0, 1]");
    require(!noise.empty(), "sweep needs at least one noise kind");
    for (const auto& n : noise) {
      if (n.kind == NoiseKind::class_dependent)
        require(!n.spreads.empty(), "class_dependent noise needs a list of spreads");
      else
        require(n.spreads.empty(), "spreads apply to class_dependent noise only");
    }
    require(!classifiers.empty(), "sweep needs at least one classifier");
    require(replicates >= 1, "replicates must be >= 1");
    train.validate();
  }
};

struct ResultRow {
  int c = 0;
  int d = 0;
  NoiseKind noise_kind = NoiseKind::uniform;
  double epsilon = 0.0;
  int s = 0;  // c - 1 for uniform, spread for class_dependent, 0 for feature kinds
  int seed = 0;
  ClassifierKind classifier = ClassifierKind::bayes_plugin;
  LabelSource eval_labels = LabelSource::truth;
  double accuracy = 0.0;
  double std_error = 0.0;

  auto key() const { return std::tuple(c, d, noise_kind, epsilon, s, seed, classifier, eval_labels); }
};

struct TheoryOverlay {
  std::optional<double> noisy;
  std::optional<double> clean;
};

struct ResultTable {
  std::vector<ResultRow> rows;
  std::vector<TheoryOverlay> theory;  // empty, or one entry per row

  static constexpr const char* kHeader = "c,d,noise_kind,epsilon,s,seed,classifier,eval_labels,accuracy,std_error";

  void sort() {
    require(theory.empty(), "sort before overlaying theory");
    std::sort(rows.begin(), rows.end(), [](const ResultRow& a, const ResultRow& b) { return a.key() < b.key(); });
  }

  std::string to_csv() const {
    std::string out = kHeader;
    if (!theory.empty()) out += ",theory_noisy,theory_clean";
    out += '\n';
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto& r = rows[i];
      out += std::to_string(r.c) + "," + std::to_string(r.d) + "," + std::string(to_string(r.noise_kind)) + "," +
             format_double(r.epsilon) + "," + std::to_string(r.s) + "," + std::to_string(r.seed) + "," +
             std::string(to_string(r.classifier)) + "," + (r.eval_labels == LabelSource::truth ? "clean" : "noisy") +
             "," + format_double(r.accuracy) + "," + format_double(r.std_error);
      if (!theory.empty()) {
        out += ",";
        if (theory[i].noisy) out += format_double(*theory[i].noisy);
        out += ",";
        if (theory[i].clean) out += format_double(*theory[i].clean);
      }
      out += '\n';
    }
    return out;
  }
};

namespace detail {

struct SweepData {
  GaussianMixture mixture;
  LabeledDataset train;
  LabeledDataset test;
};

struct SweepCell {
  int c;
  NoiseKind kind;
  int s;
  double epsilon;
  int replicate;
  ClassifierKind classifier;
  std::size_t data_index;

  std::string describe() const {
    return "cell (c=" + std::to_string(c) + ", kind=" + std::string(to_string(kind)) + ", s=" + std::to_string(s) +
           ", epsilon=" + format_double(epsilon) + ", seed=" + std::to_string(replicate) +
           ", classifier=" + std::string(to_string(classifier)) + ")";
  }
};

inline std::uint64_t double_bits(double x) {
  std::uint64_t bits;
  std::memcpy(&bits, &x, sizeof bits);
  return bits;
}

inline std::vector<ResultRow> run_cell(const SweepConfig& cfg, const SweepCell& cell, const SweepData& data) {
  const std::uint64_t noise_seed = derive_seed(cfg.master_seed, 0x6e6f697365ULL, cell.c, static_cast<int>(cell.kind),
                                               cell.s, double_bits(cell.epsilon), cell.replicate);
  NoiseSpec spec;
  if (cell.kind == NoiseKind::uniform)
    spec = NoiseSpec::uniform(cell.epsilon);
  else if (cell.kind == NoiseKind::class_dependent)
    spec = NoiseSpec::class_dependent(cell.c, cell.epsilon, cell.s);
  else
    spec = prepare(NoiseSpec::feature(cell.kind, cell.epsilon), data.train, data.mixture);

  const LabeledDataset train_set = apply(spec, data.train, data.mixture, derive_seed(noise_seed, 1), cfg.flip_mode);
  const LabeledDataset test_set = apply(spec, data.test, data.mixture, derive_seed(noise_seed, 2), cfg.flip_mode);

  std::vector<ResultRow> rows;
  const auto push = [&](LabelSource src, const AccuracyEstimate& est) {
    rows.push_back({cell.c, cfg.dim, cell.kind, cell.epsilon, cell.s, cell.replicate, cell.classifier, src, est.mean,
                    est.std_error});
  };
  const std::uint64_t model_seed = derive_seed(noise_seed, static_cast<int>(cell.classifier) + 16);
  if (cell.classifier == ClassifierKind::mlp) {
    TrainConfig tc = cfg.train;
    tc.seed = model_seed;
    const MLPParams params = train(train_set, tc, LabelSource::noisy, cell.c);
    push(LabelSource::truth, evaluate(params, test_set, LabelSource::truth));
    push(LabelSource::noisy, evaluate(params, test_set, LabelSource::noisy));
  } else {
    const Decision dec = cell.classifier == ClassifierKind::bayes_plugin ? Decision::argmax : Decision::posterior_sample;
    const auto handle = ClassifierHandle::noisy(data.mixture, spec, dec);
    push(LabelSource::truth, evaluate_plugin(handle, test_set, LabelSource::truth, model_seed));
    push(LabelSource::noisy, evaluate_plugin(handle, test_set, LabelSource::noisy, model_seed));
  }
  return rows;
}

template <typename E>
[[noreturn]] void rethrow_with(const std::string& where, const E& e) {
  throw E(where + ": " + e.what());
}

}  // namespace detail

/// Runs every cell on up to `jobs` threads; output does not depend on `jobs`.
inline ResultTable run_sweep(const SweepConfig& config, int jobs = 1) {
  config.validate();
  require(jobs >= 1, "jobs must be >= 1");

  std::vector<detail::SweepData> data;
  for (int c : config.classes) {
    auto mixture = config.layout == MixtureLayout::grid
                       ? make_grid_mixture(c, config.dim, config.separation)
                       : make_benchmark_mixture(c, config.dim, config.separation,
                                                derive_seed(config.master_seed, 0x6d6978ULL, c));
    auto train = sample(mixture, config.n_train_per_class, derive_seed(config.master_seed, 0x747261696eULL, c));
    auto test = sample(mixture, config.n_test_per_class, derive_seed(config.master_seed, 0x74657374ULL, c));
    data.push_back({std::move(mixture), std::move(train), std::move(test)});
  }

  std::vector<detail::SweepCell> cells;
  for (std::size_t ci = 0; ci < config.classes.size(); ++ci) {
    const int c = config.classes[ci];
    for (const auto& setting : config.noise) {
      std::vector<int> spreads = setting.spreads;
      if (setting.kind == NoiseKind::uniform) spreads = {c - 1};
      if (is_feature_dependent(setting.kind)) spreads = {0};
      for (int s : spreads) {
        if (setting.kind == NoiseKind::class_dependent && (s < 1 || s > c - 1))
          throw ParameterError("spread " + std::to_string(s) + " is invalid for c = " + std::to_string(c));
        for (double eps : config.epsilons)
          for (int rep = 0; rep < config.replicates; ++rep)
            for (ClassifierKind clf : config.classifiers) cells.push_back({c, setting.kind, s, eps, rep, clf, ci});
      }
    }
  }

  std::vector<std::vector<ResultRow>> results(cells.size());
  std::vector<std::exception_ptr> errors(cells.size());
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      try {
        results[i] = detail::run_cell(config, cells[i], data[cells[i].data_index]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int threads = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(jobs), std::max<std::size_t>(cells.size(), 1)));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (!errors[i]) continue;
    const std::string where = cells[i].describe();
    try {
      std::rethrow_exception(errors[i]);
    } catch (const ConvergenceError& e) {
      detail::rethrow_with(where, e);
    } catch (const TrainingError& e) {
      detail::rethrow_with(where, e);
    } catch (const NumericalError& e) {
      detail::rethrow_with(where, e);
    } catch (const StateError& e) {
      detail::rethrow_with(where, e);
    } catch (const ParameterError& e) {
      detail::rethrow_with(where, e);
    } catch (const std::exception& e) {
      throw Error(where + ": " + e.what());
    }
  }

  ResultTable table;
  for (auto& r : results) table.rows.insert(table.rows.end(), r.begin(), r.end());
  table.sort();
  return table;
}

/// Appends closed-form noisy/clean accuracy for uniform and class-dependent
/// rows; feature-dependent rows get empty cells.
inline ResultTable overlay_theory(ResultTable table, double m_bar, double lambda) {
  table.theory.assign(table.rows.size(), {});
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& r = table.rows[i];
    if (is_feature_dependent(r.noise_kind)) continue;
    const int s = r.noise_kind == NoiseKind::uniform ? r.c - 1 : r.s;
    const theory::TheoryParams p{r.c, s, r.epsilon, m_bar, lambda};
    table.theory[i] = {theory::noisy_accuracy(p), theory::clean_accuracy(p)};
  }
  return table;
}

}  // namespace lnoise
