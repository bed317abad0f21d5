// lnoise: command-line front end for the label-noise library.
//
// Exit codes: 0 success, 2 argument error, 3 data/parse error,
// 4 numerical/convergence error.

#include "lnoise/lnoise.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace {

using namespace lnoise;
using io::json;

constexpr int kExitArgs = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

struct Globals {
  std::uint64_t seed = 0;
  std::string out;
  std::string format = "csv";
};

struct ArgumentError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void emit(const Globals& g, const std::string& text) {
  if (g.out.empty()) {
    std::cout << text;
    std::cout.flush();
    return;
  }
  std::ofstream f(g.out, std::ios::binary);
  if (!f) throw ParseError("cannot write '" + g.out + "'");
  f << text;
}

void emit_json(const Globals& g, const json& j) { emit(g, j.dump(2) + "\n"); }

void write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ParseError("cannot write '" + path + "'");
  f << text;
}

void check_out_path(const std::string& path) {
  if (path.empty()) return;
  const auto parent = std::filesystem::absolute(path).parent_path();
  if (!std::filesystem::is_directory(parent))
    throw ArgumentError("output directory '" + parent.string() + "' does not exist");
}

json accuracy_json(const AccuracyEstimate& e) { return {{"accuracy", e.mean}, {"std_error", e.std_error}, {"n", e.n}}; }

// ---------------------------------------------------------------------------

struct MixtureGenArgs {
  int c = 10;
  int d = 2;
  double separation = 3.0;
  std::string layout = "benchmark";
  int n_per_class = 100;
  std::string mixture_out;
};

GaussianMixture build_mixture(int c, int d, double separation, const std::string& layout, std::uint64_t seed) {
  return parse_layout(layout) == MixtureLayout::grid ? make_grid_mixture(c, d, separation)
                                                     : make_benchmark_mixture(c, d, separation, seed);
}

void run_mixture_gen(const Globals& g, const MixtureGenArgs& a) {
  const auto mix = build_mixture(a.c, a.d, a.separation, a.layout, g.seed);
  if (!a.mixture_out.empty()) write_file(a.mixture_out, io::mixture_to_json(mix).dump(2) + "\n");
  if (g.format == "json") {
    emit_json(g, io::mixture_to_json(mix));
    return;
  }
  emit(g, io::dataset_to_csv(sample(mix, a.n_per_class, derive_seed(g.seed, 1))));
}

// ---------------------------------------------------------------------------

struct NoiseApplyArgs {
  std::string data;
  std::string kind = "uniform";
  double epsilon = 0.0;
  int spread = 0;
  int classes = 0;
  std::string mixture;
  std::string mode = "bernoulli";
  std::string spec_out;
  std::string matrix_out;
};

void run_noise_apply(const Globals& g, const NoiseApplyArgs& a) {
  const NoiseKind kind = parse_noise_kind(a.kind);
  LabeledDataset ds = io::load_dataset(a.data);
  std::optional<GaussianMixture> mix;
  if (!a.mixture.empty()) mix = io::mixture_from_json(io::parse_json(io::read_file(a.mixture), a.mixture));
  if (is_feature_dependent(kind) && !mix) throw ArgumentError("--kind " + a.kind + " needs --mixture");
  if (a.spread && kind != NoiseKind::class_dependent) throw ArgumentError("--spread applies to class_dependent only");
  const int c = mix ? mix->classes() : (a.classes ? a.classes : std::max(2, ds.label_count()));
  if (ds.label_count() > c) throw ParseError("dataset labels exceed the class count " + std::to_string(c));

  NoiseSpec spec;
  if (kind == NoiseKind::uniform) spec = NoiseSpec::uniform(a.epsilon);
  else if (kind == NoiseKind::class_dependent) spec = NoiseSpec::class_dependent(c, a.epsilon, a.spread ? a.spread : 1);
  else spec = prepare(NoiseSpec::feature(kind, a.epsilon), ds, *mix);
  const FlipMode mode = parse_flip_mode(a.mode);

  ds.noisy_labels.reset();
  ds.flip_mask.reset();
  const LabeledDataset out = mix ? apply(spec, ds, *mix, g.seed, mode) : apply(spec, ds, c, g.seed, mode);
  if (!a.spec_out.empty()) write_file(a.spec_out, io::spec_to_json(spec).dump(2) + "\n");
  if (!a.matrix_out.empty()) {
    if (is_feature_dependent(kind)) throw ArgumentError("--matrix-out needs a uniform or class_dependent kind");
    write_file(a.matrix_out, transition_matrix(spec, c).to_csv());
  }
  if (g.format == "json") {
    long flips = 0;
    for (bool f : *out.flip_mask) flips += f;
    emit_json(g, {{"spec", io::spec_to_json(spec)},
                  {"realized_rate", static_cast<double>(flips) / out.size()},
                  {"noisy_labels", *out.noisy_labels}});
    return;
  }
  emit(g, io::dataset_to_csv(out));
}

// ---------------------------------------------------------------------------

struct TheoryArgs {
  int c = 10;
  int s = 0;
  double m_bar = 0.9;
  double lambda = 50.0;
  std::string eps_grid = "0:1:0.1";
};

void run_theory_curve(const Globals& g, const TheoryArgs& a) {
  std::vector<theory::TheoryParams> grid;
  for (double e : theory::parse_epsilon_grid(a.eps_grid))
    grid.push_back({a.c, a.s ? a.s : a.c - 1, e, a.m_bar, a.lambda});
  const auto cv = theory::curve(grid);
  if (cv.outside_validity)
    std::cerr << "warning: m_bar <= 1/(s+1); the stationary point at the tipping point is a maximum\n";
  if (g.format == "json") {
    json rows = json::array();
    for (const auto& r : cv.rows)
      rows.push_back({{"epsilon", r.epsilon}, {"noisy_acc", r.noisy_acc}, {"clean_acc", r.clean_acc}, {"c", r.c},
                      {"s", r.s}, {"m_bar", r.m_bar}, {"lambda", r.lambda}});
    emit_json(g, {{"rows", rows}, {"outside_validity", cv.outside_validity}});
    return;
  }
  emit(g, cv.to_csv());
}

// ---------------------------------------------------------------------------

struct BayesArgs {
  std::string mixture;
  int c = 10;
  int d = 2;
  double separation = 3.0;
  std::string layout = "benchmark";
  std::string kind = "uniform";
  double epsilon = 0.0;
  int spread = 0;
  std::string plugin = "noisy";
  std::string decision = "argmax";
  std::string labels = "noisy";
  int n = 100000;
  int reference_per_class = 100;
  std::string mode = "bernoulli";
};

void run_bayes_eval(const Globals& g, const BayesArgs& a) {
  const GaussianMixture mix = a.mixture.empty()
                                  ? build_mixture(a.c, a.d, a.separation, a.layout, g.seed)
                                  : io::mixture_from_json(io::parse_json(io::read_file(a.mixture), a.mixture));
  const int c = mix.classes();
  const NoiseKind kind = parse_noise_kind(a.kind);
  NoiseSpec spec;
  if (kind == NoiseKind::uniform) spec = NoiseSpec::uniform(a.epsilon);
  else if (kind == NoiseKind::class_dependent) spec = NoiseSpec::class_dependent(c, a.epsilon, a.spread ? a.spread : 1);
  else spec = prepare(NoiseSpec::feature(kind, a.epsilon), sample(mix, a.reference_per_class, derive_seed(g.seed, 2)), mix);

  Decision dec;
  if (a.decision == "argmax") dec = Decision::argmax;
  else if (a.decision == "sample") dec = Decision::posterior_sample;
  else throw ArgumentError("--decision must be argmax or sample");
  std::optional<ClassifierHandle> handle;
  if (a.plugin == "clean") handle = ClassifierHandle::clean(mix, dec);
  else if (a.plugin == "noisy") handle = ClassifierHandle::noisy(mix, spec, dec);
  else throw ArgumentError("--plugin must be clean or noisy");
  LabelChannel labels;
  if (a.labels == "noisy") labels = spec;
  else if (a.labels != "clean") throw ArgumentError("--labels must be clean or noisy");

  const auto est = mc_accuracy(*handle, mix, labels, a.n, derive_seed(g.seed, 3), parse_flip_mode(a.mode));
  const int s = kind == NoiseKind::uniform ? c - 1 : (kind == NoiseKind::class_dependent ? *spec.spread : 0);
  if (g.format == "json") {
    json j = accuracy_json(est);
    j["plugin"] = a.plugin;
    j["decision"] = a.decision;
    j["spec"] = io::spec_to_json(spec);
    j["labels"] = a.labels;
    j["c"] = c;
    emit_json(g, j);
    return;
  }
  emit(g, "c,noise_kind,epsilon,s,plugin,decision,eval_labels,n,accuracy,std_error\n" + std::to_string(c) + "," +
              std::string(to_string(kind)) + "," + format_double(a.epsilon) + "," + std::to_string(s) + "," +
              a.plugin + "," + a.decision + "," + a.labels + "," + std::to_string(est.n) + "," +
              format_double(est.mean) + "," + format_double(est.std_error) + "\n");
}

// ---------------------------------------------------------------------------

struct MlpArgs {
  std::string data;
  std::string test;
  std::string labels = "noisy";
  int classes = 0;
  std::string params_out;
  TrainConfig train;
};

void run_mlp_train(const Globals& g, MlpArgs a) {
  const LabeledDataset train_set = io::load_dataset(a.data);
  LabelSource src;
  if (a.labels == "noisy") src = LabelSource::noisy;
  else if (a.labels == "clean") src = LabelSource::truth;
  else throw ArgumentError("--labels must be clean or noisy");
  if (src == LabelSource::noisy && !train_set.noisy_labels)
    throw ParseError("'" + a.data + "' has no noisy_label values; use --labels clean or run noise-apply first");
  std::optional<LabeledDataset> test_set;
  if (!a.test.empty()) test_set = io::load_dataset(a.test);
  int c = a.classes;
  if (c == 0) c = std::max({2, train_set.label_count(), test_set ? test_set->label_count() : 0});
  a.train.seed = g.seed;
  const MLPParams params = train(train_set, a.train, src, c);
  if (!a.params_out.empty()) write_file(a.params_out, io::params_to_json(params).dump(2) + "\n");

  struct Metric {
    std::string split, labels;
    AccuracyEstimate est;
  };
  std::vector<Metric> metrics;
  metrics.push_back({"train", a.labels, evaluate(params, train_set, src)});
  if (test_set) {
    metrics.push_back({"test", "clean", evaluate(params, *test_set, LabelSource::truth)});
    if (test_set->noisy_labels) metrics.push_back({"test", "noisy", evaluate(params, *test_set, LabelSource::noisy)});
  }
  if (g.format == "json") {
    json m = json::array();
    for (const auto& x : metrics) {
      json row = accuracy_json(x.est);
      row["split"] = x.split;
      row["eval_labels"] = x.labels;
      m.push_back(row);
    }
    emit_json(g, {{"params", io::params_to_json(params)}, {"metrics", m}});
    return;
  }
  std::string csv = "split,eval_labels,n,accuracy,std_error\n";
  for (const auto& x : metrics)
    csv += x.split + "," + x.labels + "," + std::to_string(x.est.n) + "," + format_double(x.est.mean) + "," +
           format_double(x.est.std_error) + "\n";
  emit(g, csv);
}

// ---------------------------------------------------------------------------

struct SweepArgs {
  std::string config;
  int jobs = 1;
  bool overlay = false;
  double m_bar = 1.0;
  double lambda = 50.0;
};

void run_sweep_cmd(const Globals& g, const SweepArgs& a, bool seed_given) {
  SweepConfig cfg;
  if (!a.config.empty()) cfg = io::sweep_config_from_json(io::parse_json(io::read_file(a.config), a.config));
  if (seed_given) cfg.master_seed = g.seed;
  ResultTable table = run_sweep(cfg, a.jobs);
  if (a.overlay) table = overlay_theory(std::move(table), a.m_bar, a.lambda);
  if (g.format == "json") {
    json rows = json::array();
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
      const auto& r = table.rows[i];
      json row{{"c", r.c},
               {"d", r.d},
               {"noise_kind", std::string(to_string(r.noise_kind))},
               {"epsilon", r.epsilon},
               {"s", r.s},
               {"seed", r.seed},
               {"classifier", std::string(to_string(r.classifier))},
               {"eval_labels", r.eval_labels == LabelSource::truth ? "clean" : "noisy"},
               {"accuracy", r.accuracy},
               {"std_error", r.std_error}};
      if (!table.theory.empty()) {
        row["theory_noisy"] = table.theory[i].noisy ? json(*table.theory[i].noisy) : json(nullptr);
        row["theory_clean"] = table.theory[i].clean ? json(*table.theory[i].clean) : json(nullptr);
      }
      rows.push_back(row);
    }
    emit_json(g, {{"rows", rows}});
    return;
  }
  emit(g, table.to_csv());
}

// ---------------------------------------------------------------------------

struct InjectArgs {
  std::string features;
  double epsilon = 0.0;
  int s = 1;
  std::string mode = "class_dependent";
  std::string count_mode = "bernoulli";
  bool remap = false;
  std::string report;
};

void run_embed_inject(const Globals& g, const InjectArgs& a) {
  const auto mode = embed::parse_inject_mode(a.mode);
  const auto count_mode = parse_flip_mode(a.count_mode);
  const auto ds = embed::load_features(a.features, a.remap);
  const auto r = embed::inject(ds, a.epsilon, a.s, mode, g.seed, count_mode);
  const json report = io::report_to_json(r.report, &ds);
  if (!a.report.empty()) write_file(a.report, report.dump(2) + "\n");
  if (g.format == "json") {
    emit_json(g, report);
    return;
  }
  emit(g, io::injection_to_csv(ds, r));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Label-noise simulation: mixtures, noise channels, accuracy laws, sweeps and injection."};
  app.option_defaults()->always_capture_default();
  app.set_version_flag("--version", std::string("lnoise ") + kVersion);
  app.fallthrough();
  app.require_subcommand(0, 1);

  Globals g;
  bool config_schema = false;
  app.add_option("--seed", g.seed, "Root seed for every random draw");
  app.add_option("--out", g.out, "Output file (default: standard output)");
  app.add_option("--format", g.format, "Output format")->check(CLI::IsMember({"csv", "json"}));
  app.add_flag("--config-schema", config_schema, "Print the JSON Schema of the sweep-run config and exit");

  MixtureGenArgs mg;
  auto* cmd_mix = app.add_subcommand("mixture-gen", "Sample a labeled dataset from a Gaussian mixture");
  cmd_mix->add_option("--c", mg.c, "Number of classes");
  cmd_mix->add_option("--d", mg.d, "Feature dimension");
  cmd_mix->add_option("--separation", mg.separation, "Layout separation (grid: spacing between means)");
  cmd_mix->add_option("--layout", mg.layout, "Mean layout")->check(CLI::IsMember({"benchmark", "grid"}));
  cmd_mix->add_option("--n-per-class", mg.n_per_class, "Samples per class");
  cmd_mix->add_option("--mixture-out", mg.mixture_out, "Also write the mixture JSON here");

  NoiseApplyArgs na;
  auto* cmd_noise = app.add_subcommand("noise-apply", "Corrupt the labels of a dataset CSV");
  cmd_noise->add_option("--data", na.data, "Dataset CSV (id,label,noisy_label,f0,...)")->required();
  cmd_noise->add_option("--kind", na.kind, "Noise kind")
      ->check(CLI::IsMember({"uniform", "class_dependent", "uniform_x", "resampling", "inverse_resampling", "gap_min",
                             "gap_max"}));
  cmd_noise->add_option("--epsilon", na.epsilon, "Noise level in [0, 1]");
  cmd_noise->add_option("--spread", na.spread, "Targets per class for class_dependent (0 means 1)");
  cmd_noise->add_option("--classes", na.classes, "Class count when no mixture is given (0: from labels)");
  cmd_noise->add_option("--mixture", na.mixture, "Mixture JSON; required for feature-dependent kinds");
  cmd_noise->add_option("--mode", na.mode, "Flip mode")->check(CLI::IsMember({"bernoulli", "exact_count"}));
  cmd_noise->add_option("--spec-out", na.spec_out, "Write the (calibrated) noise spec JSON here");
  cmd_noise->add_option("--matrix-out", na.matrix_out, "Write the transition matrix CSV here");

  TheoryArgs ta;
  auto* cmd_theory = app.add_subcommand("theory-curve", "Closed-form noisy and clean accuracy over an epsilon grid");
  cmd_theory->add_option("--c", ta.c, "Number of classes");
  cmd_theory->add_option("--s", ta.s, "Spread (0 means c-1, i.e. uniform noise)");
  cmd_theory->add_option("--m-bar", ta.m_bar, "Mean clean posterior of the true class");
  cmd_theory->add_option("--lambda", ta.lambda, "Log of the softmax base b");
  cmd_theory->add_option("--eps-grid", ta.eps_grid, "start:stop:step, endpoints inclusive");

  BayesArgs ba;
  auto* cmd_bayes = app.add_subcommand("bayes-eval", "Monte Carlo accuracy of a plug-in classifier");
  cmd_bayes->add_option("--mixture", ba.mixture, "Mixture JSON (default: generate one)");
  cmd_bayes->add_option("--c", ba.c, "Number of classes for a generated mixture");
  cmd_bayes->add_option("--d", ba.d, "Dimension for a generated mixture");
  cmd_bayes->add_option("--separation", ba.separation, "Separation for a generated mixture");
  cmd_bayes->add_option("--layout", ba.layout, "Layout for a generated mixture")
      ->check(CLI::IsMember({"benchmark", "grid"}));
  cmd_bayes->add_option("--kind", ba.kind, "Noise kind")
      ->check(CLI::IsMember({"uniform", "class_dependent", "uniform_x", "resampling", "inverse_resampling", "gap_min",
                             "gap_max"}));
  cmd_bayes->add_option("--epsilon", ba.epsilon, "Noise level in [0, 1]");
  cmd_bayes->add_option("--spread", ba.spread, "Targets per class for class_dependent (0 means 1)");
  cmd_bayes->add_option("--plugin", ba.plugin, "Posterior the classifier uses")->check(CLI::IsMember({"clean", "noisy"}));
  cmd_bayes->add_option("--decision", ba.decision, "argmax, or sample a class from the posterior")
      ->check(CLI::IsMember({"argmax", "sample"}));
  cmd_bayes->add_option("--labels", ba.labels, "Score against clean or freshly noised labels")
      ->check(CLI::IsMember({"clean", "noisy"}));
  cmd_bayes->add_option("--n", ba.n, "Monte Carlo sample size");
  cmd_bayes->add_option("--reference-per-class", ba.reference_per_class, "Calibration set size per class");
  cmd_bayes->add_option("--mode", ba.mode, "Flip mode")->check(CLI::IsMember({"bernoulli", "exact_count"}));

  MlpArgs ma;
  auto* cmd_mlp = app.add_subcommand("mlp-train", "Train the d-10-10-c network on a dataset CSV");
  cmd_mlp->add_option("--data", ma.data, "Training dataset CSV")->required();
  cmd_mlp->add_option("--test", ma.test, "Optional test dataset CSV");
  cmd_mlp->add_option("--labels", ma.labels, "Training labels")->check(CLI::IsMember({"clean", "noisy"}));
  cmd_mlp->add_option("--classes", ma.classes, "Output classes (0: from labels)");
  cmd_mlp->add_option("--params-out", ma.params_out, "Write the parameter checkpoint JSON here");
  cmd_mlp->add_option("--epochs", ma.train.epochs, "Training epochs");
  cmd_mlp->add_option("--batch-size", ma.train.batch_size, "Minibatch size");
  cmd_mlp->add_option("--lr", ma.train.learning_rate, "Adam learning rate");
  cmd_mlp->add_option("--beta1", ma.train.adam_beta1, "Adam first-moment decay");
  cmd_mlp->add_option("--beta2", ma.train.adam_beta2, "Adam second-moment decay");
  cmd_mlp->add_option("--adam-eps", ma.train.adam_eps, "Adam epsilon");

  SweepArgs sa;
  auto* cmd_sweep = app.add_subcommand("sweep-run", "Run a noise x epsilon x seed x classifier sweep");
  cmd_sweep->add_option("--config", sa.config, "Sweep config JSON (see --config-schema)");
  cmd_sweep->add_option("--jobs", sa.jobs, "Worker threads")->check(CLI::PositiveNumber);
  cmd_sweep->add_flag("--overlay-theory", sa.overlay, "Append theory_noisy and theory_clean columns");
  cmd_sweep->add_option("--m-bar", sa.m_bar, "m_bar used by --overlay-theory");
  cmd_sweep->add_option("--lambda", sa.lambda, "lambda used by --overlay-theory");

  InjectArgs ia;
  auto* cmd_inject = app.add_subcommand("embed-inject", "Inject label noise into precomputed feature vectors");
  cmd_inject->add_option("--features", ia.features, "Feature CSV (id,label,f0,...)")->required();
  cmd_inject->add_option("--epsilon", ia.epsilon, "Noise level in [0, 1]");
  cmd_inject->add_option("--s", ia.s, "Number of nearest centers used as targets");
  cmd_inject->add_option("--mode", ia.mode, "Injection mode")
      ->check(CLI::IsMember({"class_dependent", "feature_dependent"}));
  cmd_inject->add_option("--count-mode", ia.count_mode, "Flip mode")->check(CLI::IsMember({"bernoulli", "exact_count"}));
  cmd_inject->add_flag("--remap-labels", ia.remap, "Renumber non-contiguous labels instead of failing");
  cmd_inject->add_option("--report", ia.report, "Write the injection report JSON here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitArgs;
  }

  try {
    if (config_schema) {
      std::cout << io::sweep_config_schema().dump(2) << "\n";
      return 0;
    }
    if (app.get_subcommands().empty()) {
      std::cerr << app.help();
      return kExitArgs;
    }
    check_out_path(g.out);
    const auto* sub = app.get_subcommands().front();
    if (sub == cmd_mix) run_mixture_gen(g, mg);
    else if (sub == cmd_noise) run_noise_apply(g, na);
    else if (sub == cmd_theory) run_theory_curve(g, ta);
    else if (sub == cmd_bayes) run_bayes_eval(g, ba);
    else if (sub == cmd_mlp) run_mlp_train(g, ma);
    else if (sub == cmd_sweep) run_sweep_cmd(g, sa, app.count("--seed") > 0);
    else if (sub == cmd_inject) run_embed_inject(g, ia);
    return 0;
  } catch (const ArgumentError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitArgs;
  } catch (const ParameterError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitArgs;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const StateError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
}
