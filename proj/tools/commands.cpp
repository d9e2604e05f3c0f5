#include "commands.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "hcal/diagnostics.hpp"
#include "hcal/trainer.hpp"
#include "run_config.hpp"

namespace hcal::cli {

namespace fs = std::filesystem;

namespace {

std::vector<int> parse_int_list(const std::string& text, const char* what) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError(std::string(what) + ": expected a comma-separated integer list, got '" + text + "'");
    }
  }
  return out;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create output directory " + dir.string() + ": " + ec.message());
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

HvrNorm parse_norm(const std::string& s) {
  if (s == "edge_fraction") return HvrNorm::edge_fraction;
  if (s == "paper_eq15") return HvrNorm::paper_eq15;
  throw ConfigError("unknown HVR normalization '" + s + "'");
}

InferenceMode parse_mode(const std::string& s) {
  if (s == "per_sample") return InferenceMode::per_sample;
  if (s == "batch_grouped") return InferenceMode::batch_grouped;
  throw ConfigError("unknown inference mode '" + s + "'");
}

void dump_embeddings(const TrainState& state, const Dataset& data, const fs::path& dir) {
  std::ofstream emb = open_out(dir / "embeddings.csv");
  for (std::size_t mi = 0; mi < state.models.size(); ++mi) {
    const Matrix feats = embed(state.models[mi], data.features());
    if (mi == 0) {
      emb << "model,id";
      for (std::size_t k = 1; k <= data.samples.front().labels.size(); ++k) emb << ",y" << k;
      for (Eigen::Index c = 0; c < feats.cols(); ++c) emb << ",f" << c;
      emb << '\n';
    }
    for (std::size_t i = 0; i < data.size(); ++i) {
      emb << mi << ',' << data.samples[i].id;
      for (int y : data.samples[i].labels) emb << ',' << y;
      for (Eigen::Index c = 0; c < feats.cols(); ++c) emb << ',' << fmt(feats(static_cast<Eigen::Index>(i), c));
      emb << '\n';
    }
  }
  std::ofstream protos = open_out(dir / "prototypes.csv");
  protos << "model,level,class";
  for (int c = 0; c < state.models.front().bank.dim(); ++c) protos << ",p" << c;
  protos << '\n';
  for (std::size_t mi = 0; mi < state.models.size(); ++mi) {
    const auto& bank = state.models[mi].bank;
    for (int k = 1; k <= bank.num_levels(); ++k) {
      const Matrix& p = bank.levels[k - 1].tensor.value();
      for (Eigen::Index r = 0; r < p.rows(); ++r) {
        protos << mi << ',' << k << ',' << r;
        for (Eigen::Index c = 0; c < p.cols(); ++c) protos << ',' << fmt(p(r, c));
        protos << '\n';
      }
    }
  }
}

struct SynthArgs {
  std::string levels = "2,4,8";
  int per_class = 100;
  std::uint64_t seed = 0;
  std::string out;
  int input_dim = 16;
  double separation = 10.0;
  double sigma = 0.5;
  double train_fraction = 0.8;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  SynthSpec spec;
  // Flags list levels coarsest first; the generator wants finest first.
  spec.classes_per_level = parse_int_list(a.levels, "--levels");
  std::reverse(spec.classes_per_level.begin(), spec.classes_per_level.end());
  spec.input_dim = a.input_dim;
  spec.separation = a.separation;
  spec.sigma = a.sigma;
  spec.per_class = a.per_class;
  spec.seed = a.seed;
  spec.train_fraction = a.train_fraction;
  spec.test_fraction = 1.0 - a.train_fraction;
  const SynthData data = synth_generate(spec);

  const fs::path dir(a.out);
  ensure_dir(dir);
  save_taxonomy(data.taxonomy, dir / "taxonomy.json");
  save_dataset(data.train, dir / "train.jsonl");
  save_dataset(data.test, dir / "test.jsonl");
  std::ofstream echo = open_out(dir / "synth_config.txt");
  echo << "levels = " << a.levels << "\nper_class = " << a.per_class << "\nseed = " << a.seed
       << "\ninput_dim = " << a.input_dim << "\nseparation = " << fmt(a.separation) << "\nsigma = " << fmt(a.sigma)
       << "\ntrain_fraction = " << fmt(a.train_fraction) << '\n';
  out << "wrote " << data.train.size() << " train and " << data.test.size() << " test samples to " << dir.string()
      << '\n';
  return kOk;
}

struct TrainArgs {
  std::string config_path;
  std::vector<std::string> sets;
  std::string taxonomy, train, out, resume;
  std::optional<int> epochs;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> weighting, fixed_weights;
  std::optional<double> epsilon, gamma, tau;
  std::vector<std::string> ablate;
  bool dump = false;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  RunConfig rc;
  if (!a.config_path.empty()) rc = load_run_config(a.config_path);
  if (const char* env = std::getenv("HCAL_SEED"); env && *env) set_value(rc, "seed", env);
  for (const auto& s : a.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    set_value(rc, s.substr(0, eq), s.substr(eq + 1));
  }
  if (!a.taxonomy.empty()) rc.taxonomy = a.taxonomy;
  if (!a.train.empty()) rc.train_data = a.train;
  if (!a.out.empty()) rc.out = a.out;
  if (a.epochs) set_value(rc, "epochs", std::to_string(*a.epochs));
  if (a.seed) set_value(rc, "seed", std::to_string(*a.seed));
  if (a.weighting) set_value(rc, "weighting", *a.weighting);
  if (a.fixed_weights) {
    set_value(rc, "fixed_weights", *a.fixed_weights);
    if (!a.weighting) set_value(rc, "weighting", "fixed");
  }
  if (a.epsilon) set_value(rc, "epsilon", fmt(*a.epsilon));
  if (a.gamma) set_value(rc, "gamma", fmt(*a.gamma));
  if (a.tau) set_value(rc, "tau", fmt(*a.tau));
  for (const auto& what : a.ablate) {
    if (what == "multitask" || what == "multi_task") rc.train.ablation.multi_task = false;
    else if (what == "aggregation") rc.train.ablation.feature_aggregation = false;
    else if (what == "perturbation") rc.train.ablation.prototype_perturbation = false;
    else if (what == "adaptive") rc.train.ablation.adaptive_weighting = false;
    else throw ConfigError("--ablate: unknown component '" + what + "'");
  }
  if (rc.taxonomy.empty()) throw ConfigError("train: taxonomy path is required");
  if (rc.train_data.empty()) throw ConfigError("train: training data path is required");
  if (rc.out.empty()) throw ConfigError("train: output directory is required");
  rc.train.validate();

  const Taxonomy tax = load_taxonomy(rc.taxonomy);
  const Dataset data = load_dataset(rc.train_data, tax);
  if (data.empty()) throw DataError("train: training set is empty");

  TrainState state;
  if (!a.resume.empty()) {
    Checkpoint ck = load_checkpoint(a.resume, rc.train.feature_dim);
    if (ck.classes_per_level != tax.classes_per_level())
      throw DataError("train: checkpoint taxonomy differs from " + rc.taxonomy);
    state = std::move(ck.state);
  } else {
    state = init_train_state(rc.train, tax, data.input_dim());
  }

  const fs::path dir(rc.out);
  ensure_dir(dir);
  {
    std::ofstream echo = open_out(dir / "run_config.txt");
    echo << to_text(rc);
  }
  FitOptions options;
  options.checkpoint_path = dir / "checkpoint.json";
  options.keep_steps = false;
  const TrainReport report = fit(data, tax, rc.train, state, options);
  {
    std::ofstream csv = open_out(dir / "report.csv");
    write_report_csv(csv, report, tax.num_levels());
    std::ofstream timing = open_out(dir / "timing.csv");
    write_timing_csv(timing, report);
  }
  if (a.dump) dump_embeddings(state, data, dir);
  out << "trained " << report.epochs.size() << " epochs; checkpoint " << report.checkpoint.string() << '\n';
  if (!report.epochs.empty()) out << "final total loss " << fmt(report.epochs.back().total) << '\n';
  return kOk;
}

struct EvalArgs {
  std::string checkpoint, data, taxonomy, out;
  std::string mode = "per_sample";
  std::string norm = "edge_fraction";
  bool dump = false;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const HvrNorm norm = parse_norm(a.norm);
  const InferenceMode mode = parse_mode(a.mode);
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  const Taxonomy tax = load_taxonomy(a.taxonomy);
  if (ck.classes_per_level != tax.classes_per_level())
    throw DataError("eval: checkpoint taxonomy differs from " + a.taxonomy);
  const Dataset data = load_dataset(a.data, tax);
  if (data.empty()) throw DataError("eval: evaluation set is empty");
  if (data.input_dim() != ck.input_dim) throw DataError("eval: feature dimension differs from the checkpoint");

  const auto preds = predict_dataset(ck.state, data, tax, mode);
  const fs::path dir(a.out);
  ensure_dir(dir);
  {
    std::ofstream p = open_out(dir / "predictions.jsonl");
    write_predictions(p, preds);
  }
  const MetricsReport report = metrics_report(preds, data.samples, tax, norm);
  const std::string json = metrics_to_json(report);
  {
    std::ofstream m = open_out(dir / "metrics.json");
    m << json;
    std::ofstream echo = open_out(dir / "eval_config.txt");
    echo << "checkpoint = " << a.checkpoint << "\ndata = " << a.data << "\ntaxonomy = " << a.taxonomy
         << "\nmode = " << a.mode << "\nhvr_norm = " << a.norm << '\n';
  }
  if (a.dump) dump_embeddings(ck.state, data, dir);
  out << json;
  return kOk;
}

struct MetricsArgs {
  std::string pred, truth, taxonomy, out;
  std::string norm = "edge_fraction";
};

int cmd_metrics(const MetricsArgs& a, std::ostream& out) {
  const HvrNorm norm = parse_norm(a.norm);
  const Taxonomy tax = load_taxonomy(a.taxonomy);
  const auto preds = load_predictions(a.pred, tax);
  const Dataset truths = load_dataset(a.truth, tax);
  const std::string json = metrics_to_json(metrics_report(preds, truths.samples, tax, norm));
  if (!a.out.empty()) {
    std::ofstream m = open_out(a.out);
    m << json;
  }
  out << json;
  return kOk;
}

struct GradArgs {
  GradCheckSetup setup;
  std::string classes = "3,2";
  std::string hidden = "5";
  double tolerance = 1e-4;
};

int cmd_gradcheck(GradArgs a, std::ostream& out) {
  a.setup.classes_per_level = parse_int_list(a.classes, "--classes");
  a.setup.hidden_dims = a.hidden.empty() ? std::vector<int>{} : parse_int_list(a.hidden, "--hidden");
  const GradCheckResult r = run_total_loss_gradcheck(a.setup);
  const bool pass = r.max_relative_error < a.tolerance;
  out << "coordinates " << r.coordinates << "\nmax_relative_error " << fmt(r.max_relative_error)
      << "\nworst analytic " << fmt(r.worst_analytic) << " numeric " << fmt(r.worst_numeric) << '\n'
      << (pass ? "PASS" : "FAIL") << '\n';
  return pass ? kOk : kNumerical;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hierarchical prototype contrastive classifier: synthesis, training, evaluation, metrics"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic hierarchical dataset");
  s->add_option("--levels", synth.levels, "Classes per level, coarsest first")->capture_default_str();
  s->add_option("--per-class", synth.per_class, "Samples per finest class")->capture_default_str();
  s->add_option("--seed", synth.seed)->capture_default_str();
  s->add_option("--out", synth.out, "Output directory")->required();
  s->add_option("--input-dim", synth.input_dim)->capture_default_str();
  s->add_option("--separation", synth.separation)->capture_default_str();
  s->add_option("--sigma", synth.sigma)->capture_default_str();
  s->add_option("--train-frac", synth.train_fraction)->capture_default_str();

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train encoder and prototypes");
  t->add_option("--config", train.config_path, "Flat key = value config file");
  t->add_option("--set", train.sets, "Config override key=value (repeatable)");
  t->add_option("--taxonomy", train.taxonomy);
  t->add_option("--train", train.train);
  t->add_option("--out", train.out);
  t->add_option("--resume", train.resume, "Continue from a checkpoint");
  t->add_option("--epochs", train.epochs);
  t->add_option("--seed", train.seed);
  t->add_option("--weighting", train.weighting, "adaptive | fixed");
  t->add_option("--fixed-weights", train.fixed_weights, "Comma-separated level weights");
  t->add_option("--epsilon", train.epsilon);
  t->add_option("--gamma", train.gamma);
  t->add_option("--tau", train.tau);
  t->add_option("--ablate", train.ablate, "multitask | aggregation | perturbation | adaptive (repeatable)");
  t->add_flag("--dump-embeddings", train.dump);

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "Predict and score a dataset");
  e->add_option("--checkpoint", eval.checkpoint)->required();
  e->add_option("--data", eval.data)->required();
  e->add_option("--taxonomy", eval.taxonomy)->required();
  e->add_option("--out", eval.out)->required();
  e->add_option("--mode", eval.mode, "per_sample | batch_grouped")->capture_default_str();
  e->add_option("--hvr-norm", eval.norm, "edge_fraction | paper_eq15")->capture_default_str();
  e->add_flag("--dump-embeddings", eval.dump);

  MetricsArgs metrics;
  auto* m = app.add_subcommand("metrics", "Score a predictions file against ground truth");
  m->add_option("--pred", metrics.pred)->required();
  m->add_option("--truth", metrics.truth)->required();
  m->add_option("--taxonomy", metrics.taxonomy)->required();
  m->add_option("--out", metrics.out);
  m->add_option("--hvr-norm", metrics.norm)->capture_default_str();

  GradArgs grad;
  auto* g = app.add_subcommand("gradcheck", "Finite-difference check of the total loss gradient");
  g->add_option("--n", grad.setup.samples)->capture_default_str();
  g->add_option("--d", grad.setup.feature_dim)->capture_default_str();
  g->add_option("--classes", grad.classes, "Classes per level, finest first")->capture_default_str();
  g->add_option("--input-dim", grad.setup.input_dim)->capture_default_str();
  g->add_option("--hidden", grad.hidden)->capture_default_str();
  g->add_option("--seed", grad.setup.seed)->capture_default_str();
  g->add_option("--epsilon", grad.setup.epsilon)->capture_default_str();
  g->add_option("--tau", grad.setup.tau)->capture_default_str();
  g->add_option("--step", grad.setup.step)->capture_default_str();
  g->add_option("--tolerance", grad.tolerance)->capture_default_str();
  g->add_flag("--corrupt", grad.setup.corrupt, "Double the analytic gradient");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& ex) {
    const int code = app.exit(ex, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*s) return cmd_synth(synth, out);
    if (*t) return cmd_train(train, out);
    if (*e) return cmd_eval(eval, out);
    if (*m) return cmd_metrics(metrics, out);
    if (*g) return cmd_gradcheck(grad, out);
  } catch (const ConfigError& ex) {
    err << "error: " << ex.what() << '\n';
    return kUsage;
  } catch (const NumericalError& ex) {
    err << "numerical failure: " << ex.what() << '\n';
    return kNumerical;
  } catch (const Error& ex) {
    err << "error: " << ex.what() << '\n';
    return kDataError;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return kDataError;
  }
  return kUsage;
}

}  // namespace hcal::cli
