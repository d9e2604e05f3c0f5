#include "hcal/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <set>
#include <sstream>

namespace hcal {

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config: '" + key + "' expects a number, got '" + value + "'");
  }
}

long long parse_integer(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config: '" + key + "' expects an integer, got '" + value + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "on" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "off" || value == "no") return false;
  throw ConfigError("config: '" + key + "' expects true/false, got '" + value + "'");
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::string item;
  std::stringstream ss(value);
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

template <typename T, typename F>
std::string join(const std::vector<T>& values, F&& fmt) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += fmt(values[i]);
  }
  return out;
}

const char* bool_str(bool b) { return b ? "true" : "false"; }

const char* perturb_str(PerturbMode m) {
  switch (m) {
    case PerturbMode::per_step: return "per_step";
    case PerturbMode::fixed: return "static";
    case PerturbMode::off: return "off";
  }
  return "per_step";
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("config: batch_size must be at least 1");
  if (epochs < 0) throw ConfigError("config: epochs is required");
  if (!(lr_encoder > 0.0)) throw ConfigError("config: lr_encoder must be positive");
  if (!(lr_proto_level1 > 0.0)) throw ConfigError("config: lr_proto_level1 must be positive");
  if (!(proto_lr_multiplier > 0.0)) throw ConfigError("config: proto_lr_multiplier must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("config: momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("config: weight_decay must be non-negative");
  if (!(gamma > 0.0)) throw ConfigError("config: gamma must be positive");
  if (!(epsilon >= 0.0)) throw ConfigError("config: epsilon must be non-negative");
  if (!(tau > 0.0)) throw ConfigError("config: tau must be positive");
  if (!(weight_ema >= 0.0 && weight_ema < 1.0)) throw ConfigError("config: weight_ema must lie in [0, 1)");
  if (feature_dim <= 0) throw ConfigError("config: feature_dim must be positive");
  for (int h : hidden_dims) {
    if (h <= 0) throw ConfigError("config: hidden_dims entries must be positive");
  }
  if (!fixed_weights.empty()) {
    double total = 0.0;
    for (double w : fixed_weights) {
      if (!(w >= 0.0)) throw ConfigError("config: fixed_weights must be non-negative");
      total += w;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ConfigError("config: fixed_weights must sum to 1");
  }
}

double TrainConfig::proto_learning_rate(int level) const {
  return lr_proto_level1 * std::pow(proto_lr_multiplier, level - 1);
}

std::vector<std::pair<std::string, std::string>> train_config_entries(const TrainConfig& c) {
  const auto d = [](double v) { return format_double(v); };
  return {
      {"batch_size", std::to_string(c.batch_size)},
      {"epochs", std::to_string(c.epochs)},
      {"lr_encoder", d(c.lr_encoder)},
      {"lr_proto_level1", d(c.lr_proto_level1)},
      {"proto_lr_multiplier", d(c.proto_lr_multiplier)},
      {"momentum", d(c.momentum)},
      {"weight_decay", d(c.weight_decay)},
      {"gamma", d(c.gamma)},
      {"epsilon", d(c.epsilon)},
      {"tau", d(c.tau)},
      {"weighting", c.weighting == Weighting::adaptive ? "adaptive" : "fixed"},
      {"fixed_weights", join(c.fixed_weights, d)},
      {"seed", std::to_string(c.seed)},
      {"multi_task", bool_str(c.ablation.multi_task)},
      {"feature_aggregation", bool_str(c.ablation.feature_aggregation)},
      {"prototype_perturbation", bool_str(c.ablation.prototype_perturbation)},
      {"adaptive_weighting", bool_str(c.ablation.adaptive_weighting)},
      {"perturb_mode", perturb_str(c.perturb_mode)},
      {"negatives", c.negatives == Negatives::base_and_perturbed ? "base_and_perturbed" : "base_only"},
      {"aggregation_mode", c.aggregation == AggregationMode::sample_weighted ? "sample_weighted" : "child_mean"},
      {"weight_source", c.weight_source == WeightSource::current ? "current" : "previous"},
      {"weight_ema", d(c.weight_ema)},
      {"hidden_dims", join(c.hidden_dims, [](int v) { return std::to_string(v); })},
      {"feature_dim", std::to_string(c.feature_dim)},
      {"trainable", c.trainable == Trainable::all ? "all" : "last_layer"},
  };
}

bool set_train_config_value(TrainConfig& c, const std::string& key, const std::string& value) {
  const auto choice = [&](std::initializer_list<const char*> allowed) {
    for (const char* a : allowed) {
      if (value == a) return;
    }
    throw ConfigError("config: invalid value '" + value + "' for '" + key + "'");
  };
  if (key == "batch_size") {
    const long long v = parse_integer(key, value);
    if (v < 1) throw ConfigError("config: batch_size must be at least 1");
    c.batch_size = static_cast<std::size_t>(v);
  } else if (key == "epochs") {
    const long long v = parse_integer(key, value);
    if (v < 0) throw ConfigError("config: epochs must be non-negative");
    c.epochs = static_cast<int>(v);
  } else if (key == "lr_encoder") {
    c.lr_encoder = parse_double(key, value);
  } else if (key == "lr_proto_level1") {
    c.lr_proto_level1 = parse_double(key, value);
  } else if (key == "proto_lr_multiplier") {
    c.proto_lr_multiplier = parse_double(key, value);
  } else if (key == "momentum") {
    c.momentum = parse_double(key, value);
  } else if (key == "weight_decay") {
    c.weight_decay = parse_double(key, value);
  } else if (key == "gamma") {
    c.gamma = parse_double(key, value);
  } else if (key == "epsilon") {
    c.epsilon = parse_double(key, value);
  } else if (key == "tau") {
    c.tau = parse_double(key, value);
  } else if (key == "weighting") {
    choice({"adaptive", "fixed"});
    c.weighting = value == "adaptive" ? Weighting::adaptive : Weighting::fixed;
  } else if (key == "fixed_weights") {
    c.fixed_weights.clear();
    for (const auto& item : split_list(value)) c.fixed_weights.push_back(parse_double(key, item));
  } else if (key == "seed") {
    try {
      std::size_t used = 0;
      c.seed = std::stoull(value, &used);
      if (used != value.size() || value.front() == '-') throw std::invalid_argument(value);
    } catch (const std::exception&) {
      throw ConfigError("config: 'seed' expects an unsigned integer, got '" + value + "'");
    }
  } else if (key == "multi_task") {
    c.ablation.multi_task = parse_bool(key, value);
  } else if (key == "feature_aggregation") {
    c.ablation.feature_aggregation = parse_bool(key, value);
  } else if (key == "prototype_perturbation") {
    c.ablation.prototype_perturbation = parse_bool(key, value);
  } else if (key == "adaptive_weighting") {
    c.ablation.adaptive_weighting = parse_bool(key, value);
  } else if (key == "perturb_mode") {
    choice({"per_step", "static", "off"});
    c.perturb_mode = value == "per_step" ? PerturbMode::per_step
                     : value == "static" ? PerturbMode::fixed
                                         : PerturbMode::off;
  } else if (key == "negatives") {
    choice({"base_and_perturbed", "base_only"});
    c.negatives = value == "base_only" ? Negatives::base_only : Negatives::base_and_perturbed;
  } else if (key == "aggregation_mode") {
    choice({"sample_weighted", "child_mean"});
    c.aggregation = value == "child_mean" ? AggregationMode::child_mean : AggregationMode::sample_weighted;
  } else if (key == "weight_source") {
    choice({"current", "previous"});
    c.weight_source = value == "previous" ? WeightSource::previous : WeightSource::current;
  } else if (key == "weight_ema") {
    c.weight_ema = parse_double(key, value);
  } else if (key == "hidden_dims") {
    c.hidden_dims.clear();
    for (const auto& item : split_list(value)) c.hidden_dims.push_back(static_cast<int>(parse_integer(key, item)));
  } else if (key == "feature_dim") {
    c.feature_dim = static_cast<int>(parse_integer(key, value));
  } else if (key == "trainable") {
    choice({"all", "last_layer"});
    c.trainable = value == "all" ? Trainable::all : Trainable::last_layer;
  } else {
    return false;
  }
  return true;
}

std::vector<Parameter*> Model::parameters() {
  auto out = encoder.parameters();
  for (auto* p : bank.parameters()) out.push_back(p);
  return out;
}

std::vector<const Parameter*> Model::parameters() const {
  auto out = encoder.parameters();
  for (const auto& p : bank.levels) out.push_back(&p);
  return out;
}

std::vector<Parameter*> TrainState::parameters() {
  std::vector<Parameter*> out;
  for (auto& m : models) {
    for (auto* p : m.parameters()) out.push_back(p);
  }
  return out;
}

std::vector<const Parameter*> TrainState::parameters() const {
  std::vector<const Parameter*> out;
  for (const auto& m : models) {
    for (const auto* p : m.parameters()) out.push_back(p);
  }
  return out;
}

TrainState init_train_state(const TrainConfig& config, const Taxonomy& tax, int input_dim) {
  config.validate();
  TrainState state;
  const int m = tax.num_levels();
  const int num_models = config.ablation.multi_task ? 1 : m;
  for (int i = 0; i < num_models; ++i) {
    EncoderConfig ec;
    ec.input_dim = input_dim;
    ec.hidden_dims = config.hidden_dims;
    ec.output_dim = config.feature_dim;
    ec.seed = derive_seed(config.seed, 0xe1c0ULL, static_cast<std::uint64_t>(i));
    ec.trainable = config.trainable;
    Model model{init_encoder(ec),
                init_prototypes(tax, config.feature_dim, derive_seed(config.seed, 0x9a07ULL, static_cast<std::uint64_t>(i)),
                                config.epsilon, config.effective_perturb_mode())};
    if (num_models > 1) {
      // Task i only learns the prototypes of level i+1.
      const std::string prefix = "task" + std::to_string(i + 1) + "/";
      for (auto* p : model.parameters()) p->name = prefix + p->name;
      for (int k = 1; k <= m; ++k) {
        if (k != i + 1) model.bank.levels[k - 1].tensor.set_requires_grad(false);
      }
    }
    state.models.push_back(std::move(model));
  }
  state.optimizer.learning_rates[ParamGroup{}.tag()] = config.lr_encoder;
  for (int k = 1; k <= m; ++k)
    state.optimizer.learning_rates[ParamGroup{ParamGroup::Kind::prototypes, k}.tag()] = config.proto_learning_rate(k);
  for (const auto* p : state.parameters()) {
    if (p->tensor.requires_grad()) state.optimizer.velocity[p->name] = Matrix::Zero(p->tensor.rows(), p->tensor.cols());
  }
  BalancerConfig bc;
  bc.adaptive = config.adaptive();
  bc.gamma = config.gamma;
  bc.fixed_weights = config.fixed_weights;
  bc.source = config.weight_source;
  bc.ema = config.weight_ema;
  state.balancer = LossBalancer(bc, m);
  return state;
}

void sgd_step(std::span<Parameter* const> params, OptimizerState& state, const SgdOptions& options) {
  for (Parameter* p : params) {
    if (!p->tensor.requires_grad()) continue;
    if (!p->tensor.has_grad()) throw NumericalError("sgd_step: missing gradient for " + p->name);
  }
  for (Parameter* p : params) {
    if (!p->tensor.requires_grad()) continue;
    auto lr_it = state.learning_rates.find(p->group.tag());
    if (lr_it == state.learning_rates.end()) throw ConfigError("sgd_step: no learning rate for group " + p->group.tag());
    Matrix& theta = p->tensor.mutable_value();
    auto [v_it, fresh] = state.velocity.try_emplace(p->name, Matrix::Zero(theta.rows(), theta.cols()));
    Matrix& velocity = v_it->second;
    velocity = options.momentum * velocity + (p->tensor.grad() + options.weight_decay * theta);
    theta -= lr_it->second * velocity;
    if (!theta.allFinite()) throw NumericalError("sgd_step: non-finite parameter " + p->name);
    p->tensor.zero_grad();
  }
}

std::vector<Tensor> level_losses(const Model& model, const Tensor& inputs, std::span<const LabelTuple> labels,
                                 const Taxonomy& tax, const TrainConfig& config, const PerturbedView& view,
                                 std::span<const int> levels, std::vector<int>* classes_present) {
  const InfoNceOptions opts{config.tau, config.negatives};
  const LevelFeatures f1 = LevelFeatures::samples(encode(model.encoder, inputs));
  bool need_aggregates = false;
  for (int k : levels) need_aggregates = need_aggregates || (k >= 2 && config.ablation.feature_aggregation);
  std::vector<LevelFeatures> aggregated;
  if (need_aggregates) aggregated = hierarchy_features(f1, labels, tax, config.aggregation);

  std::vector<Tensor> out;
  for (int k : levels) {
    const auto level_labels = labels_at_level(labels, k);
    const LevelPrototypes protos = prototypes_at(model.bank, view, k);
    Tensor loss;
    int present = 0;
    try {
      if (k >= 2 && config.ablation.feature_aggregation) {
        loss = info_nce_levelk(aggregated[k - 2], protos, k, opts);
        present = static_cast<int>(aggregated[k - 2].keys.size());
      } else {
        loss = info_nce(f1.vectors, level_labels, protos, opts);
        present = static_cast<int>(std::set<int>(level_labels.begin(), level_labels.end()).size());
      }
    } catch (const NumericalError& e) {
      throw NumericalError("level " + std::to_string(k) + " loss: " + e.what());
    }
    if (!std::isfinite(loss.item())) throw NumericalError("level " + std::to_string(k) + " loss is not finite");
    if (classes_present) classes_present->push_back(present);
    out.push_back(std::move(loss));
  }
  return out;
}

StepResult train_step(const Matrix& inputs, std::span<const LabelTuple> labels, TrainState& state,
                      const Taxonomy& tax, const TrainConfig& config) {
  if (inputs.rows() == 0) throw DataError("train_step: empty batch");
  if (static_cast<Eigen::Index>(labels.size()) != inputs.rows())
    throw ShapeError("train_step: one label tuple per input row required");
  const int m = tax.num_levels();
  const std::uint64_t step_seed = derive_seed(config.seed, 0x7e47ULL, state.step);
  const Tensor x = Tensor::constant(inputs);

  StepResult result;
  std::vector<Tensor> losses;
  Tensor objective;
  if (config.ablation.multi_task) {
    if (state.models.size() != 1) throw ConfigError("train_step: multi-task training expects one model");
    std::vector<int> levels(m);
    for (int k = 1; k <= m; ++k) levels[k - 1] = k;
    const PerturbedView view = perturbed_view(state.models[0].bank, step_seed);
    losses = level_losses(state.models[0], x, labels, tax, config, view, levels, &result.losses.classes_present);
    for (const Tensor& l : losses) result.losses.losses.push_back(l.item());
    result.weights = state.balancer.next(result.losses.losses);
    objective = total_loss(losses, result.weights.weights);
  } else {
    if (static_cast<int>(state.models.size()) != m) throw ConfigError("train_step: single-task training expects one model per level");
    for (int k = 1; k <= m; ++k) {
      const Model& model = state.models[k - 1];
      const PerturbedView view = perturbed_view(model.bank, derive_seed(step_seed, static_cast<std::uint64_t>(k)));
      const int level[] = {k};
      auto l = level_losses(model, x, labels, tax, config, view, level, &result.losses.classes_present);
      result.losses.losses.push_back(l.front().item());
      losses.push_back(std::move(l.front()));
    }
    // Independent tasks, each optimized with unit weight; report uniform weights.
    objective = losses.front();
    for (std::size_t k = 1; k < losses.size(); ++k) objective = add(objective, losses[k]);
    result.weights = {std::vector<double>(m, 1.0 / m), config.gamma};
  }
  for (int k = 0; k < m; ++k) result.total += result.weights.weights[k] * result.losses.losses[k];

  backward(objective);
  sgd_step(state.parameters(), state.optimizer, {config.momentum, config.weight_decay});
  ++state.step;
  return result;
}

TrainReport fit(const Dataset& data, const Taxonomy& tax, const TrainConfig& config, TrainState& state,
                const FitOptions& options) {
  config.validate();
  if (data.empty()) throw DataError("fit: empty dataset");
  for (const auto& s : data.samples) tax.validate_labels(s.labels);
  if (state.models.empty() || state.models.front().encoder.config.input_dim != data.input_dim())
    throw DataError("fit: dataset feature dimension does not match the encoder");
  const int m = tax.num_levels();

  TrainReport report;
  for (int epoch = state.epoch; epoch < config.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    EpochRecord record;
    record.epoch = epoch + 1;
    record.losses.assign(m, 0.0);
    record.weights.assign(m, 0.0);
    const auto batches = batch_iterator(data.size(), config.batch_size, config.seed, static_cast<std::uint64_t>(epoch));
    for (const auto& batch : batches) {
      const Matrix inputs = data.features(batch);
      const auto labels = data.labels(batch);
      StepResult step = train_step(inputs, labels, state, tax, config);
      for (int k = 0; k < m; ++k) {
        record.losses[k] += step.losses.losses[k];
        record.weights[k] += step.weights.weights[k];
      }
      record.total += step.total;
      if (options.keep_steps) report.steps.push_back(std::move(step));
    }
    const double count = static_cast<double>(batches.size());
    for (int k = 0; k < m; ++k) {
      record.losses[k] /= count;
      record.weights[k] /= count;
    }
    record.total /= count;
    record.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    report.epochs.push_back(std::move(record));
    state.epoch = epoch + 1;
  }
  if (options.checkpoint_path) {
    save_checkpoint(config, state, tax, *options.checkpoint_path);
    report.checkpoint = *options.checkpoint_path;
  }
  return report;
}

TrainReport fit(const Dataset& data, const Taxonomy& tax, const TrainConfig& config, const FitOptions& options) {
  if (data.empty()) throw DataError("fit: empty dataset");
  TrainState state = init_train_state(config, tax, data.input_dim());
  return fit(data, tax, config, state, options);
}

void write_report_csv(std::ostream& out, const TrainReport& report, int num_levels) {
  out << "epoch";
  for (int k = 1; k <= num_levels; ++k) out << ",L" << k;
  for (int k = 1; k <= num_levels; ++k) out << ",lambda" << k;
  out << ",total\n";
  for (const auto& r : report.epochs) {
    out << r.epoch;
    for (double v : r.losses) out << ',' << format_double(v);
    for (double v : r.weights) out << ',' << format_double(v);
    out << ',' << format_double(r.total) << '\n';
  }
}

void write_timing_csv(std::ostream& out, const TrainReport& report) {
  out << "epoch,seconds\n";
  for (const auto& r : report.epochs) out << r.epoch << ',' << format_double(r.seconds) << '\n';
}

Matrix embed(const Model& model, const Matrix& inputs) {
  NoGradGuard guard;
  return encode(model.encoder, Tensor::constant(inputs)).value();
}

std::vector<PredictionRecord> predict_dataset(const TrainState& state, const Dataset& data, const Taxonomy& tax,
                                              InferenceMode mode) {
  const Matrix inputs = data.features();
  const auto ids = data.ids();
  if (state.models.size() == 1) return predict(embed(state.models[0], inputs), ids, state.models[0].bank, tax, mode);

  if (static_cast<int>(state.models.size()) != tax.num_levels())
    throw DataError("predict: model count does not match the taxonomy");
  std::vector<PredictionRecord> out(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) out[i].id = ids[i];
  for (int k = 1; k <= tax.num_levels(); ++k) {
    const Model& model = state.models[k - 1];
    std::vector<double> scores;
    const auto classes = nearest_prototype(embed(model, inputs), model.bank.levels[k - 1].tensor.value(), &scores);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      out[i].pred.push_back(classes[i]);
      out[i].scores.push_back(scores[i]);
    }
  }
  return out;
}

}  // namespace hcal
