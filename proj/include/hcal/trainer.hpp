#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hcal/dataio.hpp"
#include "hcal/encoder.hpp"
#include "hcal/evalmetrics.hpp"
#include "hcal/hierfeat.hpp"
#include "hcal/objective.hpp"
#include "hcal/protobank.hpp"
#include "hcal/taxonomy.hpp"

namespace hcal {

enum class Weighting { adaptive, fixed };

struct AblationToggles {
  bool multi_task = true;
  bool feature_aggregation = true;
  bool prototype_perturbation = true;
  bool adaptive_weighting = true;
};

struct TrainConfig {
  std::size_t batch_size = 32;
  int epochs = -1;  // required; -1 means unset
  double lr_encoder = 0.01;
  double lr_proto_level1 = 0.05;
  double proto_lr_multiplier = 2.0;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double gamma = 0.5;
  double epsilon = 0.05;
  double tau = 0.1;
  Weighting weighting = Weighting::adaptive;
  std::vector<double> fixed_weights;  // empty means uniform
  std::uint64_t seed = 0;
  AblationToggles ablation;

  PerturbMode perturb_mode = PerturbMode::per_step;
  Negatives negatives = Negatives::base_and_perturbed;
  AggregationMode aggregation = AggregationMode::sample_weighted;
  WeightSource weight_source = WeightSource::current;
  double weight_ema = 0.0;

  std::vector<int> hidden_dims{64};
  int feature_dim = 256;
  Trainable trainable = Trainable::all;

  void validate() const;
  bool adaptive() const { return weighting == Weighting::adaptive && ablation.adaptive_weighting; }
  PerturbMode effective_perturb_mode() const {
    return ablation.prototype_perturbation ? perturb_mode : PerturbMode::off;
  }
  double proto_learning_rate(int level) const;
};

// Flat key/value view of a TrainConfig, in a fixed key order.
std::vector<std::pair<std::string, std::string>> train_config_entries(const TrainConfig& config);
// Returns false for an unknown key; throws ConfigError for a bad value.
bool set_train_config_value(TrainConfig& config, const std::string& key, const std::string& value);

// Encoder plus prototypes. Multi-task training uses one model for all levels;
// the single-task ablation uses one independent model per level.
struct Model {
  Encoder encoder;
  PrototypeBank bank;

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
};

struct OptimizerState {
  std::map<std::string, Matrix> velocity;             // by parameter name
  std::map<std::string, double> learning_rates;       // by group tag
};

struct TrainState {
  std::vector<Model> models;
  OptimizerState optimizer;
  LossBalancer balancer;
  int epoch = 0;           // completed epochs
  std::uint64_t step = 0;  // completed steps

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
};

TrainState init_train_state(const TrainConfig& config, const Taxonomy& tax, int input_dim);

struct SgdOptions {
  double momentum = 0.9;
  double weight_decay = 1e-4;
};

// g' = g + wd*theta; v = momentum*v + g'; theta -= lr_group*v; grads cleared.
// Parameters without requires_grad are skipped; a trainable parameter
// without an accumulated gradient is an error.
void sgd_step(std::span<Parameter* const> params, OptimizerState& state, const SgdOptions& options);

struct StepResult {
  LevelLossSet losses;
  WeightState weights;
  double total = 0.0;
};

// Losses of one model for the requested levels, as differentiable scalars.
std::vector<Tensor> level_losses(const Model& model, const Tensor& inputs, std::span<const LabelTuple> labels,
                                 const Taxonomy& tax, const TrainConfig& config, const PerturbedView& view,
                                 std::span<const int> levels, std::vector<int>* classes_present = nullptr);

// encode -> aggregate -> perturb -> per-level losses -> weights -> total ->
// backward -> SGD. Perturbation noise is seeded from (config.seed, step).
StepResult train_step(const Matrix& inputs, std::span<const LabelTuple> labels, TrainState& state,
                      const Taxonomy& tax, const TrainConfig& config);

struct EpochRecord {
  int epoch = 0;
  std::vector<double> losses;   // batch means
  std::vector<double> weights;  // batch means
  double total = 0.0;
  double seconds = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::vector<StepResult> steps;
  std::filesystem::path checkpoint;
};

struct FitOptions {
  std::optional<std::filesystem::path> checkpoint_path;
  bool keep_steps = true;
};

// Epoch loop: seeded shuffle per epoch, train_step per batch. Continues from
// state.epoch, so a restored state resumes where it stopped.
TrainReport fit(const Dataset& data, const Taxonomy& tax, const TrainConfig& config, TrainState& state,
                const FitOptions& options = {});
TrainReport fit(const Dataset& data, const Taxonomy& tax, const TrainConfig& config,
                const FitOptions& options = {});

// CSV columns: epoch, L1..Lm, lambda1..lambdam, total. Wall time is left out
// so the file is reproducible; see write_timing_csv.
void write_report_csv(std::ostream& out, const TrainReport& report, int num_levels);
void write_timing_csv(std::ostream& out, const TrainReport& report);

// Level-1 features of the inputs from the given model.
Matrix embed(const Model& model, const Matrix& inputs);

std::vector<PredictionRecord> predict_dataset(const TrainState& state, const Dataset& data, const Taxonomy& tax,
                                              InferenceMode mode = InferenceMode::per_sample);

struct Checkpoint {
  TrainConfig config;
  TrainState state;
  std::vector<int> classes_per_level;
  int input_dim = 0;
};

inline constexpr int kCheckpointVersion = 1;

void save_checkpoint(const TrainConfig& config, const TrainState& state, const Taxonomy& tax,
                     const std::filesystem::path& path);
// Throws DataError on version mismatch, corruption or inconsistent shapes;
// expected_feature_dim, when given, must match the stored dimension.
Checkpoint load_checkpoint(const std::filesystem::path& path, std::optional<int> expected_feature_dim = std::nullopt);
Checkpoint parse_checkpoint(const std::string& text, std::optional<int> expected_feature_dim = std::nullopt);

}  // namespace hcal
