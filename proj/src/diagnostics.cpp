#include "hcal/diagnostics.hpp"

#include <random>

#include "hcal/trainer.hpp"

namespace hcal {

GradCheckResult run_total_loss_gradcheck(const GradCheckSetup& setup) {
  const auto& counts = setup.classes_per_level;
  if (counts.empty() || setup.samples < 1) throw ConfigError("gradcheck: empty instance");
  std::vector<std::vector<int>> parents;
  for (std::size_t k = 0; k + 1 < counts.size(); ++k) {
    if (counts[k] < counts[k + 1]) throw ConfigError("gradcheck: class counts must not grow toward coarser levels");
    std::vector<int> table(counts[k]);
    for (int i = 0; i < counts[k]; ++i) table[i] = static_cast<int>(static_cast<long long>(i) * counts[k + 1] / counts[k]);
    parents.push_back(std::move(table));
  }
  const Taxonomy tax(counts, parents);

  TrainConfig config;
  config.seed = setup.seed;
  config.epochs = 0;
  config.feature_dim = setup.feature_dim;
  config.hidden_dims = setup.hidden_dims;
  config.epsilon = setup.epsilon;
  config.tau = setup.tau;
  config.gamma = setup.gamma;
  config.ablation.feature_aggregation = setup.feature_aggregation;
  TrainState state = init_train_state(config, tax, setup.input_dim);
  const Model& model = state.models.front();

  std::mt19937_64 rng(derive_seed(setup.seed, 0x96adULL));
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix inputs(setup.samples, setup.input_dim);
  for (Eigen::Index i = 0; i < inputs.size(); ++i) inputs.data()[i] = normal(rng);
  std::vector<LabelTuple> labels;
  for (int i = 0; i < setup.samples; ++i) labels.push_back(tax.chain_of(i % counts.front()));

  const Tensor x = Tensor::constant(inputs);
  const std::uint64_t view_seed = derive_seed(setup.seed, 0x71e3ULL);
  std::vector<int> levels;
  for (int k = 1; k <= tax.num_levels(); ++k) levels.push_back(k);

  // Weights are computed once at the starting point and then frozen.
  std::vector<double> weights;
  {
    NoGradGuard guard;
    const PerturbedView view = perturbed_view(model.bank, view_seed);
    std::vector<double> values;
    for (const Tensor& l : level_losses(model, x, labels, tax, config, view, levels)) values.push_back(l.item());
    weights = adaptive_weights(values, setup.gamma).weights;
  }
  const TermsObjective terms = [&]() {
    const PerturbedView view = perturbed_view(model.bank, view_seed);
    return level_losses(model, x, labels, tax, config, view, levels);
  };

  std::vector<Tensor> params;
  for (const auto* p : model.parameters()) params.push_back(p->tensor);
  if (!setup.corrupt) return finite_diff_check_weighted(terms, weights, params, setup.step);

  for (Tensor& t : params) t.zero_grad();
  backward(total_loss(terms(), weights));
  std::vector<Matrix> analytic;
  for (const Tensor& t : params) analytic.push_back(2.0 * t.grad());
  return compare_weighted_gradients(terms, weights, params, analytic, setup.step);
}

}  // namespace hcal
