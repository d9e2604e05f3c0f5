#include "hcal/protobank.hpp"

#include <random>

namespace hcal {

namespace {

// Draws noise for every row of base, redrawing rows whose perturbed norm would
// be degenerate.
Matrix draw_noise(const Matrix& base, double epsilon, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-epsilon, epsilon);
  Matrix noise(base.rows(), base.cols());
  for (Eigen::Index r = 0; r < base.rows(); ++r) {
    int attempt = 0;
    for (;;) {
      for (Eigen::Index c = 0; c < base.cols(); ++c) noise(r, c) = dist(rng);
      if ((base.row(r) + noise.row(r)).norm() > kNormEpsilon) break;
      if (++attempt > kPerturbRetries)
        throw NumericalError("perturbed_view: degenerate perturbed prototype at row " + std::to_string(r));
    }
  }
  return noise;
}

}  // namespace

std::size_t PrototypeBank::total_rows() const {
  std::size_t rows = 0;
  for (const auto& p : levels) rows += static_cast<std::size_t>(p.tensor.rows());
  return rows;
}

std::vector<Parameter*> PrototypeBank::parameters() {
  std::vector<Parameter*> out;
  for (auto& p : levels) out.push_back(&p);
  return out;
}

PrototypeBank init_prototypes(const Taxonomy& tax, int dim, std::uint64_t seed, double epsilon, PerturbMode mode) {
  if (dim <= 0) throw ConfigError("prototypes: dimension must be positive");
  if (!(epsilon >= 0.0)) throw ConfigError("prototypes: epsilon must be non-negative");
  PrototypeBank bank;
  bank.epsilon = epsilon;
  bank.mode = mode;
  bank.seed = seed;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int k = 1; k <= tax.num_levels(); ++k) {
    Matrix p(tax.classes_at(k), dim);
    for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = normal(rng);
    bank.levels.push_back({"prototypes.level" + std::to_string(k),
                           {ParamGroup::Kind::prototypes, k},
                           Tensor::variable(normalize_rows(p))});
  }
  if (mode == PerturbMode::fixed && bank.perturbs()) {
    std::mt19937_64 noise_rng(derive_seed(seed, 0x5eedULL));
    for (const auto& p : bank.levels) bank.fixed_noise.push_back(draw_noise(p.tensor.value(), epsilon, noise_rng));
  }
  return bank;
}

PerturbedView perturbed_view(const PrototypeBank& bank, std::uint64_t step_seed) {
  PerturbedView view;
  if (!bank.perturbs()) {
    for (const auto& p : bank.levels) {
      view.prototypes.push_back(p.tensor);
      view.noise.push_back(Matrix::Zero(p.tensor.rows(), p.tensor.cols()));
    }
    return view;
  }
  std::mt19937_64 rng(step_seed);
  for (std::size_t k = 0; k < bank.levels.size(); ++k) {
    const Tensor& base = bank.levels[k].tensor;
    Matrix noise;
    if (bank.mode == PerturbMode::fixed) {
      if (k >= bank.fixed_noise.size()) throw DataError("perturbed_view: fixed noise missing");
      noise = bank.fixed_noise[k];
    } else {
      noise = draw_noise(base.value(), bank.epsilon, rng);
    }
    view.prototypes.push_back(normalize_rows(add(base, Tensor::constant(noise))));
    view.noise.push_back(std::move(noise));
  }
  return view;
}

LevelPrototypes prototypes_at(const PrototypeBank& bank, const PerturbedView& view, int level) {
  if (level < 1 || level > bank.num_levels())
    throw DataError("prototypes_at: level " + std::to_string(level) + " out of range");
  if (view.prototypes.size() != bank.levels.size()) throw DataError("prototypes_at: view does not match bank");
  return {bank.levels[level - 1].tensor, view.prototypes[level - 1]};
}

}  // namespace hcal
