#pragma once

#include <cstdint>
#include <vector>

#include "hcal/taxonomy.hpp"
#include "hcal/tensor.hpp"

namespace hcal {

// per_step draws fresh noise for every view, fixed reuses the noise drawn at
// initialization, off disables perturbation (same as epsilon = 0).
enum class PerturbMode { per_step, fixed, off };

// Learnable prototypes, one (|C^k| x d) matrix per level. Base prototypes are
// unit norm at initialization and are not re-projected afterwards.
struct PrototypeBank {
  std::vector<Parameter> levels;  // levels[k-1] holds P^k
  double epsilon = 0.05;
  PerturbMode mode = PerturbMode::per_step;
  std::uint64_t seed = 0;
  std::vector<Matrix> fixed_noise;  // only for PerturbMode::fixed

  int num_levels() const { return static_cast<int>(levels.size()); }
  int dim() const { return levels.empty() ? 0 : static_cast<int>(levels.front().tensor.cols()); }
  std::size_t total_rows() const;
  bool perturbs() const { return mode != PerturbMode::off && epsilon > 0.0; }
  std::vector<Parameter*> parameters();
};

// Rows drawn i.i.d. standard normal, then L2-normalized.
PrototypeBank init_prototypes(const Taxonomy& tax, int dim, std::uint64_t seed, double epsilon = 0.05,
                              PerturbMode mode = PerturbMode::per_step);

// Perturbed copies normalize(p + noise), noise ~ U(-eps, eps)^d, treated as a
// constant. Without perturbation the view is the base tensor itself.
struct PerturbedView {
  std::vector<Tensor> prototypes;
  std::vector<Matrix> noise;  // zero matrices when not perturbing
};

inline constexpr int kPerturbRetries = 8;

PerturbedView perturbed_view(const PrototypeBank& bank, std::uint64_t step_seed);

struct LevelPrototypes {
  Tensor base;
  Tensor perturbed;
};

// Row j of both matrices is class j at the requested level.
LevelPrototypes prototypes_at(const PrototypeBank& bank, const PerturbedView& view, int level);

}  // namespace hcal
