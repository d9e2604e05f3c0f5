#pragma once

#include <optional>
#include <span>
#include <vector>

#include "hcal/hierfeat.hpp"
#include "hcal/protobank.hpp"

namespace hcal {

// Which prototypes of the non-target classes enter the denominator.
enum class Negatives { base_and_perturbed, base_only };

struct InfoNceOptions {
  double tau = 0.1;
  Negatives negatives = Negatives::base_and_perturbed;
};

// Prototype InfoNCE averaged over the anchor rows. For an anchor x of class j
// the positives are {p_j, p~_j}; each contributes
//   -log( exp(sim(x,p)/tau) / sum_{q in P u N} exp(sim(x,q)/tau) ).
Tensor info_nce(const Tensor& anchors, std::span<const int> targets, const LevelPrototypes& protos,
                const InfoNceOptions& options = {});

// Level-1 loss: per-sample anchors, 1/n over the batch.
Tensor info_nce_level1(const LevelFeatures& f1, std::span<const int> labels_1, const LevelPrototypes& protos,
                       const InfoNceOptions& options = {});

// Level-k loss: aggregated per-class anchors, 1/(classes present).
Tensor info_nce_levelk(const LevelFeatures& fk, const LevelPrototypes& protos, int level,
                       const InfoNceOptions& options = {});

struct LevelLossSet {
  std::vector<double> losses;
  std::vector<int> classes_present;
};

// Level weights on the probability simplex.
struct WeightState {
  std::vector<double> weights;
  double gamma = 0.5;
};

// lambda_i = softmax(L / gamma)_i. The weights are plain numbers, so no
// gradient flows through them.
WeightState adaptive_weights(std::span<const double> losses, double gamma);

// sum_k weights[k] * losses[k].
Tensor total_loss(std::span<const Tensor> losses, std::span<const double> weights);

enum class WeightSource { current, previous };

struct BalancerConfig {
  bool adaptive = true;
  double gamma = 0.5;
  std::vector<double> fixed_weights;  // used when !adaptive; empty means uniform
  WeightSource source = WeightSource::current;
  double ema = 0.0;  // smoothing coefficient on the observed losses; 0 disables
};

// Closed-loop weight recalibration: turns the losses observed at each step
// into the weights used for that step's update.
class LossBalancer {
 public:
  LossBalancer() = default;
  LossBalancer(BalancerConfig config, int num_levels);

  WeightState next(std::span<const double> losses);

  const BalancerConfig& config() const { return config_; }
  // Serializable state: smoothed and previous loss signals (empty before the first step).
  std::vector<double> smoothed;
  std::vector<double> previous;

 private:
  BalancerConfig config_;
  int num_levels_ = 0;
};

}  // namespace hcal
