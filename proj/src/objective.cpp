#include "hcal/objective.hpp"

#include <cmath>

namespace hcal {

Tensor info_nce(const Tensor& anchors, std::span<const int> targets, const LevelPrototypes& protos,
                const InfoNceOptions& options) {
  if (!(options.tau > 0.0)) throw ConfigError("info_nce: tau must be positive");
  if (anchors.rows() == 0) throw DataError("info_nce: no anchors");
  if (static_cast<Eigen::Index>(targets.size()) != anchors.rows())
    throw ShapeError("info_nce: one target per anchor required");
  const int classes = static_cast<int>(protos.base.rows());
  if (protos.perturbed.rows() != classes || protos.perturbed.cols() != protos.base.cols())
    throw ShapeError("info_nce: base and perturbed prototypes differ in shape");
  if (anchors.cols() != protos.base.cols()) throw ShapeError("info_nce: feature and prototype dimensions differ");

  std::vector<int> base_col(targets.size());
  std::vector<int> perturbed_col(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i] < 0 || targets[i] >= classes)
      throw DataError("info_nce: target " + std::to_string(targets[i]) + " has no prototype");
    base_col[i] = targets[i];
    perturbed_col[i] = classes + targets[i];
  }

  const Tensor unit_anchors = normalize_rows(anchors);
  const Tensor candidates = concat_rows(normalize_rows(protos.base), normalize_rows(protos.perturbed));
  const Tensor logits = scale(matmul(unit_anchors, transpose(candidates)), 1.0 / options.tau);

  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> include;
  if (options.negatives == Negatives::base_only) {
    include.setConstant(logits.rows(), logits.cols(), true);
    include.rightCols(classes) = false;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) include(i, perturbed_col[i]) = true;
  }
  const Tensor log_partition = logsumexp_rows(logits, include);
  const Tensor per_anchor =
      sub(scale(log_partition, 2.0), add(pick(logits, base_col), pick(logits, perturbed_col)));
  return mean(per_anchor);
}

Tensor info_nce_level1(const LevelFeatures& f1, std::span<const int> labels_1, const LevelPrototypes& protos,
                       const InfoNceOptions& options) {
  if (f1.kind != FeatureKind::per_sample) throw DataError("info_nce_level1: expected per-sample features");
  return info_nce(f1.vectors, labels_1, protos, options);
}

Tensor info_nce_levelk(const LevelFeatures& fk, const LevelPrototypes& protos, int level,
                       const InfoNceOptions& options) {
  if (level < 2) throw DataError("info_nce_levelk: level must be at least 2");
  if (fk.kind != FeatureKind::per_class) throw DataError("info_nce_levelk: expected per-class features");
  return info_nce(fk.vectors, fk.keys, protos, options);
}

WeightState adaptive_weights(std::span<const double> losses, double gamma) {
  if (!(gamma > 0.0)) throw ConfigError("adaptive_weights: gamma must be positive");
  return {softmax<double>(losses, gamma), gamma};
}

Tensor total_loss(std::span<const Tensor> losses, std::span<const double> weights) {
  if (losses.size() != weights.size()) throw ShapeError("total_loss: one weight per loss required");
  if (losses.empty()) throw DataError("total_loss: no losses");
  Tensor total = scale(losses[0], weights[0]);
  for (std::size_t k = 1; k < losses.size(); ++k) total = add(total, scale(losses[k], weights[k]));
  return total;
}

LossBalancer::LossBalancer(BalancerConfig config, int num_levels)
    : config_(std::move(config)), num_levels_(num_levels) {
  if (num_levels_ < 1) throw ConfigError("loss balancer: at least one level required");
  if (config_.adaptive) {
    if (!(config_.gamma > 0.0)) throw ConfigError("loss balancer: gamma must be positive");
  } else if (config_.fixed_weights.empty()) {
    config_.fixed_weights.assign(num_levels_, 1.0 / num_levels_);
  } else {
    if (static_cast<int>(config_.fixed_weights.size()) != num_levels_)
      throw ConfigError("loss balancer: fixed_weights needs one entry per level");
    double total = 0.0;
    for (double w : config_.fixed_weights) {
      if (!(w >= 0.0)) throw ConfigError("loss balancer: fixed weights must be non-negative");
      total += w;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ConfigError("loss balancer: fixed weights must sum to 1");
  }
  if (!(config_.ema >= 0.0 && config_.ema < 1.0)) throw ConfigError("loss balancer: ema must lie in [0, 1)");
}

WeightState LossBalancer::next(std::span<const double> losses) {
  if (static_cast<int>(losses.size()) != num_levels_) throw ShapeError("loss balancer: one loss per level required");
  if (!config_.adaptive) return {config_.fixed_weights, config_.gamma};

  std::vector<double> signal(losses.begin(), losses.end());
  if (config_.ema > 0.0) {
    if (!smoothed.empty()) {
      for (int k = 0; k < num_levels_; ++k) signal[k] = config_.ema * smoothed[k] + (1.0 - config_.ema) * signal[k];
    }
    smoothed = signal;
  }
  std::vector<double> used = signal;
  if (config_.source == WeightSource::previous && !previous.empty()) used = previous;
  previous = signal;
  return adaptive_weights(used, config_.gamma);
}

}  // namespace hcal
