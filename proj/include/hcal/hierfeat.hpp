#pragma once

#include <map>
#include <span>
#include <vector>

#include "hcal/taxonomy.hpp"
#include "hcal/tensor.hpp"

namespace hcal {

enum class FeatureKind { per_sample, per_class };

// How a parent-level vector is formed from its children.
//   sample_weighted: mean over every batch sample under the parent, i.e. child
//                    vectors weighted by their member counts.
//   child_mean:      unweighted mean of the child class vectors.
enum class AggregationMode { sample_weighted, child_mean };

// Feature rows at one hierarchy level. For per_sample features row i belongs
// to batch sample keys[i]; for per_class features row i is class keys[i]
// (ascending) and member_counts[i] batch samples contributed to it.
struct LevelFeatures {
  int level = 1;
  FeatureKind kind = FeatureKind::per_sample;
  Tensor vectors;
  std::vector<int> keys;
  std::vector<int> member_counts;

  static LevelFeatures samples(Tensor features);
};

// Groups the rows of per-sample features by class; values are row positions
// in ascending order and the keys are exactly the classes present.
std::map<int, std::vector<int>> partition_by_level(const LevelFeatures& features,
                                                   std::span<const int> labels_k, int num_classes);

// Builds per-class features at the next level up. labels_lower and labels_k
// hold, for every batch sample, its class at the lower level and at level k.
// labels_lower is only consulted to recover child classes (child_mean on
// per-sample input, or the child->parent map for per-class input).
LevelFeatures aggregate_level(const LevelFeatures& lower, std::span<const int> labels_lower,
                              std::span<const int> labels_k, int num_classes_k,
                              AggregationMode mode = AggregationMode::sample_weighted);

// Per-class features for levels 2..m from per-sample level-1 features.
// Label tuples must be consistent with the taxonomy.
std::vector<LevelFeatures> hierarchy_features(const LevelFeatures& f1,
                                              std::span<const LabelTuple> labels,
                                              const Taxonomy& tax,
                                              AggregationMode mode = AggregationMode::sample_weighted);

// Column k-1 of the label tuples.
std::vector<int> labels_at_level(std::span<const LabelTuple> labels, int level);

}  // namespace hcal
