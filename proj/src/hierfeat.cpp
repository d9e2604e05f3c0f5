#include "hcal/hierfeat.hpp"

#include <set>

namespace hcal {

LevelFeatures LevelFeatures::samples(Tensor features) {
  LevelFeatures f;
  f.level = 1;
  f.kind = FeatureKind::per_sample;
  f.keys.resize(features.rows());
  for (int i = 0; i < static_cast<int>(features.rows()); ++i) f.keys[i] = i;
  f.vectors = std::move(features);
  return f;
}

std::vector<int> labels_at_level(std::span<const LabelTuple> labels, int level) {
  std::vector<int> out;
  out.reserve(labels.size());
  for (const auto& t : labels) {
    if (level < 1 || level > static_cast<int>(t.size())) throw DataError("label tuple lacks level " + std::to_string(level));
    out.push_back(t[level - 1]);
  }
  return out;
}

std::map<int, std::vector<int>> partition_by_level(const LevelFeatures& features,
                                                   std::span<const int> labels_k, int num_classes) {
  if (features.kind != FeatureKind::per_sample)
    throw DataError("partition_by_level: expected per-sample features");
  if (static_cast<Eigen::Index>(labels_k.size()) != features.vectors.rows())
    throw ShapeError("partition_by_level: one label per sample required");
  std::map<int, std::vector<int>> groups;
  for (int i = 0; i < static_cast<int>(labels_k.size()); ++i) {
    const int c = labels_k[i];
    if (c < 0 || c >= num_classes) throw DataError("partition_by_level: label " + std::to_string(c) + " out of range");
    groups[c].push_back(i);
  }
  return groups;
}

LevelFeatures aggregate_level(const LevelFeatures& lower, std::span<const int> labels_lower,
                              std::span<const int> labels_k, int num_classes_k, AggregationMode mode) {
  const std::size_t n = labels_k.size();
  if (labels_lower.size() != n) throw ShapeError("aggregate_level: label arrays differ in length");
  if (mode != AggregationMode::sample_weighted && mode != AggregationMode::child_mean)
    throw ConfigError("aggregate_level: invalid mode");

  // Sample counts per (child, parent) pair and the parent of each child.
  std::map<int, int> parent_of_child;
  std::map<int, int> child_count;
  std::map<int, int> parent_count;
  for (std::size_t i = 0; i < n; ++i) {
    const int child = labels_lower[i];
    const int parent = labels_k[i];
    if (parent < 0 || parent >= num_classes_k)
      throw DataError("aggregate_level: label " + std::to_string(parent) + " out of range");
    auto [it, inserted] = parent_of_child.emplace(child, parent);
    if (!inserted && it->second != parent)
      throw DataError("aggregate_level: child class " + std::to_string(child) + " has two parents in the batch");
    ++child_count[child];
    ++parent_count[parent];
  }
  std::map<int, int> children_present;
  for (const auto& [child, parent] : parent_of_child) ++children_present[parent];

  std::map<int, int> parent_row;
  LevelFeatures out;
  out.kind = FeatureKind::per_class;
  out.level = lower.level + 1;
  for (const auto& [parent, count] : parent_count) {
    parent_row[parent] = static_cast<int>(out.keys.size());
    out.keys.push_back(parent);
    out.member_counts.push_back(count);
  }

  const Eigen::Index rows = lower.vectors.rows();
  Matrix weights = Matrix::Zero(static_cast<Eigen::Index>(out.keys.size()), rows);
  if (lower.kind == FeatureKind::per_sample) {
    if (static_cast<std::size_t>(rows) != n) throw ShapeError("aggregate_level: one label per sample required");
    for (std::size_t i = 0; i < n; ++i) {
      const int parent = labels_k[i];
      const double w = mode == AggregationMode::sample_weighted
                           ? 1.0 / parent_count[parent]
                           : 1.0 / (children_present[parent] * child_count[labels_lower[i]]);
      weights(parent_row[parent], static_cast<Eigen::Index>(i)) = w;
    }
  } else {
    if (lower.keys.size() != static_cast<std::size_t>(rows) || lower.member_counts.size() != lower.keys.size())
      throw ShapeError("aggregate_level: per-class features need keys and counts for every row");
    std::set<int> covered;
    for (std::size_t r = 0; r < lower.keys.size(); ++r) {
      const int child = lower.keys[r];
      auto it = parent_of_child.find(child);
      if (it == parent_of_child.end())
        throw DataError("aggregate_level: class " + std::to_string(child) + " has no batch samples");
      if (lower.member_counts[r] != child_count[child])
        throw DataError("aggregate_level: member count of class " + std::to_string(child) + " disagrees with labels");
      covered.insert(child);
      const int parent = it->second;
      const double w = mode == AggregationMode::sample_weighted
                           ? static_cast<double>(lower.member_counts[r]) / parent_count[parent]
                           : 1.0 / children_present[parent];
      weights(parent_row[parent], static_cast<Eigen::Index>(r)) = w;
    }
    if (covered.size() != parent_of_child.size())
      throw DataError("aggregate_level: lower features do not cover every referenced class");
  }
  out.vectors = matmul(Tensor::constant(std::move(weights)), lower.vectors);
  return out;
}

std::vector<LevelFeatures> hierarchy_features(const LevelFeatures& f1, std::span<const LabelTuple> labels,
                                              const Taxonomy& tax, AggregationMode mode) {
  if (f1.kind != FeatureKind::per_sample) throw DataError("hierarchy_features: expected per-sample features");
  if (static_cast<Eigen::Index>(labels.size()) != f1.vectors.rows())
    throw ShapeError("hierarchy_features: one label tuple per sample required");
  for (const auto& t : labels) tax.validate_labels(t);

  std::vector<LevelFeatures> out;
  out.reserve(static_cast<std::size_t>(tax.num_levels()));
  const LevelFeatures* current = &f1;
  for (int k = 2; k <= tax.num_levels(); ++k) {
    const auto lower = labels_at_level(labels, k - 1);
    const auto upper = labels_at_level(labels, k);
    out.push_back(aggregate_level(*current, lower, upper, tax.classes_at(k), mode));
    current = &out.back();
  }
  return out;
}

}  // namespace hcal
