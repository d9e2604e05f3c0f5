#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hcal {

// A class at one hierarchy level. Levels are 1-based: 1 is the finest level,
// num_levels() the coarsest. Indices are 0-based within a level.
struct LabelId {
  int level = 1;
  int index = 0;

  friend bool operator==(const LabelId&, const LabelId&) = default;
  friend auto operator<=>(const LabelId&, const LabelId&) = default;
};

// One class index per level, finest first.
using LabelTuple = std::vector<int>;

// A violated parent edge inside a label tuple: labels[child_level-1] has a
// parent different from labels[child_level].
struct EdgeViolation {
  int child_level = 1;
  int child = 0;
  int expected_parent = 0;
  int actual_parent = 0;
};

// Tree-structured label hierarchy. Immutable once constructed; the
// constructor validates every structural invariant.
class Taxonomy {
 public:
  // parents[k-1][i] is the parent (at level k+1) of class i at level k.
  Taxonomy(std::vector<int> classes_per_level, std::vector<std::vector<int>> parents,
           std::vector<std::vector<std::string>> names = {});

  int num_levels() const { return static_cast<int>(classes_per_level_.size()); }
  int classes_at(int level) const;
  const std::vector<int>& classes_per_level() const { return classes_per_level_; }
  const std::vector<std::vector<int>>& parent_table() const { return parents_; }
  const std::vector<std::vector<std::string>>& names() const { return names_; }

  // |Y|: total number of classes over all levels.
  std::size_t total_labels() const;
  // R: number of parent-child edges, sum of |C^k| for k < m.
  std::size_t edge_count() const;

  LabelId parent(LabelId label) const;
  std::vector<LabelId> children(LabelId label) const;
  bool contains(LabelId label) const;

  std::optional<EdgeViolation> first_violation(std::span<const int> labels) const;
  bool is_consistent(std::span<const int> labels) const { return !first_violation(labels); }
  // Throws DataError on a wrong-length, out-of-range or inconsistent tuple.
  void validate_labels(std::span<const int> labels) const;

  // The chain (y^1, ..., y^m) generated by a finest-level class.
  LabelTuple chain_of(int finest_class) const;

 private:
  void check_label(LabelId label) const;

  std::vector<int> classes_per_level_;
  std::vector<std::vector<int>> parents_;
  std::vector<std::vector<std::vector<int>>> children_;
  std::vector<std::vector<std::string>> names_;
};

inline std::size_t edge_count_R(const Taxonomy& tax) { return tax.edge_count(); }

Taxonomy parse_taxonomy(const std::string& json_text);
Taxonomy load_taxonomy(const std::filesystem::path& path);
std::string taxonomy_to_json(const Taxonomy& tax);
void save_taxonomy(const Taxonomy& tax, const std::filesystem::path& path);

}  // namespace hcal
