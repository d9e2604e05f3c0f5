#include "hcal/taxonomy.hpp"

#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "hcal/error.hpp"

namespace hcal {

namespace {

std::string where(int level, int index) {
  return "level " + std::to_string(level) + " class " + std::to_string(index);
}

}  // namespace

Taxonomy::Taxonomy(std::vector<int> classes_per_level, std::vector<std::vector<int>> parents,
                   std::vector<std::vector<std::string>> names)
    : classes_per_level_(std::move(classes_per_level)),
      parents_(std::move(parents)),
      names_(std::move(names)) {
  const int m = num_levels();
  if (m < 1) throw DataError("taxonomy: at least one level is required");
  for (int k = 1; k <= m; ++k) {
    if (classes_per_level_[k - 1] < 1)
      throw DataError("taxonomy: level " + std::to_string(k) + " has no classes");
  }
  if (static_cast<int>(parents_.size()) != m - 1)
    throw DataError("taxonomy: expected " + std::to_string(m - 1) + " parent arrays, got " +
                    std::to_string(parents_.size()));

  children_.assign(m, {});
  for (int k = 1; k < m; ++k) {
    const auto& table = parents_[k - 1];
    if (static_cast<int>(table.size()) < classes_per_level_[k - 1])
      throw DataError("taxonomy: orphan " + where(k, static_cast<int>(table.size())) +
                      " has no parent");
    if (static_cast<int>(table.size()) > classes_per_level_[k - 1])
      throw DataError("taxonomy: level " + std::to_string(k) + " lists more parent entries than classes");
    children_[k].assign(classes_per_level_[k], {});
    for (int i = 0; i < classes_per_level_[k - 1]; ++i) {
      const int p = table[i];
      if (p < 0 || p >= classes_per_level_[k])
        throw DataError("taxonomy: parent of " + where(k, i) + " references nonexistent " +
                        where(k + 1, p));
      children_[k][p].push_back(i);
    }
    for (int p = 0; p < classes_per_level_[k]; ++p) {
      if (children_[k][p].empty())
        throw DataError("taxonomy: " + where(k + 1, p) + " has no children");
    }
  }

  if (!names_.empty()) {
    if (static_cast<int>(names_.size()) != m) throw DataError("taxonomy: names must list every level");
    for (int k = 1; k <= m; ++k) {
      const auto& level_names = names_[k - 1];
      if (static_cast<int>(level_names.size()) != classes_per_level_[k - 1])
        throw DataError("taxonomy: level " + std::to_string(k) + " names do not match class count");
      std::set<std::string> seen;
      for (const auto& name : level_names) {
        if (!seen.insert(name).second)
          throw DataError("taxonomy: duplicate class id '" + name + "' at level " + std::to_string(k));
      }
    }
  }
}

int Taxonomy::classes_at(int level) const {
  if (level < 1 || level > num_levels())
    throw DataError("taxonomy: level " + std::to_string(level) + " out of range");
  return classes_per_level_[level - 1];
}

std::size_t Taxonomy::total_labels() const {
  return std::accumulate(classes_per_level_.begin(), classes_per_level_.end(), std::size_t{0});
}

std::size_t Taxonomy::edge_count() const {
  std::size_t r = 0;
  for (const auto& table : parents_) r += table.size();
  return r;
}

bool Taxonomy::contains(LabelId label) const {
  return label.level >= 1 && label.level <= num_levels() && label.index >= 0 &&
         label.index < classes_per_level_[label.level - 1];
}

void Taxonomy::check_label(LabelId label) const {
  if (!contains(label)) throw DataError("taxonomy: no such label " + where(label.level, label.index));
}

LabelId Taxonomy::parent(LabelId label) const {
  check_label(label);
  if (label.level == num_levels())
    throw DataError("taxonomy: " + where(label.level, label.index) + " is at the top level");
  return {label.level + 1, parents_[label.level - 1][label.index]};
}

std::vector<LabelId> Taxonomy::children(LabelId label) const {
  check_label(label);
  if (label.level == 1) throw DataError("taxonomy: finest-level classes have no children");
  std::vector<LabelId> out;
  for (int c : children_[label.level - 1][label.index]) out.push_back({label.level - 1, c});
  return out;
}

std::optional<EdgeViolation> Taxonomy::first_violation(std::span<const int> labels) const {
  for (int k = 2; k <= num_levels(); ++k) {
    const int child = labels[k - 2];
    const int expected = parents_[k - 2][child];
    if (expected != labels[k - 1]) return EdgeViolation{k - 1, child, expected, labels[k - 1]};
  }
  return std::nullopt;
}

void Taxonomy::validate_labels(std::span<const int> labels) const {
  if (static_cast<int>(labels.size()) != num_levels())
    throw DataError("expected " + std::to_string(num_levels()) + " labels, got " +
                    std::to_string(labels.size()));
  for (int k = 1; k <= num_levels(); ++k) {
    if (!contains({k, labels[k - 1]}))
      throw DataError("label " + std::to_string(labels[k - 1]) + " out of range at level " +
                      std::to_string(k));
  }
  if (auto v = first_violation(labels)) {
    throw DataError("inconsistent labels: parent of " + where(v->child_level, v->child) + " is " +
                    std::to_string(v->expected_parent) + " but label at level " +
                    std::to_string(v->child_level + 1) + " is " + std::to_string(v->actual_parent));
  }
}

LabelTuple Taxonomy::chain_of(int finest_class) const {
  check_label({1, finest_class});
  LabelTuple chain{finest_class};
  for (int k = 1; k < num_levels(); ++k) chain.push_back(parents_[k - 1][chain.back()]);
  return chain;
}

Taxonomy parse_taxonomy(const std::string& json_text) {
  using nlohmann::json;
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw DataError(std::string("taxonomy: malformed document: ") + e.what());
  }
  try {
    if (!doc.is_object()) throw DataError("taxonomy: document must be a JSON object");
    const int m = doc.at("levels").get<int>();
    auto counts = doc.at("classes_per_level").get<std::vector<int>>();
    if (m < 1 || static_cast<int>(counts.size()) != m)
      throw DataError("taxonomy: 'levels' does not match 'classes_per_level'");

    std::vector<std::vector<int>> parents;
    const json empty = json::array();
    const json& parent_doc = doc.contains("parents") ? doc.at("parents") : empty;
    if (!parent_doc.is_array() || static_cast<int>(parent_doc.size()) != m - 1)
      throw DataError("taxonomy: 'parents' must hold levels-1 arrays");
    for (int k = 1; k < m; ++k) {
      const json& entries = parent_doc[k - 1];
      if (!entries.is_array()) throw DataError("taxonomy: parents entry must be an array");
      const bool keyed = !entries.empty() && entries.front().is_object();
      if (!keyed) {
        parents.push_back(entries.get<std::vector<int>>());
        continue;
      }
      // Keyed form: [{"child": i, "parent": p}, ...] in any order.
      std::vector<int> table(counts[k - 1], -1);
      for (const json& e : entries) {
        const int child = e.at("child").get<int>();
        const int parent = e.at("parent").get<int>();
        if (child < 0 || child >= counts[k - 1])
          throw DataError("taxonomy: parent entry references nonexistent level " +
                          std::to_string(k) + " class " + std::to_string(child));
        if (table[child] != -1)
          throw DataError("taxonomy: duplicate parent entry for level " + std::to_string(k) +
                          " class " + std::to_string(child));
        table[child] = parent;
      }
      for (int i = 0; i < counts[k - 1]; ++i) {
        if (table[i] == -1)
          throw DataError("taxonomy: orphan level " + std::to_string(k) + " class " +
                          std::to_string(i) + " has no parent");
      }
      parents.push_back(std::move(table));
    }

    std::vector<std::vector<std::string>> names;
    if (doc.contains("names")) names = doc.at("names").get<std::vector<std::vector<std::string>>>();
    return Taxonomy(std::move(counts), std::move(parents), std::move(names));
  } catch (const json::exception& e) {
    throw DataError(std::string("taxonomy: malformed document: ") + e.what());
  }
}

Taxonomy load_taxonomy(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("taxonomy: cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_taxonomy(buffer.str());
}

std::string taxonomy_to_json(const Taxonomy& tax) {
  nlohmann::ordered_json doc;
  doc["levels"] = tax.num_levels();
  doc["classes_per_level"] = tax.classes_per_level();
  doc["parents"] = tax.parent_table();
  if (!tax.names().empty()) doc["names"] = tax.names();
  return doc.dump() + "\n";
}

void save_taxonomy(const Taxonomy& tax, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("taxonomy: cannot write " + path.string());
  out << taxonomy_to_json(tax);
}

}  // namespace hcal
