#include "hcal/evalmetrics.hpp"

#include <fstream>
#include <ostream>
#include <unordered_map>

#include <json.hpp>

namespace hcal {

namespace {

// Truth labels reordered to match the predictions by id.
std::vector<const Sample*> align(std::span<const PredictionRecord> preds, std::span<const Sample> truths) {
  if (preds.empty()) throw DataError("metrics: empty prediction set");
  if (preds.size() != truths.size())
    throw DataError("metrics: " + std::to_string(preds.size()) + " predictions but " + std::to_string(truths.size()) +
                    " truths");
  std::unordered_map<std::string, const Sample*> by_id;
  for (const Sample& s : truths) {
    if (!by_id.emplace(s.id, &s).second) throw DataError("metrics: duplicate truth id '" + s.id + "'");
  }
  std::vector<const Sample*> out;
  out.reserve(preds.size());
  for (const auto& p : preds) {
    auto it = by_id.find(p.id);
    if (it == by_id.end()) throw DataError("metrics: prediction id '" + p.id + "' has no truth");
    if (it->second == nullptr) throw DataError("metrics: duplicate prediction id '" + p.id + "'");
    out.push_back(it->second);
    it->second = nullptr;
  }
  return out;
}

void check_prediction(const PredictionRecord& p, const Taxonomy& tax) {
  if (static_cast<int>(p.pred.size()) != tax.num_levels())
    throw DataError("prediction '" + p.id + "': expected " + std::to_string(tax.num_levels()) + " labels");
  for (int k = 1; k <= tax.num_levels(); ++k) {
    if (!tax.contains({k, p.pred[k - 1]}))
      throw DataError("prediction '" + p.id + "': label out of range at level " + std::to_string(k));
  }
}

}  // namespace

const char* to_string(HvrNorm norm) { return norm == HvrNorm::edge_fraction ? "edge_fraction" : "paper_eq15"; }

const char* to_string(InferenceMode mode) {
  return mode == InferenceMode::per_sample ? "per_sample" : "batch_grouped";
}

std::vector<int> nearest_prototype(const Matrix& features, const Matrix& prototypes, std::vector<double>* best_scores) {
  if (features.cols() != prototypes.cols()) throw ShapeError("predict: feature and prototype dimensions differ");
  const Matrix sims = normalize_rows(features) * normalize_rows(prototypes).transpose();
  std::vector<int> out(static_cast<std::size_t>(features.rows()));
  if (best_scores) best_scores->assign(out.size(), 0.0);
  for (Eigen::Index i = 0; i < sims.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < sims.cols(); ++j) {
      if (sims(i, j) > sims(i, best)) best = j;
    }
    out[i] = static_cast<int>(best);
    if (best_scores) (*best_scores)[i] = sims(i, best);
  }
  return out;
}

std::vector<PredictionRecord> predict(const Matrix& features, std::span<const std::string> ids,
                                      const PrototypeBank& bank, const Taxonomy& tax, InferenceMode mode) {
  if (static_cast<Eigen::Index>(ids.size()) != features.rows()) throw ShapeError("predict: one id per feature row");
  if (bank.num_levels() != tax.num_levels()) throw DataError("predict: prototype bank does not match taxonomy");
  const std::size_t n = ids.size();
  std::vector<PredictionRecord> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i].id = ids[i];

  Matrix level_features = features;
  for (int k = 1; k <= tax.num_levels(); ++k) {
    const Matrix& protos = bank.levels[k - 1].tensor.value();
    if (protos.rows() != tax.classes_at(k)) throw DataError("predict: prototype count differs from taxonomy");
    if (k > 1 && mode == InferenceMode::batch_grouped) {
      // Group by the prediction one level down and average within groups.
      std::map<int, std::pair<RowVector, int>> groups;
      for (std::size_t i = 0; i < n; ++i) {
        auto [it, fresh] = groups.try_emplace(out[i].pred[k - 2], RowVector::Zero(level_features.cols()), 0);
        it->second.first += level_features.row(static_cast<Eigen::Index>(i));
        ++it->second.second;
      }
      Matrix grouped(level_features.rows(), level_features.cols());
      for (std::size_t i = 0; i < n; ++i) {
        const auto& [total, count] = groups.at(out[i].pred[k - 2]);
        grouped.row(static_cast<Eigen::Index>(i)) = total / count;
      }
      level_features = std::move(grouped);
    }
    std::vector<double> scores;
    const auto classes = nearest_prototype(level_features, protos, &scores);
    for (std::size_t i = 0; i < n; ++i) {
      out[i].pred.push_back(classes[i]);
      out[i].scores.push_back(scores[i]);
    }
  }
  return out;
}

double accuracy_at(std::span<const PredictionRecord> preds, std::span<const Sample> truths, int level) {
  const auto aligned = align(preds, truths);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (level < 1 || level > static_cast<int>(preds[i].pred.size()) ||
        level > static_cast<int>(aligned[i]->labels.size()))
      throw DataError("accuracy_at: level " + std::to_string(level) + " out of range");
    if (preds[i].pred[level - 1] == aligned[i]->labels[level - 1]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

std::size_t count_violations(std::span<const PredictionRecord> preds, const Taxonomy& tax) {
  std::size_t v = 0;
  for (const auto& p : preds) {
    check_prediction(p, tax);
    for (int k = 2; k <= tax.num_levels(); ++k) {
      if (tax.parent({k - 1, p.pred[k - 2]}).index != p.pred[k - 1]) ++v;
    }
  }
  return v;
}

double hvr(std::span<const PredictionRecord> preds, const Taxonomy& tax, HvrNorm norm) {
  if (tax.num_levels() < 2) throw DataError("hvr: undefined for a single-level taxonomy");
  if (preds.empty()) throw DataError("hvr: empty prediction set");
  const double v = static_cast<double>(count_violations(preds, tax));
  const double n = static_cast<double>(preds.size());
  if (norm == HvrNorm::edge_fraction) return v / (n * (tax.num_levels() - 1));
  return v / (n * static_cast<double>(tax.edge_count()));
}

MetricsReport metrics_report(std::span<const PredictionRecord> preds, std::span<const Sample> truths,
                             const Taxonomy& tax, HvrNorm default_norm) {
  const auto aligned = align(preds, truths);
  MetricsReport r;
  r.n = preds.size();
  r.m = tax.num_levels();
  r.R = tax.edge_count();
  r.default_norm = default_norm;
  r.correct.assign(r.m, 0);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    check_prediction(preds[i], tax);
    for (int k = 1; k <= r.m; ++k) {
      if (preds[i].pred[k - 1] == aligned[i]->labels.at(k - 1)) ++r.correct[k - 1];
    }
    for (int k = 2; k <= r.m; ++k) {
      const LabelId required = tax.parent({k - 1, preds[i].pred[k - 2]});
      if (required.index != preds[i].pred[k - 1]) {
        ++r.violations;
        ++r.violations_by_parent[required];
      }
    }
  }
  for (std::size_t c : r.correct) r.acc.push_back(static_cast<double>(c) / static_cast<double>(r.n));
  if (r.m >= 2) {
    const double n = static_cast<double>(r.n);
    r.hvr_edge_fraction = static_cast<double>(r.violations) / (n * (r.m - 1));
    r.hvr_paper_eq15 = static_cast<double>(r.violations) / (n * static_cast<double>(r.R));
  }
  return r;
}

std::string metrics_to_json(const MetricsReport& r) {
  nlohmann::ordered_json doc;
  doc["n"] = r.n;
  doc["m"] = r.m;
  doc["R"] = r.R;
  doc["acc"] = r.acc;
  doc["correct"] = r.correct;
  doc["violations"] = r.violations;
  doc["hvr_edge_fraction"] = r.hvr_edge_fraction;
  doc["hvr_paper_eq15"] = r.hvr_paper_eq15;
  doc["hvr_default"] = to_string(r.default_norm);
  doc["hvr"] = r.default_norm == HvrNorm::edge_fraction ? r.hvr_edge_fraction : r.hvr_paper_eq15;
  auto breakdown = nlohmann::ordered_json::array();
  for (const auto& [label, count] : r.violations_by_parent) {
    nlohmann::ordered_json e;
    e["level"] = label.level;
    e["class"] = label.index;
    e["violations"] = count;
    breakdown.push_back(std::move(e));
  }
  doc["violations_by_parent"] = std::move(breakdown);
  return doc.dump(2) + "\n";
}

void write_predictions(std::ostream& out, std::span<const PredictionRecord> preds, bool with_scores) {
  for (const auto& p : preds) {
    nlohmann::ordered_json row;
    row["id"] = p.id;
    row["pred"] = p.pred;
    if (with_scores && !p.scores.empty()) row["scores"] = p.scores;
    out << row.dump() << '\n';
  }
}

std::vector<PredictionRecord> read_predictions(std::istream& in, const Taxonomy& tax) {
  std::vector<PredictionRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    PredictionRecord p;
    try {
      const auto row = nlohmann::json::parse(line);
      const auto& id = row.at("id");
      p.id = id.is_string() ? id.get<std::string>() : id.dump();
      p.pred = row.at("pred").get<std::vector<int>>();
      if (row.contains("scores")) p.scores = row.at("scores").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
      throw DataError("predictions line " + std::to_string(line_no) + ": " + e.what());
    }
    check_prediction(p, tax);
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<PredictionRecord> load_predictions(const std::filesystem::path& path, const Taxonomy& tax) {
  std::ifstream in(path);
  if (!in) throw DataError("predictions: cannot open " + path.string());
  return read_predictions(in, tax);
}

}  // namespace hcal
