#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "hcal/dataio.hpp"
#include "hcal/protobank.hpp"
#include "hcal/taxonomy.hpp"

namespace hcal {

// per_sample classifies every level from the sample's own feature.
// batch_grouped replaces the level-k feature with the mean level-(k-1) feature
// of all samples sharing the same predicted level-(k-1) class.
enum class InferenceMode { per_sample, batch_grouped };

// edge_fraction divides the violation count by n*(m-1); paper_eq15 by n*R.
enum class HvrNorm { edge_fraction, paper_eq15 };

struct PredictionRecord {
  std::string id;
  LabelTuple pred;             // finest first; need not be consistent
  std::vector<double> scores;  // best cosine similarity per level, may be empty
};

// Index of the most similar prototype row (cosine) for each feature row; ties
// resolve to the lowest index.
std::vector<int> nearest_prototype(const Matrix& features, const Matrix& prototypes,
                                   std::vector<double>* best_scores = nullptr);

// Nearest-prototype prediction against the base prototypes at every level.
std::vector<PredictionRecord> predict(const Matrix& features, std::span<const std::string> ids,
                                      const PrototypeBank& bank, const Taxonomy& tax,
                                      InferenceMode mode = InferenceMode::per_sample);

double accuracy_at(std::span<const PredictionRecord> preds, std::span<const Sample> truths, int level);

// Number of predicted adjacent-level pairs (child, parent) with
// parent(child) != predicted parent.
std::size_t count_violations(std::span<const PredictionRecord> preds, const Taxonomy& tax);
double hvr(std::span<const PredictionRecord> preds, const Taxonomy& tax, HvrNorm norm = HvrNorm::edge_fraction);

struct MetricsReport {
  std::size_t n = 0;
  int m = 0;
  std::size_t R = 0;
  std::vector<std::size_t> correct;  // per level
  std::vector<double> acc;           // per level
  std::size_t violations = 0;
  double hvr_edge_fraction = 0.0;
  double hvr_paper_eq15 = 0.0;
  HvrNorm default_norm = HvrNorm::edge_fraction;
  // Keyed by the parent the hierarchy requires, parent(predicted child).
  std::map<LabelId, std::size_t> violations_by_parent;
};

MetricsReport metrics_report(std::span<const PredictionRecord> preds, std::span<const Sample> truths,
                             const Taxonomy& tax, HvrNorm default_norm = HvrNorm::edge_fraction);

std::string metrics_to_json(const MetricsReport& report);

// One {"id", "pred"} object per line; scores are appended on request.
void write_predictions(std::ostream& out, std::span<const PredictionRecord> preds, bool with_scores = false);
std::vector<PredictionRecord> read_predictions(std::istream& in, const Taxonomy& tax);
std::vector<PredictionRecord> load_predictions(const std::filesystem::path& path, const Taxonomy& tax);

const char* to_string(HvrNorm norm);
const char* to_string(InferenceMode mode);

}  // namespace hcal
