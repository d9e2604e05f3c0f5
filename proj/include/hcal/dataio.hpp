#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "hcal/linalg.hpp"
#include "hcal/taxonomy.hpp"

namespace hcal {

struct Sample {
  std::string id;
  std::vector<double> features;
  LabelTuple labels;  // finest first
};

struct Dataset {
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  int input_dim() const { return samples.empty() ? 0 : static_cast<int>(samples.front().features.size()); }

  // Feature rows for the given sample positions.
  Matrix features(std::span<const std::size_t> rows) const;
  Matrix features() const;
  std::vector<LabelTuple> labels(std::span<const std::size_t> rows) const;
  std::vector<LabelTuple> labels() const;
  std::vector<std::string> ids() const;
};

// JSONL rows {"id": ..., "features": [...], "labels": [fine, ..., coarse]}.
// Every label tuple is validated against the taxonomy.
Dataset parse_dataset(std::istream& in, const Taxonomy& tax);
Dataset load_dataset(const std::filesystem::path& path, const Taxonomy& tax);
void write_dataset(std::ostream& out, const Dataset& data);
void save_dataset(const Dataset& data, const std::filesystem::path& path);

// Seeded permutation of 0..n-1 for (seed, epoch), cut into batches; the last
// batch may be partial.
std::vector<std::vector<std::size_t>> batch_iterator(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                     std::uint64_t epoch);

struct SynthSpec {
  std::vector<int> classes_per_level;  // finest first, non-increasing
  int input_dim = 16;
  double separation = 10.0;
  double sigma = 0.5;
  int per_class = 100;
  std::uint64_t seed = 0;
  double train_fraction = 0.8;
  double test_fraction = 0.2;
};

struct SynthData {
  Dataset train;
  Dataset test;
  Taxonomy taxonomy;
  Matrix finest_means;  // generating mean of each finest class
};

// Hierarchical Gaussian mixture: top-level means on a sphere of radius
// `separation`, each child mean offset from its parent by a random direction
// of length separation / 2^(m - level), samples = finest mean + N(0, sigma^2 I).
// Child i at level k has parent floor(i * |C^{k+1}| / |C^k|).
SynthData synth_generate(const SynthSpec& spec);

}  // namespace hcal
