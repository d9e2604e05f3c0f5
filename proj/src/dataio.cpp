#include "hcal/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>

#include <json.hpp>

namespace hcal {

Matrix Dataset::features(std::span<const std::size_t> rows) const {
  const int dim = input_dim();
  Matrix out(static_cast<Eigen::Index>(rows.size()), dim);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& f = samples.at(rows[r]).features;
    for (int c = 0; c < dim; ++c) out(static_cast<Eigen::Index>(r), c) = f[c];
  }
  return out;
}

Matrix Dataset::features() const {
  std::vector<std::size_t> all(samples.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return features(all);
}

std::vector<LabelTuple> Dataset::labels(std::span<const std::size_t> rows) const {
  std::vector<LabelTuple> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) out.push_back(samples.at(r).labels);
  return out;
}

std::vector<LabelTuple> Dataset::labels() const {
  std::vector<LabelTuple> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.labels);
  return out;
}

std::vector<std::string> Dataset::ids() const {
  std::vector<std::string> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.id);
  return out;
}

Dataset parse_dataset(std::istream& in, const Taxonomy& tax) {
  using nlohmann::json;
  Dataset data;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Sample s;
    try {
      const json row = json::parse(line);
      const json& id = row.at("id");
      s.id = id.is_string() ? id.get<std::string>() : id.dump();
      s.features = row.at("features").get<std::vector<double>>();
      s.labels = row.at("labels").get<std::vector<int>>();
    } catch (const json::exception& e) {
      throw DataError("dataset line " + std::to_string(line_no) + ": malformed row: " + e.what());
    }
    for (double v : s.features) {
      if (!std::isfinite(v)) throw DataError("dataset row '" + s.id + "': non-finite feature");
    }
    if (!data.empty() && static_cast<int>(s.features.size()) != data.input_dim())
      throw DataError("dataset row '" + s.id + "': feature dimension " + std::to_string(s.features.size()) +
                      " differs from " + std::to_string(data.input_dim()));
    try {
      tax.validate_labels(s.labels);
    } catch (const DataError& e) {
      throw DataError("dataset row '" + s.id + "': " + e.what());
    }
    data.samples.push_back(std::move(s));
  }
  return data;
}

Dataset load_dataset(const std::filesystem::path& path, const Taxonomy& tax) {
  std::ifstream in(path);
  if (!in) throw DataError("dataset: cannot open " + path.string());
  return parse_dataset(in, tax);
}

void write_dataset(std::ostream& out, const Dataset& data) {
  for (const auto& s : data.samples) {
    nlohmann::ordered_json row;
    row["id"] = s.id;
    row["features"] = s.features;
    row["labels"] = s.labels;
    out << row.dump() << '\n';
  }
}

void save_dataset(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("dataset: cannot write " + path.string());
  write_dataset(out, data);
}

std::vector<std::vector<std::size_t>> batch_iterator(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                     std::uint64_t epoch) {
  if (batch_size == 0) throw ConfigError("batch_iterator: batch_size must be at least 1");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(derive_seed(seed, 0xba7cULL, epoch));
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t stop = std::min(n, start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(stop));
  }
  return batches;
}

namespace {

RowVector random_direction(int dim, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  RowVector v(dim);
  do {
    for (int i = 0; i < dim; ++i) v(i) = normal(rng);
  } while (!(v.norm() > kNormEpsilon));
  return v / v.norm();
}

Taxonomy synth_taxonomy(const std::vector<int>& counts) {
  std::vector<std::vector<int>> parents;
  for (std::size_t k = 0; k + 1 < counts.size(); ++k) {
    std::vector<int> table(counts[k]);
    for (int i = 0; i < counts[k]; ++i)
      table[i] = static_cast<int>(static_cast<long long>(i) * counts[k + 1] / counts[k]);
    parents.push_back(std::move(table));
  }
  return Taxonomy(counts, std::move(parents));
}

}  // namespace

SynthData synth_generate(const SynthSpec& spec) {
  const auto& counts = spec.classes_per_level;
  if (counts.empty()) throw ConfigError("synth: at least one level is required");
  for (std::size_t k = 0; k < counts.size(); ++k) {
    if (counts[k] < 1) throw ConfigError("synth: every level needs at least one class");
    if (k + 1 < counts.size() && counts[k] < counts[k + 1])
      throw ConfigError("synth: class counts must not grow toward coarser levels");
  }
  if (spec.input_dim < 1) throw ConfigError("synth: input_dim must be positive");
  if (!(spec.separation > 0.0)) throw ConfigError("synth: separation must be positive");
  if (!(spec.sigma >= 0.0)) throw ConfigError("synth: sigma must be non-negative");
  if (spec.per_class < 1) throw ConfigError("synth: per_class must be positive");
  if (!(spec.train_fraction >= 0.0 && spec.test_fraction >= 0.0) ||
      std::abs(spec.train_fraction + spec.test_fraction - 1.0) > 1e-9)
    throw ConfigError("synth: train and test fractions must be non-negative and sum to 1");

  SynthData out{{}, {}, synth_taxonomy(counts), {}};
  const Taxonomy& tax = out.taxonomy;
  const int m = tax.num_levels();
  std::mt19937_64 rng(spec.seed);

  // Means from the top level down.
  std::vector<Matrix> means(m);
  means[m - 1] = Matrix(tax.classes_at(m), spec.input_dim);
  for (int c = 0; c < tax.classes_at(m); ++c) means[m - 1].row(c) = spec.separation * random_direction(spec.input_dim, rng);
  for (int k = m - 1; k >= 1; --k) {
    const double offset = spec.separation / std::pow(2.0, m - k);
    means[k - 1] = Matrix(tax.classes_at(k), spec.input_dim);
    for (int c = 0; c < tax.classes_at(k); ++c) {
      const int p = tax.parent({k, c}).index;
      means[k - 1].row(c) = means[k].row(p) + offset * random_direction(spec.input_dim, rng);
    }
  }
  out.finest_means = means[0];

  std::normal_distribution<double> noise(0.0, spec.sigma > 0.0 ? spec.sigma : 1.0);
  const int train_per_class = static_cast<int>(std::lround(spec.train_fraction * spec.per_class));
  int serial = 0;
  for (int c = 0; c < tax.classes_at(1); ++c) {
    const LabelTuple chain = tax.chain_of(c);
    std::vector<Sample> drawn;
    for (int s = 0; s < spec.per_class; ++s) {
      Sample sample;
      char id[32];
      std::snprintf(id, sizeof id, "s%06d", serial++);
      sample.id = id;
      sample.features.resize(spec.input_dim);
      for (int i = 0; i < spec.input_dim; ++i)
        sample.features[i] = means[0](c, i) + (spec.sigma > 0.0 ? noise(rng) : 0.0);
      sample.labels = chain;
      drawn.push_back(std::move(sample));
    }
    std::shuffle(drawn.begin(), drawn.end(), rng);
    for (int s = 0; s < spec.per_class; ++s) {
      (s < train_per_class ? out.train : out.test).samples.push_back(std::move(drawn[s]));
    }
  }
  return out;
}

}  // namespace hcal
