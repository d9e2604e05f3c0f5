#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "hcal/linalg.hpp"
#include "hcal/taxonomy.hpp"
#include "oracles.hpp"

namespace testing {

inline hcal::Matrix to_matrix(const oracle::Mat& m) {
  hcal::Matrix out(m.size(), m.empty() ? 0 : m[0].size());
  for (std::size_t r = 0; r < m.size(); ++r)
    for (std::size_t c = 0; c < m[r].size(); ++c) out(r, c) = m[r][c];
  return out;
}

inline oracle::Mat to_mat(const hcal::Matrix& m) {
  oracle::Mat out(m.rows(), oracle::Vec(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) out[r][c] = m(r, c);
  return out;
}

// 8 -> 4 -> 2 with parent(i) = i / 2 at both levels.
inline hcal::Taxonomy three_level() { return hcal::Taxonomy({8, 4, 2}, {{0, 0, 1, 1, 2, 2, 3, 3}, {0, 0, 1, 1}}); }

// 3 fine classes under 2 coarse ones.
inline hcal::Taxonomy toy_3_2() { return hcal::Taxonomy({3, 2}, {{0, 0, 1}}); }

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void spit(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("hcal_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testing
