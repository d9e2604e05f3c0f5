#pragma once

// Scalar-generic dense helpers shared by the differentiable engine, inference
// and the metric code. Everything here works on plain Eigen expressions.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "hcal/error.hpp"

namespace hcal {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using RowVectorX = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using Matrix = MatrixX<double>;
using RowVector = RowVectorX<double>;

// Norms at or below this are treated as the zero vector.
inline constexpr double kNormEpsilon = 1e-12;

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.allFinite();
}

template <typename Derived>
auto l2_normalized(const Eigen::MatrixBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  const Scalar norm = v.norm();
  if (!(norm > Scalar(kNormEpsilon))) throw NumericalError("l2_normalize: degenerate vector");
  return (v / norm).eval();
}

template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar cosine_similarity(const Eigen::MatrixBase<DerivedA>& a,
                                            const Eigen::MatrixBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  if (a.size() != b.size()) throw ShapeError("cosine_similarity: dimension mismatch");
  const Scalar na = a.norm();
  const Scalar nb = b.norm();
  if (!(na > Scalar(kNormEpsilon)) || !(nb > Scalar(kNormEpsilon)))
    throw NumericalError("cosine_similarity: degenerate vector");
  const Scalar dot = a.reshaped().dot(b.reshaped());
  return dot / (na * nb);
}

// Row-wise L2 normalization; throws on any degenerate row.
template <typename Derived>
MatrixX<typename Derived::Scalar> normalize_rows(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  MatrixX<Scalar> out(m.rows(), m.cols());
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const Scalar norm = m.row(r).norm();
    if (!(norm > Scalar(kNormEpsilon))) throw NumericalError("normalize_rows: degenerate row");
    out.row(r) = m.row(r) / norm;
  }
  return out;
}

// Numerically stable softmax of values / temperature.
template <typename Scalar>
std::vector<Scalar> softmax(std::span<const Scalar> values, Scalar temperature) {
  if (!(temperature > Scalar(0))) throw ConfigError("softmax: temperature must be positive");
  std::vector<Scalar> out(values.size());
  if (values.empty()) return out;
  Scalar peak = -std::numeric_limits<Scalar>::infinity();
  for (Scalar v : values) {
    if (!std::isfinite(v)) throw NumericalError("softmax: non-finite input");
    peak = std::max(peak, v / temperature);
  }
  Scalar total = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    out[i] = std::exp(values[i] / temperature - peak);
    total += out[i];
  }
  for (Scalar& w : out) w /= total;
  return out;
}

// SplitMix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  return mix_seed(mix_seed(base) ^ mix_seed(stream + 0x632be59bd9b4e019ULL));
}

constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
  return derive_seed(derive_seed(base, a), b);
}

}  // namespace hcal
