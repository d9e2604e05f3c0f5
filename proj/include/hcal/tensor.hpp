#pragma once

// Dense 2-D tensors with reverse-mode gradient accumulation.
//
// A Tensor is a cheap shared handle onto a node of the recorded graph. Values
// are never mutated once an operation has produced them; the only in-place
// writes are optimizer updates and finite-difference probes on leaves. The
// graph is rebuilt for every loss evaluation and freed with its last handle.

#include <array>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "hcal/linalg.hpp"

namespace hcal {

namespace detail {
struct Node;
}

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Matrix value, bool requires_grad = false);

  static Tensor constant(Matrix value) { return Tensor(std::move(value), false); }
  static Tensor variable(Matrix value) { return Tensor(std::move(value), true); }
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  std::array<Eigen::Index, 2> shape() const { return {rows(), cols()}; }
  // Value of a 1x1 tensor.
  double item() const;

  bool requires_grad() const;
  // Only valid on leaves.
  void set_requires_grad(bool flag);
  bool is_leaf() const;

  // Gradient accumulated by backward(); empty matrix when nothing has been
  // accumulated since the last zero_grad().
  const Matrix& grad() const;
  bool has_grad() const { return grad().size() != 0; }
  void zero_grad();

  // In-place write to a leaf (optimizer step, finite-difference probe).
  Matrix& mutable_value();

  friend Tensor make_result(Matrix value, std::vector<Tensor> inputs,
                            std::function<void(detail::Node&)> backward, const char* op);
  friend void backward(const Tensor& loss);

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  detail::Node& node() const;

  std::shared_ptr<detail::Node> node_;
};

// Disables graph recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// Propagates d(loss)/d(x) into every reachable tensor with requires_grad.
// Leaf gradients accumulate across calls.
void backward(const Tensor& loss);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// a (r x c) plus the row vector b (1 x c) on every row.
Tensor add_row(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
// Column-wise mean over the rows: (r x c) -> (1 x c).
Tensor row_mean(const Tensor& a);
Tensor concat_rows(const Tensor& a, const Tensor& b);
// Row-wise unit L2 norm; throws NumericalError when a row norm <= kNormEpsilon.
Tensor normalize_rows(const Tensor& a);
// out(i) = a(i, columns[i]); (r x c) -> (r x 1).
Tensor pick(const Tensor& a, std::span<const int> columns);
// Per-row log-sum-exp over the entries where include(i, j) is true.
// An empty mask includes every entry.
Tensor logsumexp_rows(const Tensor& a,
                      const Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>& include = {});

Tensor l2_normalize(const Tensor& v);
// Cosine similarity of two row vectors as a differentiable 1x1 tensor.
Tensor cosine_similarity(const Tensor& a, const Tensor& b);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }

// Learning-rate group of a parameter.
struct ParamGroup {
  enum class Kind { encoder, prototypes };
  Kind kind = Kind::encoder;
  int level = 0;  // prototype level, 1-based; unused for the encoder

  std::string tag() const;
  friend bool operator==(const ParamGroup&, const ParamGroup&) = default;
};

struct Parameter {
  std::string name;
  ParamGroup group;
  Tensor tensor;
};

}  // namespace hcal
