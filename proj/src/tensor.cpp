#include "hcal/tensor.hpp"

#include <cmath>
#include <unordered_set>

namespace hcal {

using Eigen::Index;

namespace detail {

struct Node {
  Matrix value;
  Matrix grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;  // empty on leaves
};

}  // namespace detail

using detail::Node;

namespace {

thread_local bool g_grad_enabled = true;

void accumulate(Node& target, const Matrix& g) {
  if (!target.requires_grad) return;
  if (target.grad.size() == 0) {
    target.grad = g;
  } else {
    target.grad += g;
  }
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()) + ")");
}

}  // namespace

Tensor::Tensor(Matrix value, bool requires_grad) : node_(std::make_shared<Node>()) {
  if (!value.allFinite()) throw NumericalError("tensor: non-finite value");
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return Tensor(std::move(m), requires_grad);
}

Node& Tensor::node() const {
  if (!node_) throw Error("tensor: use of undefined tensor");
  return *node_;
}

const Matrix& Tensor::value() const { return node().value; }

double Tensor::item() const {
  if (rows() != 1 || cols() != 1) throw ShapeError("tensor: item() on a non-scalar");
  return value()(0, 0);
}

bool Tensor::requires_grad() const { return node().requires_grad; }

bool Tensor::is_leaf() const { return !node().backward; }

void Tensor::set_requires_grad(bool flag) {
  if (!is_leaf()) throw Error("tensor: requires_grad can only be set on leaves");
  node().requires_grad = flag;
  if (!flag) node().grad.resize(0, 0);
}

const Matrix& Tensor::grad() const { return node().grad; }

void Tensor::zero_grad() { node().grad.resize(0, 0); }

Matrix& Tensor::mutable_value() {
  if (!is_leaf()) throw Error("tensor: only leaves can be written in place");
  return node().value;
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

Tensor make_result(Matrix value, std::vector<Tensor> inputs,
                   std::function<void(Node&)> backward_fn, const char* op) {
  if (!value.allFinite()) throw NumericalError(std::string(op) + ": non-finite result");
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  bool tracked = false;
  if (g_grad_enabled) {
    for (const Tensor& t : inputs) tracked = tracked || t.requires_grad();
  }
  if (tracked) {
    node->requires_grad = true;
    for (Tensor& t : inputs) node->inputs.push_back(std::move(t.node_));
    node->backward = std::move(backward_fn);
  }
  return Tensor(std::move(node));
}

void backward(const Tensor& loss) {
  Node& root = loss.node();
  if (root.value.rows() != 1 || root.value.cols() != 1)
    throw ShapeError("backward: loss must be a scalar");
  if (!root.requires_grad) return;

  // Iterative post-order DFS gives a topological order (inputs first).
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{&root, 0}};
  visited.insert(&root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.push_back({child, 0});
      continue;
    }
    order.push_back(node);
    stack.pop_back();
  }

  for (Node* n : order) {
    if (n->backward) n->grad = Matrix::Zero(n->value.rows(), n->value.cols());
  }
  if (root.backward) {
    root.grad(0, 0) = 1.0;
  } else {
    accumulate(root, Matrix::Ones(1, 1));
    return;
  }
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward) (*it)->backward(**it);
  }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows())
    throw ShapeError("matmul: inner dimensions differ (" + std::to_string(a.cols()) + " vs " +
                     std::to_string(b.rows()) + ")");
  return make_result(a.value() * b.value(), {a, b}, [](Node& self) {
    Node& x = *self.inputs[0];
    Node& y = *self.inputs[1];
    if (x.requires_grad) accumulate(x, self.grad * y.value.transpose());
    if (y.requires_grad) accumulate(y, x.value.transpose() * self.grad);
  }, "matmul");
}

Tensor transpose(const Tensor& a) {
  return make_result(a.value().transpose(), {a}, [](Node& self) {
    accumulate(*self.inputs[0], self.grad.transpose());
  }, "transpose");
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  return make_result(a.value() + b.value(), {a, b}, [](Node& self) {
    accumulate(*self.inputs[0], self.grad);
    accumulate(*self.inputs[1], self.grad);
  }, "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  return make_result(a.value() - b.value(), {a, b}, [](Node& self) {
    accumulate(*self.inputs[0], self.grad);
    accumulate(*self.inputs[1], -self.grad);
  }, "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  return make_result(a.value().cwiseProduct(b.value()), {a, b}, [](Node& self) {
    Node& x = *self.inputs[0];
    Node& y = *self.inputs[1];
    if (x.requires_grad) accumulate(x, self.grad.cwiseProduct(y.value));
    if (y.requires_grad) accumulate(y, self.grad.cwiseProduct(x.value));
  }, "mul");
}

Tensor add_row(const Tensor& a, const Tensor& b) {
  if (b.rows() != 1 || b.cols() != a.cols()) throw ShapeError("add_row: bias must be 1 x cols");
  Matrix out = a.value().rowwise() + b.value().row(0);
  return make_result(std::move(out), {a, b}, [](Node& self) {
    accumulate(*self.inputs[0], self.grad);
    if (self.inputs[1]->requires_grad) accumulate(*self.inputs[1], self.grad.colwise().sum());
  }, "add_row");
}

Tensor scale(const Tensor& a, double s) {
  return make_result(a.value() * s, {a}, [s](Node& self) {
    accumulate(*self.inputs[0], self.grad * s);
  }, "scale");
}

Tensor relu(const Tensor& a) {
  return make_result(a.value().cwiseMax(0.0), {a}, [](Node& self) {
    const Matrix& x = self.inputs[0]->value;
    accumulate(*self.inputs[0], (x.array() > 0.0).select(self.grad, 0.0).matrix());
  }, "relu");
}

Tensor exp(const Tensor& a) {
  return make_result(a.value().array().exp().matrix(), {a}, [](Node& self) {
    accumulate(*self.inputs[0], self.grad.cwiseProduct(self.value));
  }, "exp");
}

Tensor log(const Tensor& a) {
  if ((a.value().array() <= 0.0).any()) throw NumericalError("log: nonpositive argument");
  return make_result(a.value().array().log().matrix(), {a}, [](Node& self) {
    accumulate(*self.inputs[0], self.grad.cwiseQuotient(self.inputs[0]->value));
  }, "log");
}

Tensor sum(const Tensor& a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return make_result(std::move(out), {a}, [](Node& self) {
    const Node& x = *self.inputs[0];
    accumulate(*self.inputs[0], Matrix::Constant(x.value.rows(), x.value.cols(), self.grad(0, 0)));
  }, "sum");
}

Tensor mean(const Tensor& a) {
  if (a.value().size() == 0) throw ShapeError("mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Tensor row_mean(const Tensor& a) {
  if (a.rows() == 0) throw ShapeError("row_mean: no rows");
  const double inv = 1.0 / static_cast<double>(a.rows());
  Matrix out = a.value().colwise().sum() * inv;
  return make_result(std::move(out), {a}, [inv](Node& self) {
    const Index rows = self.inputs[0]->value.rows();
    accumulate(*self.inputs[0], self.grad.replicate(rows, 1) * inv);
  }, "row_mean");
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) throw ShapeError("concat_rows: column counts differ");
  Matrix out(a.rows() + b.rows(), a.cols());
  out.topRows(a.rows()) = a.value();
  out.bottomRows(b.rows()) = b.value();
  return make_result(std::move(out), {a, b}, [](Node& self) {
    const Index top = self.inputs[0]->value.rows();
    const Index bottom = self.inputs[1]->value.rows();
    if (self.inputs[0]->requires_grad) accumulate(*self.inputs[0], self.grad.topRows(top));
    if (self.inputs[1]->requires_grad) accumulate(*self.inputs[1], self.grad.bottomRows(bottom));
  }, "concat_rows");
}

Tensor normalize_rows(const Tensor& a) {
  const Matrix& x = a.value();
  Eigen::VectorXd norms(x.rows());
  Matrix out(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    norms(r) = x.row(r).norm();
    if (!(norms(r) > kNormEpsilon)) throw NumericalError("l2_normalize: degenerate vector");
    out.row(r) = x.row(r) / norms(r);
  }
  return make_result(std::move(out), {a}, [norms](Node& self) {
    const Matrix& y = self.value;
    Matrix g(y.rows(), y.cols());
    for (Index r = 0; r < y.rows(); ++r) {
      const double along = self.grad.row(r).dot(y.row(r));
      g.row(r) = (self.grad.row(r) - along * y.row(r)) / norms(r);
    }
    accumulate(*self.inputs[0], g);
  }, "normalize_rows");
}

Tensor pick(const Tensor& a, std::span<const int> columns) {
  if (static_cast<Index>(columns.size()) != a.rows()) throw ShapeError("pick: one column per row");
  Matrix out(a.rows(), 1);
  for (Index r = 0; r < a.rows(); ++r) {
    const int c = columns[r];
    if (c < 0 || c >= a.cols()) throw ShapeError("pick: column out of range");
    out(r, 0) = a.value()(r, c);
  }
  std::vector<int> cols(columns.begin(), columns.end());
  return make_result(std::move(out), {a}, [cols = std::move(cols)](Node& self) {
    const Node& x = *self.inputs[0];
    Matrix g = Matrix::Zero(x.value.rows(), x.value.cols());
    for (Index r = 0; r < g.rows(); ++r) g(r, cols[r]) = self.grad(r, 0);
    accumulate(*self.inputs[0], g);
  }, "pick");
}

Tensor logsumexp_rows(const Tensor& a,
                      const Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>& include) {
  const Matrix& x = a.value();
  const bool masked = include.size() != 0;
  if (masked && (include.rows() != x.rows() || include.cols() != x.cols()))
    throw ShapeError("logsumexp_rows: mask shape mismatch");
  Matrix out(x.rows(), 1);
  Matrix weights = Matrix::Zero(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    double peak = -std::numeric_limits<double>::infinity();
    for (Index c = 0; c < x.cols(); ++c) {
      if (!masked || include(r, c)) peak = std::max(peak, x(r, c));
    }
    if (!std::isfinite(peak)) throw NumericalError("logsumexp_rows: empty row");
    double total = 0.0;
    for (Index c = 0; c < x.cols(); ++c) {
      if (!masked || include(r, c)) {
        weights(r, c) = std::exp(x(r, c) - peak);
        total += weights(r, c);
      }
    }
    weights.row(r) /= total;
    out(r, 0) = peak + std::log(total);
  }
  return make_result(std::move(out), {a}, [weights = std::move(weights)](Node& self) {
    accumulate(*self.inputs[0], weights.array().colwise() * self.grad.col(0).array());
  }, "logsumexp_rows");
}

Tensor l2_normalize(const Tensor& v) {
  if (v.rows() != 1) throw ShapeError("l2_normalize: expected a row vector");
  return normalize_rows(v);
}

Tensor cosine_similarity(const Tensor& a, const Tensor& b) {
  if (a.rows() != 1 || b.rows() != 1) throw ShapeError("cosine_similarity: expected row vectors");
  if (a.cols() != b.cols()) throw ShapeError("cosine_similarity: dimension mismatch");
  return sum(mul(normalize_rows(a), normalize_rows(b)));
}

std::string ParamGroup::tag() const {
  if (kind == Kind::encoder) return "encoder";
  return "prototypes-level-" + std::to_string(level);
}

}  // namespace hcal
