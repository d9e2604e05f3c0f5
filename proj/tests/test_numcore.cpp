#include <doctest.h>

#include <random>

#include "helpers.hpp"
#include "hcal/gradcheck.hpp"
#include "hcal/tensor.hpp"

using hcal::Matrix;
using hcal::Tensor;

namespace {

Matrix row(std::initializer_list<double> v) {
  Matrix m(1, v.size());
  Eigen::Index i = 0;
  for (double x : v) m(0, i++) = x;
  return m;
}

Matrix random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c) {
  return testing::to_matrix(oracle::random_mat(rng, r, c));
}

// Runs the checker on a single-parameter objective.
double check_one(Tensor& p, const std::function<Tensor()>& f) {
  std::vector<Tensor> params{p};
  return hcal::finite_diff_check(f, params).max_relative_error;
}

}  // namespace

TEST_SUITE("numcore") {

TEST_CASE("primitive examples") {
  const Tensor z = hcal::matmul(Tensor::constant(Matrix::Zero(2, 3)), Tensor::constant(Matrix::Random(3, 4)));
  CHECK(z.rows() == 2);
  CHECK(z.cols() == 4);
  CHECK(z.value().isZero(0.0));

  const Tensor r = hcal::relu(Tensor::constant(row({-1, 0, 2})));
  CHECK(r.value() == row({0, 0, 2}));

  Matrix m(2, 2);
  m << 1, 3, 5, 7;
  CHECK(hcal::row_mean(Tensor::constant(m)).value() == row({3, 5}));

  CHECK(hcal::sum(Tensor::constant(m)).item() == 16.0);
  CHECK(hcal::mean(Tensor::constant(m)).item() == 4.0);
  CHECK(hcal::concat_rows(Tensor::constant(m), Tensor::constant(row({9, 9}))).rows() == 3);
  CHECK(hcal::exp(hcal::log(Tensor::constant(row({2.0})))).item() == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("primitive errors") {
  CHECK_THROWS_AS(hcal::matmul(Tensor::constant(Matrix::Zero(2, 3)), Tensor::constant(Matrix::Zero(2, 3))),
                  hcal::ShapeError);
  CHECK_THROWS_AS(hcal::add(Tensor::constant(Matrix::Zero(2, 3)), Tensor::constant(Matrix::Zero(3, 2))),
                  hcal::ShapeError);
  CHECK_THROWS_AS(hcal::log(Tensor::constant(row({1.0, 0.0}))), hcal::NumericalError);
  CHECK_THROWS_AS(hcal::log(Tensor::constant(row({-1.0}))), hcal::NumericalError);
  CHECK_THROWS_AS(hcal::exp(Tensor::constant(row({1000.0}))), hcal::NumericalError);
  CHECK_THROWS_AS(hcal::concat_rows(Tensor::constant(Matrix::Zero(1, 2)), Tensor::constant(Matrix::Zero(1, 3))),
                  hcal::ShapeError);
}

TEST_CASE("l2 normalize") {
  const Tensor a = hcal::l2_normalize(Tensor::constant(row({3, 4})));
  CHECK(a.value()(0, 0) == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(a.value()(0, 1) == doctest::Approx(0.8).epsilon(1e-15));
  const Tensor b = hcal::l2_normalize(Tensor::constant(row({0.6, 0.8})));
  CHECK((b.value() - row({0.6, 0.8})).cwiseAbs().maxCoeff() < 1e-15);
  CHECK_THROWS_AS(hcal::l2_normalize(Tensor::constant(row({0, 0}))), hcal::NumericalError);
  CHECK_THROWS_AS(hcal::l2_normalized(row({0, 0})), hcal::NumericalError);
}

TEST_CASE("l2 normalize is idempotent and unit norm") {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 50; ++t) {
    const Matrix v = random_matrix(rng, 1, 7);
    const Matrix once = hcal::l2_normalize(Tensor::constant(v)).value();
    const Matrix twice = hcal::l2_normalize(Tensor::constant(once)).value();
    CHECK(std::abs(once.norm() - 1.0) < 1e-12);
    CHECK((once - twice).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("cosine similarity") {
  CHECK(hcal::cosine_similarity(row({1, 0}), row({1, 0})) == 1.0);
  CHECK(hcal::cosine_similarity(row({1, 0}), row({0, 1})) == 0.0);
  CHECK(hcal::cosine_similarity(row({1, 1}), row({1, 0})) == doctest::Approx(0.70710678).epsilon(1e-8));
  CHECK(hcal::cosine_similarity(Tensor::constant(row({1, 1})), Tensor::constant(row({1, 0}))).item() ==
        doctest::Approx(0.70710678).epsilon(1e-8));
  CHECK_THROWS_AS(hcal::cosine_similarity(row({1, 0}), row({1, 0, 0})), hcal::ShapeError);
  CHECK_THROWS_AS(hcal::cosine_similarity(row({0, 0}), row({1, 0})), hcal::NumericalError);
  CHECK_THROWS_AS(hcal::cosine_similarity(Tensor::constant(row({1, 0})), Tensor::constant(row({1, 0, 0}))),
                  hcal::ShapeError);
}

TEST_CASE("cosine similarity is scale invariant and matches the oracle") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> scale(0.01, 100.0);
  for (int t = 0; t < 50; ++t) {
    const Matrix a = random_matrix(rng, 1, 5);
    const Matrix b = random_matrix(rng, 1, 5);
    const double base = hcal::cosine_similarity(a, b);
    CHECK(std::abs(hcal::cosine_similarity(Matrix(scale(rng) * a), Matrix(scale(rng) * b)) - base) < 1e-12);
    CHECK(std::abs(base - oracle::cosine(testing::to_mat(a)[0], testing::to_mat(b)[0])) < 1e-14);
    CHECK(base <= 1.0);
    CHECK(base >= -1.0);
  }
}

TEST_CASE("backward examples") {
  Tensor p = Tensor::variable(row({1, -2, 3}));
  hcal::backward(hcal::sum(p));
  CHECK(p.grad() == row({1, 1, 1}));

  Tensor q = Tensor::variable(row({1, -2, 3}));
  hcal::backward(hcal::sum(hcal::mul(q, q)));
  CHECK(q.grad() == row({2, -4, 6}));

  Tensor r = Tensor::variable(row({1, -2, 3}));
  const Tensor loss = hcal::sum(hcal::mul(r, r));
  hcal::backward(loss);
  const Matrix first = r.grad();
  hcal::backward(loss);
  CHECK(r.grad() == 2.0 * first);

  CHECK_THROWS_AS(hcal::backward(hcal::mul(r, r)), hcal::ShapeError);
}

TEST_CASE("constants and no-grad regions record nothing") {
  Tensor p = Tensor::variable(row({1, 2}));
  const Tensor c = Tensor::constant(row({3, 4}));
  {
    hcal::NoGradGuard guard;
    CHECK_FALSE(hcal::grad_enabled());
    CHECK_FALSE(hcal::mul(p, c).requires_grad());
  }
  CHECK(hcal::grad_enabled());
  hcal::backward(hcal::sum(hcal::mul(p, c)));
  CHECK(p.grad() == row({3, 4}));
  CHECK_FALSE(c.has_grad());
}

TEST_CASE("finite difference checker examples") {
  Tensor x = Tensor::variable(row({3.0}));
  const double err = check_one(x, [&] { return hcal::sum(hcal::mul(x, x)); });
  CHECK(err < 1e-8);
  CHECK(x.grad()(0, 0) == 6.0);

  std::mt19937_64 rng(13);
  const Tensor a = Tensor::constant(random_matrix(rng, 1, 6));
  // Only rounding of f remains, so the error scales with |f| / h.
  for (double s : {1e-3, 1.0, 1e3}) {
    Tensor v = Tensor::variable(s * random_matrix(rng, 1, 6));
    const double bound = 1e-9 * std::max(1.0, s);
    CHECK(check_one(v, [&] { return hcal::sum(hcal::mul(a, v)); }) < bound);
  }

  Tensor y = Tensor::variable(row({1.5, -0.7}));
  const std::function<Tensor()> f = [&] { return hcal::sum(hcal::mul(y, hcal::exp(y))); };
  std::vector<Tensor> params{y};
  hcal::backward(f());
  std::vector<Matrix> doubled{2.0 * y.grad()};
  const auto corrupted = hcal::compare_gradients(f, params, doubled, 1e-5);
  CHECK(corrupted.max_relative_error == doctest::Approx(0.5).epsilon(1e-6));

  Tensor w = Tensor::variable(row({1.0}));
  CHECK_THROWS_AS(check_one(w, [&] { return hcal::scale(hcal::sum(w), std::nan("")); }), hcal::NumericalError);
}

TEST_CASE("gradients of every primitive match finite differences") {
  std::mt19937_64 rng(14);
  Tensor a = Tensor::variable(random_matrix(rng, 3, 4));
  Tensor b = Tensor::variable(random_matrix(rng, 4, 2));
  Tensor c = Tensor::variable(random_matrix(rng, 3, 4));
  Tensor bias = Tensor::variable(random_matrix(rng, 1, 4));
  Tensor pos = Tensor::variable(random_matrix(rng, 3, 4).cwiseAbs().array() + 0.5);
  const std::vector<int> cols{0, 3, 1};
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> mask(3, 4);
  mask << true, false, true, true, true, true, false, true, false, true, true, true;
  const Tensor weights = Tensor::constant(random_matrix(rng, 3, 2));

  std::vector<std::pair<const char*, std::function<Tensor()>>> cases{
      {"matmul", [&] { return hcal::sum(hcal::mul(hcal::matmul(a, b), weights)); }},
      {"transpose", [&] { return hcal::sum(hcal::matmul(hcal::transpose(a), c)); }},
      {"add/sub/mul", [&] { return hcal::sum(hcal::mul(hcal::sub(a, c), hcal::add(a, c))); }},
      {"add_row/relu", [&] { return hcal::sum(hcal::mul(hcal::relu(hcal::add_row(a, bias)), c)); }},
      {"scale/exp/log", [&] { return hcal::sum(hcal::log(hcal::scale(hcal::exp(hcal::scale(pos, 0.3)), 2.0))); }},
      {"mean/row_mean", [&] { return hcal::add(hcal::mean(hcal::mul(a, a)), hcal::sum(hcal::mul(hcal::row_mean(c), bias))); }},
      {"concat/normalize", [&] { return hcal::sum(hcal::mul(hcal::normalize_rows(hcal::concat_rows(a, c)), hcal::concat_rows(c, a))); }},
      {"pick/logsumexp", [&] { return hcal::sub(hcal::sum(hcal::logsumexp_rows(a, mask)), hcal::sum(hcal::pick(c, cols))); }},
      {"logsumexp full", [&] { return hcal::sum(hcal::logsumexp_rows(hcal::add(a, c))); }},
      {"cosine", [&] { return hcal::cosine_similarity(bias, hcal::row_mean(a)); }},
  };
  std::vector<Tensor> params{a, b, c, bias, pos};
  for (const auto& [name, f] : cases) {
    CAPTURE(name);
    const auto r = hcal::finite_diff_check(f, params);
    CHECK(r.max_relative_error < 1e-6);
  }
}

TEST_CASE("masked logsumexp matches a direct sum") {
  Matrix v(2, 3);
  v << 1, 2, 3, -1, 0, 5;
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> mask(2, 3);
  mask << true, false, true, false, true, true;
  const Matrix out = hcal::logsumexp_rows(Tensor::constant(v), mask).value();
  CHECK(out(0, 0) == doctest::Approx(std::log(std::exp(1) + std::exp(3))).epsilon(1e-14));
  CHECK(out(1, 0) == doctest::Approx(std::log(std::exp(0) + std::exp(5))).epsilon(1e-14));
}

TEST_CASE("softmax and seeds") {
  const std::vector<double> l{1.0, 0.5};
  const auto w = hcal::softmax<double>(l, 0.5);
  CHECK(w[0] == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))).epsilon(1e-15));
  CHECK_THROWS_AS(hcal::softmax<double>(l, 0.0), hcal::ConfigError);
  const std::vector<float> lf{1.0f, 0.5f};
  CHECK(hcal::softmax<float>(lf, 0.5f)[0] == doctest::Approx(0.731059).epsilon(1e-6));
  static_assert(hcal::derive_seed(1, 2) == hcal::derive_seed(1, 2));
  CHECK(hcal::derive_seed(1, 2) != hcal::derive_seed(1, 3));
  CHECK(hcal::derive_seed(1, 2) != hcal::derive_seed(2, 2));
}

TEST_CASE("repeated evaluation is bit identical") {
  std::mt19937_64 rng(15);
  const Matrix a = random_matrix(rng, 5, 6);
  const Matrix b = random_matrix(rng, 6, 3);
  const auto run = [&] {
    return hcal::logsumexp_rows(hcal::normalize_rows(hcal::matmul(Tensor::constant(a), Tensor::constant(b)))).value();
  };
  CHECK(run() == run());
}

}
