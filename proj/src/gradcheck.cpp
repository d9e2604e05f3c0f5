#include "hcal/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace hcal {

namespace {

double evaluate(const Objective& objective) {
  NoGradGuard guard;
  const double v = objective().item();
  if (!std::isfinite(v)) throw NumericalError("gradcheck: objective returned a non-finite value");
  return v;
}

// Evaluates f(x+h e) - f(x-h e) for the coordinate currently held in place.
using Difference = std::function<double(double* coord, double original, double step)>;

GradCheckResult compare_with(const Difference& difference, std::span<Tensor> params,
                             std::span<const Matrix> analytic, double step) {
  if (!(step > 0.0)) throw ConfigError("gradcheck: step must be positive");
  if (analytic.size() != params.size()) throw ShapeError("gradcheck: one gradient per parameter");
  GradCheckResult result;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Matrix& value = params[p].mutable_value();
    if (analytic[p].rows() != value.rows() || analytic[p].cols() != value.cols())
      throw ShapeError("gradcheck: gradient shape differs from parameter shape");
    for (Eigen::Index i = 0; i < value.size(); ++i) {
      const double numeric = difference(value.data() + i, value.data()[i], step) / (2.0 * step);
      const double a = analytic[p].data()[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double rel = std::abs(a - numeric) / denom;
      ++result.coordinates;
      if (rel > result.max_relative_error) {
        result.max_relative_error = rel;
        result.worst_parameter = p;
        result.worst_index = i;
        result.worst_analytic = a;
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

std::vector<double> evaluate_terms(const TermsObjective& terms) {
  NoGradGuard guard;
  std::vector<double> out;
  for (const Tensor& t : terms()) {
    const double v = t.item();
    if (!std::isfinite(v)) throw NumericalError("gradcheck: objective returned a non-finite value");
    out.push_back(v);
  }
  return out;
}

Tensor weighted_sum(const std::vector<Tensor>& terms, std::span<const double> weights) {
  if (terms.size() != weights.size() || terms.empty()) throw ShapeError("gradcheck: one weight per loss term required");
  Tensor total = scale(terms[0], weights[0]);
  for (std::size_t k = 1; k < terms.size(); ++k) total = add(total, scale(terms[k], weights[k]));
  return total;
}

std::vector<Matrix> analytic_gradients(const Tensor& loss, std::span<Tensor> params) {
  if (!std::isfinite(loss.item())) throw NumericalError("gradcheck: objective returned a non-finite value");
  backward(loss);
  std::vector<Matrix> analytic;
  analytic.reserve(params.size());
  for (const Tensor& t : params) {
    analytic.push_back(t.has_grad() ? t.grad() : Matrix::Zero(t.rows(), t.cols()));
  }
  return analytic;
}

}  // namespace

GradCheckResult compare_gradients(const Objective& objective, std::span<Tensor> params,
                                  std::span<const Matrix> analytic, double step) {
  return compare_with(
      [&](double* coord, double original, double h) {
        *coord = original + h;
        const double plus = evaluate(objective);
        *coord = original - h;
        const double minus = evaluate(objective);
        *coord = original;
        return plus - minus;
      },
      params, analytic, step);
}

GradCheckResult compare_weighted_gradients(const TermsObjective& terms, std::span<const double> weights,
                                           std::span<Tensor> params, std::span<const Matrix> analytic,
                                           double step) {
  return compare_with(
      [&](double* coord, double original, double h) {
        *coord = original + h;
        const auto plus = evaluate_terms(terms);
        *coord = original - h;
        const auto minus = evaluate_terms(terms);
        *coord = original;
        if (plus.size() != weights.size()) throw ShapeError("gradcheck: one weight per loss term required");
        double diff = 0.0;
        for (std::size_t k = 0; k < plus.size(); ++k) diff += weights[k] * (plus[k] - minus[k]);
        return diff;
      },
      params, analytic, step);
}

GradCheckResult finite_diff_check_weighted(const TermsObjective& terms, std::span<const double> weights,
                                           std::span<Tensor> params, double step) {
  for (Tensor& t : params) t.zero_grad();
  const auto analytic = analytic_gradients(weighted_sum(terms(), weights), params);
  return compare_weighted_gradients(terms, weights, params, analytic, step);
}

GradCheckResult finite_diff_check(const Objective& objective, std::span<Tensor> params, double step) {
  for (Tensor& t : params) t.zero_grad();
  const auto analytic = analytic_gradients(objective(), params);
  return compare_gradients(objective, params, analytic, step);
}

}  // namespace hcal
