#pragma once

#include <functional>
#include <span>
#include <vector>

#include "hcal/tensor.hpp"

namespace hcal {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_parameter = 0;
  Eigen::Index worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coordinates = 0;
};

// Builds a fresh graph from the current parameter values and returns the
// scalar loss.
using Objective = std::function<Tensor()>;

// Compares the supplied analytic gradients (one per parameter, same shapes)
// against central differences (f(x+h e) - f(x-h e)) / 2h. The relative error
// of a coordinate is |a - n| / max(|a|, |n|, 1e-8). Throws NumericalError when
// the objective yields a non-finite value.
GradCheckResult compare_gradients(const Objective& objective, std::span<Tensor> params,
                                  std::span<const Matrix> analytic, double step);

// Runs backward() on the objective and checks the resulting gradients.
// Existing gradients on the parameters are cleared first and left holding
// the analytic gradient afterwards.
GradCheckResult finite_diff_check(const Objective& objective, std::span<Tensor> params,
                                  double step = 1e-5);

// A loss given as separate terms combined with constant weights. The numeric
// derivative is taken as sum_k w_k (L_k(x+h e) - L_k(x-h e)) / 2h, which is the
// same central difference as on the weighted sum but without rounding the
// total before subtracting. Terms scaled by tiny weights stay resolvable.
using TermsObjective = std::function<std::vector<Tensor>()>;

GradCheckResult compare_weighted_gradients(const TermsObjective& terms, std::span<const double> weights,
                                           std::span<Tensor> params, std::span<const Matrix> analytic,
                                           double step);

// Analytic side comes from backward() on the weighted sum of the terms.
GradCheckResult finite_diff_check_weighted(const TermsObjective& terms, std::span<const double> weights,
                                           std::span<Tensor> params, double step = 1e-5);

}  // namespace hcal
