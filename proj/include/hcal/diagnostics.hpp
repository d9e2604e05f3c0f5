#pragma once

#include <cstdint>
#include <vector>

#include "hcal/gradcheck.hpp"

namespace hcal {

// A tiny end-to-end instance whose frozen-weight total loss is checked
// against central differences over every encoder and prototype parameter.
struct GradCheckSetup {
  int samples = 4;
  int feature_dim = 8;
  std::vector<int> classes_per_level{3, 2};  // finest first
  int input_dim = 6;
  std::vector<int> hidden_dims{5};
  std::uint64_t seed = 1;
  double epsilon = 0.05;
  double tau = 0.1;
  double gamma = 0.5;
  double step = 1e-5;
  bool feature_aggregation = true;
  // Doubles the analytic gradient before comparison (negative control).
  bool corrupt = false;
};

GradCheckResult run_total_loss_gradcheck(const GradCheckSetup& setup);

}  // namespace hcal
