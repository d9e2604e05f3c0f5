#pragma once

#include <cstdint>
#include <vector>

#include "hcal/tensor.hpp"

namespace hcal {

enum class Trainable { all, last_layer };

struct EncoderConfig {
  int input_dim = 0;
  std::vector<int> hidden_dims;
  int output_dim = 256;
  std::uint64_t seed = 0;
  Trainable trainable = Trainable::all;
};

// MLP feature extractor: affine + ReLU per hidden layer, affine output layer.
// Weights are stored (fan_in x fan_out) so a batch maps as X * W + b.
struct Encoder {
  EncoderConfig config;
  std::vector<Parameter> weights;
  std::vector<Parameter> biases;

  int num_layers() const { return static_cast<int>(weights.size()); }
  int output_dim() const { return config.output_dim; }
  // All parameters in layer order (W0, b0, W1, b1, ...).
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
};

// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)) from the config seed, zero biases.
Encoder init_encoder(const EncoderConfig& config);

// (B x input_dim) -> (B x output_dim).
Tensor encode(const Encoder& encoder, const Tensor& inputs);

}  // namespace hcal
