#include "hcal/encoder.hpp"

#include <cmath>
#include <random>

namespace hcal {

std::vector<Parameter*> Encoder::parameters() {
  std::vector<Parameter*> out;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    out.push_back(&weights[l]);
    out.push_back(&biases[l]);
  }
  return out;
}

std::vector<const Parameter*> Encoder::parameters() const {
  std::vector<const Parameter*> out;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    out.push_back(&weights[l]);
    out.push_back(&biases[l]);
  }
  return out;
}

Encoder init_encoder(const EncoderConfig& config) {
  if (config.input_dim <= 0) throw ConfigError("encoder: input_dim must be positive");
  if (config.output_dim <= 0) throw ConfigError("encoder: output_dim must be positive");
  for (int h : config.hidden_dims) {
    if (h <= 0) throw ConfigError("encoder: hidden dimensions must be positive");
  }

  std::vector<int> dims{config.input_dim};
  dims.insert(dims.end(), config.hidden_dims.begin(), config.hidden_dims.end());
  dims.push_back(config.output_dim);

  Encoder enc;
  enc.config = config;
  std::mt19937_64 rng(config.seed);
  const std::size_t layers = dims.size() - 1;
  for (std::size_t l = 0; l < layers; ++l) {
    const int fan_in = dims[l];
    const int fan_out = dims[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix w(fan_in, fan_out);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = dist(rng);

    const bool trainable = config.trainable == Trainable::all || l + 1 == layers;
    const std::string suffix = std::to_string(l);
    enc.weights.push_back({"encoder.w" + suffix, {}, Tensor(std::move(w), trainable)});
    enc.biases.push_back({"encoder.b" + suffix, {}, Tensor(Matrix::Zero(1, fan_out), trainable)});
  }
  return enc;
}

Tensor encode(const Encoder& encoder, const Tensor& inputs) {
  if (inputs.cols() != encoder.config.input_dim)
    throw ShapeError("encode: expected " + std::to_string(encoder.config.input_dim) +
                     " input columns, got " + std::to_string(inputs.cols()));
  Tensor h = inputs;
  for (int l = 0; l < encoder.num_layers(); ++l) {
    h = add_row(matmul(h, encoder.weights[l].tensor), encoder.biases[l].tensor);
    if (l + 1 < encoder.num_layers()) h = relu(h);
  }
  return h;
}

}  // namespace hcal
