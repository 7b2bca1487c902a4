#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "fairmoo/graph.hpp"
#include "fairmoo/param_vector.hpp"
#include "fairmoo/tensor.hpp"

namespace fairmoo {

// Dense noise predictor: flattened z_t ++ sinusoidal timestep embedding ++
// scene descriptor -> two tanh hidden layers -> linear map back to the
// pixel grid.
struct DenoiserConfig {
  int image_size = 32;
  int hidden_width = 256;
  int time_embed_dim = 16;
  int cond_dim = 4;

  std::size_t pixels() const { return static_cast<std::size_t>(image_size) * static_cast<std::size_t>(image_size); }
  std::size_t input_dim() const {
    return pixels() + static_cast<std::size_t>(time_embed_dim) + static_cast<std::size_t>(cond_dim);
  }
};

inline const std::vector<std::string>& denoiser_layer_names() {
  static const std::vector<std::string> names = {"fc1", "fc2", "fc3"};
  return names;
}

std::shared_ptr<const ParamLayout> base_layout(const DenoiserConfig& cfg);

struct DenseDenoiser {
  DenoiserConfig cfg;
  ParamVector params;
};

// Gaussian weights with std 1/sqrt(fan_in); zero biases.
DenseDenoiser init_denoiser(const DenoiserConfig& cfg, std::uint64_t seed);

// Standard transformer-style sinusoidal embedding of the raw timestep.
std::vector<double> time_embedding(std::size_t t, int dim);

// Stacks [flatten(z_t) | time_embedding(t) | cond] per sample.
Tensor assemble_input(const DenoiserConfig& cfg, const Tensor& zt_batch, const std::vector<std::size_t>& t,
                      const Tensor& cond);

// Differentiable forward on an existing graph: weight/bias node per
// layer, in denoiser_layer_names() order. Returns the [B, H*W] prediction.
ad::NodeId denoiser_forward(ad::Graph& g, const DenoiserConfig& cfg,
                            const std::vector<std::pair<ad::NodeId, ad::NodeId>>& layers, ad::NodeId x);

// Eager forward of the plain base model.
Tensor predict_base(const DenseDenoiser& model, const Tensor& x);

}  // namespace fairmoo
