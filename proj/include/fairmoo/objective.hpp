#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "fairmoo/adapter.hpp"
#include "fairmoo/denoiser.hpp"
#include "fairmoo/scene.hpp"
#include "fairmoo/schedule.hpp"
#include "fairmoo/solver.hpp"

namespace fairmoo {

// One training minibatch: clean images, sampled noise, per-sample
// timesteps, the scene descriptor condition, and the per-sample loss
// masks (latent masks expanded back to the pixel grid).
struct TrainBatch {
  Tensor z0;         // [B, H, W]
  Tensor eps;        // [B, H, W]
  Tensor zt;         // [B, H, W] forward-diffused inputs
  std::vector<std::size_t> t;
  Tensor cond;       // [B, 4] normalized box centers
  Tensor face_mask;  // [B, H, W]
  Tensor hand_mask;  // [B, H, W]
  std::vector<Box> face_boxes;
  std::vector<Box> hand_boxes;

  std::size_t batch() const { return t.size(); }
};

// Fills zt from (z0, t, eps) row by row.
void apply_forward_noising(TrainBatch& batch, const NoiseSchedule& schedule);

// Deterministic batch synthesis; sample b uses seed mix(seed, stream,
// first_index + b), so batches are reproducible and order-free.
TrainBatch make_train_batch(std::uint64_t seed, std::uint64_t stream, std::size_t first_index, std::size_t batch,
                            const SceneSpec& spec, const NoiseSchedule& schedule, int latent_factor);

// Builds the model prediction subgraph from trainable leaves and the
// constant assembled input; returns the [B, H*W] output node.
using ForwardBuilder = std::function<ad::NodeId(ad::Graph&, const std::vector<ad::NodeId>&, ad::NodeId)>;

ForwardBuilder base_forward_builder(const DenoiserConfig& cfg);
ForwardBuilder adapted_forward_builder(const AdaptedDenoiser& model);

// The three objectives of one shared forward pass: global, face, hand
// losses plus their gradients over `trainable`. Throws naming the
// objective index on a non-finite loss.
ObjectiveBundle objective_bundle(const TrainBatch& batch, const DenoiserConfig& cfg, const ForwardBuilder& forward,
                                 const ParamVector& trainable, ad::MaskNorm norm = ad::MaskNorm::FullCount);

}  // namespace fairmoo
