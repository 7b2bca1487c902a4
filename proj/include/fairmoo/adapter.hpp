#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fairmoo/denoiser.hpp"
#include "fairmoo/graph.hpp"
#include "fairmoo/param_vector.hpp"

namespace fairmoo {

struct AdapterSpec {
  int rank = 8;
  double beta = 0.4;
  std::vector<std::string> targets = {"fc1", "fc2", "fc3"};
};

// Which parameter names stay frozen and which receive gradients. Disjoint
// and jointly covering every model parameter.
struct ParamPartition {
  std::vector<std::string> frozen;
  std::vector<std::string> trainable;
};

// Frozen backbone plus trainable low-rank deltas. The adapter parameter
// vector holds "<layer>.down" [r, fan_in] and "<layer>.up" [fan_out, r]
// per target layer; up-projections start at zero so a fresh adapter is an
// exact no-op.
struct AdaptedDenoiser {
  DenseDenoiser base;
  AdapterSpec spec;
  ParamVector adapter;

  ParamPartition partition() const;
};

AdaptedDenoiser attach_adapter(const DenseDenoiser& base, const AdapterSpec& spec, std::uint64_t seed);

// Differentiable forward: base weights enter as constants, each target
// layer's effective weight is W + beta * up * down. `leaves` must hold one
// Input node per adapter segment, in adapter layout order.
ad::NodeId adapted_forward(ad::Graph& g, const AdaptedDenoiser& model, const std::vector<ad::NodeId>& leaves,
                           ad::NodeId x);

// Eager forward through the runtime combination.
Tensor predict_adapted(const AdaptedDenoiser& model, const Tensor& x);

// Folds beta * up * down into the base weights.
DenseDenoiser merge_adapter(const AdaptedDenoiser& model);

// Checkpoint: one .f64+sidecar pair per projection plus adapter.json.
void save_adapter(const std::filesystem::path& dir, const AdaptedDenoiser& model, std::uint64_t seed);
AdaptedDenoiser load_adapter(const std::filesystem::path& dir, const DenseDenoiser& base);

}  // namespace fairmoo
