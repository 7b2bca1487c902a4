#include "fairmoo/objective.hpp"

#include <array>
#include <cmath>
#include <stdexcept>

#include "fairmoo/rng.hpp"

namespace fairmoo {

namespace {

constexpr std::uint64_t kNoiseStream = 0x9015EULL;

Tensor flat_rows(const Tensor& t) {
  // [B, H, W] -> [B, H*W] view copy.
  return Tensor({t.shape[0], t.shape[1] * t.shape[2]}, t.data);
}

}  // namespace

void apply_forward_noising(TrainBatch& batch, const NoiseSchedule& schedule) {
  std::size_t B = batch.batch();
  std::size_t px = batch.z0.size() / B;
  batch.zt = Tensor::zeros(batch.z0.shape);
  for (std::size_t b = 0; b < B; ++b) {
    double abar = schedule.alpha_bar_at(batch.t[b]);
    double cs = std::sqrt(abar), cn = std::sqrt(1.0 - abar);
    const double* z0 = batch.z0.data.data() + b * px;
    const double* ep = batch.eps.data.data() + b * px;
    double* zt = batch.zt.data.data() + b * px;
    for (std::size_t i = 0; i < px; ++i) zt[i] = cs * z0[i] + cn * ep[i];
  }
}

TrainBatch make_train_batch(std::uint64_t seed, std::uint64_t stream, std::size_t first_index, std::size_t batch,
                            const SceneSpec& spec, const NoiseSchedule& schedule, int latent_factor) {
  if (batch == 0) throw std::invalid_argument("make_train_batch: empty batch");
  std::size_t hs = static_cast<std::size_t>(spec.image_size);
  std::size_t px = hs * hs;

  TrainBatch out;
  out.z0 = Tensor::zeros({batch, hs, hs});
  out.eps = Tensor::zeros({batch, hs, hs});
  out.t.resize(batch);
  out.cond = Tensor::zeros({batch, 4});
  out.face_mask = Tensor::zeros({batch, hs, hs});
  out.hand_mask = Tensor::zeros({batch, hs, hs});

  for (std::size_t b = 0; b < batch; ++b) {
    std::uint64_t sample_seed = mix_seed(seed, stream, first_index + b);
    SceneSample s = synth_sample(sample_seed, spec, latent_factor);
    std::copy(s.z0.data.begin(), s.z0.data.end(), out.z0.data.begin() + static_cast<std::ptrdiff_t>(b * px));

    Rng noise(mix_seed(sample_seed, kNoiseStream));
    for (std::size_t i = 0; i < px; ++i) out.eps.data[b * px + i] = noise.normal();
    out.t[b] = static_cast<std::size_t>(noise.uniform_int(1, static_cast<std::int64_t>(schedule.T)));

    Tensor face = upsample_mask(s.masks.face_latent, latent_factor);
    Tensor hand = upsample_mask(s.masks.hand_latent, latent_factor);
    std::copy(face.data.begin(), face.data.end(), out.face_mask.data.begin() + static_cast<std::ptrdiff_t>(b * px));
    std::copy(hand.data.begin(), hand.data.end(), out.hand_mask.data.begin() + static_cast<std::ptrdiff_t>(b * px));

    double inv = 1.0 / static_cast<double>(spec.image_size);
    out.cond.data[b * 4 + 0] = 0.5 * (s.face_box.x0 + s.face_box.x1) * inv;
    out.cond.data[b * 4 + 1] = 0.5 * (s.face_box.y0 + s.face_box.y1) * inv;
    out.cond.data[b * 4 + 2] = 0.5 * (s.hand_box.x0 + s.hand_box.x1) * inv;
    out.cond.data[b * 4 + 3] = 0.5 * (s.hand_box.y0 + s.hand_box.y1) * inv;
    out.face_boxes.push_back(s.face_box);
    out.hand_boxes.push_back(s.hand_box);
  }
  apply_forward_noising(out, schedule);
  return out;
}

ForwardBuilder base_forward_builder(const DenoiserConfig& cfg) {
  return [cfg](ad::Graph& g, const std::vector<ad::NodeId>& leaves, ad::NodeId x) {
    if (leaves.size() != 6) throw std::invalid_argument("base_forward_builder: expected 6 leaves");
    std::vector<std::pair<ad::NodeId, ad::NodeId>> layers = {
        {leaves[0], leaves[1]}, {leaves[2], leaves[3]}, {leaves[4], leaves[5]}};
    return denoiser_forward(g, cfg, layers, x);
  };
}

ForwardBuilder adapted_forward_builder(const AdaptedDenoiser& model) {
  return [&model](ad::Graph& g, const std::vector<ad::NodeId>& leaves, ad::NodeId x) {
    return adapted_forward(g, model, leaves, x);
  };
}

ObjectiveBundle objective_bundle(const TrainBatch& batch, const DenoiserConfig& cfg, const ForwardBuilder& forward,
                                 const ParamVector& trainable, ad::MaskNorm norm) {
  if (batch.zt.size() != batch.z0.size())
    throw std::invalid_argument("objective_bundle: batch has no forward-noised inputs");
  Tensor x = assemble_input(cfg, batch.zt, batch.t, batch.cond);

  ad::Graph g;
  std::vector<ad::NodeId> leaves;
  for (std::size_t i = 0; i < trainable.layout->segments().size(); ++i) leaves.push_back(g.input(trainable.segment(i)));
  ad::NodeId pred = forward(g, leaves, g.constant(x));

  ad::NodeId eps = g.constant(flat_rows(batch.eps));
  ad::NodeId face = g.constant(flat_rows(batch.face_mask));
  ad::NodeId hand = g.constant(flat_rows(batch.hand_mask));

  // Global loss goes through the same reduction kernel as the masked
  // losses, so an all-ones mask reproduces it bit-for-bit.
  std::array<ad::NodeId, 3> losses = {
      g.sq_err(pred, eps),
      g.masked_sq_err(pred, eps, face, norm),
      g.masked_sq_err(pred, eps, hand, norm),
  };

  ObjectiveBundle out;
  out.layout = trainable.layout;
  out.losses.resize(3);
  for (std::size_t i = 0; i < 3; ++i) {
    out.losses[i] = g.scalar_value(losses[i]);
    if (!std::isfinite(out.losses[i]))
      throw std::runtime_error("objective_bundle: non-finite loss for objective " + std::to_string(i));
  }

  std::size_t p = trainable.size();
  out.grads = Tensor::zeros({3, p});
  for (std::size_t i = 0; i < 3; ++i) {
    std::vector<Tensor> segs = g.gradients(losses[i], leaves);
    ParamVector row = ParamVector::zeros(trainable.layout);
    for (std::size_t s = 0; s < segs.size(); ++s) row.set_segment(s, segs[s]);
    std::copy(row.data.begin(), row.data.end(), out.grads.data.begin() + static_cast<std::ptrdiff_t>(i * p));
  }
  out.validate();
  return out;
}

}  // namespace fairmoo
