#pragma once

#include <cstdint>
#include <cstddef>

#include "fairmoo/tensor.hpp"

namespace fairmoo {

// Half-open pixel rectangle: x in [x0,x1), y in [y0,y1).
struct Box {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  int area() const { return width() * height(); }
  bool contains(int x, int y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
};

// Synthetic scene recipe: smooth background plus distinct high-frequency
// textures inside the face and hand rectangles. Region boxes stay small
// (<= 25% of the image each) so the regional losses genuinely start out
// underweighted relative to the global one.
struct SceneSpec {
  int image_size = 32;
  Box face_box{4, 4, 12, 12};
  Box hand_box{18, 18, 28, 28};
  double bg_freq = 2.0;
  double bg_amp = 0.3;
  double face_freq = 8.0;
  double face_amp = 0.7;
  double hand_freq = 12.0;
  double hand_amp = 0.7;
  // Maximum per-sample box translation in pixels (seed-derived, clamped
  // in-bounds). Zero keeps the boxes fixed across samples.
  int jitter = 0;

  void validate() const;
};

struct RegionMasks {
  Tensor face_image;   // [H, W] binary
  Tensor hand_image;   // [H, W]
  Tensor face_latent;  // [H/f, W/f]
  Tensor hand_latent;
  int latent_factor = 1;
};

struct SceneSample {
  Tensor z0;  // [H, W], values in [-1, 1]
  RegionMasks masks;
  Box face_box;  // effective (possibly jittered) boxes
  Box hand_box;
};

// Binary box mask at image resolution.
Tensor box_mask(const Box& box, int image_size);

// Latent-resolution mask: a cell is set iff its factor x factor image
// patch overlaps the box (any-overlap rule).
Tensor downscale_mask(const Box& box, int image_size, int latent_factor);

// Nearest-neighbor expansion of a latent mask back to image resolution,
// used to apply latent-shaped masks to pixel-grid residuals.
Tensor upsample_mask(const Tensor& latent_mask, int latent_factor);

// Deterministic in seed; same seed, same bits.
SceneSample synth_sample(std::uint64_t seed, const SceneSpec& spec, int latent_factor = 1);

}  // namespace fairmoo
