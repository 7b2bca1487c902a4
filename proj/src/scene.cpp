#include "fairmoo/scene.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "fairmoo/rng.hpp"

namespace fairmoo {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

void check_box(const Box& b, int image_size, const char* name) {
  if (b.x0 < 0 || b.y0 < 0 || b.x1 > image_size || b.y1 > image_size || b.x0 >= b.x1 || b.y0 >= b.y1)
    throw std::invalid_argument(std::string("SceneSpec: ") + name + " box out of bounds or degenerate");
  if (4 * b.area() > image_size * image_size)
    throw std::invalid_argument(std::string("SceneSpec: ") + name + " box covers more than 25% of the image");
}

Box jittered(const Box& b, int image_size, int jitter, Rng& rng) {
  if (jitter == 0) return b;
  int dx = static_cast<int>(rng.uniform_int(-jitter, jitter));
  int dy = static_cast<int>(rng.uniform_int(-jitter, jitter));
  dx = std::clamp(dx, -b.x0, image_size - b.x1);
  dy = std::clamp(dy, -b.y0, image_size - b.y1);
  return Box{b.x0 + dx, b.y0 + dy, b.x1 + dx, b.y1 + dy};
}

}  // namespace

void SceneSpec::validate() const {
  if (image_size < 4) throw std::invalid_argument("SceneSpec: image_size must be >= 4");
  check_box(face_box, image_size, "face");
  check_box(hand_box, image_size, "hand");
  if (jitter < 0) throw std::invalid_argument("SceneSpec: jitter must be >= 0");
}

Tensor box_mask(const Box& box, int image_size) {
  Tensor m = Tensor::zeros({static_cast<std::size_t>(image_size), static_cast<std::size_t>(image_size)});
  for (int y = std::max(box.y0, 0); y < std::min(box.y1, image_size); ++y)
    for (int x = std::max(box.x0, 0); x < std::min(box.x1, image_size); ++x)
      m.data[static_cast<std::size_t>(y) * static_cast<std::size_t>(image_size) + static_cast<std::size_t>(x)] = 1.0;
  return m;
}

Tensor downscale_mask(const Box& box, int image_size, int latent_factor) {
  if (latent_factor < 1 || image_size % latent_factor != 0)
    throw std::invalid_argument("downscale_mask: image_size must be divisible by latent_factor");
  int ls = image_size / latent_factor;
  Tensor m = Tensor::zeros({static_cast<std::size_t>(ls), static_cast<std::size_t>(ls)});
  for (int cy = 0; cy < ls; ++cy) {
    int py0 = cy * latent_factor, py1 = py0 + latent_factor;
    bool oy = box.y0 < py1 && py0 < box.y1;
    if (!oy) continue;
    for (int cx = 0; cx < ls; ++cx) {
      int px0 = cx * latent_factor, px1 = px0 + latent_factor;
      if (box.x0 < px1 && px0 < box.x1)
        m.data[static_cast<std::size_t>(cy) * static_cast<std::size_t>(ls) + static_cast<std::size_t>(cx)] = 1.0;
    }
  }
  return m;
}

Tensor upsample_mask(const Tensor& latent_mask, int latent_factor) {
  if (latent_mask.rank() != 2) throw std::invalid_argument("upsample_mask: expected a rank-2 mask");
  std::size_t lh = latent_mask.shape[0], lw = latent_mask.shape[1];
  std::size_t f = static_cast<std::size_t>(latent_factor);
  Tensor m = Tensor::zeros({lh * f, lw * f});
  for (std::size_t y = 0; y < lh * f; ++y)
    for (std::size_t x = 0; x < lw * f; ++x) m.data[y * lw * f + x] = latent_mask.data[(y / f) * lw + (x / f)];
  return m;
}

SceneSample synth_sample(std::uint64_t seed, const SceneSpec& spec, int latent_factor) {
  spec.validate();
  int hs = spec.image_size;
  if (latent_factor < 1 || hs % latent_factor != 0)
    throw std::invalid_argument("synth_sample: image_size must be divisible by latent_factor");

  Rng rng(mix_seed(seed, 0x5CE17EULL));
  Box face = jittered(spec.face_box, hs, spec.jitter, rng);
  Box hand = jittered(spec.hand_box, hs, spec.jitter, rng);

  // Background: two slow sinusoidal ramps with random phase/orientation.
  double bph1 = rng.uniform(0.0, 1.0), bph2 = rng.uniform(0.0, 1.0);
  double bth = rng.uniform(0.0, kTwoPi);
  // Region textures: high-frequency gratings with random phase and angle,
  // frequencies measured in periods across the image.
  double fph = rng.uniform(0.0, 1.0), fth = rng.uniform(0.0, kTwoPi);
  double hph = rng.uniform(0.0, 1.0), hth = rng.uniform(0.0, kTwoPi);

  double inv = 1.0 / static_cast<double>(hs);
  SceneSample out;
  out.z0 = Tensor::zeros({static_cast<std::size_t>(hs), static_cast<std::size_t>(hs)});
  for (int y = 0; y < hs; ++y) {
    for (int x = 0; x < hs; ++x) {
      double u = (x + 0.5) * inv, v = (y + 0.5) * inv;
      double du = u * std::cos(bth) + v * std::sin(bth);
      double val = spec.bg_amp * (std::sin(kTwoPi * (spec.bg_freq * du + bph1)) *
                                  std::cos(kTwoPi * (spec.bg_freq * v + bph2)));
      if (face.contains(x, y)) {
        double fu = u * std::cos(fth) + v * std::sin(fth);
        val += spec.face_amp * std::sin(kTwoPi * (spec.face_freq * fu + fph));
      }
      if (hand.contains(x, y)) {
        double hu = u * std::cos(hth) + v * std::sin(hth);
        val += spec.hand_amp * std::sin(kTwoPi * (spec.hand_freq * hu + hph));
      }
      out.z0.data[static_cast<std::size_t>(y) * static_cast<std::size_t>(hs) + static_cast<std::size_t>(x)] =
          std::clamp(val, -1.0, 1.0);
    }
  }

  out.face_box = face;
  out.hand_box = hand;
  out.masks.face_image = box_mask(face, hs);
  out.masks.hand_image = box_mask(hand, hs);
  out.masks.face_latent = downscale_mask(face, hs, latent_factor);
  out.masks.hand_latent = downscale_mask(hand, hs, latent_factor);
  out.masks.latent_factor = latent_factor;
  return out;
}

}  // namespace fairmoo
