#pragma once

#include <cstddef>
#include <vector>

#include "fairmoo/tensor.hpp"

namespace fairmoo {

// DDPM-style variance schedule. alpha_bar[t-1] is the running product of
// (1 - beta_s) for s <= t, strictly decreasing and inside (0,1).
struct NoiseSchedule {
  std::size_t T = 0;
  std::vector<double> beta;
  std::vector<double> alpha_bar;

  double alpha_bar_at(std::size_t t) const;  // t in [1, T]
};

// Linear beta interpolation between beta_start and beta_end.
NoiseSchedule make_schedule(std::size_t T, double beta_start, double beta_end);

// Forward diffusion draw: z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps.
Tensor q_sample(const Tensor& z0, std::size_t t, const Tensor& eps, const NoiseSchedule& s);

}  // namespace fairmoo
