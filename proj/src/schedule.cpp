#include "fairmoo/schedule.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace fairmoo {

double NoiseSchedule::alpha_bar_at(std::size_t t) const {
  if (t < 1 || t > T) throw std::invalid_argument("NoiseSchedule: timestep " + std::to_string(t) + " outside [1," + std::to_string(T) + "]");
  return alpha_bar[t - 1];
}

NoiseSchedule make_schedule(std::size_t T, double beta_start, double beta_end) {
  if (T < 1) throw std::invalid_argument("make_schedule: T must be >= 1");
  if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0))
    throw std::invalid_argument("make_schedule: need 0 < beta_start <= beta_end < 1");

  NoiseSchedule s;
  s.T = T;
  s.beta.resize(T);
  s.alpha_bar.resize(T);
  double prod = 1.0;
  for (std::size_t t = 0; t < T; ++t) {
    double frac = T == 1 ? 0.0 : static_cast<double>(t) / static_cast<double>(T - 1);
    s.beta[t] = beta_start + (beta_end - beta_start) * frac;
    prod *= 1.0 - s.beta[t];
    s.alpha_bar[t] = prod;
  }
  return s;
}

Tensor q_sample(const Tensor& z0, std::size_t t, const Tensor& eps, const NoiseSchedule& s) {
  if (!z0.same_shape(eps))
    throw std::invalid_argument("q_sample: z0 " + shape_str(z0.shape) + " vs eps " + shape_str(eps.shape));
  double abar = s.alpha_bar_at(t);
  double cs = std::sqrt(abar);
  double cn = std::sqrt(1.0 - abar);
  Tensor zt = Tensor::zeros(z0.shape);
  for (std::size_t i = 0; i < z0.size(); ++i) zt.data[i] = cs * z0.data[i] + cn * eps.data[i];
  return zt;
}

}  // namespace fairmoo
