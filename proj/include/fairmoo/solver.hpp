#pragma once

#include <memory>
#include <string>
#include <vector>

#include "fairmoo/eig.hpp"
#include "fairmoo/param_vector.hpp"
#include "fairmoo/tensor.hpp"

namespace fairmoo {

// Per-objective losses and their gradients over the trainable parameters;
// row i of grads is the gradient of losses[i].
struct ObjectiveBundle {
  std::shared_ptr<const ParamLayout> layout;
  std::vector<double> losses;
  Tensor grads;  // [k, p]

  std::size_t k() const { return losses.size(); }
  std::size_t dim() const { return grads.rank() == 2 ? grads.shape[1] : 0; }
  const double* grad_row(std::size_t i) const { return grads.data.data() + i * dim(); }

  void validate() const;
};

// K_ij = grad_i . grad_j; positive semidefinite up to rounding.
using GramMatrix = SymMatrix;

struct SolverConfig {
  double eps_reg = 1e-10;   // shift added to Gram eigenvalues before powering
  double w_floor = 1e-8;    // positivity floor for weights
  // Lagrange multiplier of the ball constraint. Fixed at 1/2, which makes
  // the stationarity condition's constant exactly 1; the radius itself is
  // algebraically eliminated and never appears.
  double lagrange_lambda = 0.5;
  int oracle_iters = 4000;
  double oracle_step = 1.0;
};

struct FairWeights {
  std::vector<double> w;
  std::string strategy;
  bool floor_applied = false;
};

// Bundle over a single anonymous flat segment; convenient when the
// gradients do not come from a named model.
ObjectiveBundle make_bundle(std::vector<double> losses, Tensor grads);

GramMatrix gram(const ObjectiveBundle& bundle);

// Closed-form minimum-potential-delay weights W = K^(-2/3) 1, entries
// floored at w_floor. Throws if K is numerically indefinite beyond
// tolerance (dependent task gradients).
FairWeights mpd_weights_closed(const GramMatrix& k, const SolverConfig& cfg);

// Independent numerical minimizer of |K W - W^(-1/2)|^2 over W >= w_floor:
// projected gradient descent with backtracking, started from both the
// closed form and all-ones, returning the lower-residual iterate. By
// construction its residual never exceeds either initialization's.
FairWeights mpd_weights_oracle(const GramMatrix& k, const SolverConfig& cfg);

// |K W - W^(-1/2)|_2 for the raw K.
double mpd_residual(const GramMatrix& k, const std::vector<double>& w);

// d = sum_i w_i grad_i, summed in ascending objective order.
ParamVector aggregate_direction(const ObjectiveBundle& bundle, const FairWeights& w);

// theta - lr * d.
ParamVector update_step(const ParamVector& theta, const ParamVector& d, double lr);

}  // namespace fairmoo
