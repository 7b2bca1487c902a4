#pragma once

#include <optional>
#include <vector>

#include "fairmoo/solver.hpp"

namespace fairmoo {

// Per-objective share of the update direction and the potential-delay
// functionals built from it. proj_i is the scalar projection of d onto
// grad_i, (grad_i . d)/|grad_i|; an objective with non-positive alignment
// grad_i . d is flagged rather than raising, and the functionals are then
// reported as undefined.
struct DelayDiagnostics {
  std::vector<double> proj;
  std::vector<double> potential_delay;  // 1/proj_i where defined, NaN otherwise
  std::vector<bool> aligned;            // grad_i . d > 0
  bool all_aligned = false;
  std::optional<double> F;              // sum of potential delays
  std::optional<double> F_prime;        // sum of 1/(grad_i . d)
  double M = 0.0;                       // max_i |grad_i|
  bool bound_holds = true;              // F <= M*F' + 1e-9 when all aligned, vacuous otherwise
};

DelayDiagnostics delay_diagnostics(const ObjectiveBundle& bundle, const ParamVector& d);

// Pareto stationarity meter: min over the probability simplex of
// |sum_i lambda_i grad_i|. Frank-Wolfe with exact line search to duality
// gap 1e-8, cross-checked against the simplex vertices, all pairwise edge
// minimizers, and an active-support KKT polish.
double pareto_stationarity(const ObjectiveBundle& bundle);
double pareto_stationarity(const Tensor& grads);  // [k, p], k <= 8

}  // namespace fairmoo
