#include "fairmoo/solver.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fairmoo/kernels.hpp"

namespace fairmoo {

void ObjectiveBundle::validate() const {
  if (losses.empty()) throw std::invalid_argument("ObjectiveBundle: no objectives");
  if (grads.rank() != 2 || grads.shape[0] != losses.size())
    throw std::invalid_argument("ObjectiveBundle: gradient row count must equal loss count");
  for (std::size_t i = 0; i < losses.size(); ++i) {
    if (!std::isfinite(losses[i]) || losses[i] < 0.0)
      throw std::runtime_error("ObjectiveBundle: loss " + std::to_string(i) + " non-finite or negative");
  }
  if (!grads.all_finite()) throw std::runtime_error("ObjectiveBundle: non-finite gradient entry");
}

ObjectiveBundle make_bundle(std::vector<double> losses, Tensor grads) {
  if (grads.rank() != 2) throw std::invalid_argument("make_bundle: grads must be [k, p]");
  auto layout = std::make_shared<ParamLayout>(
      std::vector<std::pair<std::string, std::vector<std::size_t>>>{{"theta", {grads.shape[1]}}});
  ObjectiveBundle b{std::move(layout), std::move(losses), std::move(grads)};
  b.validate();
  return b;
}

GramMatrix gram(const ObjectiveBundle& bundle) {
  bundle.validate();
  std::size_t k = bundle.k(), p = bundle.dim();
  GramMatrix m(k);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i; j < k; ++j)
      m.set(i, j, compensated_dot(bundle.grad_row(i), bundle.grad_row(j), p));
  return m;
}

double mpd_residual(const GramMatrix& k, const std::vector<double>& w) {
  if (w.size() != k.n) throw std::invalid_argument("mpd_residual: dimension mismatch");
  NeumaierSum acc;
  for (std::size_t i = 0; i < k.n; ++i) {
    NeumaierSum row;
    for (std::size_t j = 0; j < k.n; ++j) row.add(k.at(i, j) * w[j]);
    double r = row.value() - 1.0 / std::sqrt(w[i]);
    acc.add(r * r);
  }
  return std::sqrt(acc.value());
}

FairWeights mpd_weights_closed(const GramMatrix& k, const SolverConfig& cfg) {
  EigResult eig = sym_eig(k);
  double lam_max = std::max(eig.values.front(), 0.0);
  double lam_min = eig.values.back();
  if (lam_min < -1e-9 * std::max(lam_max, 1e-300))
    throw std::runtime_error("mpd_weights_closed: Gram matrix indefinite (min eigenvalue " +
                             std::to_string(lam_min) + "); task gradients are not linearly independent");

  SymMatrix power = mat_frac_power(k, -2.0 / 3.0, cfg.eps_reg);
  FairWeights out;
  out.strategy = "mpd";
  out.w.resize(k.n);
  for (std::size_t i = 0; i < k.n; ++i) {
    NeumaierSum row;
    for (std::size_t j = 0; j < k.n; ++j) row.add(power.at(i, j));
    double wi = row.value();
    if (wi < cfg.w_floor) {
      wi = cfg.w_floor;
      out.floor_applied = true;
    }
    out.w[i] = wi;
  }
  return out;
}

namespace {

// Objective and gradient of r(W) = |K W - W^(-1/2)|^2.
double residual_sq(const GramMatrix& k, const std::vector<double>& w, std::vector<double>& err) {
  std::size_t n = k.n;
  err.resize(n);
  NeumaierSum acc;
  for (std::size_t i = 0; i < n; ++i) {
    NeumaierSum row;
    for (std::size_t j = 0; j < n; ++j) row.add(k.at(i, j) * w[j]);
    err[i] = row.value() - 1.0 / std::sqrt(w[i]);
    acc.add(err[i] * err[i]);
  }
  return acc.value();
}

void residual_sq_grad(const GramMatrix& k, const std::vector<double>& w, const std::vector<double>& err,
                      std::vector<double>& grad) {
  std::size_t n = k.n;
  grad.assign(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    NeumaierSum acc;
    for (std::size_t i = 0; i < n; ++i) acc.add(k.at(i, j) * err[i]);
    // d err_j / d w_j includes the +1/2 w^-3/2 term from -w^(-1/2).
    grad[j] = 2.0 * acc.value() + err[j] * std::pow(w[j], -1.5);
  }
}

struct PgdResult {
  std::vector<double> w;
  double rsq;
};

PgdResult projected_descent(const GramMatrix& k, std::vector<double> w, const SolverConfig& cfg) {
  for (double& v : w) v = std::max(v, cfg.w_floor);
  std::vector<double> err, grad, trial;
  double rsq = residual_sq(k, w, err);
  if (!std::isfinite(rsq)) throw std::runtime_error("mpd_weights_oracle: non-finite residual at initialization");
  double step = cfg.oracle_step;

  for (int it = 0; it < cfg.oracle_iters; ++it) {
    residual_sq_grad(k, w, err, grad);
    double gnorm = 0.0;
    for (double g : grad) gnorm = std::max(gnorm, std::fabs(g));
    if (gnorm == 0.0) break;

    bool improved = false;
    for (int halving = 0; halving < 64; ++halving) {
      trial = w;
      for (std::size_t i = 0; i < w.size(); ++i) trial[i] = std::max(trial[i] - step * grad[i], cfg.w_floor);
      std::vector<double> terr;
      double trsq = residual_sq(k, trial, terr);
      if (!std::isfinite(trsq)) {
        step *= 0.5;
        continue;
      }
      if (trsq < rsq) {
        w = std::move(trial);
        err = std::move(terr);
        rsq = trsq;
        step *= 1.5;
        improved = true;
        break;
      }
      step *= 0.5;
    }
    if (!improved) break;  // stationary at this scale
    if (step < 1e-300) break;
  }
  if (!std::isfinite(rsq))
    throw std::runtime_error("mpd_weights_oracle: persistent non-finite residual");
  return {std::move(w), rsq};
}

}  // namespace

FairWeights mpd_weights_oracle(const GramMatrix& k, const SolverConfig& cfg) {
  FairWeights closed = mpd_weights_closed(k, cfg);
  PgdResult from_closed = projected_descent(k, closed.w, cfg);
  PgdResult from_ones = projected_descent(k, std::vector<double>(k.n, 1.0), cfg);
  const PgdResult& best = from_closed.rsq <= from_ones.rsq ? from_closed : from_ones;

  FairWeights out;
  out.strategy = "mpd-oracle";
  out.w = best.w;
  out.floor_applied = std::any_of(out.w.begin(), out.w.end(), [&](double v) { return v <= cfg.w_floor; });
  return out;
}

ParamVector aggregate_direction(const ObjectiveBundle& bundle, const FairWeights& w) {
  if (w.w.size() != bundle.k()) throw std::invalid_argument("aggregate_direction: weight count mismatch");
  ParamVector d = ParamVector::zeros(bundle.layout);
  std::size_t p = bundle.dim();
  for (std::size_t i = 0; i < bundle.k(); ++i) axpy(w.w[i], bundle.grad_row(i), d.data.data(), p);
  return d;
}

ParamVector update_step(const ParamVector& theta, const ParamVector& d, double lr) {
  if (!(lr > 0.0)) throw std::invalid_argument("update_step: learning rate must be positive");
  if (theta.size() != d.size()) throw std::invalid_argument("update_step: dimension mismatch");
  ParamVector out = theta;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] -= lr * d.data[i];
  return out;
}

}  // namespace fairmoo
