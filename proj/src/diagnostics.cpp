#include "fairmoo/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "fairmoo/eig.hpp"
#include "fairmoo/kernels.hpp"

namespace fairmoo {

DelayDiagnostics delay_diagnostics(const ObjectiveBundle& bundle, const ParamVector& d) {
  bundle.validate();
  std::size_t k = bundle.k(), p = bundle.dim();
  if (d.size() != p) throw std::invalid_argument("delay_diagnostics: direction dimension mismatch");
  double dnorm_sq = compensated_dot(d.data.data(), d.data.data(), p);
  if (dnorm_sq == 0.0) throw std::invalid_argument("delay_diagnostics: direction must be nonzero");

  DelayDiagnostics out;
  out.proj.resize(k);
  out.potential_delay.assign(k, std::numeric_limits<double>::quiet_NaN());
  out.aligned.resize(k);
  out.all_aligned = true;

  std::vector<double> align(k);
  for (std::size_t i = 0; i < k; ++i) {
    const double* g = bundle.grad_row(i);
    align[i] = compensated_dot(g, d.data.data(), p);
    double gnorm = std::sqrt(compensated_dot(g, g, p));
    out.M = std::max(out.M, gnorm);
    out.proj[i] = gnorm > 0.0 ? align[i] / gnorm : 0.0;
    out.aligned[i] = align[i] > 0.0;
    if (out.aligned[i]) out.potential_delay[i] = 1.0 / out.proj[i];
    out.all_aligned = out.all_aligned && out.aligned[i];
  }

  if (out.all_aligned) {
    NeumaierSum f, fp;
    for (std::size_t i = 0; i < k; ++i) {
      f.add(1.0 / out.proj[i]);
      fp.add(1.0 / align[i]);
    }
    out.F = f.value();
    out.F_prime = fp.value();
    out.bound_holds = *out.F <= out.M * *out.F_prime + 1e-9;
  }
  return out;
}

namespace {

double quad_form(const SymMatrix& m, const std::vector<double>& lam) {
  NeumaierSum acc;
  for (std::size_t i = 0; i < m.n; ++i)
    for (std::size_t j = 0; j < m.n; ++j) acc.add(lam[i] * m.at(i, j) * lam[j]);
  return acc.value();
}

// Equality-constrained minimizer of lambda' M lambda over sum(lambda)=1
// restricted to a support set, via eigen pseudo-inverse. Returns the
// objective value if the solution is (numerically) in the simplex.
bool support_candidate(const SymMatrix& m, const std::vector<std::size_t>& support, double* phi_out) {
  std::size_t s = support.size();
  SymMatrix ms(s);
  for (std::size_t a = 0; a < s; ++a)
    for (std::size_t b = a; b < s; ++b) ms.set(a, b, m.at(support[a], support[b]));
  EigResult eig = sym_eig(ms);
  double cutoff = 1e-12 * std::max(eig.values.front(), 0.0);

  // lambda = M+ 1 / (1' M+ 1)
  std::vector<double> pinv1(s, 0.0);
  for (std::size_t j = 0; j < s; ++j) {
    if (eig.values[j] <= cutoff) continue;
    double q1 = 0.0;
    for (std::size_t i = 0; i < s; ++i) q1 += eig.vectors[i * s + j];
    double coeff = q1 / eig.values[j];
    for (std::size_t i = 0; i < s; ++i) pinv1[i] += coeff * eig.vectors[i * s + j];
  }
  double denom = 0.0;
  for (double v : pinv1) denom += v;
  if (!(denom > 0.0)) return false;

  std::vector<double> lam(s);
  double sum = 0.0;
  for (std::size_t i = 0; i < s; ++i) {
    lam[i] = pinv1[i] / denom;
    if (lam[i] < -1e-9) return false;
    lam[i] = std::max(lam[i], 0.0);
    sum += lam[i];
  }
  if (!(sum > 0.0)) return false;
  for (double& v : lam) v /= sum;
  *phi_out = quad_form(ms, lam);
  return true;
}

}  // namespace

double pareto_stationarity(const Tensor& grads) {
  if (grads.rank() != 2) throw std::invalid_argument("pareto_stationarity: grads must be [k, p]");
  std::size_t k = grads.shape[0], p = grads.shape[1];
  if (k == 0 || k > 8) throw std::invalid_argument("pareto_stationarity: need 1 <= k <= 8 objectives");

  SymMatrix m(k);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i; j < k; ++j)
      m.set(i, j, compensated_dot(grads.data.data() + i * p, grads.data.data() + j * p, p));

  // Vertices.
  double best = m.at(0, 0);
  std::size_t best_vertex = 0;
  for (std::size_t i = 1; i < k; ++i)
    if (m.at(i, i) < best) {
      best = m.at(i, i);
      best_vertex = i;
    }

  // Pairwise edge minimizers (closed form for the 2-point subproblem).
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i + 1; j < k; ++j) {
      double denom = m.at(i, i) - 2.0 * m.at(i, j) + m.at(j, j);  // |g_i - g_j|^2
      if (denom <= 0.0) continue;
      double gamma = std::clamp((m.at(i, i) - m.at(i, j)) / denom, 0.0, 1.0);
      std::vector<double> lam(k, 0.0);
      lam[i] = 1.0 - gamma;
      lam[j] = gamma;
      best = std::min(best, quad_form(m, lam));
    }
  }

  // Frank-Wolfe with exact line search from the best vertex.
  std::vector<double> lam(k, 0.0);
  lam[best_vertex] = 1.0;
  std::vector<double> mlam(k);
  const int max_iters = 20000;
  for (int it = 0; it < max_iters; ++it) {
    for (std::size_t i = 0; i < k; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < k; ++j) acc += m.at(i, j) * lam[j];
      mlam[i] = acc;
    }
    double phi = 0.0;
    for (std::size_t i = 0; i < k; ++i) phi += lam[i] * mlam[i];
    std::size_t jstar = 0;
    for (std::size_t i = 1; i < k; ++i)
      if (mlam[i] < mlam[jstar]) jstar = i;
    double gap = 2.0 * (phi - mlam[jstar]);
    if (gap <= 1e-8) break;
    // Line search for lambda + gamma (e_j - lambda).
    double dir_m_lam = mlam[jstar] - phi;
    double dir_m_dir = m.at(jstar, jstar) - 2.0 * mlam[jstar] + phi;
    double gamma = dir_m_dir > 0.0 ? std::clamp(-dir_m_lam / dir_m_dir, 0.0, 1.0) : 1.0;
    for (std::size_t i = 0; i < k; ++i) lam[i] *= 1.0 - gamma;
    lam[jstar] += gamma;
  }
  best = std::min(best, quad_form(m, lam));

  // Active-support KKT polish over every support set (k <= 8).
  for (std::size_t mask = 1; mask < (1u << k); ++mask) {
    std::vector<std::size_t> support;
    for (std::size_t i = 0; i < k; ++i)
      if (mask & (1u << i)) support.push_back(i);
    if (support.size() < 3) continue;  // covered exactly above
    double phi = 0.0;
    if (support_candidate(m, support, &phi)) best = std::min(best, phi);
  }

  return std::sqrt(std::max(best, 0.0));
}

double pareto_stationarity(const ObjectiveBundle& bundle) {
  bundle.validate();
  return pareto_stationarity(bundle.grads);
}

}  // namespace fairmoo
