#include "fairmoo/eig.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fairmoo {

namespace {

double off_diag_max(const std::vector<double>& a, std::size_t n) {
  double m = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) m = std::max(m, std::fabs(a[i * n + j]));
  return m;
}

}  // namespace

EigResult sym_eig(const SymMatrix& k) {
  std::size_t n = k.n;
  if (n == 0) throw std::invalid_argument("sym_eig: empty matrix");
  if (n > 16) throw std::invalid_argument("sym_eig: dimension " + std::to_string(n) + " exceeds 16");
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (k.a[i * n + j] != k.a[j * n + i]) throw std::invalid_argument("sym_eig: matrix not symmetric");

  std::vector<double> a = k.a;
  std::vector<double> q(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) q[i * n + i] = 1.0;

  double scale = k.max_abs();
  const double stop = scale > 0.0 ? 1e-15 * scale : 0.0;  // scale-relative; zero matrix needs no sweeps
  const int max_sweeps = 64;

  for (int sweep = 0; sweep < max_sweeps && off_diag_max(a, n) > stop; ++sweep) {
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t r = p + 1; r < n; ++r) {
        double apr = a[p * n + r];
        if (std::fabs(apr) <= stop) continue;
        double app = a[p * n + p];
        double arr = a[r * n + r];
        double theta = 0.5 * (arr - app) / apr;
        // t = sign(theta) / (|theta| + sqrt(theta^2 + 1)), the smaller root.
        double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        double c = 1.0 / std::sqrt(t * t + 1.0);
        double s = t * c;

        for (std::size_t i = 0; i < n; ++i) {
          double aip = a[i * n + p];
          double air = a[i * n + r];
          a[i * n + p] = c * aip - s * air;
          a[i * n + r] = s * aip + c * air;
        }
        for (std::size_t i = 0; i < n; ++i) {
          double api = a[p * n + i];
          double ari = a[r * n + i];
          a[p * n + i] = c * api - s * ari;
          a[r * n + i] = s * api + c * ari;
        }
        a[p * n + r] = 0.0;
        a[r * n + p] = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          double qip = q[i * n + p];
          double qir = q[i * n + r];
          q[i * n + p] = c * qip - s * qir;
          q[i * n + r] = s * qip + c * qir;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return a[x * n + x] > a[y * n + y]; });

  EigResult out;
  out.values.resize(n);
  out.vectors.assign(n * n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    out.values[j] = a[order[j] * n + order[j]];
    for (std::size_t i = 0; i < n; ++i) out.vectors[i * n + j] = q[i * n + order[j]];
  }
  return out;
}

SymMatrix mat_frac_power(const SymMatrix& k, double p, double eps_reg) {
  if (eps_reg < 0.0) throw std::invalid_argument("mat_frac_power: eps_reg must be >= 0");
  EigResult eig = sym_eig(k);
  std::size_t n = k.n;

  std::vector<double> powed(n);
  for (std::size_t j = 0; j < n; ++j) {
    double lam = eig.values[j] + eps_reg;
    bool fractional = p != std::floor(p);
    if (lam <= 0.0 && p < 0.0)
      throw std::runtime_error("mat_frac_power: singular eigenvalue " + std::to_string(eig.values[j]) +
                               " (after eps_reg " + std::to_string(eps_reg) + ") with negative power");
    if (lam < 0.0 && fractional)
      throw std::runtime_error("mat_frac_power: negative eigenvalue " + std::to_string(eig.values[j]) +
                               " cannot be raised to fractional power");
    powed[j] = std::pow(lam, p);
  }

  // Q diag(powed) Q^T, written one (i,j) pair at a time so the result is
  // symmetric to the last bit.
  SymMatrix out(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t m = 0; m < n; ++m) acc += eig.vectors[i * n + m] * powed[m] * eig.vectors[j * n + m];
      out.set(i, j, acc);
    }
  }
  return out;
}

}  // namespace fairmoo
