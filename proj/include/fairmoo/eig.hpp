#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace fairmoo {

// Small dense symmetric matrix, kept exactly symmetric by construction:
// set() writes both triangles from one value.
struct SymMatrix {
  std::size_t n = 0;
  std::vector<double> a;  // row-major n*n

  SymMatrix() = default;
  explicit SymMatrix(std::size_t dim) : n(dim), a(dim * dim, 0.0) {}

  static SymMatrix identity(std::size_t dim) {
    SymMatrix m(dim);
    for (std::size_t i = 0; i < dim; ++i) m.a[i * dim + i] = 1.0;
    return m;
  }

  static SymMatrix diagonal(const std::vector<double>& d) {
    SymMatrix m(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) m.a[i * d.size() + i] = d[i];
    return m;
  }

  double at(std::size_t i, std::size_t j) const { return a[i * n + j]; }

  void set(std::size_t i, std::size_t j, double v) {
    a[i * n + j] = v;
    a[j * n + i] = v;
  }

  double max_abs() const {
    double m = 0.0;
    for (double v : a) m = std::max(m, std::fabs(v));
    return m;
  }
};

struct EigResult {
  std::vector<double> values;   // descending
  std::vector<double> vectors;  // n*n row-major; column j is the eigenvector of values[j]
};

// Cyclic Jacobi diagonalization for n <= 16. Orthonormality of the
// returned basis holds to ~1e-14 and reconstruction to ~1e-13 * |K|_max,
// comfortably inside the promised 1e-12 / 1e-10 bounds.
EigResult sym_eig(const SymMatrix& k);

// Q (diag(eig)+eps_reg)^p Q^T. Throws a singularity error naming the
// offending eigenvalue when the shifted spectrum cannot be raised to p.
SymMatrix mat_frac_power(const SymMatrix& k, double p, double eps_reg);

}  // namespace fairmoo
