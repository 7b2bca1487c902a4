#pragma once

#include <cmath>
#include <cstddef>

#include "fairmoo/tensor.hpp"

namespace fairmoo {

// Neumaier-compensated accumulator. All loss reductions and Gram inner
// products go through this so that identical inputs reduce to identical
// bits regardless of magnitude spread.
struct NeumaierSum {
  double s = 0.0;
  double c = 0.0;

  void add(double x) {
    double t = s + x;
    if (std::fabs(s) >= std::fabs(x)) {
      c += (s - t) + x;
    } else {
      c += (x - t) + s;
    }
    s = t;
  }

  double value() const { return s + c; }
};

inline double compensated_dot(const double* a, const double* b, std::size_t n) {
  NeumaierSum acc;
  for (std::size_t i = 0; i < n; ++i) acc.add(a[i] * b[i]);
  return acc.value();
}

// Plain dot for the hot matmul paths; fixed left-to-right order.
inline double dot(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

inline void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

// C[m,n] = A[m,k] * B[k,n], row-major, ikj loop order.
inline void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m * n; ++i) c[i] = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) axpy(arow[p], b + p * n, crow, n);
  }
}

}  // namespace fairmoo
