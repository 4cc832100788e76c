#pragma once

#include "dynsbm/params.hpp"
#include "dynsbm/rng.hpp"

namespace dynsbm::testing {

inline Matrix sym2(double a, double b, double c) {
  Matrix m(2, 2);
  m << a, b, b, c;
  return m;
}

inline Matrix rows2(double a, double b, double c, double d) {
  Matrix m(2, 2);
  m << a, b, c, d;
  return m;
}

inline ModelParams two_class(double gd = 0.7, double pd1 = 0.8, double po = 0.2,
                             double pd2 = 0.6, double delta = 0.1, double zeta = 0.1) {
  ModelParams p;
  p.q_classes = 2;
  p.gamma = rows2(gd, 1.0 - gd, 1.0 - gd, gd);
  p.pi = {sym2(pd1, po, pd2)};
  p.delta = delta;
  p.zeta = zeta;
  return p;
}

inline ModelParams one_class(double pi = 0.5) {
  ModelParams p;
  p.q_classes = 1;
  p.gamma = Matrix::Constant(1, 1, 1.0);
  p.pi = {Matrix::Constant(1, 1, pi)};
  p.delta = 0.05;
  p.zeta = 0.05;
  return p;
}

// Random parameters comfortably interior to the margins.
inline ModelParams random_params(int Q, CounterRng& rng, double delta = 0.05,
                                 double zeta = 0.05, int n_slices = 1) {
  ModelParams p;
  p.q_classes = Q;
  p.delta = delta;
  p.zeta = zeta;
  p.gamma = Matrix::Zero(Q, Q);
  for (int q = 0; q < Q; ++q) {
    double sum = 0.0;
    for (int l = 0; l < Q; ++l) {
      p.gamma(q, l) = 0.2 + rng.next_double();
      sum += p.gamma(q, l);
    }
    p.gamma.row(q) /= sum;
  }
  project_rows_stochastic(p.gamma, delta);
  p.pi.assign(static_cast<std::size_t>(n_slices), Matrix::Zero(Q, Q));
  for (int s = 0; s < n_slices; ++s)
    for (int q = 0; q < Q; ++q)
      for (int l = q; l < Q; ++l) {
        double v = 2.0 * zeta + (1.0 - 4.0 * zeta) * rng.next_double();
        p.pi[static_cast<std::size_t>(s)](q, l) = v;
        p.pi[static_cast<std::size_t>(s)](l, q) = v;
      }
  return p;
}

}  // namespace dynsbm::testing
