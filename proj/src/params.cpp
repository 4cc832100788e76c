#include "dynsbm/params.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dynsbm {

namespace {
constexpr double kStochasticTol = 1e-12;
constexpr double kSymmetryTol = 1e-12;
constexpr double kStationaryTol = 1e-10;
}  // namespace

LabelPermutation LabelPermutation::identity(int Q) {
  LabelPermutation sigma;
  sigma.mapping.resize(static_cast<std::size_t>(Q));
  std::iota(sigma.mapping.begin(), sigma.mapping.end(), 0);
  return sigma;
}

LabelPermutation LabelPermutation::inverse() const {
  LabelPermutation inv;
  inv.mapping.assign(mapping.size(), 0);
  for (std::size_t q = 0; q < mapping.size(); ++q)
    inv.mapping[static_cast<std::size_t>(mapping[q])] = static_cast<int>(q);
  return inv;
}

bool LabelPermutation::is_bijection() const {
  std::vector<bool> seen(mapping.size(), false);
  for (int v : mapping) {
    if (v < 0 || v >= Q() || seen[static_cast<std::size_t>(v)]) return false;
    seen[static_cast<std::size_t>(v)] = true;
  }
  return true;
}

std::vector<LabelPermutation> all_permutations(int Q) {
  std::vector<int> perm(static_cast<std::size_t>(Q));
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<LabelPermutation> out;
  do {
    out.push_back(LabelPermutation{perm});
  } while (std::next_permutation(perm.begin(), perm.end()));
  return out;
}

ValidityReport validate_theta(const ModelParams& p) {
  ValidityReport rep;
  const int Q = p.q_classes;

  if (Q < 1) {
    rep.structural_ok = false;
    rep.structural_error = "q_classes must be >= 1";
    return rep;
  }
  if (p.gamma.rows() != Q || p.gamma.cols() != Q) {
    rep.structural_ok = false;
    rep.structural_error = "gamma is not Q x Q";
    return rep;
  }
  if (p.pi.empty()) {
    rep.structural_ok = false;
    rep.structural_error = "pi has no slices";
    return rep;
  }
  for (const Matrix& slice : p.pi) {
    if (slice.rows() != Q || slice.cols() != Q) {
      rep.structural_ok = false;
      rep.structural_error = "pi slice is not Q x Q";
      return rep;
    }
  }
  // Q = 1 has gamma = [[1]] forced by stochasticity; the margin assumptions
  // are vacuous there and the margin checks below are skipped.
  if (Q > 1 && (p.delta <= 0.0 || p.delta >= 1.0 / Q)) {
    rep.structural_ok = false;
    rep.structural_error = "delta must lie in (0, 1/Q)";
    return rep;
  }
  if (p.zeta <= 0.0 || p.zeta >= 0.5) {
    rep.structural_ok = false;
    rep.structural_error = "zeta must lie in (0, 1/2)";
    return rep;
  }

  for (int q = 0; q < Q && rep.gamma_rows_stochastic.pass; ++q) {
    if (std::abs(p.gamma.row(q).sum() - 1.0) > kStochasticTol)
      rep.gamma_rows_stochastic = {false, -1, q, -1, "row sum differs from 1"};
    for (int l = 0; l < Q; ++l)
      if (p.gamma(q, l) < 0.0) {
        rep.gamma_rows_stochastic = {false, -1, q, l, "negative entry"};
        break;
      }
  }

  if (Q > 1) {
    for (int q = 0; q < Q && rep.gamma_bounds.pass; ++q)
      for (int l = 0; l < Q; ++l)
        if (p.gamma(q, l) < p.delta || p.gamma(q, l) > 1.0 - p.delta) {
          rep.gamma_bounds = {false, -1, q, l, "gamma outside [delta, 1-delta]"};
          break;
        }
  }

  const int S = p.n_time_slices();
  for (int t = 0; t < S && rep.pi_symmetric.pass; ++t) {
    const Matrix& slice = p.pi[static_cast<std::size_t>(t)];
    for (int q = 0; q < Q && rep.pi_symmetric.pass; ++q)
      for (int l = q + 1; l < Q; ++l)
        if (std::abs(slice(q, l) - slice(l, q)) > kSymmetryTol) {
          rep.pi_symmetric = {false, p.time_varying() ? t : -1, q, l, "pi not symmetric"};
          break;
        }
  }

  for (int t = 0; t < S && rep.pi_bounds.pass; ++t) {
    const Matrix& slice = p.pi[static_cast<std::size_t>(t)];
    for (int q = 0; q < Q && rep.pi_bounds.pass; ++q)
      for (int l = 0; l < Q; ++l)
        if (slice(q, l) < p.zeta || slice(q, l) > 1.0 - p.zeta) {
          rep.pi_bounds = {false, p.time_varying() ? t : -1, q, l,
                           "pi outside [zeta, 1-zeta]"};
          break;
        }
  }

  // Assumption 1 (per slice in the finite-T model): for every pair of
  // distinct classes some column of pi separates them.
  for (int t = 0; t < S && rep.identifiable.pass; ++t) {
    const Matrix& slice = p.pi[static_cast<std::size_t>(t)];
    for (int q = 0; q < Q && rep.identifiable.pass; ++q)
      for (int qp = q + 1; qp < Q; ++qp) {
        bool separated = false;
        for (int l = 0; l < Q; ++l)
          if (slice(q, l) != slice(qp, l)) {
            separated = true;
            break;
          }
        if (!separated) {
          rep.identifiable = {false, p.time_varying() ? t : -1, q, qp,
                              "classes have identical pi rows"};
          break;
        }
      }
  }

  if (p.time_varying()) {
    const Matrix& first = p.pi.front();
    for (int t = 1; t < S && rep.diagonal_constant.pass; ++t)
      for (int q = 0; q < Q; ++q)
        if (p.pi[static_cast<std::size_t>(t)](q, q) != first(q, q)) {
          rep.diagonal_constant = {false, t, q, q, "diagonal varies over time"};
          break;
        }
    for (int q = 0; q < Q && rep.diagonal_constant.pass; ++q)
      for (int l = q + 1; l < Q; ++l)
        if (first(q, q) == first(l, l)) {
          rep.diagonal_constant = {false, -1, q, l, "diagonal values not distinct"};
          break;
        }
  }

  return rep;
}

StationaryDist stationary_distribution(const Matrix& gamma) {
  const int Q = static_cast<int>(gamma.rows());
  if (gamma.cols() != Q) throw NumericalError("gamma must be square");

  // Solve alpha (Gamma - I) = 0 with sum(alpha) = 1 appended, i.e. the
  // (Q+1) x Q least-squares system M alpha = b, exact because consistent.
  Matrix M(Q + 1, Q);
  M.topRows(Q) = gamma.transpose() - Matrix::Identity(Q, Q);
  M.row(Q).setOnes();
  Vector b = Vector::Zero(Q + 1);
  b(Q) = 1.0;

  Vector alpha = M.colPivHouseholderQr().solve(b);

  double fixed_point_resid = (gamma.transpose() * alpha - alpha).cwiseAbs().maxCoeff();
  double mass_resid = std::abs(alpha.sum() - 1.0);
  if (!alpha.allFinite() || fixed_point_resid > kStationaryTol || mass_resid > kStationaryTol)
    throw NumericalError("stationary distribution solve failed fixed-point check");

  return StationaryDist{alpha};
}

ModelParams permute_params(const ModelParams& params, const LabelPermutation& sigma) {
  const int Q = params.q_classes;
  if (sigma.Q() != Q || !sigma.is_bijection())
    throw std::invalid_argument("sigma is not a bijection on the classes");

  ModelParams out = params;
  for (int q = 0; q < Q; ++q)
    for (int l = 0; l < Q; ++l) out.gamma(q, l) = params.gamma(sigma(q), sigma(l));
  for (std::size_t s = 0; s < params.pi.size(); ++s)
    for (int q = 0; q < Q; ++q)
      for (int l = 0; l < Q; ++l) out.pi[s](q, l) = params.pi[s](sigma(q), sigma(l));
  return out;
}

namespace {

double pi_distance(const ModelParams& estimate, const ModelParams& truth,
                   const LabelPermutation& sigma) {
  const int Q = truth.q_classes;
  const std::size_t S = std::max(estimate.pi.size(), truth.pi.size());
  double d = 0.0;
  for (std::size_t s = 0; s < S; ++s) {
    const Matrix& e = estimate.pi_at(static_cast<int>(s));
    const Matrix& t = truth.pi_at(static_cast<int>(s));
    for (int q = 0; q < Q; ++q)
      for (int l = 0; l < Q; ++l)
        d = std::max(d, std::abs(t(q, l) - e(sigma(q), sigma(l))));
  }
  return d;
}

}  // namespace

AlignmentResult align_by_pi(const ModelParams& estimate, const ModelParams& truth) {
  const int Q = truth.q_classes;
  if (estimate.q_classes != Q)
    throw std::invalid_argument("estimate and truth have different Q");
  if (Q > 8) throw UnsupportedSizeError("alignment search capped at Q <= 8");
  if (estimate.pi.size() != truth.pi.size() && estimate.pi.size() != 1 &&
      truth.pi.size() != 1)
    throw std::invalid_argument("pi slice counts incompatible");

  AlignmentResult best;
  best.sigma = LabelPermutation::identity(Q);
  best.pi_error = pi_distance(estimate, truth, best.sigma);
  for (const LabelPermutation& sigma : all_permutations(Q)) {
    double d = pi_distance(estimate, truth, sigma);
    if (d < best.pi_error) {
      best.pi_error = d;
      best.sigma = sigma;
    }
  }
  return best;
}

double gamma_error(const ModelParams& estimate, const ModelParams& truth,
                   const LabelPermutation& sigma) {
  const int Q = truth.q_classes;
  double d = 0.0;
  for (int q = 0; q < Q; ++q)
    for (int l = 0; l < Q; ++l)
      d = std::max(d, std::abs(truth.gamma(q, l) - estimate.gamma(sigma(q), sigma(l))));
  return d;
}

bool clamp_entries(Matrix& m, double margin) {
  bool changed = false;
  for (int q = 0; q < m.rows(); ++q)
    for (int l = 0; l < m.cols(); ++l) {
      double v = std::clamp(m(q, l), margin, 1.0 - margin);
      if (v != m(q, l)) {
        changed = true;
        m(q, l) = v;
      }
    }
  return changed;
}

bool project_rows_stochastic(Matrix& m, double delta) {
  const int Q = static_cast<int>(m.rows());
  if (Q == 1) {
    bool changed = m(0, 0) != 1.0;
    m(0, 0) = 1.0;
    return changed;
  }
  bool changed = false;
  for (int q = 0; q < Q; ++q) {
    for (int pass = 0; pass < 2; ++pass) {
      for (int l = 0; l < Q; ++l) {
        double v = std::clamp(m(q, l), delta, 1.0 - delta);
        if (v != m(q, l)) {
          if (std::abs(v - m(q, l)) > 1e-12) changed = true;
          m(q, l) = v;
        }
      }
      // Distribute the unit-mass deficit over the remaining headroom (or
      // slack), which keeps every entry inside the box in one shot.
      double deficit = 1.0 - m.row(q).sum();
      if (deficit > 0.0) {
        double headroom = Q * (1.0 - delta) - m.row(q).sum();
        if (headroom <= 0.0) break;
        for (int l = 0; l < Q; ++l)
          m(q, l) += deficit * ((1.0 - delta) - m(q, l)) / headroom;
      } else if (deficit < 0.0) {
        double slack = m.row(q).sum() - Q * delta;
        if (slack <= 0.0) break;
        for (int l = 0; l < Q; ++l) m(q, l) += deficit * (m(q, l) - delta) / slack;
      }
      if (std::abs(deficit) > 1e-12) changed = true;
    }
  }
  return changed;
}

bool params_on_margin(const ModelParams& params) {
  const int Q = params.q_classes;
  const double tol = 1e-12;
  if (Q > 1)
    for (int q = 0; q < Q; ++q)
      for (int l = 0; l < Q; ++l)
        if (params.gamma(q, l) <= params.delta + tol ||
            params.gamma(q, l) >= 1.0 - params.delta - tol)
          return true;
  for (const Matrix& slice : params.pi)
    for (int q = 0; q < Q; ++q)
      for (int l = 0; l < Q; ++l)
        if (slice(q, l) <= params.zeta + tol || slice(q, l) >= 1.0 - params.zeta - tol)
          return true;
  return false;
}

double bernoulli_kl(double p1, double p2) {
  if (p2 <= 0.0 || p2 >= 1.0) throw std::domain_error("p2 must be interior to (0,1)");
  if (p1 < 0.0 || p1 > 1.0) throw std::domain_error("p1 must lie in [0,1]");
  double kl = 0.0;
  if (p1 > 0.0) kl += p1 * std::log(p1 / p2);
  if (p1 < 1.0) kl += (1.0 - p1) * std::log((1.0 - p1) / (1.0 - p2));
  return kl;
}

}  // namespace dynsbm
