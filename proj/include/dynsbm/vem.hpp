#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "dynsbm/exact.hpp"
#include "dynsbm/params.hpp"
#include "dynsbm/report.hpp"
#include "dynsbm/sampler.hpp"

namespace dynsbm {

// Structured mean-field state chi = (tau, eta): one approximate Markov
// chain per node, independent across nodes.
//   tau[t](i, q)       singleton marginal of node i at time t
//   eta[t](i, q*Q + l) pairwise marginal across (t, t+1)
// Chain consistency: sum_l eta[t](i,q,:) = tau[t](i,q) and
// sum_q eta[t](i,:,l) = tau[t+1](i,l).
struct VariationalState {
  int n = 0, T = 0, Q = 0;
  std::vector<Matrix> tau;  // T entries, n x Q
  std::vector<Matrix> eta;  // T-1 entries, n x Q^2

  double tau_at(int t, int i, int q) const { return tau[static_cast<std::size_t>(t)](i, q); }
  double eta_at(int t, int i, int q, int l) const {
    return eta[static_cast<std::size_t>(t)](i, q * Q + l);
  }

  // Point mass at a configuration.
  static VariationalState dirac(const LatentPaths& z, int Q);

  // Max violation of the normalisation and chain-consistency identities.
  double consistency_error() const;
};

double elbo(const ModelParams& params, const GraphSequence& x,
            const VariationalState& chi);

// Block-coordinate ascent over nodes: each node's chain is replaced by the
// exact optimum given the other nodes' marginals (mean-field emission
// weights, then a forward-backward pass).  Sweeps until the max-abs tau
// change falls below tol or max_sweeps is hit.  The ELBO never decreases
// across sweeps; a decrease beyond 1e-9 raises NumericalError.
VariationalState e_step(const ModelParams& params, const GraphSequence& x,
                        const VariationalState& chi_init, double tol = 1e-6,
                        int max_sweeps = 50, bool jacobi = false);

// Fixed-point update gamma_{ql} = sum_{i,t} eta / sum_{i,t} tau, projected
// into [delta, 1-delta] with row renormalisation.  *projected reports
// whether the projection changed anything.  Throws DegenerateStateError on
// an empty class.
Matrix m_step_gamma(const VariationalState& chi, double delta, bool* projected = nullptr);

// Closed-form maximiser of the edge term, clamped to [zeta, 1-zeta]:
// pooled over time in the stationary model, per-slice otherwise, with an
// optional constraint tying the diagonal across slices.
std::vector<Matrix> m_step_pi(const VariationalState& chi, const GraphSequence& x,
                              double zeta, bool time_varying, bool tie_diagonal,
                              bool* projected = nullptr);

enum class InitStrategy { kRandomDirichlet, kSpectralMeanGraph, kWarmStart };
InitStrategy parse_init_strategy(const std::string& name);

// Variational initialisers.  warm is required by kWarmStart and ignored
// otherwise; eta always starts in product form, which is chain-consistent.
VariationalState init_tau(const GraphSequence& x, int q_classes, InitStrategy strategy,
                          std::uint64_t seed, const VariationalState* warm = nullptr);

Matrix vem_gamma_fixed_point_residual(const ModelParams& params,
                                      const VariationalState& chi);

struct VemConfig {
  int restarts = 8;
  std::uint64_t seed = 0;
  InitStrategy init = InitStrategy::kSpectralMeanGraph;  // restart 0; later
                                                         // restarts draw dirichlet
  double tol = 1e-8;  // on the normalized ELBO change
  int max_iters = 200;
  double e_step_tol = 1e-6;
  int e_step_max_sweeps = 50;
  double delta = 0.05;
  double zeta = 0.05;
  bool time_varying_pi = false;
  bool tie_diagonal = false;
  bool jacobi = false;
  std::optional<VariationalState> warm_start;
};

struct VemFit {
  EstimationReport report;
  VariationalState chi;
};

// Multi-restart VEM driver: alternate e_step / m_step_pi / m_step_gamma
// with the stationary distribution recomputed from the current gamma, keep
// the best-ELBO run.  Restarts that collapse a class are resampled; if
// every restart collapses, EstimationFailedError carries the diagnostics.
VemFit fit_vem(const GraphSequence& x, int q_classes, const VemConfig& config);

}  // namespace dynsbm
