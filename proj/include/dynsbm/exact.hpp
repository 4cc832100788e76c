#pragma once

#include <cstdint>
#include <optional>

#include "dynsbm/params.hpp"
#include "dynsbm/report.hpp"
#include "dynsbm/sampler.hpp"

namespace dynsbm {

// Size caps keeping the exact computations at desk scale.
inline constexpr long long kBruteForceCap = 10'000'000;  // Q^(nT)
inline constexpr long long kJointStateCap = 100'000;     // Q^n

struct LogLikValue {
  double value = 0.0;
  long long n_terms = 0;  // summed configurations (brute) or joint states (transfer)
};

// Exact posterior marginals of the latent chains given the graphs.
// singleton[t](i, q)      = P(Z_i^t = q | X)
// pairwise[t](i, q*Q + l) = P(Z_i^t = q, Z_i^{t+1} = l | X)
struct PosteriorTable {
  std::vector<Matrix> singleton;  // T entries, n x Q
  std::vector<Matrix> pairwise;   // T-1 entries, n x Q^2
};

// log P(X | Z = z): sum over times and unordered pairs of the Bernoulli
// log-masses; per-time connectivity in the finite-T model.
double conditional_loglik(const ModelParams& params, const LatentPaths& z,
                          const GraphSequence& x);

// log P(Z = z) under the stationary chain prior.
double latent_prior_loglik(const ModelParams& params, const LatentPaths& z);

// log P(X) by log-sum-exp over all Q^(nT) configurations.
LogLikValue exact_loglik_bruteforce(const ModelParams& params, const GraphSequence& x);

// Same value via the forward recursion over the joint state space of all n
// nodes, one step per time slice.  The joint transition factorises over
// nodes, so each step contracts one node axis at a time.
LogLikValue exact_loglik_transfer(const ModelParams& params, const GraphSequence& x);

PosteriorTable exact_posterior_marginals(const ModelParams& params,
                                         const GraphSequence& x);

// P(Z != z_star | X) / P(Z = z_star | X); +infinity when the denominator
// underflows to zero.
double posterior_ratio(const ModelParams& params, const GraphSequence& x,
                       const LatentPaths& z_star);

// Per-time argmax of the conditional log-likelihood; ties break toward the
// lexicographically smallest label vector.
LatentPaths map_configuration(const ModelParams& params, const GraphSequence& x);

// Limiting normalized-likelihood functional for a confusion-weight matrix A
// (row-stochastic):
//   M(pi, A) = sum_{q,l} alpha*_q alpha*_l sum_{q',l'} a_{qq'} a_{ll'}
//              [ pi*_{ql} log pi_{q'l'} + (1 - pi*_{ql}) log(1 - pi_{q'l'}) ]
double limit_M(const Matrix& pi_true, const Vector& alpha_true, const Matrix& pi,
               const Matrix& a);

struct LimitMSup {
  double value = 0.0;
  Matrix a_star;
};

// sup over row-stochastic A of limit_M, by scoring every deterministic
// 0/1-row matrix and polishing the best starts with exact row-wise
// maximisation.  Q <= 5.
LimitMSup limit_M_sup(const Matrix& pi_true, const Vector& alpha_true, const Matrix& pi);

// Finite-T limiting value: average of the per-slice suprema.
double limit_M_sup_time_avg(const std::vector<Matrix>& pi_true_slices,
                            const Vector& alpha_true,
                            const std::vector<Matrix>& pi_slices);

// 2 / (n(n-1)T) * log P(X), via the transfer recursion.
double normalized_loglik(const ModelParams& params, const GraphSequence& x);

struct MleConfig {
  int restarts = 16;
  std::uint64_t seed = 0;
  int max_iters = 2000;
  double param_tol = 1e-9;   // stop when parameter moves fall below this
  double delta = 0.05;       // margins of the search box
  double zeta = 0.05;
  bool time_varying_pi = false;
  bool tie_diagonal = false;  // finite-T: pool the diagonal over time
  std::optional<ModelParams> warm_start;
};

// Exact maximum-likelihood fit at desk scale: multi-start EM where the
// E-step is the joint-state forward-backward pass and both M-steps are
// closed form, projected into the margin box after every update.
EstimationReport exact_mle(const GraphSequence& x, int q_classes, const MleConfig& config);

// gamma_{ql} minus the posterior transition ratio of the fixed-point
// equation for critical points of the likelihood.
Matrix mle_gamma_fixed_point_residual(const ModelParams& params, const GraphSequence& x);

}  // namespace dynsbm
