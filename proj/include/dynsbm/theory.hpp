#pragma once

#include <cstdint>

#include "dynsbm/params.hpp"
#include "dynsbm/sampler.hpp"

namespace dynsbm {

// Size of the discrepancy set between two configurations under a given
// connectivity, with the combinatorial bounds it must satisfy whenever the
// reference configuration has the high-occupancy property.
struct DiscrepancyReport {
  long long r = 0;            // Hamming distance
  long long d_size = 0;       // #{(i<j, t) : pi differs between z and z_star}
  double lower_bound = 0.0;   // (delta - eta)^2 * n * r / 4
  double upper_bound = 0.0;   // 2 * n * r
};

long long hamming(const LatentPaths& z_a, const LatentPaths& z_b);

DiscrepancyReport discrepancy_set_size(const LatentPaths& z, const LatentPaths& z_star,
                                       const ModelParams& params, double eta);

// Monte Carlo check of the concentration statements on sampled latent
// paths, each estimate paired with its bound and a pass flag at three
// Monte Carlo standard errors.
struct ConcentrationReport {
  int n = 0, T = 0, replicates = 0;
  double eta = 0.0;

  // (a) failure frequency of the occupancy event vs Q T exp(-2 eta^2 n)
  double omega_fail_rate = 0.0;
  double omega_fail_stderr = 0.0;
  double omega_bound = 0.0;
  bool omega_pass = false;

  // (b) transition frequencies: per-replicate max over (q,l) of
  // |N_ql / (n(T-1)) - alpha_q gamma_ql|.  The chain mixes geometrically
  // but with no explicit constants, so the bound here is an empirical
  // threshold.
  double nql_mean = 0.0;
  double nql_stderr = 0.0;
  double nql_q50 = 0.0;
  double nql_q90 = 0.0;
  double nql_max = 0.0;
  double nql_threshold = 0.01;
  bool nql_pass = false;

  // (c) max over (q,l) of the estimated E|N_q N_l / (n(n-1)) - alpha_q alpha_l|
  // vs the exact moment bound 2 sqrt(n) / (n-1)
  double nqnl_worst_estimate = 0.0;
  double nqnl_worst_stderr = 0.0;
  double nqnl_bound = 0.0;
  bool nqnl_pass = false;
};

ConcentrationReport concentration_report(const ModelParams& params, int n, int T,
                                         int replicates, std::uint64_t seed,
                                         double eta, double nql_threshold = 0.01);

}  // namespace dynsbm
