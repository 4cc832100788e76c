#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dynsbm/params.hpp"

namespace dynsbm {

// Objective values per outer iteration of an estimation run (ELBO for the
// variational fit, log-likelihood for the exact fit).
struct ElboTrace {
  std::vector<double> values;
  bool converged = false;
  int iterations = 0;
  int decreases = 0;  // iterations where the objective dropped beyond slack
};

struct TruthComparison {
  LabelPermutation sigma;
  double pi_error = 0.0;
  double gamma_error = 0.0;
};

struct EstimationReport {
  ModelParams fitted;
  ElboTrace trace;              // best restart
  std::string method;           // "vem" or "exact-mle"
  std::uint64_t seed = 0;
  int restarts_run = 0;
  int best_restart = -1;
  int degenerate_restarts = 0;  // aborted and resampled runs
  int failed_restarts = 0;

  Matrix gamma_residual;              // fixed-point residual at the solution
  double max_abs_gamma_residual = 0;  // max |residual|
  int projection_events = 0;          // clamp-to-margin events during the fit
  bool boundary = false;              // final estimate touched the margins

  double wall_ms = 0.0;  // 0 unless timing was requested

  std::optional<TruthComparison> vs_truth;
};

// Fills vs_truth by aligning the fitted pi against the ground truth.
void compare_with_truth(EstimationReport& report, const ModelParams& truth);

}  // namespace dynsbm
