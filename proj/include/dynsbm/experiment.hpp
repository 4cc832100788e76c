#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dynsbm/exact.hpp"
#include "dynsbm/params.hpp"
#include "dynsbm/vem.hpp"

namespace dynsbm {

struct ExperimentCell {
  int n = 0;
  int T = 0;
};

struct ExperimentConfig {
  std::vector<ExperimentCell> grid;
  int replicates = 20;
  ModelParams true_params;
  std::string estimator = "vem";  // "vem" or "exact-mle"
  std::uint64_t seed = 0;
  std::string out_dir;
  VemConfig vem;
  MleConfig mle;
  bool timing = false;            // wall_ms stays 0 unless enabled
  double rate_target_pi = -0.25;  // slope annotations from the known upper bounds
  double rate_target_gamma = -0.5;
};

// Throws std::invalid_argument on an unusable configuration (empty grid,
// unknown estimator, sizes beyond the exact caps for exact-mle, ...).
void validate_config(const ExperimentConfig& config);

struct ReplicateRow {
  int n = 0, T = 0, Q = 0, replicate = 0;
  std::uint64_t seed = 0;
  std::string estimator;
  double pi_err = 0.0, gamma_err = 0.0;
  double objective = 0.0;  // final ELBO or log-likelihood
  int iters = 0;
  double wall_ms = 0.0;
  bool failed = false;
};

struct CellSummary {
  int n = 0, T = 0;
  int failures = 0, replicates = 0;
  double pi_q25 = 0.0, pi_median = 0.0, pi_q75 = 0.0;
  double gamma_q25 = 0.0, gamma_median = 0.0, gamma_q75 = 0.0;
};

struct RateFit {
  double slope = 0.0, intercept = 0.0;
  double slope_stderr = 0.0, ci_low = 0.0, ci_high = 0.0;  // approx 95% band
  double bound = 0.0;                 // annotated upper-bound exponent
  bool consistent_with_bound = false; // informational flag, not a test
  int points = 0;
};

struct ExperimentResult {
  int Q = 0;
  std::string estimator;
  std::vector<ReplicateRow> rows;    // sorted by (n, T, replicate)
  std::vector<CellSummary> cells;    // grid order
  bool excessive_failures = false;   // some cell failed more than half its reps
  std::optional<RateFit> pi_rate;    // present when the grid supports a fit
  std::optional<RateFit> gamma_rate;
};

// For every cell and replicate: sample data under the true parameters, fit,
// align against the truth, and record the aligned errors.  Deterministic
// given (config, seed); estimator failures are recorded, not fatal.
ExperimentResult run_consistency_experiment(const ExperimentConfig& config);

// OLS of log(median error) on log n (target "pi") or of the log-factor
// adjusted log(median error) on log(nT) (target "gamma").
RateFit rate_regression(const ExperimentResult& result, const std::string& target,
                        double bound);

// results.csv, summary.json and plotdata.csv under dir; bit-stable given an
// identical result.
void emit_outputs(const ExperimentResult& result, const std::string& dir);

// Reader for results.csv, used to verify the round trip.
std::vector<ReplicateRow> read_results_csv(const std::string& path);

}  // namespace dynsbm
