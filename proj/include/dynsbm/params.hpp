#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

namespace dynsbm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct UnsupportedSizeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DegenerateStateError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct EstimationFailedError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Model parameters theta = (Gamma, pi).  pi holds one matrix in the
// stationary model and T matrices in the finite-T model (time-varying
// connectivity).  delta and zeta are the interiority margins of the
// parameter set: gamma entries live in [delta, 1-delta], pi entries in
// [zeta, 1-zeta].  They are part of the parameter object because the
// parameter set itself depends on them.
struct ModelParams {
  int q_classes = 0;
  Matrix gamma;             // Q x Q, row-stochastic
  std::vector<Matrix> pi;   // 1 matrix (stationary) or T matrices (finite-T)
  double delta = 0.05;
  double zeta = 0.05;

  int Q() const { return q_classes; }
  bool time_varying() const { return pi.size() > 1; }
  int n_time_slices() const { return static_cast<int>(pi.size()); }

  // Connectivity at time slice t (0-based); collapses to the single matrix
  // in the stationary model.
  const Matrix& pi_at(int t) const {
    return pi.size() == 1 ? pi.front() : pi.at(static_cast<std::size_t>(t));
  }
};

struct StationaryDist {
  Vector alpha;  // length Q, sums to 1, alpha * Gamma = alpha
};

struct LabelPermutation {
  std::vector<int> mapping;  // mapping[q] = sigma(q), a bijection on 0..Q-1

  int Q() const { return static_cast<int>(mapping.size()); }
  int operator()(int q) const { return mapping.at(static_cast<std::size_t>(q)); }
  static LabelPermutation identity(int Q);
  LabelPermutation inverse() const;
  bool is_bijection() const;
};

// Outcome of validate_theta.  Structural problems (wrong shapes, bad margin
// values) are reported separately from assumption failures; each assumption
// item carries the first violating index, -1 where a coordinate does not
// apply.
struct ValidityReport {
  struct Item {
    bool pass = true;
    int t = -1, q = -1, l = -1;
    std::string note;
  };

  bool structural_ok = true;
  std::string structural_error;

  Item gamma_rows_stochastic;  // rows sum to 1 within 1e-12
  Item gamma_bounds;           // Assumption 2: gamma in [delta, 1-delta]
  Item pi_symmetric;           // each pi slice symmetric within 1e-12
  Item pi_bounds;              // Assumption 3 / 3': pi in [zeta, 1-zeta]
  Item identifiable;           // Assumption 1 / 1': distinct rows of pi
  Item diagonal_constant;      // Assumption 4 (finite-T only)

  bool in_theta() const {
    return structural_ok && gamma_rows_stochastic.pass && gamma_bounds.pass &&
           pi_symmetric.pass && pi_bounds.pass && identifiable.pass &&
           diagonal_constant.pass;
  }
};

ValidityReport validate_theta(const ModelParams& params);

// Stationary distribution of a row-stochastic matrix, by direct linear
// solve of the fixed-point system with the normalisation appended.
// Throws NumericalError if the solution fails the fixed-point check.
StationaryDist stationary_distribution(const Matrix& gamma);

ModelParams permute_params(const ModelParams& params, const LabelPermutation& sigma);

// Best label alignment of an estimate against a reference, minimising the
// sup-norm distance on pi over all Q! permutations (Q <= 8).  In the
// finite-T model the distance is the max over slices with one shared
// permutation.  Ties break toward the lexicographically smallest mapping.
struct AlignmentResult {
  LabelPermutation sigma;
  double pi_error = 0.0;
};
AlignmentResult align_by_pi(const ModelParams& estimate, const ModelParams& truth);

// Sup-norm distance between gamma matrices after applying sigma to the
// estimate; used for transition-matrix error reporting.
double gamma_error(const ModelParams& estimate, const ModelParams& truth,
                   const LabelPermutation& sigma);

// Kullback-Leibler divergence between Bernoulli(p1) and Bernoulli(p2),
// with 0 log 0 = 0.  p2 must be interior.
double bernoulli_kl(double p1, double p2);

std::vector<LabelPermutation> all_permutations(int Q);

// Clamp every entry into [margin, 1-margin]; returns true if anything moved.
bool clamp_entries(Matrix& m, double margin);

// Clamp into [delta, 1-delta] and renormalise each row to sum 1 (repeated
// until stable).  Q = 1 collapses to the forced [[1]].  Returns true if the
// input was changed beyond roundoff.
bool project_rows_stochastic(Matrix& m, double delta);

// True when some gamma entry sits at the delta margin or some pi entry at
// the zeta margin (the estimate touches the boundary of the parameter set).
bool params_on_margin(const ModelParams& params);

}  // namespace dynsbm
