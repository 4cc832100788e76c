#pragma once

#include <cstdint>
#include <vector>

#include "dynsbm/params.hpp"

namespace dynsbm {

// Latent class labels, one Markov chain per node.  Classes are 0-based in
// memory; serialization uses 1-based labels.
struct LatentPaths {
  int n = 0;
  int T = 0;
  std::vector<int> labels;  // n * T, node-major: labels[i*T + t]

  int z(int i, int t) const { return labels[static_cast<std::size_t>(i) * T + t]; }
  int& z(int i, int t) { return labels[static_cast<std::size_t>(i) * T + t]; }
};

// T symmetric binary adjacency matrices with zero diagonal.
struct GraphSequence {
  int n = 0;
  int T = 0;
  std::vector<std::uint8_t> adj;  // T * n * n

  std::uint8_t x(int t, int i, int j) const {
    return adj[(static_cast<std::size_t>(t) * n + i) * n + j];
  }
  void set(int t, int i, int j, std::uint8_t v) {
    adj[(static_cast<std::size_t>(t) * n + i) * n + j] = v;
    adj[(static_cast<std::size_t>(t) * n + j) * n + i] = v;
  }
};

// Occupancy counts N_q(z^t) and transition counts N_ql(z^{1:T}).
struct CountSummary {
  Eigen::MatrixXi n_q;   // T x Q
  Eigen::MatrixXi n_ql;  // Q x Q
};

struct ConfusionMatrix {
  Eigen::MatrixXi c;  // Q x Q, c(q, qp) = #{i : a_i = q, b_i = qp}
};

// One latent chain per node: initial class from the stationary distribution
// of gamma, then transitions by gamma.  Node i draws from its own substream,
// so the result is independent of generation order.
LatentPaths sample_latent_paths(const ModelParams& params, int n, int T,
                                std::uint64_t seed);

// Conditionally independent Bernoulli edges given the labels; one substream
// value per (t, i<j) slot.
GraphSequence sample_graphs(const ModelParams& params, const LatentPaths& z,
                            std::uint64_t seed);

CountSummary count_summary(const LatentPaths& z, int Q);

ConfusionMatrix confusion_matrix(const std::vector<int>& z_a,
                                 const std::vector<int>& z_b, int Q);

// Membership test for the high-occupancy event: N_q(z^t)/n >= alpha_q - eta
// for every t and q.
bool omega_eta_member(const LatentPaths& z, const StationaryDist& alpha, double eta);

}  // namespace dynsbm
