#include "dynsbm/sampler.hpp"

#include <stdexcept>

#include "dynsbm/rng.hpp"

namespace dynsbm {

LatentPaths sample_latent_paths(const ModelParams& params, int n, int T,
                                std::uint64_t seed) {
  if (n < 1 || T < 1) throw std::invalid_argument("n and T must be >= 1");
  const int Q = params.q_classes;
  StationaryDist st = stationary_distribution(params.gamma);

  std::vector<double> alpha(st.alpha.data(), st.alpha.data() + Q);
  std::vector<std::vector<double>> rows(static_cast<std::size_t>(Q));
  for (int q = 0; q < Q; ++q)
    rows[static_cast<std::size_t>(q)].assign(params.gamma.row(q).data(),
                                             params.gamma.row(q).data() + Q);

  LatentPaths out;
  out.n = n;
  out.T = T;
  out.labels.assign(static_cast<std::size_t>(n) * T, 0);
  for (int i = 0; i < n; ++i) {
    CounterRng rng(stream_key(seed, kStreamLatent, static_cast<std::uint64_t>(i)));
    int state = rng.next_categorical(alpha);
    out.z(i, 0) = state;
    for (int t = 1; t < T; ++t) {
      state = rng.next_categorical(rows[static_cast<std::size_t>(state)]);
      out.z(i, t) = state;
    }
  }
  return out;
}

GraphSequence sample_graphs(const ModelParams& params, const LatentPaths& z,
                            std::uint64_t seed) {
  const int Q = params.q_classes;
  for (int v : z.labels)
    if (v < 0 || v >= Q) throw std::invalid_argument("label out of range");

  GraphSequence g;
  g.n = z.n;
  g.T = z.T;
  g.adj.assign(static_cast<std::size_t>(z.T) * z.n * z.n, 0);
  for (int t = 0; t < z.T; ++t) {
    const Matrix& pi = params.pi_at(t);
    for (int i = 0; i < z.n; ++i)
      for (int j = i + 1; j < z.n; ++j) {
        double u = uniform_at(stream_key(seed, kStreamEdge, static_cast<std::uint64_t>(t),
                                         static_cast<std::uint64_t>(i),
                                         static_cast<std::uint64_t>(j)));
        if (u < pi(z.z(i, t), z.z(j, t))) g.set(t, i, j, 1);
      }
  }
  return g;
}

CountSummary count_summary(const LatentPaths& z, int Q) {
  CountSummary s;
  s.n_q = Eigen::MatrixXi::Zero(z.T, Q);
  s.n_ql = Eigen::MatrixXi::Zero(Q, Q);
  for (int i = 0; i < z.n; ++i) {
    for (int t = 0; t < z.T; ++t) s.n_q(t, z.z(i, t)) += 1;
    for (int t = 0; t + 1 < z.T; ++t) s.n_ql(z.z(i, t), z.z(i, t + 1)) += 1;
  }
  return s;
}

ConfusionMatrix confusion_matrix(const std::vector<int>& z_a,
                                 const std::vector<int>& z_b, int Q) {
  if (z_a.size() != z_b.size())
    throw std::invalid_argument("labelings have different lengths");
  ConfusionMatrix cm;
  cm.c = Eigen::MatrixXi::Zero(Q, Q);
  for (std::size_t i = 0; i < z_a.size(); ++i) cm.c(z_a[i], z_b[i]) += 1;
  return cm;
}

bool omega_eta_member(const LatentPaths& z, const StationaryDist& alpha, double eta) {
  if (eta <= 0.0 || eta >= 1.0) throw std::invalid_argument("eta must lie in (0,1)");
  const int Q = static_cast<int>(alpha.alpha.size());
  CountSummary s = count_summary(z, Q);
  for (int t = 0; t < z.T; ++t)
    for (int q = 0; q < Q; ++q)
      if (static_cast<double>(s.n_q(t, q)) / z.n < alpha.alpha(q) - eta) return false;
  return true;
}

}  // namespace dynsbm
