#include "dynsbm/vem.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dynsbm/rng.hpp"

namespace dynsbm {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kDegenerateMassFrac = 1e-6;

// Compensated summation; the ELBO comparisons across sweeps need the
// accumulation error well below the 1e-9 ascent slack.
class KahanSum {
 public:
  void add(double v) {
    double y = v - c_;
    double t = s_ + y;
    c_ = (t - s_) - y;
    s_ = t;
  }
  double value() const { return s_; }

 private:
  double s_ = 0.0;
  double c_ = 0.0;
};

double lse_row(const Eigen::RowVectorXd& v) {
  double m = v.maxCoeff();
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (int k = 0; k < v.size(); ++k) s += std::exp(v(k) - m);
  return m + std::log(s);
}

std::vector<Matrix> dense_adjacency(const GraphSequence& x) {
  std::vector<Matrix> out(static_cast<std::size_t>(x.T));
  for (int t = 0; t < x.T; ++t) {
    Matrix& m = out[static_cast<std::size_t>(t)];
    m = Matrix::Zero(x.n, x.n);
    for (int i = 0; i < x.n; ++i)
      for (int j = 0; j < x.n; ++j) m(i, j) = x.x(t, i, j);
  }
  return out;
}

}  // namespace

VariationalState VariationalState::dirac(const LatentPaths& z, int Q) {
  VariationalState chi;
  chi.n = z.n;
  chi.T = z.T;
  chi.Q = Q;
  chi.tau.assign(static_cast<std::size_t>(z.T), Matrix::Zero(z.n, Q));
  for (int t = 0; t < z.T; ++t)
    for (int i = 0; i < z.n; ++i) chi.tau[static_cast<std::size_t>(t)](i, z.z(i, t)) = 1.0;
  chi.eta.assign(static_cast<std::size_t>(std::max(z.T - 1, 0)), Matrix::Zero(z.n, Q * Q));
  for (int t = 0; t + 1 < z.T; ++t)
    for (int i = 0; i < z.n; ++i)
      chi.eta[static_cast<std::size_t>(t)](i, z.z(i, t) * Q + z.z(i, t + 1)) = 1.0;
  return chi;
}

double VariationalState::consistency_error() const {
  double err = 0.0;
  for (int t = 0; t < T; ++t)
    for (int i = 0; i < n; ++i)
      err = std::max(err, std::abs(tau[static_cast<std::size_t>(t)].row(i).sum() - 1.0));
  for (int t = 0; t + 1 < T; ++t) {
    const Matrix& e = eta[static_cast<std::size_t>(t)];
    for (int i = 0; i < n; ++i) {
      double total = 0.0;
      for (int q = 0; q < Q; ++q) {
        double row = 0.0;
        for (int l = 0; l < Q; ++l) row += e(i, q * Q + l);
        err = std::max(err, std::abs(row - tau_at(t, i, q)));
        total += row;
      }
      err = std::max(err, std::abs(total - 1.0));
      for (int l = 0; l < Q; ++l) {
        double col = 0.0;
        for (int q = 0; q < Q; ++q) col += e(i, q * Q + l);
        err = std::max(err, std::abs(col - tau_at(t + 1, i, l)));
      }
    }
  }
  for (const Matrix& m : tau) err = std::max(err, std::max(0.0, -m.minCoeff()));
  for (const Matrix& m : eta) err = std::max(err, std::max(0.0, -m.minCoeff()));
  return err;
}

double elbo(const ModelParams& params, const GraphSequence& x,
            const VariationalState& chi) {
  const int T = x.T, Q = chi.Q;
  StationaryDist st = stationary_distribution(params.gamma);
  Vector log_alpha = st.alpha.array().log().matrix();
  Matrix log_gamma = params.gamma.array().log().matrix();
  std::vector<Matrix> Xd = dense_adjacency(x);

  KahanSum acc;

  // Edge term: 1/2 sum_t sum_ql [ (tau' X tau)_ql log pi_ql
  //                             + (S_q S_l - (tau' tau)_ql - (tau' X tau)_ql) log(1-pi_ql) ].
  for (int t = 0; t < T; ++t) {
    const Matrix& tau = chi.tau[static_cast<std::size_t>(t)];
    const Matrix& pi = params.pi_at(t);
    Matrix log1 = pi.array().log().matrix();
    Matrix log0 = (1.0 - pi.array()).log().matrix();
    Matrix p1 = tau.transpose() * Xd[static_cast<std::size_t>(t)] * tau;
    Matrix gram = tau.transpose() * tau;
    Eigen::RowVectorXd s = tau.colwise().sum();
    for (int q = 0; q < Q; ++q)
      for (int l = 0; l < Q; ++l) {
        double pairs = s(q) * s(l) - gram(q, l);
        acc.add(0.5 * (p1(q, l) * log1(q, l) + (pairs - p1(q, l)) * log0(q, l)));
      }
  }

  const Matrix& tau1 = chi.tau.front();
  for (int i = 0; i < x.n; ++i)
    for (int q = 0; q < Q; ++q) {
      double v = tau1(i, q);
      acc.add(v * log_alpha(q));
      if (v > 0.0) acc.add(-v * std::log(v));
    }

  for (int t = 0; t + 1 < T; ++t) {
    const Matrix& e = chi.eta[static_cast<std::size_t>(t)];
    const Matrix& tau = chi.tau[static_cast<std::size_t>(t)];
    for (int i = 0; i < x.n; ++i)
      for (int q = 0; q < Q; ++q)
        for (int l = 0; l < Q; ++l) {
          double v = e(i, q * Q + l);
          if (v <= 0.0) continue;
          acc.add(v * log_gamma(q, l));
          double tv = std::max(tau(i, q), 1e-300);
          acc.add(-v * std::log(v / tv));
        }
  }
  return acc.value();
}

namespace {

// Exact chain update for one node: emission weights w against everyone
// else's marginals, then a log-space forward-backward pass.
void update_node_chain(int i, const std::vector<Matrix>& tau_ref,
                       const std::vector<Eigen::RowVectorXd>& colsum_ref,
                       const std::vector<Matrix>& Xd, const Vector& log_alpha,
                       const Matrix& log_gamma, const std::vector<Matrix>& logit,
                       const std::vector<Matrix>& log0, VariationalState& chi) {
  const int T = chi.T, Q = chi.Q;
  Matrix w(T, Q);
  for (int t = 0; t < T; ++t) {
    const std::size_t ts = static_cast<std::size_t>(t);
    const std::size_t ps = logit.size() == 1 ? 0 : ts;
    Eigen::RowVectorXd u = Xd[ts].row(i) * tau_ref[ts];
    Eigen::RowVectorXd s = colsum_ref[ts] - tau_ref[ts].row(i);
    w.row(t) = (logit[ps] * u.transpose() + log0[ps] * s.transpose()).transpose();
  }

  Matrix a(T, Q), b(T, Q);
  a.row(0) = log_alpha.transpose() + w.row(0);
  Eigen::RowVectorXd scratch(Q);
  for (int t = 1; t < T; ++t) {
    for (int q = 0; q < Q; ++q) {
      scratch = a.row(t - 1) + log_gamma.col(q).transpose();
      a(t, q) = lse_row(scratch);
    }
    a.row(t) += w.row(t);
  }
  double logz = lse_row(a.row(T - 1));
  b.row(T - 1).setZero();
  for (int t = T - 2; t >= 0; --t)
    for (int q = 0; q < Q; ++q) {
      scratch = log_gamma.row(q) + w.row(t + 1) + b.row(t + 1);
      b(t, q) = lse_row(scratch);
    }

  for (int t = 0; t < T; ++t) {
    Eigen::RowVectorXd tau_row(Q);
    for (int q = 0; q < Q; ++q) tau_row(q) = std::exp(a(t, q) + b(t, q) - logz);
    tau_row /= tau_row.sum();
    chi.tau[static_cast<std::size_t>(t)].row(i) = tau_row;
  }
  for (int t = 0; t + 1 < T; ++t) {
    Eigen::RowVectorXd eta_row(Q * Q);
    for (int q = 0; q < Q; ++q)
      for (int l = 0; l < Q; ++l)
        eta_row(q * Q + l) =
            std::exp(a(t, q) + log_gamma(q, l) + w(t + 1, l) + b(t + 1, l) - logz);
    eta_row /= eta_row.sum();
    chi.eta[static_cast<std::size_t>(t)].row(i) = eta_row;
  }
}

}  // namespace

VariationalState e_step(const ModelParams& params, const GraphSequence& x,
                        const VariationalState& chi_init, double tol, int max_sweeps,
                        bool jacobi) {
  const int n = x.n, T = x.T;
  VariationalState chi = chi_init;

  StationaryDist st = stationary_distribution(params.gamma);
  Vector log_alpha = st.alpha.array().log().matrix();
  Matrix log_gamma = params.gamma.array().log().matrix();
  std::vector<Matrix> Xd = dense_adjacency(x);

  const std::size_t n_slices = params.pi.size();
  std::vector<Matrix> logit(n_slices), log0(n_slices);
  for (std::size_t s = 0; s < n_slices; ++s) {
    log0[s] = (1.0 - params.pi[s].array()).log().matrix();
    logit[s] = params.pi[s].array().log().matrix() - log0[s];
  }
  for (const Matrix& m : logit)
    if (!m.allFinite()) throw NumericalError("non-finite emission weights");

  std::vector<Eigen::RowVectorXd> colsum(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t)
    colsum[static_cast<std::size_t>(t)] = chi.tau[static_cast<std::size_t>(t)].colwise().sum();

  double j_prev = elbo(params, x, chi);
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    std::vector<Matrix> tau_snapshot;
    std::vector<Eigen::RowVectorXd> colsum_snapshot;
    if (jacobi) {
      tau_snapshot = chi.tau;
      colsum_snapshot = colsum;
    }
    const std::vector<Matrix>& tau_ref = jacobi ? tau_snapshot : chi.tau;
    const std::vector<Eigen::RowVectorXd>& colsum_ref = jacobi ? colsum_snapshot : colsum;

    double max_diff = 0.0;
    for (int i = 0; i < n; ++i) {
      std::vector<Eigen::RowVectorXd> old_rows(static_cast<std::size_t>(T));
      for (int t = 0; t < T; ++t)
        old_rows[static_cast<std::size_t>(t)] = chi.tau[static_cast<std::size_t>(t)].row(i);

      update_node_chain(i, tau_ref, colsum_ref, Xd, log_alpha, log_gamma, logit, log0, chi);

      for (int t = 0; t < T; ++t) {
        const std::size_t ts = static_cast<std::size_t>(t);
        Eigen::RowVectorXd delta = chi.tau[ts].row(i) - old_rows[ts];
        max_diff = std::max(max_diff, delta.cwiseAbs().maxCoeff());
        if (!jacobi) colsum[ts] += delta;
      }
    }
    if (jacobi)
      for (int t = 0; t < T; ++t)
        colsum[static_cast<std::size_t>(t)] =
            chi.tau[static_cast<std::size_t>(t)].colwise().sum();

    if (chi.consistency_error() > 1e-8)
      throw NumericalError("variational state lost chain consistency");

    double j_now = elbo(params, x, chi);
    if (!jacobi && j_now < j_prev - std::max(1e-9, 1e-12 * std::abs(j_prev)))
      throw NumericalError("e-step decreased the ELBO");
    j_prev = j_now;

    if (max_diff < tol) break;
  }
  return chi;
}

Matrix m_step_gamma(const VariationalState& chi, double delta, bool* projected) {
  const int Q = chi.Q;
  Matrix num = Matrix::Zero(Q, Q);
  Vector den = Vector::Zero(Q);
  for (int t = 0; t + 1 < chi.T; ++t) {
    const Matrix& e = chi.eta[static_cast<std::size_t>(t)];
    const Matrix& tau = chi.tau[static_cast<std::size_t>(t)];
    for (int i = 0; i < chi.n; ++i) {
      for (int q = 0; q < Q; ++q) {
        den(q) += tau(i, q);
        for (int l = 0; l < Q; ++l) num(q, l) += e(i, q * Q + l);
      }
    }
  }
  Matrix gamma(Q, Q);
  for (int q = 0; q < Q; ++q) {
    if (den(q) <= 0.0)
      throw DegenerateStateError("empty class in the variational gamma update");
    gamma.row(q) = num.row(q) / den(q);
  }
  bool changed = project_rows_stochastic(gamma, delta);
  if (projected) *projected = changed;
  return gamma;
}

std::vector<Matrix> m_step_pi(const VariationalState& chi, const GraphSequence& x,
                              double zeta, bool time_varying, bool tie_diagonal,
                              bool* projected) {
  const int T = x.T, Q = chi.Q;
  std::vector<Matrix> Xd = dense_adjacency(x);
  const int S = time_varying ? T : 1;
  std::vector<Matrix> num(static_cast<std::size_t>(S), Matrix::Zero(Q, Q));
  std::vector<Matrix> den(static_cast<std::size_t>(S), Matrix::Zero(Q, Q));

  for (int t = 0; t < T; ++t) {
    const Matrix& tau = chi.tau[static_cast<std::size_t>(t)];
    const std::size_t s = static_cast<std::size_t>(time_varying ? t : 0);
    Eigen::RowVectorXd sums = tau.colwise().sum();
    num[s] += tau.transpose() * Xd[static_cast<std::size_t>(t)] * tau;
    den[s] += sums.transpose() * sums - tau.transpose() * tau;
  }

  if (time_varying && tie_diagonal) {
    for (int q = 0; q < Q; ++q) {
      double en = 0.0, cn = 0.0;
      for (int s = 0; s < S; ++s) {
        en += num[static_cast<std::size_t>(s)](q, q);
        cn += den[static_cast<std::size_t>(s)](q, q);
      }
      for (int s = 0; s < S; ++s) {
        num[static_cast<std::size_t>(s)](q, q) = en;
        den[static_cast<std::size_t>(s)](q, q) = cn;
      }
    }
  }

  bool changed = false;
  std::vector<Matrix> pi(static_cast<std::size_t>(S));
  for (int s = 0; s < S; ++s) {
    pi[static_cast<std::size_t>(s)] = Matrix::Zero(Q, Q);
    for (int q = 0; q < Q; ++q)
      for (int l = 0; l < Q; ++l) {
        double d = den[static_cast<std::size_t>(s)](q, l);
        if (d <= 0.0)
          throw DegenerateStateError("empty class pair in the variational pi update");
        pi[static_cast<std::size_t>(s)](q, l) = num[static_cast<std::size_t>(s)](q, l) / d;
      }
    // Restore exact symmetry lost to roundoff before clamping.
    pi[static_cast<std::size_t>(s)] =
        0.5 * (pi[static_cast<std::size_t>(s)] +
               pi[static_cast<std::size_t>(s)].transpose().eval());
    changed = clamp_entries(pi[static_cast<std::size_t>(s)], zeta) || changed;
  }
  if (projected) *projected = changed;
  return pi;
}

InitStrategy parse_init_strategy(const std::string& name) {
  if (name == "random-dirichlet") return InitStrategy::kRandomDirichlet;
  if (name == "spectral-mean-graph") return InitStrategy::kSpectralMeanGraph;
  if (name == "warm-start") return InitStrategy::kWarmStart;
  throw std::invalid_argument("unknown init strategy: " + name);
}

namespace {

std::vector<int> lloyd_clusters(const Matrix& points, int Q, CounterRng& rng) {
  const int n = static_cast<int>(points.rows());
  const int dim = static_cast<int>(points.cols());

  double best_inertia = std::numeric_limits<double>::infinity();
  std::vector<int> best_labels(static_cast<std::size_t>(n), 0);

  for (int restart = 0; restart < 4; ++restart) {
    // k-means++ seeding
    Matrix centers(Q, dim);
    std::vector<double> d2(static_cast<std::size_t>(n),
                           std::numeric_limits<double>::infinity());
    int first = static_cast<int>(rng.next_double() * n) % n;
    centers.row(0) = points.row(first);
    for (int c = 1; c < Q; ++c) {
      double total = 0.0;
      for (int i = 0; i < n; ++i) {
        double d = (points.row(i) - centers.row(c - 1)).squaredNorm();
        d2[static_cast<std::size_t>(i)] = std::min(d2[static_cast<std::size_t>(i)], d);
        total += d2[static_cast<std::size_t>(i)];
      }
      int pick = n - 1;
      if (total > 0.0) {
        double u = rng.next_double() * total;
        double acc = 0.0;
        for (int i = 0; i < n; ++i) {
          acc += d2[static_cast<std::size_t>(i)];
          if (u < acc) {
            pick = i;
            break;
          }
        }
      }
      centers.row(c) = points.row(pick);
    }

    std::vector<int> labels(static_cast<std::size_t>(n), 0);
    double inertia = 0.0;
    for (int iter = 0; iter < 30; ++iter) {
      inertia = 0.0;
      bool moved = false;
      for (int i = 0; i < n; ++i) {
        int arg = 0;
        double bestd = (points.row(i) - centers.row(0)).squaredNorm();
        for (int c = 1; c < Q; ++c) {
          double d = (points.row(i) - centers.row(c)).squaredNorm();
          if (d < bestd) {
            bestd = d;
            arg = c;
          }
        }
        if (labels[static_cast<std::size_t>(i)] != arg) moved = true;
        labels[static_cast<std::size_t>(i)] = arg;
        inertia += bestd;
      }
      Matrix sums = Matrix::Zero(Q, dim);
      std::vector<int> counts(static_cast<std::size_t>(Q), 0);
      for (int i = 0; i < n; ++i) {
        sums.row(labels[static_cast<std::size_t>(i)]) += points.row(i);
        counts[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])] += 1;
      }
      for (int c = 0; c < Q; ++c)
        if (counts[static_cast<std::size_t>(c)] > 0)
          centers.row(c) = sums.row(c) / counts[static_cast<std::size_t>(c)];
      if (!moved) break;
    }
    if (inertia < best_inertia) {
      best_inertia = inertia;
      best_labels = labels;
    }
  }
  return best_labels;
}

void product_form_eta(VariationalState& chi) {
  const int Q = chi.Q;
  chi.eta.assign(static_cast<std::size_t>(std::max(chi.T - 1, 0)),
                 Matrix::Zero(chi.n, Q * Q));
  for (int t = 0; t + 1 < chi.T; ++t)
    for (int i = 0; i < chi.n; ++i)
      for (int q = 0; q < Q; ++q)
        for (int l = 0; l < Q; ++l)
          chi.eta[static_cast<std::size_t>(t)](i, q * Q + l) =
              chi.tau_at(t, i, q) * chi.tau_at(t + 1, i, l);
}

}  // namespace

VariationalState init_tau(const GraphSequence& x, int q_classes, InitStrategy strategy,
                          std::uint64_t seed, const VariationalState* warm) {
  const int n = x.n, T = x.T, Q = q_classes;
  VariationalState chi;
  chi.n = n;
  chi.T = T;
  chi.Q = Q;

  switch (strategy) {
    case InitStrategy::kWarmStart: {
      if (!warm) throw std::invalid_argument("warm-start requires a provided state");
      if (warm->n != n || warm->T != T || warm->Q != Q)
        throw std::invalid_argument("warm-start state has the wrong shape");
      return *warm;
    }
    case InitStrategy::kRandomDirichlet: {
      CounterRng rng(stream_key(seed, kStreamInit, 0));
      chi.tau.assign(static_cast<std::size_t>(T), Matrix::Zero(n, Q));
      for (int t = 0; t < T; ++t)
        for (int i = 0; i < n; ++i) {
          double sum = 0.0;
          for (int q = 0; q < Q; ++q) {
            double e = -std::log(std::max(1.0 - rng.next_double(), 1e-300)) + 1e-12;
            chi.tau[static_cast<std::size_t>(t)](i, q) = e;
            sum += e;
          }
          chi.tau[static_cast<std::size_t>(t)].row(i) /= sum;
        }
      break;
    }
    case InitStrategy::kSpectralMeanGraph: {
      // Cluster the rows of the top-|Q| eigenvector embedding of the mean
      // graph over time, then smooth the one-hot labels.
      Matrix mean = Matrix::Zero(n, n);
      for (int t = 0; t < T; ++t)
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j) mean(i, j) += x.x(t, i, j);
      mean /= static_cast<double>(T);

      std::vector<int> labels(static_cast<std::size_t>(n), 0);
      if (Q > 1) {
        Eigen::SelfAdjointEigenSolver<Matrix> eig(mean);
        std::vector<int> order(static_cast<std::size_t>(n));
        for (int k = 0; k < n; ++k) order[static_cast<std::size_t>(k)] = k;
        std::stable_sort(order.begin(), order.end(), [&](int u, int v) {
          return std::abs(eig.eigenvalues()(u)) > std::abs(eig.eigenvalues()(v));
        });
        Matrix embed(n, Q);
        for (int c = 0; c < Q; ++c)
          embed.col(c) = eig.eigenvectors().col(order[static_cast<std::size_t>(c)]);
        CounterRng rng(stream_key(seed, kStreamInit, 1));
        labels = lloyd_clusters(embed, Q, rng);
      }
      const double hi = 0.9;
      const double lo = Q > 1 ? 0.1 / (Q - 1) : 0.0;
      chi.tau.assign(static_cast<std::size_t>(T), Matrix::Constant(n, Q, lo));
      for (int t = 0; t < T; ++t)
        for (int i = 0; i < n; ++i)
          chi.tau[static_cast<std::size_t>(t)](i, labels[static_cast<std::size_t>(i)]) =
              Q > 1 ? hi : 1.0;
      break;
    }
  }
  product_form_eta(chi);
  return chi;
}

Matrix vem_gamma_fixed_point_residual(const ModelParams& params,
                                      const VariationalState& chi) {
  const int Q = chi.Q;
  Matrix num = Matrix::Zero(Q, Q);
  Vector den = Vector::Zero(Q);
  for (int t = 0; t + 1 < chi.T; ++t) {
    const Matrix& e = chi.eta[static_cast<std::size_t>(t)];
    const Matrix& tau = chi.tau[static_cast<std::size_t>(t)];
    for (int i = 0; i < chi.n; ++i)
      for (int q = 0; q < Q; ++q) {
        den(q) += tau(i, q);
        for (int l = 0; l < Q; ++l) num(q, l) += e(i, q * Q + l);
      }
  }
  Matrix residual(Q, Q);
  for (int q = 0; q < Q; ++q) {
    if (den(q) <= 0.0) throw DegenerateStateError("empty class in the residual");
    for (int l = 0; l < Q; ++l) residual(q, l) = params.gamma(q, l) - num(q, l) / den(q);
  }
  return residual;
}

VemFit fit_vem(const GraphSequence& x, int q_classes, const VemConfig& config) {
  const int n = x.n, T = x.T, Q = q_classes;
  if (n < 2 || T < 1) throw std::invalid_argument("need n >= 2 and T >= 1");

  VemFit best;
  best.report.method = "vem";
  best.report.seed = config.seed;
  double best_j = kNegInf;
  int degenerate = 0;
  std::string last_failure;

  const int max_attempts = 4;
  for (int r = 0; r < config.restarts; ++r) {
    for (int attempt = 0; attempt < max_attempts; ++attempt) {
      // Restart 0 uses the configured strategy; everything else, including
      // retries after a degenerate run, draws a fresh dirichlet state.
      InitStrategy strategy = (r == 0 && attempt == 0) ? config.init
                                                       : InitStrategy::kRandomDirichlet;
      std::uint64_t sub = stream_key(config.seed, kStreamSearch,
                                     static_cast<std::uint64_t>(r),
                                     static_cast<std::uint64_t>(attempt));
      VariationalState chi;
      try {
        chi = init_tau(x, Q, strategy, sub,
                       config.warm_start ? &*config.warm_start : nullptr);
      } catch (const std::exception& err) {
        last_failure = err.what();
        ++degenerate;
        continue;
      }

      ModelParams theta;
      theta.q_classes = Q;
      theta.delta = config.delta;
      theta.zeta = config.zeta;

      ElboTrace trace;
      int projections = 0;
      bool abandoned = false;
      double j_prev = kNegInf;
      try {
        theta.pi = m_step_pi(chi, x, config.zeta, config.time_varying_pi,
                             config.tie_diagonal, nullptr);
        theta.gamma = m_step_gamma(chi, config.delta, nullptr);

        for (int iter = 0; iter < config.max_iters; ++iter) {
          chi = e_step(theta, x, chi, config.e_step_tol, config.e_step_max_sweeps,
                       config.jacobi);

          for (int q = 0; q < Q; ++q) {
            double mass = 0.0;
            for (int t = 0; t < T; ++t)
              mass += chi.tau[static_cast<std::size_t>(t)].col(q).sum();
            if (mass < kDegenerateMassFrac * n * T)
              throw DegenerateStateError("class mass collapsed");
          }

          bool proj_pi = false, proj_gamma = false;
          theta.pi = m_step_pi(chi, x, config.zeta, config.time_varying_pi,
                               config.tie_diagonal, &proj_pi);
          theta.gamma = m_step_gamma(chi, config.delta, &proj_gamma);
          projections += (proj_pi ? 1 : 0) + (proj_gamma ? 1 : 0);

          double j_now = elbo(theta, x, chi);
          if (!trace.values.empty() &&
              j_now < j_prev - std::max(1e-9, 1e-12 * std::abs(j_prev)))
            ++trace.decreases;
          trace.values.push_back(j_now);

          double scale = static_cast<double>(n) * (n - 1) * T / 2.0;
          if (iter > 0 && std::abs(j_now - j_prev) / scale < config.tol) {
            trace.converged = true;
            j_prev = j_now;
            break;
          }
          j_prev = j_now;
        }
      } catch (const DegenerateStateError& err) {
        last_failure = err.what();
        ++degenerate;
        abandoned = true;
      }
      if (abandoned) continue;

      trace.iterations = static_cast<int>(trace.values.size());
      if (j_prev > best_j) {
        best_j = j_prev;
        best.report.fitted = theta;
        best.report.trace = trace;
        best.report.best_restart = r;
        best.report.projection_events = projections;
        best.report.boundary = params_on_margin(theta);
        best.chi = chi;
      }
      break;  // restart slot done
    }
  }

  best.report.restarts_run = config.restarts;
  best.report.degenerate_restarts = degenerate;
  if (best.report.best_restart < 0)
    throw EstimationFailedError("all VEM restarts degenerated: " + last_failure);

  best.report.gamma_residual =
      T >= 2 ? vem_gamma_fixed_point_residual(best.report.fitted, best.chi)
             : Matrix::Zero(Q, Q);
  best.report.max_abs_gamma_residual =
      T >= 2 ? best.report.gamma_residual.cwiseAbs().maxCoeff() : 0.0;
  return best;
}

}  // namespace dynsbm
