#include "dynsbm/theory.hpp"

#include <algorithm>
#include <cmath>

#include "dynsbm/rng.hpp"

namespace dynsbm {

long long hamming(const LatentPaths& z_a, const LatentPaths& z_b) {
  if (z_a.n != z_b.n || z_a.T != z_b.T)
    throw std::invalid_argument("configurations have different shapes");
  long long r = 0;
  for (std::size_t k = 0; k < z_a.labels.size(); ++k)
    if (z_a.labels[k] != z_b.labels[k]) ++r;
  return r;
}

DiscrepancyReport discrepancy_set_size(const LatentPaths& z, const LatentPaths& z_star,
                                       const ModelParams& params, double eta) {
  DiscrepancyReport rep;
  rep.r = hamming(z, z_star);
  for (int t = 0; t < z.T; ++t) {
    const Matrix& pi = params.pi_at(t);
    for (int i = 0; i < z.n; ++i)
      for (int j = i + 1; j < z.n; ++j)
        if (pi(z.z(i, t), z.z(j, t)) != pi(z_star.z(i, t), z_star.z(j, t))) ++rep.d_size;
  }
  double margin = params.delta - eta;
  rep.lower_bound = margin * margin * z.n * static_cast<double>(rep.r) / 4.0;
  rep.upper_bound = 2.0 * z.n * static_cast<double>(rep.r);
  return rep;
}

namespace {

double quantile(std::vector<double> v, double p) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  double idx = p * (static_cast<double>(v.size()) - 1.0);
  std::size_t lo = static_cast<std::size_t>(idx);
  std::size_t hi = std::min(lo + 1, v.size() - 1);
  double frac = idx - static_cast<double>(lo);
  return v[lo] * (1.0 - frac) + v[hi] * frac;
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double stderr_of_mean(const std::vector<double>& v, double m) {
  if (v.size() < 2) return 0.0;
  double s2 = 0.0;
  for (double x : v) s2 += (x - m) * (x - m);
  s2 /= static_cast<double>(v.size() - 1);
  return std::sqrt(s2 / static_cast<double>(v.size()));
}

}  // namespace

ConcentrationReport concentration_report(const ModelParams& params, int n, int T,
                                         int replicates, std::uint64_t seed, double eta,
                                         double nql_threshold) {
  if (eta <= 0.0 || eta >= params.delta)
    throw std::invalid_argument("eta must lie in (0, delta)");
  const int Q = params.q_classes;
  StationaryDist st = stationary_distribution(params.gamma);

  ConcentrationReport rep;
  rep.n = n;
  rep.T = T;
  rep.replicates = replicates;
  rep.eta = eta;
  rep.nql_threshold = nql_threshold;

  std::vector<double> omega_fail;
  std::vector<double> nql_dev;
  // one series per (q,l) for the occupancy-product moment
  std::vector<std::vector<double>> nqnl_dev(static_cast<std::size_t>(Q) * Q);

  omega_fail.reserve(static_cast<std::size_t>(replicates));
  nql_dev.reserve(static_cast<std::size_t>(replicates));

  for (int rep_i = 0; rep_i < replicates; ++rep_i) {
    std::uint64_t sub = stream_key(seed, kStreamReplicate, static_cast<std::uint64_t>(rep_i));
    LatentPaths z = sample_latent_paths(params, n, T, sub);
    CountSummary counts = count_summary(z, Q);

    omega_fail.push_back(omega_eta_member(z, st, eta) ? 0.0 : 1.0);

    if (T >= 2) {
      double worst = 0.0;
      for (int q = 0; q < Q; ++q)
        for (int l = 0; l < Q; ++l) {
          double freq = static_cast<double>(counts.n_ql(q, l)) /
                        (static_cast<double>(n) * (T - 1));
          worst = std::max(worst, std::abs(freq - st.alpha(q) * params.gamma(q, l)));
        }
      nql_dev.push_back(worst);
    }

    for (int q = 0; q < Q; ++q)
      for (int l = 0; l < Q; ++l) {
        double prod = static_cast<double>(counts.n_q(0, q)) * counts.n_q(0, l) /
                      (static_cast<double>(n) * (n - 1));
        nqnl_dev[static_cast<std::size_t>(q) * Q + l].push_back(
            std::abs(prod - st.alpha(q) * st.alpha(l)));
      }
  }

  rep.omega_fail_rate = mean(omega_fail);
  rep.omega_fail_stderr = stderr_of_mean(omega_fail, rep.omega_fail_rate);
  rep.omega_bound = Q * T * std::exp(-2.0 * eta * eta * n);
  rep.omega_pass = rep.omega_fail_rate <= rep.omega_bound + 3.0 * rep.omega_fail_stderr;

  rep.nql_mean = mean(nql_dev);
  rep.nql_stderr = stderr_of_mean(nql_dev, rep.nql_mean);
  rep.nql_q50 = quantile(nql_dev, 0.5);
  rep.nql_q90 = quantile(nql_dev, 0.9);
  rep.nql_max = nql_dev.empty() ? 0.0 : *std::max_element(nql_dev.begin(), nql_dev.end());
  rep.nql_pass = rep.nql_mean <= rep.nql_threshold + 3.0 * rep.nql_stderr;

  rep.nqnl_bound = 2.0 * std::sqrt(static_cast<double>(n)) / (n - 1);
  rep.nqnl_worst_estimate = 0.0;
  rep.nqnl_pass = true;
  for (const std::vector<double>& series : nqnl_dev) {
    double m = mean(series);
    double se = stderr_of_mean(series, m);
    if (m > rep.nqnl_worst_estimate) {
      rep.nqnl_worst_estimate = m;
      rep.nqnl_worst_stderr = se;
    }
    if (m > rep.nqnl_bound + 3.0 * se) rep.nqnl_pass = false;
  }
  return rep;
}

}  // namespace dynsbm
