#include "dynsbm/exact.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "dynsbm/rng.hpp"

namespace dynsbm {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Streamed log-sum-exp accumulator: keeps a running max and a rescaled sum
// so arbitrarily long streams never overflow.
class LogSumExp {
 public:
  void add(double logv) {
    if (logv == kNegInf) return;
    if (logv <= max_) {
      sum_ += std::exp(logv - max_);
    } else {
      sum_ = sum_ * std::exp(max_ - logv) + 1.0;
      max_ = logv;
    }
  }
  double value() const { return sum_ > 0.0 ? max_ + std::log(sum_) : kNegInf; }

 private:
  double max_ = kNegInf;
  double sum_ = 0.0;
};

long long checked_pow(int base, long long exponent, long long cap) {
  long long v = 1;
  for (long long e = 0; e < exponent; ++e) {
    if (v > cap / base) return cap + 1;
    v *= base;
  }
  return v;
}

// Joint state space of the n node labels at one time slice.  State index
// uses node 0 as the most significant digit, so ascending index order is
// lexicographic order of the label vectors.
struct JointStates {
  int n = 0;
  int Q = 0;
  long long count = 0;
  std::vector<long long> stride;  // stride[i] = Q^(n-1-i)

  JointStates() = default;
  JointStates(int n_, int Q_) : n(n_), Q(Q_) {
    stride.assign(static_cast<std::size_t>(n), 1);
    for (int i = n - 2; i >= 0; --i) stride[i] = stride[i + 1] * Q;
    count = stride[0] * Q;
  }

  void decode(long long idx, std::vector<int>& z) const {
    for (int i = 0; i < n; ++i) z[i] = static_cast<int>((idx / stride[i]) % Q);
  }
};

// log P(X^t | Z^t = s) for every joint state s.
std::vector<double> slice_emissions(const JointStates& js, const Matrix& pi,
                                    const GraphSequence& x, int t) {
  const int n = js.n;
  Matrix log1 = pi.array().log().matrix();
  Matrix log0 = (1.0 - pi.array()).log().matrix();

  std::vector<double> e(static_cast<std::size_t>(js.count));
  std::vector<int> z(static_cast<std::size_t>(n));
  for (long long s = 0; s < js.count; ++s) {
    js.decode(s, z);
    double acc = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        acc += x.x(t, i, j) ? log1(z[i], z[j]) : log0(z[i], z[j]);
    e[static_cast<std::size_t>(s)] = acc;
  }
  return e;
}

// log of the joint prior at t = 0: sum_i log alpha_{z_i}.
std::vector<double> joint_initial(const JointStates& js, const Vector& alpha) {
  std::vector<double> v(static_cast<std::size_t>(js.count), 0.0);
  Vector la = alpha.array().log().matrix();
  std::vector<int> z(static_cast<std::size_t>(js.n));
  for (long long s = 0; s < js.count; ++s) {
    js.decode(s, z);
    double acc = 0.0;
    for (int i = 0; i < js.n; ++i) acc += la(z[i]);
    v[static_cast<std::size_t>(s)] = acc;
  }
  return v;
}

// One node-axis step of the joint transition.  In the forward direction the
// axis digit switches from the source label to the destination label:
//   out(.., s'_i, ..) = LSE_{s_i} in(.., s_i, ..) + log gamma(s_i, s'_i),
// and transposing gamma gives the backward direction.  Applying this to
// every axis in turn realises the full joint transition exactly, because
// the joint kernel factorises over nodes.
void contract_axis(std::vector<double>& buf, std::vector<double>& tmp,
                   const JointStates& js, int axis, const Matrix& log_gamma,
                   bool transpose) {
  const int Q = js.Q;
  const long long stride = js.stride[static_cast<std::size_t>(axis)];
  const long long block = stride * Q;
  tmp.resize(buf.size());
  std::vector<double> vals(static_cast<std::size_t>(Q));
  for (long long base = 0; base < js.count; base += block) {
    for (long long off = 0; off < stride; ++off) {
      const long long at = base + off;
      for (int q = 0; q < Q; ++q) vals[static_cast<std::size_t>(q)] = buf[at + q * stride];
      for (int to = 0; to < Q; ++to) {
        LogSumExp lse;
        for (int from = 0; from < Q; ++from) {
          double lg = transpose ? log_gamma(to, from) : log_gamma(from, to);
          lse.add(vals[static_cast<std::size_t>(from)] + lg);
        }
        tmp[at + to * stride] = lse.value();
      }
    }
  }
  buf.swap(tmp);
}

void contract_all_axes(std::vector<double>& buf, const JointStates& js,
                       const Matrix& log_gamma, bool transpose) {
  std::vector<double> tmp;
  for (int axis = 0; axis < js.n; ++axis)
    contract_axis(buf, tmp, js, axis, log_gamma, transpose);
}

struct ForwardBackward {
  JointStates js;
  std::vector<std::vector<double>> alpha;  // alpha[t](s), includes emissions
  std::vector<std::vector<double>> beta;   // beta[t](s)
  std::vector<std::vector<double>> emis;   // emis[t](s)
  double loglik = 0.0;
};

JointStates make_joint_states(const ModelParams& params, const GraphSequence& x) {
  long long count = checked_pow(params.q_classes, x.n, kJointStateCap);
  if (count > kJointStateCap)
    throw UnsupportedSizeError("joint state space exceeds the Q^n cap");
  return JointStates(x.n, params.q_classes);
}

ForwardBackward run_forward_backward(const ModelParams& params, const GraphSequence& x,
                                     bool need_backward) {
  ForwardBackward fb{make_joint_states(params, x), {}, {}, {}, 0.0};
  const JointStates& js = fb.js;
  const int T = x.T;

  StationaryDist st = stationary_distribution(params.gamma);
  Matrix log_gamma = params.gamma.array().log().matrix();

  fb.emis.resize(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t)
    fb.emis[static_cast<std::size_t>(t)] = slice_emissions(js, params.pi_at(t), x, t);

  fb.alpha.resize(static_cast<std::size_t>(T));
  fb.alpha[0] = joint_initial(js, st.alpha);
  for (long long s = 0; s < js.count; ++s)
    fb.alpha[0][static_cast<std::size_t>(s)] += fb.emis[0][static_cast<std::size_t>(s)];
  for (int t = 1; t < T; ++t) {
    std::vector<double> cur = fb.alpha[static_cast<std::size_t>(t - 1)];
    contract_all_axes(cur, js, log_gamma, false);
    for (long long s = 0; s < js.count; ++s)
      cur[static_cast<std::size_t>(s)] += fb.emis[static_cast<std::size_t>(t)][static_cast<std::size_t>(s)];
    fb.alpha[static_cast<std::size_t>(t)] = std::move(cur);
  }

  LogSumExp total;
  for (double v : fb.alpha[static_cast<std::size_t>(T - 1)]) total.add(v);
  fb.loglik = total.value();

  if (need_backward) {
    fb.beta.assign(static_cast<std::size_t>(T), {});
    fb.beta[static_cast<std::size_t>(T - 1)].assign(static_cast<std::size_t>(js.count), 0.0);
    for (int t = T - 2; t >= 0; --t) {
      std::vector<double> cur = fb.beta[static_cast<std::size_t>(t + 1)];
      for (long long s = 0; s < js.count; ++s)
        cur[static_cast<std::size_t>(s)] += fb.emis[static_cast<std::size_t>(t + 1)][static_cast<std::size_t>(s)];
      contract_all_axes(cur, js, log_gamma, true);
      fb.beta[static_cast<std::size_t>(t)] = std::move(cur);
    }
  }
  return fb;
}

}  // namespace

double conditional_loglik(const ModelParams& params, const LatentPaths& z,
                          const GraphSequence& x) {
  if (z.n != x.n || z.T != x.T)
    throw std::invalid_argument("labels and graphs have different shapes");
  double acc = 0.0;
  for (int t = 0; t < x.T; ++t) {
    const Matrix& pi = params.pi_at(t);
    Matrix log1 = pi.array().log().matrix();
    Matrix log0 = (1.0 - pi.array()).log().matrix();
    for (int i = 0; i < x.n; ++i)
      for (int j = i + 1; j < x.n; ++j)
        acc += x.x(t, i, j) ? log1(z.z(i, t), z.z(j, t)) : log0(z.z(i, t), z.z(j, t));
  }
  return acc;
}

double latent_prior_loglik(const ModelParams& params, const LatentPaths& z) {
  StationaryDist st = stationary_distribution(params.gamma);
  double acc = 0.0;
  for (int i = 0; i < z.n; ++i) {
    acc += std::log(st.alpha(z.z(i, 0)));
    for (int t = 0; t + 1 < z.T; ++t)
      acc += std::log(params.gamma(z.z(i, t), z.z(i, t + 1)));
  }
  return acc;
}

LogLikValue exact_loglik_bruteforce(const ModelParams& params, const GraphSequence& x) {
  const int Q = params.q_classes;
  long long count = checked_pow(Q, static_cast<long long>(x.n) * x.T, kBruteForceCap);
  if (count > kBruteForceCap)
    throw UnsupportedSizeError("configuration count exceeds the Q^(nT) cap");

  LatentPaths z;
  z.n = x.n;
  z.T = x.T;
  z.labels.assign(static_cast<std::size_t>(x.n) * x.T, 0);

  LogSumExp total;
  for (long long c = 0; c < count; ++c) {
    total.add(conditional_loglik(params, z, x) + latent_prior_loglik(params, z));
    // odometer over all n*T digits
    for (std::size_t d = z.labels.size(); d-- > 0;) {
      if (++z.labels[d] < Q) break;
      z.labels[d] = 0;
    }
  }
  return LogLikValue{total.value(), count};
}

LogLikValue exact_loglik_transfer(const ModelParams& params, const GraphSequence& x) {
  ForwardBackward fb = run_forward_backward(params, x, false);
  return LogLikValue{fb.loglik, fb.js.count};
}

namespace {

PosteriorTable marginals_from_fb(const ForwardBackward& fb, const ModelParams& params,
                                 const GraphSequence& x) {
  const JointStates& js = fb.js;
  const int n = x.n, T = x.T, Q = params.q_classes;
  Matrix log_gamma = params.gamma.array().log().matrix();

  PosteriorTable table;
  table.singleton.assign(static_cast<std::size_t>(T), Matrix::Zero(n, Q));
  std::vector<int> z(static_cast<std::size_t>(n));
  for (int t = 0; t < T; ++t) {
    Matrix& sing = table.singleton[static_cast<std::size_t>(t)];
    for (long long s = 0; s < js.count; ++s) {
      double p = std::exp(fb.alpha[static_cast<std::size_t>(t)][static_cast<std::size_t>(s)] +
                          fb.beta[static_cast<std::size_t>(t)][static_cast<std::size_t>(s)] -
                          fb.loglik);
      js.decode(s, z);
      for (int i = 0; i < n; ++i) sing(i, z[i]) += p;
    }
  }

  table.pairwise.assign(static_cast<std::size_t>(std::max(T - 1, 0)), Matrix::Zero(n, Q * Q));
  std::vector<double> contracted, tmp;
  for (int t = 0; t + 1 < T; ++t) {
    const std::vector<double>& a = fb.alpha[static_cast<std::size_t>(t)];
    // H(s') = e_{t+1}(s') + beta_{t+1}(s')
    std::vector<double> h(static_cast<std::size_t>(js.count));
    for (long long s = 0; s < js.count; ++s)
      h[static_cast<std::size_t>(s)] =
          fb.emis[static_cast<std::size_t>(t + 1)][static_cast<std::size_t>(s)] +
          fb.beta[static_cast<std::size_t>(t + 1)][static_cast<std::size_t>(s)];

    for (int i = 0; i < n; ++i) {
      // Contract every axis except i backward through gamma; axis i keeps
      // the destination label while the others now carry source labels.
      contracted = h;
      for (int axis = 0; axis < n; ++axis)
        if (axis != i) contract_axis(contracted, tmp, js, axis, log_gamma, true);

      const long long stride = js.stride[static_cast<std::size_t>(i)];
      const long long block = stride * Q;
      std::vector<LogSumExp> acc(static_cast<std::size_t>(Q) * Q);
      for (long long base = 0; base < js.count; base += block)
        for (long long off = 0; off < stride; ++off) {
          const long long at = base + off;
          for (int q = 0; q < Q; ++q) {
            double av = a[static_cast<std::size_t>(at + q * stride)];
            if (av == kNegInf) continue;
            for (int l = 0; l < Q; ++l)
              acc[static_cast<std::size_t>(q) * Q + l].add(
                  av + contracted[static_cast<std::size_t>(at + l * stride)]);
          }
        }
      Matrix& pair = table.pairwise[static_cast<std::size_t>(t)];
      for (int q = 0; q < Q; ++q)
        for (int l = 0; l < Q; ++l)
          pair(i, q * Q + l) =
              std::exp(acc[static_cast<std::size_t>(q) * Q + l].value() + log_gamma(q, l) -
                       fb.loglik);
    }
  }
  return table;
}

}  // namespace

PosteriorTable exact_posterior_marginals(const ModelParams& params,
                                         const GraphSequence& x) {
  ForwardBackward fb = run_forward_backward(params, x, true);
  return marginals_from_fb(fb, params, x);
}

double posterior_ratio(const ModelParams& params, const GraphSequence& x,
                       const LatentPaths& z_star) {
  LogLikValue ll = exact_loglik_transfer(params, x);
  double log_post = conditional_loglik(params, z_star, x) +
                    latent_prior_loglik(params, z_star) - ll.value;
  double p = std::exp(log_post);
  if (p <= 0.0) return std::numeric_limits<double>::infinity();
  return std::max(0.0, (1.0 - p) / p);
}

LatentPaths map_configuration(const ModelParams& params, const GraphSequence& x) {
  JointStates js = make_joint_states(params, x);
  LatentPaths out;
  out.n = x.n;
  out.T = x.T;
  out.labels.assign(static_cast<std::size_t>(x.n) * x.T, 0);
  std::vector<int> z(static_cast<std::size_t>(x.n));
  for (int t = 0; t < x.T; ++t) {
    std::vector<double> e = slice_emissions(js, params.pi_at(t), x, t);
    long long best = 0;
    for (long long s = 1; s < js.count; ++s)
      if (e[static_cast<std::size_t>(s)] > e[static_cast<std::size_t>(best)]) best = s;
    js.decode(best, z);
    for (int i = 0; i < x.n; ++i) out.z(i, t) = z[i];
  }
  return out;
}

double limit_M(const Matrix& pi_true, const Vector& alpha_true, const Matrix& pi,
               const Matrix& a) {
  const int Q = static_cast<int>(pi_true.rows());
  Matrix log1 = pi.array().log().matrix();
  Matrix log0 = (1.0 - pi.array()).log().matrix();
  double acc = 0.0;
  for (int q = 0; q < Q; ++q)
    for (int l = 0; l < Q; ++l) {
      double w = alpha_true(q) * alpha_true(l);
      for (int qp = 0; qp < Q; ++qp)
        for (int lp = 0; lp < Q; ++lp)
          acc += w * a(q, qp) * a(l, lp) *
                 (pi_true(q, l) * log1(qp, lp) + (1.0 - pi_true(q, l)) * log0(qp, lp));
    }
  return acc;
}

namespace {

// w(q, l, q', l') of the limiting functional.
inline double limit_w(const Matrix& pi_true, const Matrix& log1, const Matrix& log0,
                      int q, int l, int qp, int lp) {
  return pi_true(q, l) * log1(qp, lp) + (1.0 - pi_true(q, l)) * log0(qp, lp);
}

// Exact maximum of x^T W x + b^T x over the probability simplex, by
// enumerating support sets: vertices plus the stationary point of each
// face's restricted quadratic.  Faces whose restricted problem peaks on
// their boundary are covered by the smaller faces.
double max_quadratic_on_simplex(const Matrix& W, const Vector& b, Vector& argmax) {
  const int Q = static_cast<int>(b.size());
  double best = -std::numeric_limits<double>::infinity();
  argmax = Vector::Zero(Q);

  auto consider = [&](const Vector& xfull) {
    double v = xfull.dot(W * xfull) + b.dot(xfull);
    if (v > best) {
      best = v;
      argmax = xfull;
    }
  };

  for (int k = 0; k < Q; ++k) {
    Vector x = Vector::Zero(Q);
    x(k) = 1.0;
    consider(x);
  }

  for (unsigned mask = 1; mask < (1u << Q); ++mask) {
    std::vector<int> support;
    for (int k = 0; k < Q; ++k)
      if (mask & (1u << k)) support.push_back(k);
    const int m = static_cast<int>(support.size());
    if (m < 2) continue;

    // Stationarity with the simplex constraint: 2 W_SS x_S + b_S = lambda 1.
    Matrix sys = Matrix::Zero(m + 1, m + 1);
    Vector rhs = Vector::Zero(m + 1);
    for (int r = 0; r < m; ++r) {
      for (int c = 0; c < m; ++c)
        sys(r, c) = 2.0 * W(support[static_cast<std::size_t>(r)],
                            support[static_cast<std::size_t>(c)]);
      sys(r, m) = -1.0;
      rhs(r) = -b(support[static_cast<std::size_t>(r)]);
    }
    for (int c = 0; c < m; ++c) sys(m, c) = 1.0;
    rhs(m) = 1.0;

    Eigen::FullPivLU<Matrix> lu(sys);
    if (!lu.isInvertible()) continue;
    Vector sol = lu.solve(rhs);
    bool feasible = true;
    for (int r = 0; r < m; ++r)
      if (sol(r) < -1e-12) {
        feasible = false;
        break;
      }
    if (!feasible) continue;
    Vector x = Vector::Zero(Q);
    double mass = 0.0;
    for (int r = 0; r < m; ++r) {
      double v = std::max(sol(r), 0.0);
      x(support[static_cast<std::size_t>(r)]) = v;
      mass += v;
    }
    x /= mass;
    consider(x);
  }
  return best;
}

// One pass of exact row maximisation over all rows; returns the objective.
double polish_rows(const Matrix& pi_true, const Vector& alpha_true, const Matrix& pi,
                   const Matrix& log1, const Matrix& log0, Matrix& a) {
  const int Q = static_cast<int>(pi_true.rows());
  for (int r = 0; r < Q; ++r) {
    // Row r enters the objective quadratically through the (q=l=r) term and
    // linearly through the mixed (r, l) and (q, r) terms.
    Matrix W(Q, Q);
    for (int qp = 0; qp < Q; ++qp)
      for (int lp = 0; lp < Q; ++lp)
        W(qp, lp) = alpha_true(r) * alpha_true(r) *
                    limit_w(pi_true, log1, log0, r, r, qp, lp);
    W = 0.5 * (W + W.transpose()).eval();

    Vector b = Vector::Zero(Q);
    for (int l = 0; l < Q; ++l) {
      if (l == r) continue;
      double w2 = alpha_true(r) * alpha_true(l);
      for (int qp = 0; qp < Q; ++qp) {
        double acc = 0.0;
        for (int lp = 0; lp < Q; ++lp)
          acc += a(l, lp) * (limit_w(pi_true, log1, log0, r, l, qp, lp) +
                             limit_w(pi_true, log1, log0, l, r, lp, qp));
        b(qp) += w2 * acc;
      }
    }

    Vector row;
    max_quadratic_on_simplex(W, b, row);
    a.row(r) = row.transpose();
  }
  return limit_M(pi_true, alpha_true, pi, a);
}

}  // namespace

LimitMSup limit_M_sup(const Matrix& pi_true, const Vector& alpha_true, const Matrix& pi) {
  const int Q = static_cast<int>(pi_true.rows());
  if (Q > 5) throw UnsupportedSizeError("limit_M_sup capped at Q <= 5");
  Matrix log1 = pi.array().log().matrix();
  Matrix log0 = (1.0 - pi.array()).log().matrix();

  // Score every deterministic assignment matrix.
  long long n_det = checked_pow(Q, Q, 1 << 30);
  std::vector<std::pair<double, Matrix>> ranked;
  ranked.reserve(static_cast<std::size_t>(n_det));
  std::vector<int> pick(static_cast<std::size_t>(Q), 0);
  for (long long c = 0; c < n_det; ++c) {
    Matrix a = Matrix::Zero(Q, Q);
    for (int r = 0; r < Q; ++r) a(r, pick[static_cast<std::size_t>(r)]) = 1.0;
    ranked.emplace_back(limit_M(pi_true, alpha_true, pi, a), a);
    for (int d = Q - 1; d >= 0; --d) {
      if (++pick[static_cast<std::size_t>(d)] < Q) break;
      pick[static_cast<std::size_t>(d)] = 0;
    }
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& u, const auto& v) { return u.first > v.first; });

  LimitMSup best;
  best.value = ranked.front().first;
  best.a_star = ranked.front().second;
  const std::size_t n_starts = std::min<std::size_t>(5, ranked.size());
  for (std::size_t s = 0; s < n_starts; ++s) {
    Matrix a = ranked[s].second;
    double value = ranked[s].first;
    for (int iter = 0; iter < 200; ++iter) {
      double next = polish_rows(pi_true, alpha_true, pi, log1, log0, a);
      if (next <= value + 1e-12) {
        value = std::max(value, next);
        break;
      }
      value = next;
    }
    if (value > best.value) {
      best.value = value;
      best.a_star = a;
    }
  }
  return best;
}

double limit_M_sup_time_avg(const std::vector<Matrix>& pi_true_slices,
                            const Vector& alpha_true,
                            const std::vector<Matrix>& pi_slices) {
  if (pi_true_slices.size() != pi_slices.size())
    throw std::invalid_argument("slice counts differ");
  double acc = 0.0;
  for (std::size_t t = 0; t < pi_slices.size(); ++t)
    acc += limit_M_sup(pi_true_slices[t], alpha_true, pi_slices[t]).value;
  return acc / static_cast<double>(pi_slices.size());
}

double normalized_loglik(const ModelParams& params, const GraphSequence& x) {
  LogLikValue ll = exact_loglik_transfer(params, x);
  return 2.0 / (static_cast<double>(x.n) * (x.n - 1) * x.T) * ll.value;
}

namespace {

void project_gamma(Matrix& gamma, double delta, int& projections) {
  if (project_rows_stochastic(gamma, delta)) ++projections;
}

void project_pi(Matrix& pi, double zeta, int& projections) {
  if (clamp_entries(pi, zeta)) ++projections;
}

ModelParams random_interior_params(int Q, int n_slices, double delta, double zeta,
                                   CounterRng& rng) {
  ModelParams p;
  p.q_classes = Q;
  p.delta = delta;
  p.zeta = zeta;
  p.gamma = Matrix::Zero(Q, Q);
  for (int q = 0; q < Q; ++q) {
    double sum = 0.0;
    for (int l = 0; l < Q; ++l) {
      p.gamma(q, l) = 0.1 + rng.next_double();
      sum += p.gamma(q, l);
    }
    p.gamma.row(q) /= sum;
  }
  int dummy = 0;
  project_gamma(p.gamma, delta * 1.5, dummy);
  p.pi.assign(static_cast<std::size_t>(n_slices), Matrix::Zero(Q, Q));
  for (int s = 0; s < n_slices; ++s)
    for (int q = 0; q < Q; ++q)
      for (int l = q; l < Q; ++l) {
        double v = zeta * 1.5 + (1.0 - 3.0 * zeta) * rng.next_double();
        p.pi[static_cast<std::size_t>(s)](q, l) = v;
        p.pi[static_cast<std::size_t>(s)](l, q) = v;
      }
  return p;
}

// Closed-form M-step for pi from the exact posterior: expected edge counts
// over expected pair counts per class pair (per slice in finite-T mode).
void em_pi_update(const ForwardBackward& fb, const GraphSequence& x, ModelParams& params,
                  bool tie_diagonal, int& projections) {
  const int n = x.n, T = x.T, Q = params.q_classes;
  const JointStates& js = fb.js;
  const bool varying = params.time_varying();
  const int S = varying ? T : 1;

  std::vector<Matrix> edges(static_cast<std::size_t>(S), Matrix::Zero(Q, Q));
  std::vector<Matrix> pairs(static_cast<std::size_t>(S), Matrix::Zero(Q, Q));
  std::vector<int> z(static_cast<std::size_t>(n));
  for (int t = 0; t < T; ++t) {
    Matrix& e = edges[static_cast<std::size_t>(varying ? t : 0)];
    Matrix& c = pairs[static_cast<std::size_t>(varying ? t : 0)];
    for (long long s = 0; s < js.count; ++s) {
      double p = std::exp(fb.alpha[static_cast<std::size_t>(t)][static_cast<std::size_t>(s)] +
                          fb.beta[static_cast<std::size_t>(t)][static_cast<std::size_t>(s)] -
                          fb.loglik);
      if (p == 0.0) continue;
      js.decode(s, z);
      for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
          c(z[i], z[j]) += p;
          c(z[j], z[i]) += p;
          if (x.x(t, i, j)) {
            e(z[i], z[j]) += p;
            e(z[j], z[i]) += p;
          }
        }
    }
  }

  if (varying && tie_diagonal) {
    for (int q = 0; q < Q; ++q) {
      double en = 0.0, cn = 0.0;
      for (int s = 0; s < S; ++s) {
        en += edges[static_cast<std::size_t>(s)](q, q);
        cn += pairs[static_cast<std::size_t>(s)](q, q);
      }
      for (int s = 0; s < S; ++s) {
        edges[static_cast<std::size_t>(s)](q, q) = en;
        pairs[static_cast<std::size_t>(s)](q, q) = cn;
      }
    }
  }

  for (int s = 0; s < S; ++s) {
    Matrix& pi = params.pi[static_cast<std::size_t>(s)];
    for (int q = 0; q < Q; ++q)
      for (int l = 0; l < Q; ++l) {
        double denom = pairs[static_cast<std::size_t>(s)](q, l);
        if (denom <= 0.0)
          throw DegenerateStateError("empty class pair in the pi update");
        pi(q, l) = edges[static_cast<std::size_t>(s)](q, l) / denom;
      }
    project_pi(pi, params.zeta, projections);
  }
}

Matrix posterior_transition_ratio(const PosteriorTable& table, int Q) {
  Matrix num = Matrix::Zero(Q, Q);
  Vector den = Vector::Zero(Q);
  for (const Matrix& pair : table.pairwise)
    for (int i = 0; i < pair.rows(); ++i)
      for (int q = 0; q < Q; ++q)
        for (int l = 0; l < Q; ++l) {
          num(q, l) += pair(i, q * Q + l);
          den(q) += pair(i, q * Q + l);
        }
  Matrix ratio = Matrix::Zero(Q, Q);
  for (int q = 0; q < Q; ++q) {
    if (den(q) <= 0.0) throw DegenerateStateError("empty class in the gamma update");
    for (int l = 0; l < Q; ++l) ratio(q, l) = num(q, l) / den(q);
  }
  return ratio;
}

}  // namespace

Matrix mle_gamma_fixed_point_residual(const ModelParams& params, const GraphSequence& x) {
  if (x.T < 2) throw std::invalid_argument("fixed point undefined for T = 1");
  PosteriorTable table = exact_posterior_marginals(params, x);
  return params.gamma - posterior_transition_ratio(table, params.q_classes);
}

EstimationReport exact_mle(const GraphSequence& x, int q_classes, const MleConfig& config) {
  const int Q = q_classes;
  const int n_slices = config.time_varying_pi ? x.T : 1;

  EstimationReport report;
  report.method = "exact-mle";
  report.seed = config.seed;

  double best_loglik = kNegInf;
  int total_restarts = config.restarts + (config.warm_start ? 1 : 0);

  for (int r = 0; r < total_restarts; ++r) {
    ModelParams theta;
    if (config.warm_start && r == config.restarts) {
      theta = *config.warm_start;
      theta.delta = config.delta;
      theta.zeta = config.zeta;
      if (config.time_varying_pi && theta.pi.size() == 1)
        theta.pi.assign(static_cast<std::size_t>(n_slices), theta.pi.front());
    } else {
      CounterRng rng(stream_key(config.seed, kStreamSearch, static_cast<std::uint64_t>(r)));
      theta = random_interior_params(Q, n_slices, config.delta, config.zeta, rng);
    }

    ElboTrace trace;
    int projections = 0;
    bool failed = false;
    for (int iter = 0; iter < config.max_iters; ++iter) {
      ForwardBackward fb;
      try {
        fb = run_forward_backward(theta, x, true);
      } catch (const NumericalError&) {
        failed = true;
        break;
      }
      trace.values.push_back(fb.loglik);

      ModelParams prev = theta;
      try {
        em_pi_update(fb, x, theta, config.tie_diagonal, projections);
        if (Q > 1) {
          PosteriorTable table = marginals_from_fb(fb, prev, x);
          if (x.T >= 2) {
            theta.gamma = posterior_transition_ratio(table, Q);
          } else {
            // T = 1 carries no transitions; fit the class weights instead
            // and represent them as the constant-row chain they induce.
            Vector alpha =
                table.singleton[0].colwise().sum().transpose() / static_cast<double>(x.n);
            theta.gamma = alpha.transpose().replicate(Q, 1);
          }
          project_gamma(theta.gamma, config.delta, projections);
        }
      } catch (const DegenerateStateError&) {
        failed = true;
        break;
      }

      double move = (theta.gamma - prev.gamma).cwiseAbs().maxCoeff();
      for (std::size_t s = 0; s < theta.pi.size(); ++s)
        move = std::max(move, (theta.pi[s] - prev.pi[s]).cwiseAbs().maxCoeff());
      if (move < config.param_tol) {
        trace.converged = true;
        break;
      }
    }
    trace.iterations = static_cast<int>(trace.values.size());
    if (failed || trace.values.empty()) {
      ++report.failed_restarts;
      continue;
    }

    double final_loglik = exact_loglik_transfer(theta, x).value;
    if (final_loglik > best_loglik) {
      best_loglik = final_loglik;
      report.fitted = theta;
      report.trace = trace;
      report.trace.values.push_back(final_loglik);
      report.best_restart = r;
      report.projection_events = projections;
      report.boundary = params_on_margin(theta);
    }
  }
  report.restarts_run = total_restarts;
  if (report.best_restart < 0)
    throw EstimationFailedError("all exact-mle restarts failed");

  if (x.T >= 2) {
    report.gamma_residual = mle_gamma_fixed_point_residual(report.fitted, x);
    report.max_abs_gamma_residual = report.gamma_residual.cwiseAbs().maxCoeff();
  } else {
    report.gamma_residual = Matrix::Zero(Q, Q);
  }
  return report;
}

void compare_with_truth(EstimationReport& report, const ModelParams& truth) {
  AlignmentResult aligned = align_by_pi(report.fitted, truth);
  TruthComparison cmp;
  cmp.sigma = aligned.sigma;
  cmp.pi_error = aligned.pi_error;
  cmp.gamma_error = gamma_error(report.fitted, truth, aligned.sigma);
  report.vs_truth = cmp;
}

}  // namespace dynsbm
