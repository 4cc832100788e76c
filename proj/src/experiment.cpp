#include "dynsbm/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include "dynsbm/io.hpp"
#include "dynsbm/rng.hpp"

namespace dynsbm {

void validate_config(const ExperimentConfig& config) {
  if (config.grid.empty()) throw std::invalid_argument("empty experiment grid");
  if (config.replicates < 1) throw std::invalid_argument("replicates must be >= 1");
  for (const ExperimentCell& c : config.grid)
    if (c.n < 2 || c.T < 1) throw std::invalid_argument("grid cells need n >= 2, T >= 1");
  if (config.estimator != "vem" && config.estimator != "exact-mle")
    throw std::invalid_argument("estimator must be 'vem' or 'exact-mle'");
  ValidityReport rep = validate_theta(config.true_params);
  if (!rep.in_theta())
    throw std::invalid_argument("true parameters fail the model assumptions");
  if (config.true_params.time_varying())
    for (const ExperimentCell& c : config.grid)
      if (c.T != config.true_params.n_time_slices())
        throw std::invalid_argument("finite-T grid must match the pi slice count");
  if (config.estimator == "exact-mle") {
    for (const ExperimentCell& c : config.grid) {
      long long states = 1;
      for (int i = 0; i < c.n; ++i) {
        states *= config.true_params.q_classes;
        if (states > kJointStateCap)
          throw std::invalid_argument("exact-mle infeasible: Q^n exceeds the cap");
      }
    }
  }
}

namespace {

double median_of(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

double quantile_of(std::vector<double> v, double p) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  double idx = p * (static_cast<double>(v.size()) - 1.0);
  std::size_t lo = static_cast<std::size_t>(idx);
  std::size_t hi = std::min(lo + 1, v.size() - 1);
  double frac = idx - static_cast<double>(lo);
  return v[lo] * (1.0 - frac) + v[hi] * frac;
}

}  // namespace

ExperimentResult run_consistency_experiment(const ExperimentConfig& config) {
  validate_config(config);
  const ModelParams& truth = config.true_params;

  ExperimentResult result;
  result.Q = truth.q_classes;
  result.estimator = config.estimator;

  for (std::size_t cell_idx = 0; cell_idx < config.grid.size(); ++cell_idx) {
    const ExperimentCell& cell = config.grid[cell_idx];
    CellSummary summary;
    summary.n = cell.n;
    summary.T = cell.T;
    summary.replicates = config.replicates;
    std::vector<double> pi_errs, gamma_errs;

    for (int rep = 0; rep < config.replicates; ++rep) {
      std::uint64_t z_seed = stream_key(config.seed, kStreamReplicate, cell_idx,
                                        static_cast<std::uint64_t>(rep), 1);
      std::uint64_t x_seed = stream_key(config.seed, kStreamReplicate, cell_idx,
                                        static_cast<std::uint64_t>(rep), 2);
      std::uint64_t fit_seed = stream_key(config.seed, kStreamReplicate, cell_idx,
                                          static_cast<std::uint64_t>(rep), 3);

      ReplicateRow row;
      row.n = cell.n;
      row.T = cell.T;
      row.Q = truth.q_classes;
      row.replicate = rep;
      row.seed = fit_seed;
      row.estimator = config.estimator;

      LatentPaths z = sample_latent_paths(truth, cell.n, cell.T, z_seed);
      GraphSequence x = sample_graphs(truth, z, x_seed);

      auto t0 = std::chrono::steady_clock::now();
      try {
        EstimationReport report;
        if (config.estimator == "vem") {
          VemConfig vc = config.vem;
          vc.seed = fit_seed;
          report = fit_vem(x, truth.q_classes, vc).report;
        } else {
          MleConfig mc = config.mle;
          mc.seed = fit_seed;
          report = exact_mle(x, truth.q_classes, mc);
        }
        compare_with_truth(report, truth);
        row.pi_err = report.vs_truth->pi_error;
        row.gamma_err = report.vs_truth->gamma_error;
        row.objective = report.trace.values.empty() ? std::nan("")
                                                    : report.trace.values.back();
        row.iters = report.trace.iterations;
        pi_errs.push_back(row.pi_err);
        gamma_errs.push_back(row.gamma_err);
      } catch (const std::exception&) {
        row.failed = true;
        row.pi_err = std::nan("");
        row.gamma_err = std::nan("");
        row.objective = std::nan("");
        ++summary.failures;
      }
      if (config.timing) {
        auto t1 = std::chrono::steady_clock::now();
        row.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
      }
      result.rows.push_back(std::move(row));
    }

    summary.pi_q25 = quantile_of(pi_errs, 0.25);
    summary.pi_median = median_of(pi_errs);
    summary.pi_q75 = quantile_of(pi_errs, 0.75);
    summary.gamma_q25 = quantile_of(gamma_errs, 0.25);
    summary.gamma_median = median_of(gamma_errs);
    summary.gamma_q75 = quantile_of(gamma_errs, 0.75);
    if (2 * summary.failures > config.replicates) result.excessive_failures = true;
    result.cells.push_back(summary);
  }

  std::sort(result.rows.begin(), result.rows.end(),
            [](const ReplicateRow& a, const ReplicateRow& b) {
              if (a.n != b.n) return a.n < b.n;
              if (a.T != b.T) return a.T < b.T;
              return a.replicate < b.replicate;
            });

  try {
    result.pi_rate = rate_regression(result, "pi", config.rate_target_pi);
  } catch (const std::invalid_argument&) {
  }
  try {
    result.gamma_rate = rate_regression(result, "gamma", config.rate_target_gamma);
  } catch (const std::invalid_argument&) {
  }
  return result;
}

RateFit rate_regression(const ExperimentResult& result, const std::string& target,
                        double bound) {
  std::vector<double> xs, ys;
  for (const CellSummary& cell : result.cells) {
    double err = target == "pi" ? cell.pi_median : cell.gamma_median;
    if (!(err > 0.0)) continue;
    if (target == "pi") {
      xs.push_back(std::log(static_cast<double>(cell.n)));
      ys.push_back(std::log(err));
    } else if (target == "gamma") {
      xs.push_back(std::log(static_cast<double>(cell.n) * cell.T));
      // remove the sqrt(log n) factor of the bound before fitting the exponent
      ys.push_back(std::log(err) - 0.5 * std::log(std::log(static_cast<double>(cell.n))));
    } else {
      throw std::invalid_argument("target must be 'pi' or 'gamma'");
    }
  }
  std::vector<double> distinct = xs;
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (distinct.size() < 3)
    throw std::invalid_argument("rate regression needs >= 3 distinct grid values");

  const int m = static_cast<int>(xs.size());
  double xbar = 0.0, ybar = 0.0;
  for (int k = 0; k < m; ++k) {
    xbar += xs[static_cast<std::size_t>(k)];
    ybar += ys[static_cast<std::size_t>(k)];
  }
  xbar /= m;
  ybar /= m;
  double sxx = 0.0, sxy = 0.0;
  for (int k = 0; k < m; ++k) {
    double dx = xs[static_cast<std::size_t>(k)] - xbar;
    sxx += dx * dx;
    sxy += dx * (ys[static_cast<std::size_t>(k)] - ybar);
  }

  RateFit fit;
  fit.points = m;
  fit.bound = bound;
  fit.slope = sxy / sxx;
  fit.intercept = ybar - fit.slope * xbar;
  double rss = 0.0;
  for (int k = 0; k < m; ++k) {
    double resid = ys[static_cast<std::size_t>(k)] - fit.intercept -
                   fit.slope * xs[static_cast<std::size_t>(k)];
    rss += resid * resid;
  }
  fit.slope_stderr = m > 2 ? std::sqrt(rss / (m - 2) / sxx) : 0.0;
  fit.ci_low = fit.slope - 1.96 * fit.slope_stderr;
  fit.ci_high = fit.slope + 1.96 * fit.slope_stderr;
  fit.consistent_with_bound = fit.slope <= bound;
  return fit;
}

namespace {

std::string csv_row(const ReplicateRow& r) {
  std::ostringstream out;
  out << r.n << ',' << r.T << ',' << r.Q << ',' << r.replicate << ',' << r.seed << ','
      << r.estimator << ',' << format_double(r.pi_err) << ','
      << format_double(r.gamma_err) << ',' << format_double(r.objective) << ','
      << r.iters << ',' << format_double(r.wall_ms);
  return out.str();
}

}  // namespace

void emit_outputs(const ExperimentResult& result, const std::string& dir) {
  std::ostringstream csv;
  csv << "n,T,Q,replicate,seed,estimator,pi_err,gamma_err,elbo_or_loglik,iters,wall_ms\n";
  for (const ReplicateRow& row : result.rows) csv << csv_row(row) << '\n';
  write_text_file(dir + "/results.csv", csv.str());

  std::ostringstream plot;
  plot << "n,T,nT,pi_q25,pi_median,pi_q75,gamma_q25,gamma_median,gamma_q75\n";
  for (const CellSummary& cell : result.cells) {
    plot << cell.n << ',' << cell.T << ',' << cell.n * cell.T << ','
         << format_double(cell.pi_q25) << ',' << format_double(cell.pi_median) << ','
         << format_double(cell.pi_q75) << ',' << format_double(cell.gamma_q25) << ','
         << format_double(cell.gamma_median) << ',' << format_double(cell.gamma_q75)
         << '\n';
  }
  write_text_file(dir + "/plotdata.csv", plot.str());

  Json summary;
  summary["estimator"] = result.estimator;
  summary["Q"] = result.Q;
  summary["excessive_failures"] = result.excessive_failures;
  Json cells = Json::array();
  for (const CellSummary& cell : result.cells) {
    Json c;
    c["n"] = cell.n;
    c["T"] = cell.T;
    c["replicates"] = cell.replicates;
    c["failures"] = cell.failures;
    c["pi"] = {{"q25", cell.pi_q25}, {"median", cell.pi_median}, {"q75", cell.pi_q75}};
    c["gamma"] = {{"q25", cell.gamma_q25},
                  {"median", cell.gamma_median},
                  {"q75", cell.gamma_q75}};
    cells.push_back(std::move(c));
  }
  summary["cells"] = std::move(cells);
  auto rate_json = [](const RateFit& fit) {
    Json r;
    r["slope"] = fit.slope;
    r["intercept"] = fit.intercept;
    r["slope_stderr"] = fit.slope_stderr;
    r["ci95"] = {fit.ci_low, fit.ci_high};
    r["upper_bound_exponent"] = fit.bound;
    r["consistent_with_upper_bound"] = fit.consistent_with_bound;
    r["points"] = fit.points;
    return r;
  };
  if (result.pi_rate) summary["rate_pi"] = rate_json(*result.pi_rate);
  if (result.gamma_rate) summary["rate_gamma"] = rate_json(*result.gamma_rate);
  write_json_file(dir + "/summary.json", summary);
}

std::vector<ReplicateRow> read_results_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty csv");
  std::vector<ReplicateRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string field;
    ReplicateRow r;
    auto next = [&]() {
      if (!std::getline(ss, field, ',')) throw std::runtime_error("short csv row");
      return field;
    };
    r.n = std::stoi(next());
    r.T = std::stoi(next());
    r.Q = std::stoi(next());
    r.replicate = std::stoi(next());
    r.seed = std::stoull(next());
    r.estimator = next();
    r.pi_err = std::stod(next());
    r.gamma_err = std::stod(next());
    r.objective = std::stod(next());
    r.iters = std::stoi(next());
    r.wall_ms = std::stod(next());
    r.failed = std::isnan(r.pi_err);
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace dynsbm
