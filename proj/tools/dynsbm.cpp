// Command-line driver for the dynamic SBM laboratory: data generation,
// exact likelihood evaluation, the two estimators, bound checks, and the
// batch consistency experiment.

#include <CLI11.hpp>
#include <chrono>
#include <iostream>

#include "dynsbm/exact.hpp"
#include "dynsbm/experiment.hpp"
#include "dynsbm/io.hpp"
#include "dynsbm/params.hpp"
#include "dynsbm/rng.hpp"
#include "dynsbm/sampler.hpp"
#include "dynsbm/theory.hpp"
#include "dynsbm/vem.hpp"

namespace {

using namespace dynsbm;

ModelParams load_params(const std::string& path) {
  ModelParams p = params_from_json(read_json_file(path));
  ValidityReport rep = validate_theta(p);
  if (!rep.structural_ok)
    throw std::invalid_argument("bad parameter file: " + rep.structural_error);
  return p;
}

int cmd_generate(const std::string& params_path, int n, int T, std::uint64_t seed,
                 const std::string& out_dir) {
  ModelParams p = load_params(params_path);
  if (p.time_varying() && p.n_time_slices() != T)
    throw std::invalid_argument("finite-T params need T equal to the slice count");
  LatentPaths z = sample_latent_paths(p, n, T, seed);
  GraphSequence x = sample_graphs(p, z, stream_key(seed, kStreamEdge));
  Json graphs = graphs_to_json(x);
  std::size_t edges = graphs["edges"].size();
  write_json_file(out_dir + "/graphs.json", graphs);
  write_json_file(out_dir + "/labels.json", labels_to_json(z));
  std::cout << "{\"n\":" << n << ",\"T\":" << T << ",\"edges\":" << edges << "}\n";
  return 0;
}

int cmd_exact_loglik(const std::string& params_path, const std::string& data_path,
                     const std::string& method) {
  ModelParams p = load_params(params_path);
  GraphSequence x = graphs_from_json(read_json_file(data_path));
  LogLikValue ll = method == "brute" ? exact_loglik_bruteforce(p, x)
                                     : exact_loglik_transfer(p, x);
  Json out;
  out["loglik"] = ll.value;
  out["normalized"] = 2.0 / (static_cast<double>(x.n) * (x.n - 1) * x.T) * ll.value;
  out["n_terms"] = ll.n_terms;
  out["method"] = method;
  std::cout << out.dump() << "\n";
  return 0;
}

int cmd_fit_mle(const std::string& data_path, int Q, MleConfig config, bool timing,
                const std::string& out_path) {
  GraphSequence x = graphs_from_json(read_json_file(data_path));
  auto t0 = std::chrono::steady_clock::now();
  EstimationReport report = exact_mle(x, Q, config);
  if (timing)
    report.wall_ms = std::chrono::duration<double, std::milli>(
                         std::chrono::steady_clock::now() - t0)
                         .count();
  write_json_file(out_path, report_to_json(report));
  std::cout << "{\"loglik\":" << format_double(report.trace.values.back())
            << ",\"iterations\":" << report.trace.iterations << "}\n";
  return 0;
}

int cmd_fit_vem(const std::string& data_path, int Q, VemConfig config, bool timing,
                const std::string& out_path) {
  GraphSequence x = graphs_from_json(read_json_file(data_path));
  auto t0 = std::chrono::steady_clock::now();
  VemFit fit = fit_vem(x, Q, config);
  if (timing)
    fit.report.wall_ms = std::chrono::duration<double, std::milli>(
                             std::chrono::steady_clock::now() - t0)
                             .count();
  write_json_file(out_path, report_to_json(fit.report));
  std::cout << "{\"elbo\":" << format_double(fit.report.trace.values.back())
            << ",\"iterations\":" << fit.report.trace.iterations << "}\n";
  return 0;
}

int cmd_check_theory(const std::string& params_path, int n, int T, int reps,
                     std::uint64_t seed, double eta_opt, int discrepancy_instances,
                     const std::string& out_path) {
  ModelParams p = load_params(params_path);
  double eta = eta_opt > 0.0 ? eta_opt : p.delta / 2.0;
  ConcentrationReport conc = concentration_report(p, n, T, reps, seed, eta);

  // Randomized discrepancy-bound suite at desk scale.
  const int dn = std::min(n, 50), dT = std::min(T, 10);
  StationaryDist st = stationary_distribution(p.gamma);
  int violations = 0, checked = 0;
  CounterRng rng(stream_key(seed, kStreamReplicate, 999));
  for (int k = 0; k < discrepancy_instances; ++k) {
    LatentPaths z_star;
    do {
      z_star = sample_latent_paths(p, dn, dT, rng.next_u64());
    } while (!omega_eta_member(z_star, st, eta));
    LatentPaths z = z_star;
    if (k % 2 == 0) {
      for (int& v : z.labels) v = static_cast<int>(rng.next_double() * p.q_classes);
    } else {
      int flips = 1 + static_cast<int>(rng.next_double() * 5);
      for (int f = 0; f < flips; ++f) {
        std::size_t at = static_cast<std::size_t>(rng.next_double() * z.labels.size());
        z.labels[at] = (z.labels[at] + 1 +
                        static_cast<int>(rng.next_double() * (p.q_classes - 1))) %
                       p.q_classes;
      }
    }
    DiscrepancyReport d = discrepancy_set_size(z, z_star, p, eta);
    ++checked;
    if (d.d_size < d.lower_bound - 1e-9 || d.d_size > d.upper_bound + 1e-9) ++violations;
  }

  Json out;
  out["concentration"] = concentration_to_json(conc);
  out["discrepancy"] = {{"instances", checked},
                        {"violations", violations},
                        {"n", dn},
                        {"T", dT},
                        {"eta", eta}};
  write_json_file(out_path, out);
  bool pass = conc.omega_pass && conc.nqnl_pass && violations == 0;
  std::cout << "{\"pass\":" << (pass ? "true" : "false") << "}\n";
  return pass ? 0 : 1;
}

int cmd_experiment(const std::string& config_path) {
  ExperimentConfig config = experiment_config_from_json(read_json_file(config_path));
  ExperimentResult result = run_consistency_experiment(config);
  emit_outputs(result, config.out_dir);
  std::cout << "{\"cells\":" << result.cells.size()
            << ",\"rows\":" << result.rows.size() << ",\"excessive_failures\":"
            << (result.excessive_failures ? "true" : "false") << "}\n";
  return result.excessive_failures ? 2 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dynamic stochastic block model laboratory"};
  app.require_subcommand(1);

  std::string params_path, data_path, out_path, out_dir, config_path;
  std::string method = "transfer", init = "spectral-mean-graph";
  int n = 100, T = 10, Q = 2, restarts = 8, reps = 10000, disc_instances = 1000;
  std::uint64_t seed = 0;
  double tol = 1e-8, eta = -1.0, delta = 0.05, zeta = 0.05;
  bool time_varying = false, tie_diagonal = false, timing = false;

  auto* gen = app.add_subcommand("generate", "sample labels and graphs");
  gen->add_option("--params", params_path)->required();
  gen->add_option("--n", n)->required();
  gen->add_option("--T", T)->required();
  gen->add_option("--seed", seed)->required();
  gen->add_option("--out", out_dir)->required();

  auto* ll = app.add_subcommand("exact-loglik", "exact marginal log-likelihood");
  ll->add_option("--params", params_path)->required();
  ll->add_option("--data", data_path)->required();
  ll->add_option("--method", method)->check(CLI::IsMember({"brute", "transfer"}));

  auto* mle = app.add_subcommand("fit-mle", "exact maximum-likelihood fit");
  mle->add_option("--data", data_path)->required();
  mle->add_option("--Q", Q)->required();
  mle->add_option("--restarts", restarts);
  mle->add_option("--seed", seed);
  mle->add_option("--delta", delta);
  mle->add_option("--zeta", zeta);
  mle->add_flag("--time-varying-pi", time_varying);
  mle->add_flag("--tie-diagonal", tie_diagonal);
  mle->add_flag("--timing", timing);
  mle->add_option("--out", out_path)->required();

  auto* vem = app.add_subcommand("fit-vem", "variational EM fit");
  vem->add_option("--data", data_path)->required();
  vem->add_option("--Q", Q)->required();
  vem->add_option("--restarts", restarts);
  vem->add_option("--init", init)
      ->check(CLI::IsMember({"random-dirichlet", "spectral-mean-graph"}));
  vem->add_option("--tol", tol);
  vem->add_option("--seed", seed);
  vem->add_option("--delta", delta);
  vem->add_option("--zeta", zeta);
  vem->add_flag("--time-varying-pi", time_varying);
  vem->add_flag("--tie-diagonal", tie_diagonal);
  vem->add_flag("--timing", timing);
  vem->add_option("--out", out_path)->required();

  auto* theory = app.add_subcommand("check-theory", "concentration and combinatorial bound checks");
  theory->add_option("--params", params_path)->required();
  theory->add_option("--n", n)->required();
  theory->add_option("--T", T)->required();
  theory->add_option("--reps", reps);
  theory->add_option("--seed", seed);
  theory->add_option("--eta", eta);
  theory->add_option("--discrepancy-instances", disc_instances);
  theory->add_option("--out", out_path)->required();

  auto* exp = app.add_subcommand("experiment", "batch consistency experiment");
  exp->add_option("--config", config_path)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_generate(params_path, n, T, seed, out_dir);
    if (ll->parsed()) return cmd_exact_loglik(params_path, data_path, method);
    if (mle->parsed()) {
      dynsbm::MleConfig config;
      config.restarts = restarts;
      config.seed = seed;
      config.delta = delta;
      config.zeta = zeta;
      config.time_varying_pi = time_varying;
      config.tie_diagonal = tie_diagonal;
      return cmd_fit_mle(data_path, Q, config, timing, out_path);
    }
    if (vem->parsed()) {
      dynsbm::VemConfig config;
      config.restarts = restarts;
      config.seed = seed;
      config.init = dynsbm::parse_init_strategy(init);
      config.tol = tol;
      config.delta = delta;
      config.zeta = zeta;
      config.time_varying_pi = time_varying;
      config.tie_diagonal = tie_diagonal;
      return cmd_fit_vem(data_path, Q, config, timing, out_path);
    }
    if (theory->parsed())
      return cmd_check_theory(params_path, n, T, reps, seed, eta, disc_instances,
                              out_path);
    if (exp->parsed()) return cmd_experiment(config_path);
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return 0;
}
