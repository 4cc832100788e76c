#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "dynsbm/experiment.hpp"
#include "dynsbm/io.hpp"
#include "dynsbm/rng.hpp"
#include "test_helpers.hpp"

using namespace dynsbm;
using namespace dynsbm::testing;

namespace {

std::string temp_dir(const std::string& tag) {
  auto dir = std::filesystem::temp_directory_path() / ("dynsbm_test_" + tag);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

ExperimentResult synthetic_result(const std::vector<CellSummary>& cells) {
  ExperimentResult r;
  r.Q = 2;
  r.estimator = "vem";
  r.cells = cells;
  return r;
}

}  // namespace

TEST_SUITE("experiment") {

TEST_CASE("rate regression recovers a constructed exponent") {
  std::vector<CellSummary> cells;
  for (int n : {20, 40, 80, 160}) {
    CellSummary c;
    c.n = n;
    c.T = 5;
    c.pi_median = 2.0 / std::sqrt(static_cast<double>(n));
    c.gamma_median = 1.0;
    cells.push_back(c);
  }
  RateFit fit = rate_regression(synthetic_result(cells), "pi", -0.25);
  CHECK(fit.slope == doctest::Approx(-0.5).epsilon(0.01));
  CHECK(fit.consistent_with_bound);

  for (CellSummary& c : cells) c.pi_median = 0.37;  // constant errors
  RateFit flat = rate_regression(synthetic_result(cells), "pi", -0.25);
  CHECK(flat.slope == doctest::Approx(0.0).epsilon(1e-10));
  CHECK_FALSE(flat.consistent_with_bound);
}

TEST_CASE("gamma regression removes the log factor") {
  std::vector<CellSummary> cells;
  for (int n : {20, 40, 80, 160}) {
    CellSummary c;
    c.n = n;
    c.T = 6;
    c.pi_median = 1.0;
    c.gamma_median = 3.0 * std::sqrt(std::log(static_cast<double>(n))) /
                     std::sqrt(static_cast<double>(n) * c.T);
    cells.push_back(c);
  }
  RateFit fit = rate_regression(synthetic_result(cells), "gamma", -0.5);
  CHECK(fit.slope == doctest::Approx(-0.5).epsilon(0.01));
}

TEST_CASE("rate regression needs three distinct grid values") {
  std::vector<CellSummary> cells(2);
  cells[0].n = 20;
  cells[0].T = 5;
  cells[0].pi_median = 0.5;
  cells[1].n = 40;
  cells[1].T = 5;
  cells[1].pi_median = 0.4;
  CHECK_THROWS_AS(rate_regression(synthetic_result(cells), "pi", -0.25),
                  std::invalid_argument);
}

TEST_CASE("emit_outputs writes a stable header-only csv for empty results") {
  std::string dir = temp_dir("empty");
  ExperimentResult empty;
  empty.Q = 2;
  empty.estimator = "vem";
  emit_outputs(empty, dir);
  std::string csv = read_text_file(dir + "/results.csv");
  CHECK(csv == "n,T,Q,replicate,seed,estimator,pi_err,gamma_err,elbo_or_loglik,iters,wall_ms\n");
  // 11 columns exactly
  CHECK(std::count(csv.begin(), csv.end(), ',') == 10);
}

TEST_CASE("results csv round trips") {
  std::string dir = temp_dir("roundtrip");
  ExperimentResult r;
  r.Q = 2;
  r.estimator = "vem";
  ReplicateRow row;
  row.n = 20;
  row.T = 5;
  row.Q = 2;
  row.replicate = 0;
  row.seed = 123456789012345ull;
  row.estimator = "vem";
  row.pi_err = 0.123456789012345;
  row.gamma_err = 1e-7;
  row.objective = -1234.5678901234;
  row.iters = 17;
  row.wall_ms = 0.0;
  r.rows.push_back(row);
  emit_outputs(r, dir);

  std::vector<ReplicateRow> rows = read_results_csv(dir + "/results.csv");
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].n == row.n);
  CHECK(rows[0].seed == row.seed);
  CHECK(rows[0].pi_err == row.pi_err);        // shortest form round-trips exactly
  CHECK(rows[0].gamma_err == row.gamma_err);
  CHECK(rows[0].objective == row.objective);
  CHECK(rows[0].iters == row.iters);

  // emitting the same result twice is byte-identical
  std::string once = read_text_file(dir + "/results.csv");
  emit_outputs(r, dir);
  CHECK(read_text_file(dir + "/results.csv") == once);
}

TEST_CASE("experiment pipeline is deterministic end to end") {
  ExperimentConfig config;
  config.grid = {{8, 3}, {12, 3}};
  config.replicates = 3;
  config.true_params = two_class(0.8, 0.8, 0.15, 0.6);
  config.estimator = "vem";
  config.seed = 77;
  config.vem.restarts = 2;
  config.vem.max_iters = 60;

  ExperimentResult r1 = run_consistency_experiment(config);
  ExperimentResult r2 = run_consistency_experiment(config);
  REQUIRE(r1.rows.size() == 6);
  REQUIRE(r2.rows.size() == 6);
  for (std::size_t k = 0; k < r1.rows.size(); ++k) {
    CHECK(r1.rows[k].pi_err == r2.rows[k].pi_err);
    CHECK(r1.rows[k].gamma_err == r2.rows[k].gamma_err);
    CHECK(r1.rows[k].objective == r2.rows[k].objective);
  }

  std::string d1 = temp_dir("det1"), d2 = temp_dir("det2");
  emit_outputs(r1, d1);
  emit_outputs(r2, d2);
  CHECK(read_text_file(d1 + "/results.csv") == read_text_file(d2 + "/results.csv"));
  CHECK(read_text_file(d1 + "/summary.json") == read_text_file(d2 + "/summary.json"));
  CHECK(read_text_file(d1 + "/plotdata.csv") == read_text_file(d2 + "/plotdata.csv"));

  // alignment applied before errors: all errors finite and nonnegative
  for (const ReplicateRow& row : r1.rows) {
    CHECK(row.pi_err >= 0.0);
    CHECK(row.gamma_err >= 0.0);
  }
}

TEST_CASE("single-cell Q=1 errors equal the edge-frequency gap") {
  ExperimentConfig config;
  config.grid = {{10, 2}};
  config.replicates = 4;
  config.true_params = one_class(0.35);
  config.estimator = "vem";
  config.seed = 99;
  config.vem.restarts = 1;

  ExperimentResult result = run_consistency_experiment(config);
  for (const ReplicateRow& row : result.rows) {
    // regenerate the replicate's data through the same substream rule
    std::uint64_t z_seed = stream_key(config.seed, kStreamReplicate, 0,
                                      static_cast<std::uint64_t>(row.replicate), 1);
    std::uint64_t x_seed = stream_key(config.seed, kStreamReplicate, 0,
                                      static_cast<std::uint64_t>(row.replicate), 2);
    LatentPaths z = sample_latent_paths(config.true_params, 10, 2, z_seed);
    GraphSequence x = sample_graphs(config.true_params, z, x_seed);
    double density = 0.0;
    for (int t = 0; t < 2; ++t)
      for (int i = 0; i < 10; ++i)
        for (int j = i + 1; j < 10; ++j) density += x.x(t, i, j);
    density /= 2.0 * 10 * 9 / 2.0;
    double expected = std::abs(std::clamp(density, 0.05, 0.95) - 0.35);
    CHECK(row.pi_err == doctest::Approx(expected).epsilon(1e-9));
  }
}

TEST_CASE("experiment runs with the exact-mle estimator") {
  ExperimentConfig config;
  config.grid = {{4, 3}};
  config.replicates = 2;
  config.true_params = two_class(0.75, 0.8, 0.15, 0.55);
  config.estimator = "exact-mle";
  config.seed = 21;
  config.mle.restarts = 3;
  config.mle.max_iters = 300;
  ExperimentResult result = run_consistency_experiment(config);
  REQUIRE(result.rows.size() == 2);
  for (const ReplicateRow& row : result.rows) {
    CHECK_FALSE(row.failed);
    CHECK(row.estimator == "exact-mle");
    CHECK(std::isfinite(row.objective));
  }
}

TEST_CASE("config validation catches bad setups") {
  ExperimentConfig config;
  config.true_params = two_class();
  CHECK_THROWS_AS(validate_config(config), std::invalid_argument);  // empty grid

  config.grid = {{10, 2}};
  config.estimator = "nonsense";
  CHECK_THROWS_AS(validate_config(config), std::invalid_argument);

  config.estimator = "exact-mle";
  config.grid = {{40, 2}};  // Q^40 far beyond the exact cap
  CHECK_THROWS_AS(validate_config(config), std::invalid_argument);

  config.grid = {{6, 2}};
  validate_config(config);  // fine

  // finite-T grid must match the slice count
  config.true_params.pi = {sym2(0.8, 0.2, 0.6), sym2(0.8, 0.3, 0.6)};
  config.grid = {{6, 3}};
  CHECK_THROWS_AS(validate_config(config), std::invalid_argument);
}

TEST_CASE("experiment config parses from json") {
  Json j;
  j["n_values"] = {20, 40};
  j["T_values"] = {5};
  j["replicates"] = 7;
  j["true_params"] = params_to_json(two_class());
  j["estimator"] = "vem";
  j["seed"] = 13;
  j["out_dir"] = "somewhere";
  j["vem"] = {{"restarts", 3}, {"init", "random-dirichlet"}, {"tol", 1e-7}};
  ExperimentConfig config = experiment_config_from_json(j);
  REQUIRE(config.grid.size() == 2);
  CHECK(config.grid[1].n == 40);
  CHECK(config.replicates == 7);
  CHECK(config.seed == 13);
  CHECK(config.vem.restarts == 3);
  CHECK(config.vem.init == InitStrategy::kRandomDirichlet);
  CHECK(config.vem.tol == 1e-7);
  CHECK(config.vem.delta == config.true_params.delta);
}

TEST_CASE("params and graphs json round trip") {
  CounterRng rng(301);
  ModelParams p = random_params(3, rng, 0.05, 0.05, 2);
  ModelParams back = params_from_json(params_to_json(p));
  CHECK(back.q_classes == 3);
  CHECK((back.gamma - p.gamma).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(back.pi.size() == 2);
  CHECK((back.pi[1] - p.pi[1]).cwiseAbs().maxCoeff() == 0.0);

  ModelParams single = two_class();
  LatentPaths z = sample_latent_paths(single, 7, 3, rng.next_u64());
  GraphSequence x = sample_graphs(single, z, rng.next_u64());
  GraphSequence xb = graphs_from_json(graphs_to_json(x));
  CHECK(xb.adj == x.adj);
  LatentPaths zb = labels_from_json(labels_to_json(z));
  CHECK(zb.labels == z.labels);

  // malformed inputs are rejected
  Json bad_edges = graphs_to_json(x);
  bad_edges["edges"].push_back(Json::array({0, 3, 3}));  // self loop
  CHECK_THROWS_AS(graphs_from_json(bad_edges), std::invalid_argument);
  Json bad_labels = labels_to_json(z);
  bad_labels["labels"][0][0] = 0;  // labels are 1-based on disk
  CHECK_THROWS_AS(labels_from_json(bad_labels), std::invalid_argument);
}

TEST_CASE("experiment result carries the rate fits") {
  ExperimentConfig config;
  config.grid = {{8, 2}, {12, 2}, {16, 2}, {20, 2}};
  config.replicates = 3;
  config.true_params = two_class(0.8, 0.8, 0.15, 0.6);
  config.estimator = "vem";
  config.seed = 31;
  config.vem.restarts = 2;
  config.vem.max_iters = 40;
  ExperimentResult result = run_consistency_experiment(config);
  REQUIRE(result.pi_rate.has_value());
  CHECK(result.pi_rate->points == 4);
  CHECK(result.pi_rate->bound == -0.25);
}

}  // TEST_SUITE
