#include "dynsbm/io.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace dynsbm {

Json matrix_to_json(const Matrix& m) {
  Json rows = Json::array();
  for (int q = 0; q < m.rows(); ++q) {
    Json row = Json::array();
    for (int l = 0; l < m.cols(); ++l) row.push_back(m(q, l));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const Json& j) {
  if (!j.is_array() || j.empty() || !j[0].is_array())
    throw std::invalid_argument("expected a 2d array");
  const int rows = static_cast<int>(j.size());
  const int cols = static_cast<int>(j[0].size());
  Matrix m(rows, cols);
  for (int q = 0; q < rows; ++q) {
    if (static_cast<int>(j[static_cast<std::size_t>(q)].size()) != cols)
      throw std::invalid_argument("ragged matrix rows");
    for (int l = 0; l < cols; ++l)
      m(q, l) = j[static_cast<std::size_t>(q)][static_cast<std::size_t>(l)].get<double>();
  }
  return m;
}

Json params_to_json(const ModelParams& params) {
  Json j;
  j["Q"] = params.q_classes;
  j["gamma"] = matrix_to_json(params.gamma);
  if (params.pi.size() == 1) {
    j["pi"] = matrix_to_json(params.pi.front());
  } else {
    Json slices = Json::array();
    for (const Matrix& slice : params.pi) slices.push_back(matrix_to_json(slice));
    j["pi"] = std::move(slices);
  }
  j["delta"] = params.delta;
  j["zeta"] = params.zeta;
  return j;
}

ModelParams params_from_json(const Json& j) {
  ModelParams p;
  p.q_classes = j.at("Q").get<int>();
  p.gamma = matrix_from_json(j.at("gamma"));
  const Json& pi = j.at("pi");
  if (!pi.is_array() || pi.empty()) throw std::invalid_argument("pi must be an array");
  if (pi[0].is_array() && !pi[0].empty() && pi[0][0].is_array()) {
    for (const Json& slice : pi) p.pi.push_back(matrix_from_json(slice));
  } else {
    p.pi.push_back(matrix_from_json(pi));
  }
  if (j.contains("delta")) p.delta = j.at("delta").get<double>();
  if (j.contains("zeta")) p.zeta = j.at("zeta").get<double>();
  return p;
}

Json graphs_to_json(const GraphSequence& x) {
  Json j;
  j["n"] = x.n;
  j["T"] = x.T;
  Json edges = Json::array();
  for (int t = 0; t < x.T; ++t)
    for (int i = 0; i < x.n; ++i)
      for (int jj = i + 1; jj < x.n; ++jj)
        if (x.x(t, i, jj)) edges.push_back(Json::array({t, i, jj}));
  j["edges"] = std::move(edges);
  return j;
}

GraphSequence graphs_from_json(const Json& j) {
  GraphSequence x;
  x.n = j.at("n").get<int>();
  x.T = j.at("T").get<int>();
  if (x.n < 1 || x.T < 1) throw std::invalid_argument("bad graph dimensions");
  x.adj.assign(static_cast<std::size_t>(x.T) * x.n * x.n, 0);
  for (const Json& e : j.at("edges")) {
    int t = e.at(0).get<int>(), a = e.at(1).get<int>(), b = e.at(2).get<int>();
    if (t < 0 || t >= x.T || a < 0 || b < 0 || a >= x.n || b >= x.n || a == b)
      throw std::invalid_argument("edge index out of range");
    x.set(t, a, b, 1);
  }
  return x;
}

Json labels_to_json(const LatentPaths& z) {
  Json rows = Json::array();
  for (int i = 0; i < z.n; ++i) {
    Json row = Json::array();
    for (int t = 0; t < z.T; ++t) row.push_back(z.z(i, t) + 1);
    rows.push_back(std::move(row));
  }
  Json j;
  j["labels"] = std::move(rows);
  return j;
}

LatentPaths labels_from_json(const Json& j) {
  const Json& rows = j.at("labels");
  LatentPaths z;
  z.n = static_cast<int>(rows.size());
  if (z.n == 0) throw std::invalid_argument("empty labels");
  z.T = static_cast<int>(rows[0].size());
  z.labels.assign(static_cast<std::size_t>(z.n) * z.T, 0);
  for (int i = 0; i < z.n; ++i) {
    const Json& row = rows[static_cast<std::size_t>(i)];
    if (static_cast<int>(row.size()) != z.T)
      throw std::invalid_argument("ragged label rows");
    for (int t = 0; t < z.T; ++t) {
      int v = row[static_cast<std::size_t>(t)].get<int>();
      if (v < 1) throw std::invalid_argument("labels are 1-based");
      z.z(i, t) = v - 1;
    }
  }
  return z;
}

Json report_to_json(const EstimationReport& report) {
  Json j;
  j["method"] = report.method;
  j["Q"] = report.fitted.q_classes;
  j["params"] = params_to_json(report.fitted);
  j["trace"] = report.trace.values;
  j["converged"] = report.trace.converged;
  j["iterations"] = report.trace.iterations;
  j["trace_decreases"] = report.trace.decreases;
  j["seed"] = report.seed;
  j["restarts_run"] = report.restarts_run;
  j["best_restart"] = report.best_restart;
  j["degenerate_restarts"] = report.degenerate_restarts;
  j["failed_restarts"] = report.failed_restarts;
  j["gamma_fixed_point_residual"] = matrix_to_json(report.gamma_residual);
  j["max_abs_gamma_residual"] = report.max_abs_gamma_residual;
  j["projection_events"] = report.projection_events;
  j["boundary"] = report.boundary;
  j["wall_ms"] = report.wall_ms;
  if (report.vs_truth) {
    Json cmp;
    cmp["sigma"] = report.vs_truth->sigma.mapping;
    cmp["pi_error"] = report.vs_truth->pi_error;
    cmp["gamma_error"] = report.vs_truth->gamma_error;
    j["vs_truth"] = std::move(cmp);
  }
  return j;
}

Json concentration_to_json(const ConcentrationReport& r) {
  Json j;
  j["n"] = r.n;
  j["T"] = r.T;
  j["replicates"] = r.replicates;
  j["eta"] = r.eta;
  j["omega"] = {{"fail_rate", r.omega_fail_rate},
                {"stderr", r.omega_fail_stderr},
                {"bound", r.omega_bound},
                {"pass", r.omega_pass}};
  j["transition_freq"] = {{"mean", r.nql_mean},   {"stderr", r.nql_stderr},
                          {"q50", r.nql_q50},     {"q90", r.nql_q90},
                          {"max", r.nql_max},     {"threshold", r.nql_threshold},
                          {"pass", r.nql_pass}};
  j["occupancy_product"] = {{"worst_estimate", r.nqnl_worst_estimate},
                            {"worst_stderr", r.nqnl_worst_stderr},
                            {"bound", r.nqnl_bound},
                            {"pass", r.nqnl_pass}};
  return j;
}

ExperimentConfig experiment_config_from_json(const Json& j) {
  ExperimentConfig cfg;
  if (j.contains("grid")) {
    for (const Json& cell : j.at("grid"))
      cfg.grid.push_back({cell.at("n").get<int>(), cell.at("T").get<int>()});
  } else {
    for (const Json& n : j.at("n_values"))
      for (const Json& t : j.at("T_values"))
        cfg.grid.push_back({n.get<int>(), t.get<int>()});
  }
  cfg.replicates = j.value("replicates", 20);
  const Json& tp = j.at("true_params");
  cfg.true_params =
      tp.contains("file") ? params_from_json(read_json_file(tp.at("file").get<std::string>()))
                          : params_from_json(tp);
  cfg.estimator = j.value("estimator", std::string("vem"));
  cfg.seed = j.value("seed", 0ull);
  cfg.out_dir = j.value("out_dir", std::string("results"));
  cfg.timing = j.value("timing", false);
  if (j.contains("rate_targets")) {
    cfg.rate_target_pi = j.at("rate_targets").value("pi", cfg.rate_target_pi);
    cfg.rate_target_gamma = j.at("rate_targets").value("gamma", cfg.rate_target_gamma);
  }

  if (j.contains("vem")) {
    const Json& v = j.at("vem");
    cfg.vem.restarts = v.value("restarts", cfg.vem.restarts);
    if (v.contains("init")) cfg.vem.init = parse_init_strategy(v.at("init").get<std::string>());
    cfg.vem.tol = v.value("tol", cfg.vem.tol);
    cfg.vem.max_iters = v.value("max_iters", cfg.vem.max_iters);
    cfg.vem.tie_diagonal = v.value("tie_diagonal", cfg.vem.tie_diagonal);
  }
  if (j.contains("mle")) {
    const Json& m = j.at("mle");
    cfg.mle.restarts = m.value("restarts", cfg.mle.restarts);
    cfg.mle.max_iters = m.value("max_iters", cfg.mle.max_iters);
    cfg.mle.tie_diagonal = m.value("tie_diagonal", cfg.mle.tie_diagonal);
  }
  // The finite-T mode follows from the true parameters.
  cfg.vem.time_varying_pi = cfg.true_params.time_varying();
  cfg.mle.time_varying_pi = cfg.true_params.time_varying();
  cfg.vem.delta = cfg.true_params.delta;
  cfg.vem.zeta = cfg.true_params.zeta;
  cfg.mle.delta = cfg.true_params.delta;
  cfg.mle.zeta = cfg.true_params.zeta;
  return cfg;
}

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  Json j;
  in >> j;
  return j;
}

void write_json_file(const std::string& path, const Json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

void write_text_file(const std::string& path, const std::string& text) {
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace dynsbm
