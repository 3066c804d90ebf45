#include "ddlqr/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

#include "ddlqr/json_io.hpp"

namespace fs = std::filesystem;

namespace ddlqr {
namespace {

// Stateless 64-bit mixer; gives the PRBS a reproducible value per (seed, t,
// channel) with no generator state to carry across calls.
std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Reads a CSV of rows "t,u1,...,um" (header line optional) into a per-time map.
std::map<int, VectorXd> read_input_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("input file: cannot open " + path);
  std::map<int, VectorXd> table;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::vector<std::string> cells;
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() < 2) throw std::runtime_error("input file: malformed row '" + line + "'");
    if (first) {
      first = false;
      char* end = nullptr;
      std::strtod(cells[0].c_str(), &end);
      if (end == cells[0].c_str()) continue;  // header line
    }
    const int t = std::stoi(cells[0]);
    VectorXd u(cells.size() - 1);
    for (size_t i = 1; i < cells.size(); ++i) u[static_cast<int>(i - 1)] = std::stod(cells[i]);
    table[t] = std::move(u);
  }
  if (table.empty()) throw std::runtime_error("input file: no data rows in " + path);
  return table;
}

double opt_number(const nlohmann::json& j, const char* key, double dflt, const std::string& path) {
  if (!j.contains(key)) return dflt;
  return double_from_json(j.at(key), path + "." + key);
}

int opt_int(const nlohmann::json& j, const char* key, int dflt, const std::string& path) {
  if (!j.contains(key)) return dflt;
  return int_from_json(j.at(key), path + "." + key);
}

std::uint64_t uint_from_json(const nlohmann::json& j, const std::string& path) {
  if (!j.is_number_integer() || (j.is_number_integer() && j.get<std::int64_t>() < 0)) {
    throw JsonError(path, "expected a non-negative integer");
  }
  return j.get<std::uint64_t>();
}

// Square matrix field: accepts a scalar c (expanded to c * I_dim) or a full
// dim x dim matrix.
MatrixXd square_from_json(const nlohmann::json& j, int dim, const std::string& path) {
  MatrixXd M = matrix_from_json(j, path);
  if (M.rows() == 1 && M.cols() == 1 && dim > 1) {
    return M(0, 0) * MatrixXd::Identity(dim, dim);
  }
  if (M.rows() != dim || M.cols() != dim) {
    throw JsonError(path, "expected a scalar or a " + std::to_string(dim) + "x" +
                              std::to_string(dim) + " matrix");
  }
  return M;
}

std::vector<VectorXd> u_hist_from_json(const nlohmann::json& j, int d, int m,
                                       const std::string& path) {
  if (!j.is_array() || static_cast<int>(j.size()) != d) {
    throw JsonError(path, "expected an array of " + std::to_string(d) + " inputs (oldest first)");
  }
  std::vector<VectorXd> out;
  out.reserve(j.size());
  for (size_t i = 0; i < j.size(); ++i) {
    const std::string epath = path + "[" + std::to_string(i) + "]";
    VectorXd u;
    if (j[i].is_number()) {
      u = VectorXd::Constant(1, j[i].get<double>());
    } else {
      u = vector_from_json(j[i], epath);
    }
    if (u.size() != m) throw JsonError(epath, "expected an input of dimension " + std::to_string(m));
    out.push_back(std::move(u));
  }
  return out;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

int status_exit_code(sdp::SolveStatus st) {
  switch (st) {
    case sdp::SolveStatus::kOptimal:
    case sdp::SolveStatus::kFeasiblePoint:
      return 0;
    case sdp::SolveStatus::kInfeasible:
      return 2;
    default:
      return 3;
  }
}

}  // namespace

NoiseModel PhiSpec::resolve(int n, int T) const {
  if (sigma) {
    if (*sigma < 0.0) throw JsonError("config.phi.sigma", "sigma must be non-negative");
    return make_sigma_phi(*sigma, n, T);
  }
  if (blocks) {
    if (blocks->n() != n || blocks->T() != T) {
      throw JsonError("config.phi", "noise-bound blocks sized " + std::to_string(blocks->n()) +
                                        "/" + std::to_string(blocks->T()) +
                                        " do not match data dimensions " + std::to_string(n) + "/" +
                                        std::to_string(T));
    }
    return *blocks;
  }
  throw JsonError("config.phi", "specify sigma or the Phi11/Phi12/Phi22 blocks");
}

ExperimentConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw JsonError("config", "expected a JSON object");

  const auto& jp = require_field(j, "plant", "config");
  const MatrixXd A = matrix_from_json(require_field(jp, "A", "config.plant"), "config.plant.A");
  const MatrixXd B = matrix_from_json(require_field(jp, "B", "config.plant"), "config.plant.B");
  const int d = int_from_json(require_field(jp, "d", "config.plant"), "config.plant.d");
  std::optional<DelayPlant> plant;
  try {
    plant.emplace(A, B, d);
  } catch (const std::invalid_argument& e) {
    throw JsonError("config.plant", e.what());
  }
  const int n = plant->n(), m = plant->m();

  const auto& jw = require_field(j, "weights", "config");
  const MatrixXd Q0 =
      square_from_json(require_field(jw, "Q0", "config.weights"), n, "config.weights.Q0");
  const MatrixXd R =
      square_from_json(require_field(jw, "R", "config.weights"), m, "config.weights.R");
  std::vector<MatrixXd> Qi;
  const auto& jq = require_field(jw, "Qd", "config.weights");
  if (jq.is_number()) {
    Qi.assign(d, jq.get<double>() * MatrixXd::Identity(m, m));
  } else if (jq.is_array() && static_cast<int>(jq.size()) == d) {
    for (size_t i = 0; i < jq.size(); ++i) {
      Qi.push_back(square_from_json(jq[i], m, "config.weights.Qd[" + std::to_string(i) + "]"));
    }
  } else {
    throw JsonError("config.weights.Qd", "expected a scalar or an array of " + std::to_string(d) +
                                             " input-penalty blocks");
  }
  std::optional<CostWeights> weights;
  try {
    weights.emplace(Q0, std::move(Qi), R);
  } catch (const std::invalid_argument& e) {
    throw JsonError("config.weights", e.what());
  }

  ExperimentConfig cfg(std::move(*plant), std::move(*weights));

  const auto& jd = require_field(j, "data", "config");
  cfg.T = int_from_json(require_field(jd, "T", "config.data"), "config.data.T");
  if (cfg.T < 1) throw JsonError("config.data.T", "T must be >= 1");
  cfg.t0 = opt_int(jd, "t0", 0, "config.data");

  cfg.input = SinusoidInput{};
  if (jd.contains("input")) {
    const auto& ji = jd.at("input");
    const auto& jt = require_field(ji, "type", "config.data.input");
    if (!jt.is_string()) throw JsonError("config.data.input.type", "expected a string");
    const std::string type = jt.get<std::string>();
    if (type == "sinusoid") {
      SinusoidInput s;
      s.amplitude = opt_number(ji, "amplitude", 1.0, "config.data.input");
      s.angular_rate = opt_number(ji, "angular_rate", 1.0, "config.data.input");
      cfg.input = s;
    } else if (type == "prbs") {
      PrbsInput p;
      p.amplitude = opt_number(ji, "amplitude", 1.0, "config.data.input");
      if (ji.contains("seed")) p.seed = uint_from_json(ji.at("seed"), "config.data.input.seed");
      cfg.input = p;
    } else if (type == "file") {
      FileInput f;
      const auto& jpath = require_field(ji, "path", "config.data.input");
      if (!jpath.is_string()) throw JsonError("config.data.input.path", "expected a string");
      f.path = jpath.get<std::string>();
      cfg.input = f;
    } else {
      throw JsonError("config.data.input.type",
                      "unknown input type '" + type + "' (sinusoid, prbs, file)");
    }
  }

  cfg.noise.covariance = MatrixXd::Zero(n, n);
  if (jd.contains("noise")) {
    const auto& jn = jd.at("noise");
    cfg.noise.covariance = square_from_json(require_field(jn, "covariance", "config.data.noise"), n,
                                            "config.data.noise.covariance");
    const MatrixXd sym_cov = symmetrize(cfg.noise.covariance);
    if ((cfg.noise.covariance - sym_cov).cwiseAbs().maxCoeff() >
            1e-8 * (1.0 + sym_cov.cwiseAbs().maxCoeff()) ||
        min_eigenvalue(sym_cov) < -1e-10 * (1.0 + sym_cov.cwiseAbs().maxCoeff())) {
      throw JsonError("config.data.noise.covariance", "must be symmetric positive semidefinite");
    }
    if (cfg.noise.enabled()) {
      if (!jn.contains("seed")) {
        throw JsonError("config.data.noise.seed", "seed is mandatory when noise is present");
      }
      cfg.noise.seed = uint_from_json(jn.at("seed"), "config.data.noise.seed");
    }
  }

  if (j.contains("phi")) {
    const auto& jf = j.at("phi");
    if (jf.contains("sigma")) {
      cfg.phi.sigma = double_from_json(jf.at("sigma"), "config.phi.sigma");
      if (*cfg.phi.sigma < 0.0) throw JsonError("config.phi.sigma", "sigma must be non-negative");
    } else if (jf.contains("Phi11") || jf.contains("Phi12") || jf.contains("Phi22")) {
      const MatrixXd p11 = matrix_from_json(require_field(jf, "Phi11", "config.phi"), "config.phi.Phi11");
      const MatrixXd p12 = matrix_from_json(require_field(jf, "Phi12", "config.phi"), "config.phi.Phi12");
      const MatrixXd p22 = matrix_from_json(require_field(jf, "Phi22", "config.phi"), "config.phi.Phi22");
      try {
        cfg.phi.blocks.emplace(p11, p12, p22);
      } catch (const std::invalid_argument& e) {
        throw JsonError("config.phi", e.what());
      }
    } else {
      throw JsonError("config.phi", "specify sigma or the Phi11/Phi12/Phi22 blocks");
    }
  }

  cfg.x0 = VectorXd::Zero(n);
  if (jd.contains("x0")) {
    cfg.x0 = vector_from_json(jd.at("x0"), "config.data.x0");
    if (cfg.x0.size() != n) throw JsonError("config.data.x0", "expected dimension " + std::to_string(n));
  }
  if (jd.contains("u_hist")) {
    cfg.u_pre = u_hist_from_json(jd.at("u_hist"), d, m, "config.data.u_hist");
  }

  cfg.sim_x0 = VectorXd::Zero(n);
  cfg.sim_u_pre.assign(d, VectorXd::Zero(m));
  if (j.contains("initial")) {
    const auto& ji = j.at("initial");
    cfg.sim_x0 = vector_from_json(require_field(ji, "x0", "config.initial"), "config.initial.x0");
    if (cfg.sim_x0.size() != n) {
      throw JsonError("config.initial.x0", "expected dimension " + std::to_string(n));
    }
    if (ji.contains("u_hist")) {
      cfg.sim_u_pre = u_hist_from_json(ji.at("u_hist"), d, m, "config.initial.u_hist");
    }
  }
  if (j.contains("simulation")) {
    const auto& js = j.at("simulation");
    cfg.sim_horizon = opt_int(js, "horizon", 50, "config.simulation");
    if (cfg.sim_horizon < 1) throw JsonError("config.simulation.horizon", "horizon must be >= 1");
  }

  if (j.contains("sweep")) {
    const auto& js = j.at("sweep");
    if (js.contains("sigma_grid")) {
      const VectorXd grid = vector_from_json(js.at("sigma_grid"), "config.sweep.sigma_grid");
      for (int i = 0; i < grid.size(); ++i) {
        if (grid[i] < 0.0) throw JsonError("config.sweep.sigma_grid", "sigma values must be >= 0");
        cfg.sigma_grid.push_back(grid[i]);
      }
    } else {
      const double lo = double_from_json(require_field(js, "lo", "config.sweep"), "config.sweep.lo");
      const double hi = double_from_json(require_field(js, "hi", "config.sweep"), "config.sweep.hi");
      const int count = int_from_json(require_field(js, "count", "config.sweep"), "config.sweep.count");
      if (lo < 0.0 || hi < lo) throw JsonError("config.sweep", "need 0 <= lo <= hi");
      if (count < 1) throw JsonError("config.sweep.count", "count must be >= 1");
      for (int i = 0; i < count; ++i) {
        cfg.sigma_grid.push_back(count == 1 ? lo : lo + (hi - lo) * i / (count - 1));
      }
    }
    if (cfg.sigma_grid.empty()) throw JsonError("config.sweep.sigma_grid", "grid must be nonempty");
  }

  if (j.contains("sdp")) {
    const auto& js = j.at("sdp");
    cfg.synth.sdp.tol_gap = opt_number(js, "tol_gap", cfg.synth.sdp.tol_gap, "config.sdp");
    cfg.synth.sdp.tol_feas = opt_number(js, "tol_feas", cfg.synth.sdp.tol_feas, "config.sdp");
    cfg.synth.sdp.max_iter = opt_int(js, "max_iter", cfg.synth.sdp.max_iter, "config.sdp");
    if (js.contains("verbose") && js.at("verbose").is_boolean()) {
      cfg.synth.sdp.verbose = js.at("verbose").get<bool>();
    }
  }
  if (j.contains("lmi")) {
    const auto& js = j.at("lmi");
    cfg.synth.delta_scale = opt_number(js, "delta_scale", cfg.synth.delta_scale, "config.lmi");
    cfg.synth.validation_samples =
        opt_int(js, "validation_samples", cfg.synth.validation_samples, "config.lmi");
    if (js.contains("seed")) cfg.synth.seed = uint_from_json(js.at("seed"), "config.lmi.seed");
    if (js.contains("bisection") && js.at("bisection").is_boolean()) {
      cfg.synth.gamma_via_bisection = js.at("bisection").get<bool>();
    }
    cfg.synth.bisection_rel_tol =
        opt_number(js, "bisection_rel_tol", cfg.synth.bisection_rel_tol, "config.lmi");
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw JsonError("config", "cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw JsonError("config", std::string("parse error in ") + path + ": " + e.what());
  }
  return config_from_json(j);
}

VectorXd input_at(const InputSpec& input, int m, int t) {
  if (const auto* s = std::get_if<SinusoidInput>(&input)) {
    return VectorXd::Constant(m, s->amplitude * std::sin(s->angular_rate * t));
  }
  if (const auto* p = std::get_if<PrbsInput>(&input)) {
    VectorXd u(m);
    for (int k = 0; k < m; ++k) {
      const std::uint64_t h =
          mix64(p->seed ^ mix64(static_cast<std::uint64_t>(static_cast<std::int64_t>(t)) * 1000003ULL +
                                static_cast<std::uint64_t>(k)));
      u[k] = (h & 1ULL) ? p->amplitude : -p->amplitude;
    }
    return u;
  }
  const auto& f = std::get<FileInput>(input);
  static std::map<std::string, std::map<int, VectorXd>> cache;
  auto it = cache.find(f.path);
  if (it == cache.end()) it = cache.emplace(f.path, read_input_csv(f.path)).first;
  const auto& table = it->second;
  const auto row = table.find(t);
  if (row == table.end()) {
    throw std::runtime_error("input file: no row for t = " + std::to_string(t));
  }
  if (row->second.size() != m) {
    throw std::runtime_error("input file: row for t = " + std::to_string(t) +
                             " has wrong input dimension");
  }
  return row->second;
}

GeneratedData generate_data(const ExperimentConfig& cfg) {
  const int n = cfg.plant.n(), m = cfg.plant.m(), d = cfg.plant.d;
  std::vector<VectorXd> u_hist = cfg.u_pre;
  if (u_hist.empty()) {
    for (int t = cfg.t0 - d; t < cfg.t0; ++t) u_hist.push_back(input_at(cfg.input, m, t));
  }
  InputSequence seq;
  seq.reserve(cfg.T);
  for (int t = cfg.t0; t < cfg.t0 + cfg.T; ++t) seq.push_back(input_at(cfg.input, m, t));

  std::vector<VectorXd> noise;
  if (cfg.noise.enabled()) {
    const MatrixXd S = psd_sqrt(symmetrize(cfg.noise.covariance));
    std::mt19937_64 rng(cfg.noise.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    noise.reserve(cfg.T);
    for (int t = 0; t < cfg.T; ++t) {
      VectorXd z(n);
      for (int i = 0; i < n; ++i) z[i] = gauss(rng);
      noise.push_back(S * z);
    }
  }
  GeneratedData out{simulate(cfg.plant, cfg.x0, u_hist, seq, cfg.T, noise, cfg.t0),
                    DataSet{}};
  out.dataset = build_data(out.trajectory, d);
  if (!out.dataset.W_minus) out.dataset.W_minus = MatrixXd::Zero(n, cfg.T);
  return out;
}

nlohmann::json SimulationSummary::to_json() const {
  nlohmann::json j;
  j["spectral_radius"] = spectral_radius;
  j["stable"] = stable;
  j["cost"] = cost;
  j["x0_norm_sq"] = x0_norm_sq;
  j["bound"] = bound ? nlohmann::json(*bound) : nlohmann::json();
  j["bound_holds"] = bound_holds;
  return j;
}

int cmd_generate(const ExperimentConfig& cfg, const std::string& out_dir) {
  const GeneratedData gd = generate_data(cfg);
  fs::create_directories(out_dir);
  const std::string dataset_path = (fs::path(out_dir) / "dataset.json").string();
  const std::string traj_path = (fs::path(out_dir) / "trajectory.csv").string();
  save_dataset(gd.dataset, dataset_path);
  write_trajectory_csv(gd.trajectory, traj_path);
  std::cout << "wrote " << dataset_path << " (T=" << gd.dataset.T << ", n=" << gd.dataset.n
            << ", m=" << gd.dataset.m << ", d=" << gd.dataset.d << ")\n"
            << "wrote " << traj_path << "\n";
  return 0;
}

int cmd_synthesize(const ExperimentConfig& cfg, const std::string& data_path,
                   const std::string& mode, std::optional<double> sigma_override,
                   const std::string& out_dir) {
  SynthesisResult r;
  if (mode == "model") {
    r = solve_model_based(cfg.plant, cfg.weights, GammaMode::minimize(), cfg.synth);
  } else if (mode == "dd" || mode == "stabilize") {
    const DataSet D = data_path.empty() ? generate_data(cfg).dataset : load_dataset(data_path);
    PhiSpec spec = cfg.phi;
    if (sigma_override) spec = PhiSpec{*sigma_override, std::nullopt};
    const NoiseModel phi = spec.resolve(D.n, D.T);
    r = (mode == "dd") ? solve_data_driven(D, phi, cfg.weights, GammaMode::minimize(), cfg.synth)
                       : solve_stabilization_only(D, phi, cfg.synth);
  } else {
    throw std::invalid_argument("unknown mode '" + mode + "' (dd, model, stabilize)");
  }
  fs::create_directories(out_dir);
  const std::string result_path = (fs::path(out_dir) / "result.json").string();
  save_result(r, result_path);
  std::cout << "mode=" << r.mode << " status=" << sdp::to_string(r.status);
  if (r.gamma) std::cout << " gamma=" << format_double(*r.gamma);
  std::cout << "\nwrote " << result_path << "\n";
  if (!r.diag.message.empty()) std::cout << "note: " << r.diag.message << "\n";
  return status_exit_code(r.status);
}

int cmd_simulate(const ExperimentConfig& cfg, const std::string& result_path,
                 const std::string& out_dir) {
  const SynthesisResult r = load_result(result_path);
  if (!r.has_point() || r.K.size() == 0) {
    std::cerr << "result carries no synthesized gain (status " << sdp::to_string(r.status)
              << ")\n";
    return 2;
  }
  if (r.n != cfg.plant.n() || r.m != cfg.plant.m() || r.d != cfg.plant.d) {
    throw std::invalid_argument("result dimensions do not match the configured plant");
  }
  const AugmentedModel model = lift_augmented(cfg.plant);
  const Gain gain{r.K};

  SimulationSummary s;
  s.spectral_radius = spectral_radius(closed_loop(model, gain));
  s.stable = s.spectral_radius < 1.0;
  AugmentedState X0{cfg.sim_x0, cfg.sim_u_pre};
  s.x0_norm_sq = X0.stacked().squaredNorm();

  fs::create_directories(out_dir);
  const std::string summary_path = (fs::path(out_dir) / "summary.json").string();
  if (!s.stable) {
    s.bound_holds = false;
    std::ofstream(summary_path) << s.to_json().dump(2) << "\n";
    std::cerr << "closed loop is unstable on the configured plant (spectral radius "
              << format_double(s.spectral_radius) << ")\n";
    return 3;
  }
  s.cost = evaluate_cost(model, gain, cfg.weights, X0.stacked());
  if (r.gamma) {
    s.bound = *r.gamma * s.x0_norm_sq;
    s.bound_holds = s.cost <= *s.bound + 1e-7 * (1.0 + std::abs(*s.bound));
  }
  const Trajectory traj =
      simulate(cfg.plant, cfg.sim_x0, cfg.sim_u_pre, gain, cfg.sim_horizon, {}, 0);
  const std::string traj_path = (fs::path(out_dir) / "trajectory.csv").string();
  write_trajectory_csv(traj, traj_path);
  std::ofstream(summary_path) << s.to_json().dump(2) << "\n";

  std::cout << "spectral_radius=" << format_double(s.spectral_radius)
            << " cost=" << format_double(s.cost);
  if (s.bound) {
    std::cout << " bound=" << format_double(*s.bound)
              << " bound_holds=" << (s.bound_holds ? "true" : "false");
  }
  std::cout << "\nwrote " << traj_path << "\nwrote " << summary_path << "\n";
  return s.bound_holds ? 0 : 3;
}

int cmd_sweep(const ExperimentConfig& cfg, const std::string& data_path,
              const std::string& out_dir) {
  if (cfg.sigma_grid.empty()) {
    throw JsonError("config.sweep", "sweep requires a sigma grid");
  }
  const DataSet D = data_path.empty() ? generate_data(cfg).dataset : load_dataset(data_path);
  const SweepResult sw = sweep_sigma(D, cfg.weights, cfg.sigma_grid, cfg.synth);

  fs::create_directories(out_dir);
  const std::string csv_path = (fs::path(out_dir) / "sweep.csv").string();
  {
    std::ofstream out(csv_path);
    out << "sigma,status,gamma,set_nonempty\n";
    for (const auto& pt : sw.points) {
      out << format_double(pt.sigma) << "," << sdp::to_string(pt.status) << ",";
      if (pt.gamma) out << format_double(*pt.gamma);
      out << "," << (pt.set_nonempty ? 1 : 0) << "\n";
    }
  }
  nlohmann::json j;
  j["points"] = nlohmann::json::array();
  for (const auto& pt : sw.points) {
    nlohmann::json p;
    p["sigma"] = pt.sigma;
    p["status"] = sdp::to_string(pt.status);
    p["gamma"] = pt.gamma ? nlohmann::json(*pt.gamma) : nlohmann::json();
    p["set_nonempty"] = pt.set_nonempty;
    j["points"].push_back(std::move(p));
  }
  j["feasible_interval"] =
      sw.feasible_interval
          ? nlohmann::json::array({sw.feasible_interval->first, sw.feasible_interval->second})
          : nlohmann::json();
  j["contiguous"] = sw.contiguous;
  j["monotone_violations"] = sw.monotone_violations;
  const std::string json_path = (fs::path(out_dir) / "sweep.json").string();
  std::ofstream(json_path) << j.dump(2) << "\n";

  if (sw.feasible_interval) {
    std::cout << "feasible interval: [" << format_double(sw.feasible_interval->first) << ", "
              << format_double(sw.feasible_interval->second) << "]"
              << (sw.contiguous ? "" : " (non-contiguous)")
              << ", monotone_violations=" << sw.monotone_violations << "\n";
  } else {
    std::cout << "no feasible sigma in the grid\n";
  }
  std::cout << "wrote " << csv_path << "\nwrote " << json_path << "\n";
  return 0;
}

int cmd_check(const ExperimentConfig& cfg, const std::string& data_path,
              std::optional<double> sigma_override) {
  const DataSet D = data_path.empty() ? generate_data(cfg).dataset : load_dataset(data_path);
  D.validate();
  PhiSpec spec = cfg.phi;
  if (sigma_override) spec = PhiSpec{*sigma_override, std::nullopt};
  const NoiseModel phi = spec.resolve(D.n, D.T);
  const PsiForm psi = compute_psi(D, phi);
  const DataDiagnostics diag = diagnose(D, psi);

  std::cout << "regressor_rank=" << diag.regressor_rank << "/" << (D.n + D.m)
            << " full_row_rank=" << (diag.full_row_rank ? "true" : "false") << "\n"
            << "psi22_max_eig=" << format_double(diag.psi22_max_eig)
            << " kernel_ok=" << (diag.kernel_ok ? "true" : "false") << "\n"
            << "set_margin=" << format_double(diag.set_margin)
            << " set_nonempty=" << (diag.set_nonempty ? "true" : "false") << "\n";

  if (D.W_minus) {
    // With the recorded noise, the generating model must itself be consistent.
    const MatrixXd& W = *D.W_minus;
    const MatrixXd bound = symmetrize(phi.Phi11 + phi.Phi12 * W.transpose() +
                                      W * phi.Phi12.transpose() + W * phi.Phi22 * W.transpose());
    std::cout << "noise_bound_margin=" << format_double(min_eigenvalue(bound)) << "\n";
  }
  const auto [Als, Bls] = least_squares_model(D);
  const auto ls = is_consistent(Als, Bls, psi);
  std::cout << "least_squares_consistent=" << (ls.consistent ? "true" : "false")
            << " margin=" << format_double(ls.margin) << "\n";

  // Regularity preflight for the certificate equivalence: the set description
  // must have Psi22 <= 0 with ker(Psi22) inside ker(Psi12), and a bounded set
  // needs Psi22 < 0.
  try {
    slemma::QuadraticSet set(symmetrize(psi.Psi11), psi.Psi12.transpose(), symmetrize(psi.Psi22));
    std::cout << "certificate_preflight=ok\n";
    if (diag.set_nonempty) {
      const auto members = sample_consistent_models(psi, 5, 1);
      double worst = std::numeric_limits<double>::infinity();
      for (const auto& [Am, Bm] : members) {
        worst = std::min(worst, is_consistent(Am, Bm, psi).margin);
      }
      std::cout << "sampled_members=" << members.size()
                << " worst_margin=" << format_double(worst) << "\n";
    }
  } catch (const std::invalid_argument& e) {
    std::cout << "certificate_preflight=failed: " << e.what() << "\n";
  }
  return diag.set_nonempty ? 0 : 2;
}

}  // namespace ddlqr
