#include "ddlqr/synthesis.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <stdexcept>

#include "ddlqr/json_io.hpp"

namespace ddlqr {
namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

// Decision-variable layout shared by the solve drivers: svec(P) first
// (upper triangle, row-major), then L row-major, then the named scalars.
struct VarMap {
  int n = 0, m = 0, d = 0;
  int p0 = 0, nP = 0;
  int l0 = 0, nL = 0;
  int a = -1, e = -1, ep = -1, g = -1;
  int count = 0;

  int N() const { return n + m * d; }

  static VarMap make(int n, int m, int d, bool with_multipliers, bool with_gamma) {
    VarMap vm;
    vm.n = n;
    vm.m = m;
    vm.d = d;
    const int N = vm.N();
    vm.nP = N * (N + 1) / 2;
    vm.l0 = vm.nP;
    vm.nL = m * N;
    int next = vm.l0 + vm.nL;
    if (with_multipliers) {
      vm.a = next++;
      vm.e = next++;
      vm.ep = next++;
    }
    if (with_gamma) vm.g = next++;
    vm.count = next;
    return vm;
  }

  MatrixXd P_of(const VectorXd& y) const {
    const int N_ = N();
    MatrixXd P(N_, N_);
    int k = p0;
    for (int i = 0; i < N_; ++i) {
      for (int j = i; j < N_; ++j) {
        P(i, j) = y[k];
        P(j, i) = y[k];
        ++k;
      }
    }
    return P;
  }

  MatrixXd L_of(const VectorXd& y) const {
    MatrixXd L(m, N());
    for (int r = 0; r < m; ++r) {
      for (int c = 0; c < N(); ++c) L(r, c) = y[l0 + r * N() + c];
    }
    return L;
  }
};

// The constraint matrices are affine in the decision vector, so their
// coefficient expansion is recovered exactly by probing the assembler at the
// origin and at unit vectors; this keeps the solver and the public assembly
// functions structurally identical.
void add_affine_block(sdp::SdpProblem& prob, int nvars,
                      const std::function<MatrixXd(const VectorXd&)>& assemble) {
  const VectorXd zero = VectorXd::Zero(nvars);
  sdp::ConstraintBlock blk;
  blk.F0 = symmetrize(assemble(zero));
  for (int i = 0; i < nvars; ++i) {
    VectorXd e = zero;
    e[i] = 1.0;
    MatrixXd Fi = symmetrize(assemble(e)) - blk.F0;
    if (Fi.cwiseAbs().maxCoeff() > 0.0) blk.terms.push_back({i, std::move(Fi)});
  }
  prob.blocks.push_back(std::move(blk));
}

void add_scalar_floor(sdp::SdpProblem& prob, int var, double floor) {
  sdp::ConstraintBlock blk;
  blk.F0 = MatrixXd::Constant(1, 1, -floor);
  blk.terms.push_back({var, MatrixXd::Constant(1, 1, 1.0)});
  prob.blocks.push_back(std::move(blk));
}

constexpr double kGammaFloor = 1e-12;

MatrixXd gain_from(const MatrixXd& P, const MatrixXd& L) {
  return P.llt().solve(L.transpose()).transpose();
}

}  // namespace

PPartition::PPartition(MatrixXd P_in, int n_in, int m_in, int d_in)
    : P(std::move(P_in)), n(n_in), m(m_in), d(d_in) {
  require(n >= 1 && m >= 1 && d >= 1, "PPartition: n, m, d must be >= 1");
  require(P.rows() == dim() && P.cols() == dim(), "PPartition: P must be (n+md) square");
  const double tol = 1e-8 * (1.0 + P.cwiseAbs().maxCoeff());
  require((P - P.transpose()).cwiseAbs().maxCoeff() <= tol, "PPartition: P must be symmetric");
}

MatrixXd assemble_dd_lmi(const PPartition& Pp, const MatrixXd& L, double alpha, double eps,
                         double eps_prime, const PsiForm& psi, const CostWeights& weights) {
  const int n = Pp.n, m = Pp.m, q = Pp.q(), N = Pp.dim();
  require(psi.n == n && psi.m == m, "assemble_dd_lmi: Psi does not match P partition");
  require(weights.n() == n && weights.m() == m && weights.d() == Pp.d,
          "assemble_dd_lmi: weights do not match P partition");
  require(L.rows() == m && L.cols() == N, "assemble_dd_lmi: L must be m x (n+md)");
  const MatrixXd Rsq = psd_sqrt(symmetrize(weights.R));
  const MatrixXd Qsq = psd_sqrt(weights.assemble_Q());
  BlockMatrix M({n, n + m, q, m, N, m, N});
  M.add_sym(0, 0, symmetrize(Pp.hat_a()) - eps * MatrixXd::Identity(n, n) -
                      alpha * symmetrize(psi.Psi11));
  M.add_sym(0, 1, -alpha * psi.Psi12);
  M.add_sym(0, 2, Pp.hat_b0().transpose());
  M.add_sym(0, 3, Pp.hat_b1().transpose());
  M.add_sym(1, 1, -alpha * symmetrize(psi.Psi22));
  M.add_sym(1, 4, Pp.rows_a());
  M.add_sym(2, 2, symmetrize(Pp.hat_c00()) - eps_prime * MatrixXd::Identity(q, q));
  M.add_sym(2, 3, Pp.hat_c10().transpose());
  M.add_sym(2, 4, Pp.rows_b());
  M.add_sym(3, 3, symmetrize(Pp.hat_c11()) - eps_prime * MatrixXd::Identity(m, m));
  M.add_sym(3, 4, L);
  M.add_sym(4, 4, symmetrize(Pp.P));
  M.add_sym(4, 5, L.transpose() * Rsq);
  M.add_sym(4, 6, Pp.P * Qsq);
  M.add_sym(5, 5, MatrixXd::Identity(m, m));
  M.add_sym(6, 6, MatrixXd::Identity(N, N));
  return M.matrix();
}

MatrixXd assemble_stabilization_lmi(const PPartition& Pp, const MatrixXd& L, double alpha,
                                    double eps, double eps_prime, const PsiForm& psi) {
  const int n = Pp.n, m = Pp.m, q = Pp.q(), N = Pp.dim();
  require(psi.n == n && psi.m == m, "assemble_stabilization_lmi: Psi does not match P partition");
  require(L.rows() == m && L.cols() == N, "assemble_stabilization_lmi: L must be m x (n+md)");
  BlockMatrix M({n, n + m, q, m, N});
  M.add_sym(0, 0, symmetrize(Pp.hat_a()) - eps * MatrixXd::Identity(n, n) -
                      alpha * symmetrize(psi.Psi11));
  M.add_sym(0, 1, -alpha * psi.Psi12);
  M.add_sym(0, 2, Pp.hat_b0().transpose());
  M.add_sym(0, 3, Pp.hat_b1().transpose());
  M.add_sym(1, 1, -alpha * symmetrize(psi.Psi22));
  M.add_sym(1, 4, Pp.rows_a());
  M.add_sym(2, 2, symmetrize(Pp.hat_c00()) - eps_prime * MatrixXd::Identity(q, q));
  M.add_sym(2, 3, Pp.hat_c10().transpose());
  M.add_sym(2, 4, Pp.rows_b());
  M.add_sym(3, 3, symmetrize(Pp.hat_c11()) - eps_prime * MatrixXd::Identity(m, m));
  M.add_sym(3, 4, L);
  M.add_sym(4, 4, symmetrize(Pp.P));
  return M.matrix();
}

std::pair<MatrixXd, MatrixXd> assemble_model_lmis(const AugmentedModel& model,
                                                  const CostWeights& weights, double gamma,
                                                  const MatrixXd& P, const MatrixXd& L) {
  const int N = model.dim(), m = model.m;
  require(weights.n() == model.n && weights.m() == model.m && weights.d() == model.d,
          "assemble_model_lmis: weights do not match model");
  require(P.rows() == N && P.cols() == N, "assemble_model_lmis: P must be N x N");
  require(L.rows() == m && L.cols() == N, "assemble_model_lmis: L must be m x N");
  const MatrixXd Rsq = psd_sqrt(symmetrize(weights.R));
  const MatrixXd Qsq = psd_sqrt(weights.assemble_Q());
  BlockMatrix M({N, N, N, m});
  M.add_sym(0, 0, symmetrize(P));
  M.add_sym(0, 1, model.A * P + model.B * L);
  M.add_sym(1, 1, symmetrize(P));
  M.add_sym(1, 2, P * Qsq);
  M.add_sym(1, 3, L.transpose() * Rsq);
  M.add_sym(2, 2, MatrixXd::Identity(N, N));
  M.add_sym(3, 3, MatrixXd::Identity(m, m));
  return {M.matrix(), assemble_gamma_lmi(P, gamma)};
}

MatrixXd assemble_gamma_lmi(const MatrixXd& P, double gamma) {
  require(P.rows() == P.cols() && P.rows() >= 1, "assemble_gamma_lmi: P must be square");
  const int N = static_cast<int>(P.rows());
  BlockMatrix M({N, N});
  M.add_sym(0, 0, gamma * MatrixXd::Identity(N, N));
  M.add_sym(0, 1, MatrixXd::Identity(N, N));
  M.add_sym(1, 1, symmetrize(P));
  return M.matrix();
}

std::pair<slemma::QuadraticSet, slemma::QmiPair> to_qmi_instance(const PPartition& Pp,
                                                                 const MatrixXd& L,
                                                                 const PsiForm& psi,
                                                                 const CostWeights& weights) {
  const int n = Pp.n, m = Pp.m, N = Pp.dim();
  require(psi.n == n && psi.m == m, "to_qmi_instance: Psi does not match P partition");
  require(L.rows() == m && L.cols() == N, "to_qmi_instance: L must be m x N");
  const MatrixXd Q = weights.assemble_Q();
  const MatrixXd Pi = symmetrize(Pp.P - Pp.P * Q * Pp.P - L.transpose() * weights.R * L);
  Eigen::LLT<MatrixXd> llt(Pi);
  if (llt.info() != Eigen::Success) {
    throw std::domain_error("to_qmi_instance: P - P Q P - L^T R L is not positive definite");
  }
  const MatrixXd Pi_inv = symmetrize(llt.solve(MatrixXd::Identity(N, N)));
  const MatrixXd Pa_rows = Pp.rows_a();
  MatrixXd G(m * Pp.d, N);
  G.topRows(Pp.q()) = Pp.rows_b();
  G.bottomRows(m) = L;
  const MatrixXd Qa = symmetrize(Pa_rows * Pi_inv * Pa_rows.transpose());
  const MatrixXd Qb = G * Pi_inv * Pa_rows.transpose();
  const MatrixXd Qc = symmetrize(G * Pi_inv * G.transpose());
  slemma::QuadraticSet set(symmetrize(psi.Psi11), psi.Psi12.transpose(), symmetrize(psi.Psi22));
  slemma::QmiPair pair(symmetrize(Pp.hat_a()), Pp.hat_b(), symmetrize(Pp.hat_c()), Qa, Qb, Qc);
  return {std::move(set), std::move(pair)};
}

double lyapunov_margin(const MatrixXd& A, const MatrixXd& B, int d, const Gain& gain,
                       const MatrixXd& S, const CostWeights& weights) {
  const AugmentedModel model = lift_augmented(A, B, d);
  const MatrixXd Acl = closed_loop(model, gain);
  const MatrixXd M = Acl.transpose() * S * Acl - S + weights.assemble_Q() +
                     gain.K.transpose() * weights.R * gain.K;
  return max_eigenvalue(symmetrize(M));
}

nlohmann::json result_to_json(const SynthesisResult& r) {
  nlohmann::json j;
  j["mode"] = r.mode;
  j["status"] = sdp::to_string(r.status);
  j["n"] = r.n;
  j["m"] = r.m;
  j["d"] = r.d;
  j["gamma"] = r.gamma ? nlohmann::json(*r.gamma) : nlohmann::json();
  j["K"] = r.K.size() > 0 ? to_json(r.K) : nlohmann::json();
  j["P"] = r.P.size() > 0 ? to_json(r.P) : nlohmann::json();
  j["L"] = r.L.size() > 0 ? to_json(r.L) : nlohmann::json();
  j["alpha"] = r.alpha ? nlohmann::json(*r.alpha) : nlohmann::json();
  j["eps"] = r.eps ? nlohmann::json(*r.eps) : nlohmann::json();
  j["eps_prime"] = r.eps_prime ? nlohmann::json(*r.eps_prime) : nlohmann::json();
  nlohmann::json d;
  d["main_lmi_margin"] = r.diag.main_lmi_margin;
  d["gamma_lmi_margin"] = r.diag.gamma_lmi_margin;
  d["p_margin"] = r.diag.p_margin;
  d["solver_gap"] = r.diag.solver_gap;
  d["solver_residual"] = r.diag.solver_residual;
  d["phase1_margin"] = r.diag.phase1_margin;
  d["iterations"] = r.diag.iterations;
  d["set_nonempty"] = r.diag.set_nonempty;
  d["set_margin"] = r.diag.set_margin;
  d["regressor_rank"] = r.diag.regressor_rank;
  d["message"] = r.diag.message;
  j["diagnostics"] = std::move(d);
  return j;
}

SynthesisResult result_from_json(const nlohmann::json& j) {
  SynthesisResult r;
  r.mode = require_field(j, "mode", "result").get<std::string>();
  const std::string st = require_field(j, "status", "result").get<std::string>();
  if (st == "optimal") {
    r.status = sdp::SolveStatus::kOptimal;
  } else if (st == "feasible") {
    r.status = sdp::SolveStatus::kFeasiblePoint;
  } else if (st == "infeasible") {
    r.status = sdp::SolveStatus::kInfeasible;
  } else {
    r.status = sdp::SolveStatus::kNumericalTrouble;
  }
  r.n = int_from_json(require_field(j, "n", "result"), "result.n");
  r.m = int_from_json(require_field(j, "m", "result"), "result.m");
  r.d = int_from_json(require_field(j, "d", "result"), "result.d");
  auto opt_num = [&](const char* key) -> std::optional<double> {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return double_from_json(j.at(key), std::string("result.") + key);
  };
  r.gamma = opt_num("gamma");
  r.alpha = opt_num("alpha");
  r.eps = opt_num("eps");
  r.eps_prime = opt_num("eps_prime");
  auto opt_mat = [&](const char* key) -> MatrixXd {
    if (!j.contains(key) || j.at(key).is_null()) return MatrixXd();
    return matrix_from_json(j.at(key), std::string("result.") + key);
  };
  r.K = opt_mat("K");
  r.P = opt_mat("P");
  r.L = opt_mat("L");
  if (j.contains("diagnostics") && j.at("diagnostics").is_object()) {
    const auto& d = j.at("diagnostics");
    auto num = [&](const char* key, double dflt) {
      return d.contains(key) && d.at(key).is_number() ? d.at(key).get<double>() : dflt;
    };
    r.diag.main_lmi_margin = num("main_lmi_margin", 0.0);
    r.diag.gamma_lmi_margin = num("gamma_lmi_margin", 0.0);
    r.diag.p_margin = num("p_margin", 0.0);
    r.diag.solver_gap = num("solver_gap", 0.0);
    r.diag.solver_residual = num("solver_residual", 0.0);
    r.diag.phase1_margin = num("phase1_margin", 0.0);
    r.diag.iterations = static_cast<int>(num("iterations", 0));
    r.diag.set_margin = num("set_margin", 0.0);
    r.diag.regressor_rank = static_cast<int>(num("regressor_rank", 0));
    if (d.contains("set_nonempty") && d.at("set_nonempty").is_boolean()) {
      r.diag.set_nonempty = d.at("set_nonempty").get<bool>();
    }
    if (d.contains("message") && d.at("message").is_string()) {
      r.diag.message = d.at("message").get<std::string>();
    }
  }
  return r;
}

SynthesisResult load_result(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw JsonError("result", "cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw JsonError("result", std::string("parse error in ") + path + ": " + e.what());
  }
  return result_from_json(j);
}

void save_result(const SynthesisResult& r, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_result: cannot open " + path);
  out << result_to_json(r).dump(2) << "\n";
}

namespace {

// Fills solver/point diagnostics common to all drivers and extracts the
// matrices when the solve produced a usable point.
void extract_point(SynthesisResult& r, const VarMap& vm, const sdp::SolveReport& rep) {
  r.status = rep.status;
  r.diag.solver_gap = rep.rel_gap;
  r.diag.solver_residual = rep.residual;
  r.diag.phase1_margin = rep.phase1_margin;
  r.diag.iterations = rep.iterations;
  r.diag.message = rep.message;
  if (rep.status != sdp::SolveStatus::kOptimal && rep.status != sdp::SolveStatus::kFeasiblePoint) {
    return;
  }
  r.P = symmetrize(vm.P_of(rep.y));
  r.L = vm.L_of(rep.y);
  r.K = gain_from(r.P, r.L);
  r.diag.p_margin = min_eigenvalue(r.P);
  if (vm.a >= 0) {
    r.alpha = std::max(rep.y[vm.a], 0.0);
    r.eps = rep.y[vm.e];
    r.eps_prime = rep.y[vm.ep];
  }
  if (vm.g >= 0) r.gamma = rep.y[vm.g];
}

}  // namespace

ValidationReport validate_result(const SynthesisResult& r, const DataSet& D,
                                 const NoiseModel& phi, const CostWeights& weights,
                                 int samples, std::uint64_t seed) {
  ValidationReport rep;
  if (!r.has_point()) {
    rep.failures.push_back("no synthesis point to validate");
    return rep;
  }
  const PsiForm psi = compute_psi(D, phi);
  const PPartition Pp(r.P, r.n, r.m, r.d);
  const double scale = 1.0 + psi.spectral_norm() + r.P.cwiseAbs().maxCoeff();
  const double tol = 1e-7 * scale;

  if (r.alpha) {
    rep.main_lmi_margin =
        min_eigenvalue(assemble_dd_lmi(Pp, r.L, *r.alpha, *r.eps, *r.eps_prime, psi, weights));
  } else {
    rep.main_lmi_margin = min_eigenvalue(assemble_stabilization_lmi(Pp, r.L, 0.0, 0.0, 0.0, psi));
  }
  if (rep.main_lmi_margin < -tol) rep.failures.push_back("main LMI is not PSD at the solution");

  rep.kp_residual = (r.K * r.P - r.L).cwiseAbs().maxCoeff();
  if (rep.kp_residual > 1e-6 * (1.0 + r.L.cwiseAbs().maxCoeff())) {
    rep.failures.push_back("K P = L residual too large");
  }

  const MatrixXd S = symmetrize(r.P.llt().solve(MatrixXd::Identity(Pp.dim(), Pp.dim())));
  if (r.gamma) {
    rep.gamma_lmi_margin = min_eigenvalue(assemble_gamma_lmi(r.P, *r.gamma));
    rep.bound_slack = *r.gamma - max_eigenvalue(S);
    if (rep.gamma_lmi_margin < -tol) rep.failures.push_back("gamma LMI is not PSD");
    if (rep.bound_slack < -1e-7 * (1.0 + *r.gamma)) {
      rep.failures.push_back("lambda_max(P^{-1}) exceeds gamma");
    }
  }

  // Lyapunov decrease at the least-squares model and across the set.
  const Gain gain{r.K};
  const auto [Als, Bls] = least_squares_model(D);
  const auto ls_consistency = is_consistent(Als, Bls, psi);
  rep.lyap_margin_ls = lyapunov_margin(Als, Bls, r.d, gain, S, weights);
  if (ls_consistency.consistent && rep.lyap_margin_ls >= 0.0) {
    rep.failures.push_back("Lyapunov decrease fails at the least-squares model");
  }
  rep.lyap_margin_worst = rep.lyap_margin_ls;
  const auto models = sample_consistent_models(psi, samples, seed);
  for (const auto& [A, B] : models) {
    const double margin = lyapunov_margin(A, B, r.d, gain, S, weights);
    rep.lyap_margin_worst = std::max(rep.lyap_margin_worst, margin);
  }
  rep.models_checked = static_cast<int>(models.size());
  if (rep.lyap_margin_worst >= 0.0) {
    rep.failures.push_back("Lyapunov decrease fails at a sampled consistent model");
  }
  rep.ok = rep.failures.empty();
  return rep;
}

namespace {

SynthesisResult solve_dd_impl(const DataSet& D, const NoiseModel& phi, const CostWeights& weights,
                              const GammaMode& mode, const SynthesisOptions& opts,
                              bool stabilization) {
  D.validate();
  require(weights.n() == D.n && weights.m() == D.m && weights.d() == D.d,
          "solve_data_driven: weights do not match data dimensions");
  SynthesisResult r;
  r.mode = stabilization ? "stabilize" : "dd";
  r.n = D.n;
  r.m = D.m;
  r.d = D.d;
  const PsiForm psi = compute_psi(D, phi);
  const DataDiagnostics dd = diagnose(D, psi);
  r.diag.set_nonempty = dd.set_nonempty;
  r.diag.set_margin = dd.set_margin;
  r.diag.regressor_rank = dd.regressor_rank;
  if (!dd.set_nonempty) {
    r.status = sdp::SolveStatus::kInfeasible;
    r.diag.message = "consistency set is empty (margin " + std::to_string(dd.set_margin) + ")";
    return r;
  }

  const double delta = opts.delta_scale * (1.0 + psi.spectral_norm());
  const bool minimize_gamma = !stabilization && mode.kind == GammaMode::Kind::kMinimize;
  const double fixed_gamma = mode.fixed_value;

  auto build_problem = [&](bool with_gamma_var, double gamma_value) {
    VarMap vm = VarMap::make(D.n, D.m, D.d, /*with_multipliers=*/true, with_gamma_var);
    sdp::SdpProblem prob;
    prob.c = VectorXd::Zero(vm.count);
    if (with_gamma_var) prob.c[vm.g] = 1.0;
    add_affine_block(prob, vm.count, [&](const VectorXd& y) {
      const PPartition Pp(vm.P_of(y), D.n, D.m, D.d);
      if (stabilization) {
        return assemble_stabilization_lmi(Pp, vm.L_of(y), y[vm.a], y[vm.e], y[vm.ep], psi);
      }
      return assemble_dd_lmi(Pp, vm.L_of(y), y[vm.a], y[vm.e], y[vm.ep], psi, weights);
    });
    if (!stabilization) {
      add_affine_block(prob, vm.count, [&](const VectorXd& y) {
        const double g = with_gamma_var ? y[vm.g] : gamma_value;
        return assemble_gamma_lmi(vm.P_of(y), g);
      });
    }
    add_affine_block(prob, vm.count, [&](const VectorXd& y) {
      const int N = vm.N();
      return MatrixXd(vm.P_of(y) - delta * MatrixXd::Identity(N, N));
    });
    add_scalar_floor(prob, vm.a, 0.0);
    add_scalar_floor(prob, vm.e, delta);
    add_scalar_floor(prob, vm.ep, delta);
    if (with_gamma_var) add_scalar_floor(prob, vm.g, kGammaFloor);
    return std::make_pair(std::move(prob), vm);
  };

  sdp::SolveReport rep;
  VarMap vm_used;
  if (stabilization) {
    // Pure feasibility: the solver's returned point is used as-is, with no
    // secondary objective shaping the gain.
    auto [prob, vm] = build_problem(false, 0.0);
    rep = sdp::find_strictly_feasible(prob, opts.sdp);
    vm_used = vm;
  } else if (!minimize_gamma) {
    require(fixed_gamma > 0.0, "solve_data_driven: fixed gamma must be positive");
    // The level is certified through the joint program: the minimizing path
    // stops at the first strictly feasible iterate whose gamma reaches the
    // level, so success always carries an interior exhibited point, while a
    // converged optimum above the level refutes it.
    auto [prob, vm] = build_problem(true, 0.0);
    rep = sdp::minimize(prob, opts.sdp, fixed_gamma);
    if (rep.status == sdp::SolveStatus::kOptimal) {
      if (rep.objective <= fixed_gamma * (1.0 + 1e-9)) {
        rep.status = sdp::SolveStatus::kFeasiblePoint;
      } else {
        rep.status = sdp::SolveStatus::kInfeasible;
        rep.message = "optimal gamma " + std::to_string(rep.objective) +
                      " exceeds the requested level " + std::to_string(fixed_gamma);
      }
    }
    vm_used = vm;
  } else if (opts.gamma_via_bisection) {
    // Cross-check path: log-space bisection on gamma. Each probe re-runs the
    // joint minimization from a cold start and stops as soon as an interior
    // iterate reaches the probe level, so a "feasible" verdict always carries
    // an exhibited strictly feasible point, while an "infeasible" verdict
    // means an independent solve converged to an optimum above the probe.
    auto [probe_prob, probe_vm] = build_problem(true, 0.0);
    double gamma_estimate = -1.0;
    bool tried_above = false, tried_below = false;
    enum class Verdict { kFeasible, kInfeasible, kEmpty, kTrouble };
    auto probe = [&](double g) {
      sdp::SolveReport rr = sdp::minimize(probe_prob, opts.sdp, g);
      Verdict v = Verdict::kTrouble;
      if (rr.status == sdp::SolveStatus::kFeasiblePoint && rr.objective <= g * (1.0 + 1e-12)) {
        v = Verdict::kFeasible;
      } else if (rr.status == sdp::SolveStatus::kOptimal) {
        gamma_estimate = rr.objective;
        tried_above = tried_below = false;
        v = rr.objective <= g ? Verdict::kFeasible : Verdict::kInfeasible;
      } else if (rr.status == sdp::SolveStatus::kInfeasible) {
        // Gamma is a free variable of the probe, so phase-1 infeasibility
        // rules out every level at once.
        v = Verdict::kEmpty;
      }
      return std::make_pair(v, std::move(rr));
    };
    double hi = 1.0;
    auto [v_hi, rep_hi] = probe(hi);
    int grows = 0;
    while (v_hi == Verdict::kInfeasible && grows++ < 12) {
      hi = gamma_estimate > hi ? gamma_estimate * (1.0 + 2.0 * opts.bisection_rel_tol)
                               : hi * 8.0;
      std::tie(v_hi, rep_hi) = probe(hi);
    }
    if (v_hi != Verdict::kFeasible) {
      r.status = v_hi == Verdict::kTrouble ? sdp::SolveStatus::kNumericalTrouble
                                           : sdp::SolveStatus::kInfeasible;
      r.diag.message = "bisection: no feasible point found up to gamma = " + std::to_string(hi) +
                       " (" + rep_hi.message + ")";
      return r;
    }
    double lo = kGammaFloor;
    const double guard = 1.0 + 0.1 * opts.bisection_rel_tol;
    int probes = 0;
    while (hi / lo > 1.0 + opts.bisection_rel_tol && probes++ < 96) {
      double mid = std::sqrt(lo * hi);
      if (gamma_estimate > lo && gamma_estimate < hi) {
        // A converged probe located the optimum; aim once just above and
        // once just below it to close the bracket quickly, then fall back
        // to geometric splitting.
        const double above = gamma_estimate * (1.0 + 2.0 * opts.bisection_rel_tol);
        const double below = gamma_estimate / (1.0 + 2.0 * opts.bisection_rel_tol);
        if (!tried_above && above < hi / guard && above > lo * guard) {
          mid = above;
          tried_above = true;
        } else if (!tried_below && below > lo * guard && below < hi / guard) {
          mid = below;
          tried_below = true;
        }
      }
      auto [v_mid, rep_mid] = probe(mid);
      if (v_mid == Verdict::kFeasible) {
        hi = mid;
        rep_hi = std::move(rep_mid);
      } else if (v_mid == Verdict::kEmpty) {
        break;
      } else {
        // Numerical trouble at a probe is treated as "not exhibited": the
        // bracket keeps only levels with certified points above it.
        lo = mid;
      }
    }
    rep = std::move(rep_hi);
    rep.status = sdp::SolveStatus::kOptimal;
    vm_used = probe_vm;
    extract_point(r, vm_used, rep);
    r.diag.message = "gamma via bisection (relative tolerance " +
                     std::to_string(opts.bisection_rel_tol) +
                     "; exhibited point at gamma = " + std::to_string(rep.objective) + ")";
  } else {
    auto [prob, vm] = build_problem(true, 0.0);
    rep = sdp::minimize(prob, opts.sdp);
    vm_used = vm;
  }
  if (!(minimize_gamma && opts.gamma_via_bisection)) {
    extract_point(r, vm_used, rep);
    if (!stabilization && !minimize_gamma && r.has_point()) r.gamma = fixed_gamma;
  }
  if (!r.has_point()) return r;

  // Point-level diagnostics and set-wide validation.
  const PPartition Pp(r.P, r.n, r.m, r.d);
  if (stabilization) {
    r.diag.main_lmi_margin =
        min_eigenvalue(assemble_stabilization_lmi(Pp, r.L, *r.alpha, *r.eps, *r.eps_prime, psi));
    const MatrixXd S = symmetrize(r.P.llt().solve(MatrixXd::Identity(Pp.dim(), Pp.dim())));
    const auto models = sample_consistent_models(psi, opts.validation_samples, opts.seed);
    double worst_decay = -std::numeric_limits<double>::infinity();
    for (const auto& [A, B] : models) {
      const MatrixXd Acl = closed_loop(lift_augmented(A, B, r.d), Gain{r.K});
      worst_decay = std::max(worst_decay, max_eigenvalue(symmetrize(
                                              Acl.transpose() * S * Acl - S)));
    }
    if (worst_decay >= 0.0) {
      r.status = sdp::SolveStatus::kNumericalTrouble;
      r.diag.message += "; Lyapunov decrease fails at a sampled model (margin " +
                        std::to_string(worst_decay) + ")";
    }
    return r;
  }
  r.diag.main_lmi_margin =
      min_eigenvalue(assemble_dd_lmi(Pp, r.L, *r.alpha, *r.eps, *r.eps_prime, psi, weights));
  if (r.gamma) r.diag.gamma_lmi_margin = min_eigenvalue(assemble_gamma_lmi(r.P, *r.gamma));
  const ValidationReport val =
      validate_result(r, D, phi, weights, opts.validation_samples, opts.seed);
  if (!val.ok) {
    r.status = sdp::SolveStatus::kNumericalTrouble;
    std::string msg = "; post-validation failed:";
    for (const auto& f : val.failures) msg += " [" + f + "]";
    r.diag.message += msg;
  }
  return r;
}

}  // namespace

SynthesisResult solve_data_driven(const DataSet& D, const NoiseModel& phi,
                                  const CostWeights& weights, const GammaMode& mode,
                                  const SynthesisOptions& opts) {
  return solve_dd_impl(D, phi, weights, mode, opts, /*stabilization=*/false);
}

SynthesisResult solve_stabilization_only(const DataSet& D, const NoiseModel& phi,
                                         const SynthesisOptions& opts) {
  // Weights are irrelevant for pure stabilization; pass unit weights sized off
  // the data (never touched by the stabilization LMI).
  CostWeights unit(MatrixXd::Identity(D.n, D.n),
                   std::vector<MatrixXd>(D.d, MatrixXd::Identity(D.m, D.m)),
                   MatrixXd::Identity(D.m, D.m));
  return solve_dd_impl(D, phi, unit, GammaMode::minimize(), opts, /*stabilization=*/true);
}

SynthesisResult solve_model_based(const DelayPlant& plant, const CostWeights& weights,
                                  const GammaMode& mode, const SynthesisOptions& opts) {
  require(weights.n() == plant.n() && weights.m() == plant.m() && weights.d() == plant.d,
          "solve_model_based: weights do not match plant dimensions");
  const AugmentedModel model = lift_augmented(plant);
  SynthesisResult r;
  r.mode = "model";
  r.n = plant.n();
  r.m = plant.m();
  r.d = plant.d;
  r.diag.message = "model-based synthesis";
  const double delta = opts.delta_scale;
  const bool minimize_gamma = mode.kind == GammaMode::Kind::kMinimize;

  VarMap vm = VarMap::make(r.n, r.m, r.d, /*with_multipliers=*/false, minimize_gamma);
  sdp::SdpProblem prob;
  prob.c = VectorXd::Zero(vm.count);
  if (minimize_gamma) prob.c[vm.g] = 1.0;
  add_affine_block(prob, vm.count, [&](const VectorXd& y) {
    return assemble_model_lmis(model, weights, 1.0, vm.P_of(y), vm.L_of(y)).first;
  });
  add_affine_block(prob, vm.count, [&](const VectorXd& y) {
    const double g = minimize_gamma ? y[vm.g] : mode.fixed_value;
    return assemble_gamma_lmi(vm.P_of(y), g);
  });
  add_affine_block(prob, vm.count, [&](const VectorXd& y) {
    const int N = vm.N();
    return MatrixXd(vm.P_of(y) - delta * MatrixXd::Identity(N, N));
  });
  if (minimize_gamma) add_scalar_floor(prob, vm.g, kGammaFloor);

  sdp::SolveReport rep =
      minimize_gamma ? sdp::minimize(prob, opts.sdp) : sdp::find_strictly_feasible(prob, opts.sdp);
  extract_point(r, vm, rep);
  if (!minimize_gamma && r.has_point()) r.gamma = mode.fixed_value;
  if (!r.has_point()) return r;

  const auto [lmi1, lmi2] = assemble_model_lmis(model, weights, *r.gamma, r.P, r.L);
  r.diag.main_lmi_margin = min_eigenvalue(lmi1);
  r.diag.gamma_lmi_margin = min_eigenvalue(lmi2);
  const MatrixXd S = symmetrize(r.P.llt().solve(MatrixXd::Identity(vm.N(), vm.N())));
  const double lyap = lyapunov_margin(plant.A, plant.B, plant.d, Gain{r.K}, S, weights);
  const double scale = 1.0 + r.P.cwiseAbs().maxCoeff();
  if (lyap >= 0.0 || r.diag.main_lmi_margin < -1e-7 * scale) {
    r.status = sdp::SolveStatus::kNumericalTrouble;
    r.diag.message += "; post-validation failed (Lyapunov margin " + std::to_string(lyap) + ")";
  }
  return r;
}

SweepResult sweep_sigma(const DataSet& D, const CostWeights& weights,
                        const std::vector<double>& sigma_grid, const SynthesisOptions& opts) {
  require(!sigma_grid.empty(), "sweep_sigma: empty grid");
  SweepResult out;
  out.points.reserve(sigma_grid.size());
  for (double sigma : sigma_grid) {
    const NoiseModel phi = make_sigma_phi(sigma, D.n, D.T);
    SynthesisResult r = solve_data_driven(D, phi, weights, GammaMode::minimize(), opts);
    SweepPoint pt;
    pt.sigma = sigma;
    pt.status = r.status;
    pt.gamma = r.gamma;
    pt.set_nonempty = r.diag.set_nonempty;
    out.points.push_back(pt);
  }
  // Feasible interval endpoints, contiguity, and monotonicity of gamma.
  int first = -1, last = -1;
  for (size_t i = 0; i < out.points.size(); ++i) {
    const auto& pt = out.points[i];
    const bool feas = pt.gamma.has_value() && (pt.status == sdp::SolveStatus::kOptimal ||
                                               pt.status == sdp::SolveStatus::kFeasiblePoint);
    if (feas) {
      if (first < 0) first = static_cast<int>(i);
      last = static_cast<int>(i);
    }
  }
  if (first >= 0) {
    out.feasible_interval = {out.points[first].sigma, out.points[last].sigma};
    double prev_gamma = -std::numeric_limits<double>::infinity();
    for (int i = first; i <= last; ++i) {
      if (!out.points[i].gamma) {
        out.contiguous = false;
        continue;
      }
      const double g = *out.points[i].gamma;
      if (g < prev_gamma * (1.0 - 1e-6)) ++out.monotone_violations;
      prev_gamma = std::max(prev_gamma, g);
    }
  }
  return out;
}

}  // namespace ddlqr
