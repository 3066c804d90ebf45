#include "ddlqr/sdp.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <stdexcept>

namespace ddlqr::sdp {
namespace {

constexpr double kVarBound = 1e7;   // phase-1 box on the (scaled) variables

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

// Largest a with V + a dV > 0, given the Cholesky factor of V.
double max_step(const Eigen::LLT<MatrixXd>& llt, const MatrixXd& dV) {
  const auto& L = llt.matrixL();
  MatrixXd W = L.solve(dV);
  W = L.solve(MatrixXd(W.transpose()));
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(W), Eigen::EigenvaluesOnly);
  const double lam_min = es.eigenvalues().minCoeff();
  if (lam_min >= -1e-14) return std::numeric_limits<double>::infinity();
  return -1.0 / lam_min;
}

struct ScaledProblem {
  SdpProblem p;        // equilibrated and variable-scaled
  VectorXd var_scale;  // y_original = y_scaled / var_scale
};

ScaledProblem equilibrate(const SdpProblem& in) {
  ScaledProblem out;
  out.p = in;
  const int k = in.num_vars();
  // Per-block diagonal congruence D F D from row magnitudes.
  for (auto& blk : out.p.blocks) {
    const int dim = blk.dim();
    VectorXd h = VectorXd::Zero(dim);
    auto absorb = [&](const MatrixXd& F) {
      for (int r = 0; r < dim; ++r) h[r] = std::max(h[r], F.row(r).cwiseAbs().maxCoeff());
    };
    absorb(blk.F0);
    for (const auto& t : blk.terms) absorb(t.F);
    VectorXd dscale(dim);
    for (int r = 0; r < dim; ++r) {
      dscale[r] = 1.0 / std::sqrt(std::max(h[r], 1e-12));
      dscale[r] = std::min(dscale[r], 1e6);
    }
    auto congruence = [&](MatrixXd& F) {
      F = dscale.asDiagonal() * F * dscale.asDiagonal();
    };
    congruence(blk.F0);
    for (auto& t : blk.terms) congruence(t.F);
  }
  // Per-variable scaling to unit peak coefficient.
  out.var_scale = VectorXd::Ones(k);
  VectorXd peak = VectorXd::Zero(k);
  for (const auto& blk : out.p.blocks) {
    for (const auto& t : blk.terms) {
      peak[t.var] = std::max(peak[t.var], t.F.cwiseAbs().maxCoeff());
    }
  }
  for (int i = 0; i < k; ++i) {
    require(peak[i] > 0.0, "sdp: variable " + std::to_string(i) + " appears in no block");
    out.var_scale[i] = peak[i];
  }
  for (auto& blk : out.p.blocks) {
    for (auto& t : blk.terms) t.F /= out.var_scale[t.var];
  }
  for (int i = 0; i < k; ++i) out.p.c[i] /= out.var_scale[i];
  return out;
}

struct IpmOutcome {
  VectorXd y;
  bool converged = false;
  bool early = false;   // stopped by the early-exit predicate
  bool stalled = false;
  int iterations = 0;
  double rel_gap = 0.0;
  double residual = 0.0;
};

// Core predictor-corrector loop on an equilibrated problem. `y` must be
// strictly feasible on entry. Maintains S_b = F_b(y) exactly (dual side) and
// a PSD X (primal side); the Schur system is the HKM one,
//   M_ij = sum_b tr(F_i S^-1 F_j X),  rhs_i = mu g_i - c_i (- corrector term).
IpmOutcome run_ipm(const SdpProblem& p, VectorXd y,
                   const std::function<bool(const VectorXd&)>& early_exit,
                   const SolveOptions& opts) {
  const int k = p.num_vars();
  const int nblocks = static_cast<int>(p.blocks.size());
  int n_tot = 0;
  for (const auto& b : p.blocks) n_tot += b.dim();

  auto eval_S = [&](const VectorXd& yy, std::vector<MatrixXd>& S) {
    for (int b = 0; b < nblocks; ++b) {
      S[b] = p.blocks[b].F0;
      for (const auto& t : p.blocks[b].terms) S[b] += yy[t.var] * t.F;
      S[b] = symmetrize(S[b]);
    }
  };

  std::vector<MatrixXd> S(nblocks), X(nblocks), Sinv(nblocks);
  std::vector<Eigen::LLT<MatrixXd>> lltS(nblocks);
  eval_S(y, S);
  for (int b = 0; b < nblocks; ++b) {
    lltS[b].compute(S[b]);
    if (lltS[b].info() != Eigen::Success) {
      throw std::logic_error("sdp: interior-point start is not strictly feasible");
    }
    // X = S^-1 puts the initial complementarity exactly at mu = 1.
    X[b] = symmetrize(lltS[b].solve(MatrixXd::Identity(S[b].rows(), S[b].cols())));
  }

  IpmOutcome out;
  out.y = y;
  const double c_norm = 1.0 + p.c.cwiseAbs().maxCoeff();

  for (int it = 0; it < opts.max_iter; ++it) {
    out.iterations = it;
    for (int b = 0; b < nblocks; ++b) {
      Sinv[b] = symmetrize(lltS[b].solve(MatrixXd::Identity(S[b].rows(), S[b].cols())));
    }
    double gap = 0.0;
    for (int b = 0; b < nblocks; ++b) gap += X[b].cwiseProduct(S[b]).sum();
    const double mu = gap / n_tot;
    const double pobj = p.c.dot(y);
    double dobj = 0.0;
    for (int b = 0; b < nblocks; ++b) dobj -= p.blocks[b].F0.cwiseProduct(X[b]).sum();
    VectorXd resid = p.c;
    for (int b = 0; b < nblocks; ++b) {
      for (const auto& t : p.blocks[b].terms) resid[t.var] -= t.F.cwiseProduct(X[b]).sum();
    }
    out.rel_gap = gap / (1.0 + std::abs(pobj) + std::abs(dobj));
    out.residual = resid.cwiseAbs().maxCoeff() / c_norm;
    out.y = y;
    if (opts.verbose) {
      std::fprintf(stderr, "  ipm it %3d  pobj % .6e  dobj % .6e  gap %.2e  res %.2e\n", it, pobj,
                   dobj, out.rel_gap, out.residual);
    }
    if (early_exit && early_exit(y)) {
      out.early = true;
      return out;
    }
    if (out.rel_gap <= opts.tol_gap && out.residual <= opts.tol_feas) {
      out.converged = true;
      return out;
    }

    // Schur matrix and the mu-direction vector g.
    MatrixXd M = MatrixXd::Zero(k, k);
    VectorXd g = VectorXd::Zero(k);
    for (int b = 0; b < nblocks; ++b) {
      const auto& terms = p.blocks[b].terms;
      std::vector<MatrixXd> U(terms.size());
      for (size_t j = 0; j < terms.size(); ++j) {
        U[j].noalias() = Sinv[b] * terms[j].F * X[b];
        g[terms[j].var] += terms[j].F.cwiseProduct(Sinv[b]).sum();
      }
      for (size_t i = 0; i < terms.size(); ++i) {
        for (size_t j = 0; j < terms.size(); ++j) {
          M(terms[i].var, terms[j].var) += terms[i].F.cwiseProduct(U[j]).sum();
        }
      }
    }
    Eigen::FullPivLU<MatrixXd> lu(M);
    auto solve_refined = [&](const VectorXd& rhs) {
      VectorXd dy = lu.solve(rhs);
      dy += lu.solve(rhs - M * dy);
      return dy;
    };

    // A stall with the duality measure already at the floating-point floor is
    // convergence for practical purposes (the dual residual often plateaus a
    // hair above tol_feas while the gap keeps shrinking).
    auto stall_return = [&]() -> IpmOutcome& {
      out.stalled = true;
      out.converged =
          out.rel_gap <= 10.0 * opts.tol_gap && out.residual <= 100.0 * opts.tol_feas;
      return out;
    };

    std::vector<Eigen::LLT<MatrixXd>> lltX(nblocks);
    bool x_ok = true;
    for (int b = 0; b < nblocks; ++b) {
      lltX[b].compute(X[b]);
      if (lltX[b].info() != Eigen::Success) x_ok = false;
    }
    if (!x_ok) {
      return stall_return();
    }

    // Predictor: affine direction toward mu = 0.
    const VectorXd dy_aff = solve_refined(-p.c);
    std::vector<MatrixXd> dS_aff(nblocks), dX_aff(nblocks);
    double ap_aff = 1.0, ad_aff = 1.0;
    for (int b = 0; b < nblocks; ++b) {
      dS_aff[b] = MatrixXd::Zero(S[b].rows(), S[b].cols());
      for (const auto& t : p.blocks[b].terms) dS_aff[b] += dy_aff[t.var] * t.F;
      dX_aff[b] = symmetrize(-X[b] - Sinv[b] * dS_aff[b] * X[b]);
      ap_aff = std::min(ap_aff, max_step(lltX[b], dX_aff[b]));
      ad_aff = std::min(ad_aff, max_step(lltS[b], dS_aff[b]));
    }
    double mu_aff = 0.0;
    for (int b = 0; b < nblocks; ++b) {
      mu_aff += (X[b] + ap_aff * dX_aff[b]).cwiseProduct(S[b] + ad_aff * dS_aff[b]).sum();
    }
    mu_aff = std::max(mu_aff / n_tot, 0.0);
    const double sigma = std::clamp(std::pow(mu_aff / mu, 3.0), 1e-6, 0.8);
    const double mu_t = sigma * mu;

    // Corrector with the Mehrotra second-order term.
    VectorXd rhs = -p.c;
    std::vector<MatrixXd> H(nblocks);
    for (int b = 0; b < nblocks; ++b) {
      H[b].noalias() = Sinv[b] * dS_aff[b] * dX_aff[b];
      for (const auto& t : p.blocks[b].terms) {
        rhs[t.var] += mu_t * t.F.cwiseProduct(Sinv[b]).sum() - t.F.cwiseProduct(H[b]).sum();
      }
    }
    const VectorXd dy = solve_refined(rhs);
    std::vector<MatrixXd> dS(nblocks), dX(nblocks);
    double ap = 1.0, ad = 1.0;
    for (int b = 0; b < nblocks; ++b) {
      dS[b] = MatrixXd::Zero(S[b].rows(), S[b].cols());
      for (const auto& t : p.blocks[b].terms) dS[b] += dy[t.var] * t.F;
      dX[b] = symmetrize(mu_t * Sinv[b] - X[b] - Sinv[b] * dS[b] * X[b] - H[b]);
      ap = std::min(ap, max_step(lltX[b], dX[b]));
      ad = std::min(ad, max_step(lltS[b], dS[b]));
    }
    const double tau = it < 2 ? 0.90 : (out.rel_gap > 1e-4 ? 0.96 : 0.995);
    ap = std::min(1.0, tau * ap);
    ad = std::min(1.0, tau * ad);
    if (ap < 1e-9 && ad < 1e-9) {
      return stall_return();
    }

    // Dual step with Cholesky backtracking against roundoff at the boundary.
    VectorXd y_next;
    std::vector<MatrixXd> S_next(nblocks);
    std::vector<Eigen::LLT<MatrixXd>> llt_next(nblocks);
    bool accepted = false;
    for (int tries = 0; tries < 40 && !accepted; ++tries) {
      y_next = y + ad * dy;
      eval_S(y_next, S_next);
      accepted = true;
      for (int b = 0; b < nblocks && accepted; ++b) {
        llt_next[b].compute(S_next[b]);
        if (llt_next[b].info() != Eigen::Success) accepted = false;
      }
      if (!accepted) ad *= 0.5;
    }
    if (!accepted) {
      return stall_return();
    }
    y = y_next;
    S = S_next;
    lltS = llt_next;
    for (int b = 0; b < nblocks; ++b) X[b] = symmetrize(X[b] + ap * dX[b]);
    out.y = y;
  }
  return out;  // iteration cap
}

struct Phase1Setup {
  SdpProblem p;  // augmented with the margin variable and variable bounds
  VectorXd y0;
  int t_var = 0;
};

// min t  s.t.  S_b(y) + t I >= 0,  t >= -margin_cap,  |y_i| <= kVarBound.
// Strictly feasible for any y by taking t large.
Phase1Setup make_phase1(const SdpProblem& scaled, const VectorXd& y_start, double margin_cap) {
  Phase1Setup ph;
  const int k = scaled.num_vars();
  ph.t_var = k;
  ph.p = scaled;
  ph.p.c = VectorXd::Zero(k + 1);
  ph.p.c[k] = 1.0;
  for (auto& blk : ph.p.blocks) {
    blk.terms.push_back({k, MatrixXd::Identity(blk.dim(), blk.dim())});
  }
  auto scalar_block = [&](double f0, int var, double coeff) {
    ConstraintBlock blk;
    blk.F0 = MatrixXd::Constant(1, 1, f0);
    blk.terms.push_back({var, MatrixXd::Constant(1, 1, coeff)});
    ph.p.blocks.push_back(std::move(blk));
  };
  scalar_block(margin_cap, k, 1.0);
  for (int i = 0; i < k; ++i) {
    scalar_block(kVarBound, i, -1.0);
    scalar_block(kVarBound, i, 1.0);
  }
  ph.y0 = VectorXd::Zero(k + 1);
  ph.y0.head(k) = y_start;
  double worst = 0.0;
  for (const auto& blk : scaled.blocks) {
    MatrixXd Sb = blk.F0;
    for (const auto& t : blk.terms) Sb += y_start[t.var] * t.F;
    worst = std::min(worst, min_eigenvalue(symmetrize(Sb)));
  }
  ph.y0[k] = -worst + 1.0;
  return ph;
}

SolveReport finalize(const ScaledProblem& sp, const SdpProblem& original, const IpmOutcome& oc,
                     SolveStatus status, double phase1_margin, int extra_iters,
                     const std::string& message) {
  SolveReport rep;
  rep.status = status;
  rep.y = oc.y.head(original.num_vars()).cwiseQuotient(sp.var_scale);
  rep.objective = original.c.dot(rep.y);
  rep.phase1_margin = phase1_margin;
  rep.iterations = oc.iterations + extra_iters;
  rep.rel_gap = oc.rel_gap;
  rep.residual = oc.residual;
  rep.message = message;
  return rep;
}

// Shared phase-1 driver; `to_optimality` disables the early margin exit.
SolveReport phase1_report(const SdpProblem& p, const SolveOptions& opts, bool to_optimality,
                          ScaledProblem* sp_out, IpmOutcome* oc_out) {
  p.validate();
  ScaledProblem sp = equilibrate(p);
  Phase1Setup ph = make_phase1(sp.p, VectorXd::Zero(p.num_vars()), opts.margin_cap);
  std::function<bool(const VectorXd&)> early;
  if (!to_optimality) {
    early = [&](const VectorXd& yy) { return yy[ph.t_var] < -opts.feas_margin; };
  }
  IpmOutcome oc = run_ipm(ph.p, ph.y0, early, opts);
  const double margin = -oc.y[ph.t_var];
  if (sp_out) *sp_out = sp;
  if (oc_out) *oc_out = oc;

  SolveStatus status;
  std::string msg;
  if (margin > 0.0 && (oc.early || oc.converged || margin > opts.feas_margin)) {
    status = SolveStatus::kFeasiblePoint;
    msg = "phase 1 found a strictly feasible point (margin " + std::to_string(margin) + ")";
  } else if (oc.converged && margin <= 0.0) {
    status = SolveStatus::kInfeasible;
    msg = "phase 1 optimal margin is " + std::to_string(margin) + "; no strictly feasible point";
  } else {
    status = SolveStatus::kNumericalTrouble;
    msg = oc.stalled ? "phase 1 stalled" : "phase 1 hit the iteration cap";
  }
  return finalize(sp, p, oc, status, margin, 0, msg);
}

}  // namespace

const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::kOptimal: return "optimal";
    case SolveStatus::kFeasiblePoint: return "feasible";
    case SolveStatus::kInfeasible: return "infeasible";
    case SolveStatus::kNumericalTrouble: return "numerical_trouble";
  }
  return "unknown";
}

void SdpProblem::validate() const {
  require(num_vars() >= 1, "sdp: need at least one variable");
  require(!blocks.empty(), "sdp: need at least one block");
  require(c.allFinite(), "sdp: objective must be finite");
  for (const auto& blk : blocks) {
    require(blk.F0.rows() == blk.F0.cols() && blk.F0.rows() >= 1, "sdp: F0 must be square");
    require(blk.F0.allFinite(), "sdp: F0 must be finite");
    const double tol0 = 1e-9 * (1.0 + blk.F0.cwiseAbs().maxCoeff());
    require((blk.F0 - blk.F0.transpose()).cwiseAbs().maxCoeff() <= tol0, "sdp: F0 must be symmetric");
    for (const auto& t : blk.terms) {
      require(t.var >= 0 && t.var < num_vars(), "sdp: term variable index out of range");
      require(t.F.rows() == blk.F0.rows() && t.F.cols() == blk.F0.cols(),
              "sdp: term shape does not match block");
      require(t.F.allFinite(), "sdp: term must be finite");
      const double tolt = 1e-9 * (1.0 + t.F.cwiseAbs().maxCoeff());
      require((t.F - t.F.transpose()).cwiseAbs().maxCoeff() <= tolt, "sdp: term must be symmetric");
    }
  }
}

SolveReport find_strictly_feasible(const SdpProblem& p, const SolveOptions& opts) {
  return phase1_report(p, opts, /*to_optimality=*/false, nullptr, nullptr);
}

SolveReport max_margin_point(const SdpProblem& p, const SolveOptions& opts) {
  SolveReport rep = phase1_report(p, opts, /*to_optimality=*/true, nullptr, nullptr);
  if (rep.status == SolveStatus::kFeasiblePoint) rep.status = SolveStatus::kOptimal;
  return rep;
}

namespace {

SolveReport minimize_impl(const SdpProblem& p, const SolveOptions& opts, const double* cutoff) {
  p.validate();
  ScaledProblem sp = equilibrate(p);
  Phase1Setup ph = make_phase1(sp.p, VectorXd::Zero(p.num_vars()), opts.margin_cap);
  auto early = [&](const VectorXd& yy) { return yy[ph.t_var] < -opts.feas_margin; };
  IpmOutcome oc1 = run_ipm(ph.p, ph.y0, early, opts);
  const double margin = -oc1.y[ph.t_var];
  if (!(margin > 0.0 && (oc1.early || oc1.converged || margin > opts.feas_margin))) {
    if (oc1.converged && margin <= 0.0) {
      return finalize(sp, p, oc1, SolveStatus::kInfeasible, margin, 0,
                      "phase 1 optimal margin is " + std::to_string(margin));
    }
    return finalize(sp, p, oc1, SolveStatus::kNumericalTrouble, margin, 0,
                    oc1.stalled ? "phase 1 stalled" : "phase 1 hit the iteration cap");
  }

  std::function<bool(const VectorXd&)> stop;
  if (cutoff) {
    // Iterates are strictly feasible throughout, so crossing the cutoff
    // certifies the optimum from above.
    stop = [&](const VectorXd& yy) {
      return p.c.dot(yy.cwiseQuotient(sp.var_scale)) <= *cutoff;
    };
  }
  IpmOutcome oc2 = run_ipm(sp.p, oc1.y.head(p.num_vars()), stop, opts);
  SolveStatus status;
  std::string msg;
  if (oc2.early) {
    status = SolveStatus::kFeasiblePoint;
    msg = "stopped at the objective cutoff with a strictly feasible point";
  } else if (oc2.converged) {
    status = SolveStatus::kOptimal;
    msg = "converged";
  } else if (oc2.rel_gap <= 10.0 * opts.tol_gap && oc2.residual <= 100.0 * opts.tol_feas) {
    // Stalled at the floating-point floor with the duality measure already
    // tiny: the point is optimal for practical purposes.
    status = SolveStatus::kOptimal;
    msg = "converged (stall within 10x gap / 100x residual tolerance)";
  } else if (oc2.rel_gap < 1e-5) {
    status = SolveStatus::kFeasiblePoint;
    msg = "phase 2 stopped early (gap " + std::to_string(oc2.rel_gap) + "), point is feasible";
  } else {
    status = SolveStatus::kNumericalTrouble;
    msg = oc2.stalled ? "phase 2 stalled" : "phase 2 hit the iteration cap";
  }
  return finalize(sp, p, oc2, status, margin, oc1.iterations, msg);
}

}  // namespace

SolveReport minimize(const SdpProblem& p, const SolveOptions& opts) {
  return minimize_impl(p, opts, nullptr);
}

SolveReport minimize(const SdpProblem& p, const SolveOptions& opts, double objective_cutoff) {
  return minimize_impl(p, opts, &objective_cutoff);
}

}  // namespace ddlqr::sdp
