#include "ddlqr/plant.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ddlqr {
namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

double psd_tol(const MatrixXd& M) {
  return 1e-8 * (1.0 + M.cwiseAbs().maxCoeff());
}

std::string format_cell(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r' && c != ' ') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

DelayPlant::DelayPlant(MatrixXd A_in, MatrixXd B_in, int d_in)
    : A(std::move(A_in)), B(std::move(B_in)), d(d_in) {
  require(A.rows() > 0 && A.rows() == A.cols(), "DelayPlant: A must be square and nonempty");
  require(B.rows() == A.rows() && B.cols() > 0, "DelayPlant: B must have n rows and m >= 1 columns");
  require(d >= 1, "DelayPlant: delay d must be >= 1");
  require(A.allFinite() && B.allFinite(), "DelayPlant: A, B must be finite");
}

AugmentedModel lift_augmented(const MatrixXd& A, const MatrixXd& B, int d) {
  DelayPlant checked(A, B, d);
  const int n = checked.n(), m = checked.m();
  const int N = n + m * d;
  AugmentedModel out;
  out.n = n;
  out.m = m;
  out.d = d;
  out.A = MatrixXd::Zero(N, N);
  out.B = MatrixXd::Zero(N, m);
  out.A.topLeftCorner(n, n) = A;
  out.A.block(0, n, n, m) = B;  // x_{t+1} picks up u_{t-d}, the oldest slot
  // History slots shift left by one; the newest slot is filled by u_t.
  for (int j = 0; j + 1 < d; ++j) {
    out.A.block(n + j * m, n + (j + 1) * m, m, m) = MatrixXd::Identity(m, m);
  }
  out.B.bottomRows(m) = MatrixXd::Identity(m, m);
  return out;
}

AugmentedModel lift_augmented(const DelayPlant& plant) {
  return lift_augmented(plant.A, plant.B, plant.d);
}

VectorXd AugmentedState::stacked() const {
  const int n = static_cast<int>(x.size());
  const int d = static_cast<int>(u_hist.size());
  const int m = d > 0 ? static_cast<int>(u_hist[0].size()) : 0;
  VectorXd X(n + m * d);
  X.head(n) = x;
  for (int j = 0; j < d; ++j) X.segment(n + j * m, m) = u_hist[j];
  return X;
}

AugmentedState AugmentedState::from_stacked(const VectorXd& X, int n, int m, int d) {
  require(X.size() == n + m * d, "AugmentedState: stacked vector has wrong size");
  AugmentedState s;
  s.x = X.head(n);
  s.u_hist.reserve(d);
  for (int j = 0; j < d; ++j) s.u_hist.push_back(X.segment(n + j * m, m));
  return s;
}

CostWeights::CostWeights(MatrixXd Q0_in, std::vector<MatrixXd> Qi_in, MatrixXd R_in)
    : Q0(std::move(Q0_in)), Qi(std::move(Qi_in)), R(std::move(R_in)) {
  require(Q0.rows() > 0 && Q0.rows() == Q0.cols(), "CostWeights: Q0 must be square");
  require(R.rows() > 0 && R.rows() == R.cols(), "CostWeights: R must be square");
  require(!Qi.empty(), "CostWeights: need one history block per delay step");
  for (const auto& Q : Qi) {
    require(Q.rows() == R.rows() && Q.cols() == R.cols(),
            "CostWeights: history blocks must be m x m");
    require(Q.allFinite() && is_psd(symmetrize(Q), psd_tol(Q)),
            "CostWeights: history blocks must be PSD");
  }
  require(Q0.allFinite() && is_psd(symmetrize(Q0), psd_tol(Q0)), "CostWeights: Q0 must be PSD");
  require(R.allFinite() && min_eigenvalue(symmetrize(R)) > 0.0,
          "CostWeights: R must be positive definite");
}

MatrixXd CostWeights::assemble_Q() const {
  const int N = n() + m() * d();
  MatrixXd Q = MatrixXd::Zero(N, N);
  Q.topLeftCorner(n(), n()) = symmetrize(Q0);
  for (int j = 0; j < d(); ++j) {
    Q.block(n() + j * m(), n() + j * m(), m(), m()) = symmetrize(Qi[j]);
  }
  return Q;
}

MatrixXd closed_loop(const AugmentedModel& model, const Gain& gain) {
  require(gain.K.rows() == model.m && gain.K.cols() == model.dim(),
          "closed_loop: gain must be m x (n+md)");
  return model.A + model.B * gain.K;
}

Trajectory simulate(const DelayPlant& plant, const VectorXd& x0,
                    const std::vector<VectorXd>& u_hist, const InputSource& input,
                    int horizon, const std::vector<VectorXd>& noise, int t0) {
  const int n = plant.n(), m = plant.m(), d = plant.d;
  require(x0.size() == n, "simulate: x0 must have n entries");
  require(static_cast<int>(u_hist.size()) == d, "simulate: need exactly d history inputs");
  for (const auto& u : u_hist) require(u.size() == m, "simulate: history input has wrong size");
  require(horizon >= 1, "simulate: horizon must be >= 1");
  require(noise.empty() || static_cast<int>(noise.size()) == horizon,
          "simulate: noise must be empty or have one entry per step");
  if (const auto* seq = std::get_if<InputSequence>(&input)) {
    require(static_cast<int>(seq->size()) >= horizon,
            "simulate: open-loop input sequence shorter than horizon");
  } else {
    const auto& K = std::get<Gain>(input).K;
    require(K.rows() == m && K.cols() == n + m * d, "simulate: gain must be m x (n+md)");
  }

  Trajectory traj;
  traj.n = n;
  traj.m = m;
  traj.d = d;
  traj.t0 = t0;
  traj.states.reserve(horizon + 1);
  traj.inputs.reserve(horizon + d);
  traj.inputs = u_hist;
  if (!noise.empty()) traj.noise = noise;

  AugmentedState s{x0, u_hist};
  traj.states.push_back(x0);
  for (int k = 0; k < horizon; ++k) {
    VectorXd u;
    if (const auto* seq = std::get_if<InputSequence>(&input)) {
      u = (*seq)[k];
      require(u.size() == m, "simulate: open-loop input has wrong size");
    } else {
      u = std::get<Gain>(input).K * s.stacked();
    }
    VectorXd x_next = plant.A * s.x + plant.B * s.u_hist.front();
    if (!noise.empty()) x_next += noise[k];
    if (!x_next.allFinite()) {
      throw std::runtime_error("simulate: state became non-finite at step " + std::to_string(k + 1));
    }
    s.x = x_next;
    s.u_hist.erase(s.u_hist.begin());
    s.u_hist.push_back(u);
    traj.states.push_back(x_next);
    traj.inputs.push_back(u);
  }
  return traj;
}

double evaluate_cost(const AugmentedModel& model, const Gain& gain,
                     const CostWeights& weights, const VectorXd& X0, CostMethod method,
                     double rel_tol) {
  const int N = model.dim();
  require(X0.size() == N, "evaluate_cost: X0 must have n+md entries");
  require(weights.n() == model.n && weights.m() == model.m && weights.d() == model.d,
          "evaluate_cost: weights do not match model dimensions");
  const MatrixXd Acl = closed_loop(model, gain);
  const double rho = spectral_radius(Acl);
  if (rho >= 1.0 - 1e-12) {
    throw std::domain_error("evaluate_cost: closed loop is not Schur stable, cost diverges (rho = " +
                            std::to_string(rho) + ")");
  }
  const MatrixXd C = symmetrize(weights.assemble_Q() + gain.K.transpose() * weights.R * gain.K);
  if (method == CostMethod::kLyapunovExact) {
    const MatrixXd G = solve_discrete_lyapunov(Acl, C);
    return X0.dot(G * X0);
  }
  // Direct series summation with a geometric tail estimate. The per-step cost
  // eventually decays at least like rho^{2t}; five consecutive small-tail
  // checks guard against transient growth of non-normal closed loops.
  const double r = std::min(rho * rho, 1.0 - 1e-12);
  double J = 0.0;
  VectorXd X = X0;
  int calm_steps = 0;
  const long max_steps = 10'000'000;
  for (long t = 0; t < max_steps; ++t) {
    const double c = X.dot(C * X);
    J += c;
    const double tail = c * r / (1.0 - r);
    if (tail <= rel_tol * std::max(J, 1e-300)) {
      if (++calm_steps >= 5) return J;
    } else {
      calm_steps = 0;
    }
    X = Acl * X;
  }
  throw std::runtime_error("evaluate_cost: truncated sum did not converge");
}

void write_trajectory_csv(const Trajectory& traj, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_trajectory_csv: cannot open " + path);
  out << "t";
  for (int i = 1; i <= traj.n; ++i) out << ",x" << i;
  if (traj.m == 1) {
    out << ",u";
  } else {
    for (int i = 1; i <= traj.m; ++i) out << ",u" << i;
  }
  out << "\n";
  const int T = traj.horizon();
  for (int t = traj.t0 - traj.d; t <= traj.t0 + T; ++t) {
    out << t;
    const int ks = t - traj.t0;  // state index
    for (int i = 0; i < traj.n; ++i) {
      out << ",";
      if (ks >= 0) out << format_cell(traj.states[ks][i]);
    }
    const int ku = t - (traj.t0 - traj.d);  // input index
    for (int i = 0; i < traj.m; ++i) {
      out << ",";
      if (ku < static_cast<int>(traj.inputs.size())) out << format_cell(traj.inputs[ku][i]);
    }
    out << "\n";
  }
}

Trajectory read_trajectory_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_trajectory_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("read_trajectory_csv: empty file");
  auto header = split_csv_line(line);
  if (header.empty() || header[0] != "t") {
    throw std::runtime_error("read_trajectory_csv: header must start with t");
  }
  int n = 0, m = 0;
  size_t idx = 1;
  while (idx < header.size() && header[idx].rfind('x', 0) == 0) {
    ++n;
    ++idx;
  }
  while (idx < header.size() && header[idx].rfind('u', 0) == 0) {
    ++m;
    ++idx;
  }
  if (n == 0 || m == 0 || idx != header.size()) {
    throw std::runtime_error("read_trajectory_csv: header must be t,x1..xn,u1..um");
  }

  struct Row {
    int t;
    std::optional<VectorXd> x, u;
  };
  std::vector<Row> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (static_cast<int>(cells.size()) != 1 + n + m) {
      throw std::runtime_error("read_trajectory_csv: wrong cell count in row '" + line + "'");
    }
    Row row;
    row.t = std::stoi(cells[0]);
    bool has_x = !cells[1].empty(), has_u = !cells[1 + n].empty();
    if (has_x) {
      VectorXd x(n);
      for (int i = 0; i < n; ++i) x[i] = std::stod(cells[1 + i]);
      row.x = x;
    }
    if (has_u) {
      VectorXd u(m);
      for (int i = 0; i < m; ++i) u[i] = std::stod(cells[1 + n + i]);
      row.u = u;
    }
    rows.push_back(std::move(row));
  }
  if (rows.size() < 2) throw std::runtime_error("read_trajectory_csv: no data rows");
  for (size_t k = 1; k < rows.size(); ++k) {
    if (rows[k].t != rows[k - 1].t + 1) {
      throw std::runtime_error("read_trajectory_csv: non-contiguous time column");
    }
  }

  Trajectory traj;
  traj.n = n;
  traj.m = m;
  int first_state = -1;
  for (size_t k = 0; k < rows.size(); ++k) {
    if (rows[k].x) {
      first_state = static_cast<int>(k);
      break;
    }
  }
  if (first_state < 0) throw std::runtime_error("read_trajectory_csv: no state rows");
  traj.d = first_state;
  traj.t0 = rows[first_state].t;
  if (traj.d < 1) throw std::runtime_error("read_trajectory_csv: no input-history rows before t0");
  for (size_t k = 0; k < rows.size(); ++k) {
    const bool is_last = (k + 1 == rows.size());
    if (static_cast<int>(k) >= first_state) {
      if (!rows[k].x) throw std::runtime_error("read_trajectory_csv: missing state after t0");
      traj.states.push_back(*rows[k].x);
    }
    if (!is_last) {
      if (!rows[k].u) throw std::runtime_error("read_trajectory_csv: missing input before final t");
      traj.inputs.push_back(*rows[k].u);
    } else if (rows[k].u) {
      throw std::runtime_error("read_trajectory_csv: unexpected input at final t");
    }
  }
  return traj;
}

}  // namespace ddlqr
