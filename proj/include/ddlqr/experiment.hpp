#pragma once
// Experiment driver: JSON configuration, synthetic data generation, synthesis
// entry points, closed-loop simulation, and sigma sweeps. This is the layer
// the command-line tool calls into; every command is also usable from tests.

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "ddlqr/data.hpp"
#include "ddlqr/plant.hpp"
#include "ddlqr/synthesis.hpp"

namespace ddlqr {

// Open-loop excitation applied while recording data. The signal covers
// t = t0 - d .. t0 + T - 1 so the first sample already has a full history.
struct SinusoidInput {
  double amplitude = 1.0;
  double angular_rate = 1.0;
};
struct PrbsInput {
  double amplitude = 1.0;
  std::uint64_t seed = 0;
};
struct FileInput {
  std::string path;
};
using InputSpec = std::variant<SinusoidInput, PrbsInput, FileInput>;

struct NoiseSpec {
  MatrixXd covariance;  // n x n, PSD; zero matrix means noiseless
  std::uint64_t seed = 0;
  bool enabled() const { return covariance.size() > 0 && covariance.cwiseAbs().maxCoeff() > 0.0; }
};

struct PhiSpec {
  // Either a scalar sigma (expanded per dataset dimensions) or explicit blocks.
  std::optional<double> sigma;
  std::optional<NoiseModel> blocks;
  NoiseModel resolve(int n, int T) const;
};

struct ExperimentConfig {
  DelayPlant plant;
  int T = 0;
  int t0 = 0;
  InputSpec input;
  NoiseSpec noise;
  PhiSpec phi;
  CostWeights weights;
  VectorXd x0;                  // data-collection initial state
  std::vector<VectorXd> u_pre;  // inputs u_{t0-d},...,u_{t0-1}, oldest first
  VectorXd sim_x0;              // simulation initial state (defaults to x0)
  std::vector<VectorXd> sim_u_pre;
  int sim_horizon = 50;
  std::vector<double> sigma_grid;
  SynthesisOptions synth;

  ExperimentConfig(DelayPlant plant_in, CostWeights weights_in)
      : plant(std::move(plant_in)), weights(std::move(weights_in)) {}
};

// Parses and validates a config document; errors carry the offending field
// path (e.g. "config.data.input.amplitude").
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);

// Evaluates the configured input signal at discrete time t.
VectorXd input_at(const InputSpec& input, int m, int t);

// Runs the open-loop data-collection experiment and returns the recorded
// trajectory together with the extracted dataset.
struct GeneratedData {
  Trajectory trajectory;
  DataSet dataset;
};
GeneratedData generate_data(const ExperimentConfig& cfg);

// Closed-loop simulation summary for cmd_simulate.
struct SimulationSummary {
  double spectral_radius = 0.0;
  bool stable = false;
  double cost = 0.0;          // exact closed-loop cost from X0
  double x0_norm_sq = 0.0;    // squared norm of the stacked initial state
  std::optional<double> bound;  // gamma * |X0|^2 when the result carries gamma
  bool bound_holds = true;
  nlohmann::json to_json() const;
};

// Command implementations. Each returns the process exit code contract:
// 0 success, 2 infeasible, 3 numeric/instability failure. Config and I/O
// errors are thrown (JsonError / std::invalid_argument -> exit 4 in the CLI,
// std::runtime_error / std::domain_error -> exit 3).
int cmd_generate(const ExperimentConfig& cfg, const std::string& out_dir);
int cmd_synthesize(const ExperimentConfig& cfg, const std::string& data_path,
                   const std::string& mode, std::optional<double> sigma_override,
                   const std::string& out_dir);
int cmd_simulate(const ExperimentConfig& cfg, const std::string& result_path,
                 const std::string& out_dir);
int cmd_sweep(const ExperimentConfig& cfg, const std::string& data_path,
              const std::string& out_dir);
int cmd_check(const ExperimentConfig& cfg, const std::string& data_path,
              std::optional<double> sigma_override);

}  // namespace ddlqr
