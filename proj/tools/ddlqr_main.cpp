#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "ddlqr/experiment.hpp"
#include "ddlqr/json_io.hpp"

// Exit codes: 0 success, 2 infeasible, 3 solver/numeric failure, 4 config or
// usage error.
int main(int argc, char** argv) {
  CLI::App app{"Data-driven sub-optimal LQR synthesis for input-delay systems"};
  app.require_subcommand(1);

  std::string config_path;
  std::string data_path;
  std::string result_path;
  std::string out_dir = ".";
  std::string mode = "dd";
  std::optional<double> sigma;
  std::optional<std::uint64_t> seed;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "experiment configuration JSON")->required();
    sub->add_option("--out", out_dir, "output directory")->capture_default_str();
    sub->add_option("--seed", seed, "override the data-noise seed");
  };

  auto* gen =
      app.add_subcommand("generate", "run the open-loop experiment and write the dataset");
  add_common(gen);

  auto* synth =
      app.add_subcommand("synthesize", "solve the synthesis program and write the result");
  add_common(synth);
  synth->add_option("--data", data_path, "dataset JSON (generated from config when omitted)");
  synth->add_option("--mode", mode, "dd | model | stabilize")->capture_default_str();
  synth->add_option("--sigma", sigma, "noise-bound sigma override");

  auto* sim = app.add_subcommand("simulate", "closed-loop simulation with cost/bound summary");
  add_common(sim);
  sim->add_option("--result", result_path, "synthesis result JSON")->required();

  auto* sweep = app.add_subcommand("sweep", "solve across the sigma grid and emit the curve");
  add_common(sweep);
  sweep->add_option("--data", data_path, "dataset JSON (generated from config when omitted)");

  auto* check = app.add_subcommand("check", "dataset consistency and certificate preflight");
  add_common(check);
  check->add_option("--data", data_path, "dataset JSON (generated from config when omitted)");
  check->add_option("--sigma", sigma, "noise-bound sigma override");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 4;
  }

  try {
    ddlqr::ExperimentConfig cfg = ddlqr::load_config(config_path);
    if (seed) cfg.noise.seed = *seed;
    if (gen->parsed()) return ddlqr::cmd_generate(cfg, out_dir);
    if (synth->parsed()) return ddlqr::cmd_synthesize(cfg, data_path, mode, sigma, out_dir);
    if (sim->parsed()) return ddlqr::cmd_simulate(cfg, result_path, out_dir);
    if (sweep->parsed()) return ddlqr::cmd_sweep(cfg, data_path, out_dir);
    if (check->parsed()) return ddlqr::cmd_check(cfg, data_path, sigma);
  } catch (const ddlqr::JsonError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 4;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
