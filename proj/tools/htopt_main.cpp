// Command-line front end: single runs, sweeps over horizon grids,
// prescription printing, the invariant verification suite, and artifact
// regeneration from stored raw rows.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "htopt/config.hpp"
#include "htopt/harness.hpp"
#include "htopt/report.hpp"
#include "htopt/verify.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitVerifyFailed = 1;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

int cmd_run(const std::string& config_path, const std::string& out_dir,
            std::uint64_t seed_base) {
  htopt::SweepConfig cfg = htopt::parse_config_file(config_path);
  htopt::ProblemInstance inst = htopt::build_instance(cfg);
  double sigma = htopt::analytic_sigma(htopt::build_noise(cfg));

  htopt::Algorithm alg = cfg.sweep.algorithms.front();
  long T = cfg.sweep.t_grid.front();
  htopt::CellParams cp = htopt::cell_params(cfg, inst, sigma, alg, T);
  htopt::HyperParams hp;
  hp.beta = cp.beta;
  hp.clip = cp.clip;
  hp.eta = cp.eta;
  hp.horizon = T;
  htopt::RunOptions opts;
  opts.diagnostics = cfg.sweep.diagnostics;

  std::uint64_t seed =
      cfg.sweep.seed_list.empty() ? seed_base : cfg.sweep.seed_list.front();
  std::uint64_t stream = htopt::derive_stream_seed(seed, static_cast<std::uint64_t>(T));
  htopt::Trajectory traj = htopt::run(alg, inst, hp, stream, opts);

  htopt::ordered_json j = htopt::trajectory_sidecar(traj);
  j["params_source"] = cp.source;
  std::cout << j.dump(2) << "\n";

  if (!out_dir.empty()) {
    htopt::emit_trajectory(traj, out_dir);
    std::cerr << "wrote trajectory files to " << out_dir << "\n";
  }
  return kExitOk;
}

int cmd_sweep(const std::string& config_path, const std::string& out_dir, int workers,
              std::uint64_t seed_base) {
  htopt::SweepConfig cfg = htopt::parse_config_file(config_path);
  htopt::SweepResult res = htopt::sweep(cfg, workers, seed_base);
  std::string dir = out_dir.empty() ? cfg.output.dir : out_dir;
  auto written = htopt::emit_report(res, dir);
  for (const auto& path : written) std::cerr << "wrote " << path << "\n";

  htopt::ordered_json j;
  j["rows"] = res.raw.size();
  j["cells"] = res.aggregate.size();
  if (!res.fits.empty()) {
    htopt::ordered_json fits;
    for (const auto& af : res.fits) {
      htopt::ordered_json e;
      e["slope"] = af.fit.slope;
      if (af.theoretical_slope) e["theoretical_slope"] = *af.theoretical_slope;
      fits[htopt::algorithm_token(af.algorithm)] = e;
    }
    j["rate_fits"] = fits;
  }
  std::cout << j.dump(2) << "\n";
  return kExitOk;
}

int cmd_params(const std::string& config_path) {
  htopt::SweepConfig cfg = htopt::parse_config_file(config_path);
  htopt::ProblemInstance inst = htopt::build_instance(cfg);
  double sigma = htopt::analytic_sigma(htopt::build_noise(cfg));

  htopt::ordered_json rows = htopt::ordered_json::array();
  for (htopt::Algorithm alg : cfg.sweep.algorithms) {
    for (long T : cfg.sweep.t_grid) {
      htopt::CellParams cp = htopt::cell_params(cfg, inst, sigma, alg, T);
      htopt::ordered_json e;
      e["algorithm"] = htopt::algorithm_token(alg);
      e["T"] = T;
      e["source"] = cp.source;
      e["beta"] = cp.beta;
      e["clip"] = cp.clip;
      e["eta"] = cp.eta;
      if (cp.predicted_bound > 0.0) e["predicted_avg_grad_bound"] = cp.predicted_bound;
      rows.push_back(e);
    }
  }
  htopt::ordered_json j;
  j["sigma"] = sigma;
  j["L"] = inst.objective().smoothness;
  j["delta1"] = inst.delta1();
  j["delta"] = cfg.sweep.delta;
  j["p"] = cfg.noise.p;
  j["params"] = rows;
  std::cout << j.dump(2) << "\n";
  return kExitOk;
}

int cmd_verify(const std::string& out_dir, std::uint64_t seed_base) {
  htopt::ordered_json rep = htopt::run_verify_suite(seed_base);
  std::cout << rep.dump(2) << "\n";
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    htopt::detail::write_file(std::filesystem::path(out_dir) / "verify.json",
                              rep.dump(2) + "\n");
  }
  return rep["pass"].get<bool>() ? kExitOk : kExitVerifyFailed;
}

int cmd_report(const std::string& dir) {
  htopt::SweepResult res = htopt::load_raw(dir);
  auto written = htopt::emit_report(res, dir);
  for (const auto& path : written) std::cerr << "wrote " << path << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"heavy-tail optimization test bench"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  int workers = 1;
  std::uint64_t seed_base = 0;

  auto* sub_run = app.add_subcommand("run", "run a single trajectory and print its summary");
  sub_run->add_option("--config", config_path, "config file (key/value or JSON)")->required();
  sub_run->add_option("--out", out_dir, "directory for trajectory CSV/JSON");
  sub_run->add_option("--seed-base", seed_base, "base seed");

  auto* sub_sweep = app.add_subcommand("sweep", "run the full (algorithm, T, seed) grid");
  sub_sweep->add_option("--config", config_path, "config file (key/value or JSON)")->required();
  sub_sweep->add_option("--out", out_dir, "output directory (overrides output.dir)");
  sub_sweep->add_option("--workers", workers, "worker threads")->check(CLI::PositiveNumber);
  sub_sweep->add_option("--seed-base", seed_base, "base seed");

  auto* sub_verify = app.add_subcommand("verify", "run the analysis invariant suite");
  sub_verify->add_option("--out", out_dir, "directory for verify.json");
  sub_verify->add_option("--seed-base", seed_base, "base seed");

  auto* sub_params = app.add_subcommand("params", "print prescribed parameters per cell");
  sub_params->add_option("--config", config_path, "config file (key/value or JSON)")->required();

  auto* sub_report = app.add_subcommand("report", "re-emit artifacts from stored raw rows");
  sub_report->add_option("--out", out_dir, "directory holding raw.csv and manifest.json")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (sub_run->parsed()) return cmd_run(config_path, out_dir, seed_base);
    if (sub_sweep->parsed()) return cmd_sweep(config_path, out_dir, workers, seed_base);
    if (sub_verify->parsed()) return cmd_verify(out_dir, seed_base);
    if (sub_params->parsed()) return cmd_params(config_path);
    return cmd_report(out_dir);
  } catch (const htopt::ConfigError& e) {
    std::cerr << "error(config): " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error(config): " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error(runtime): " << e.what() << "\n";
    return kExitRuntime;
  }
}
