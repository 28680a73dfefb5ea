#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "htopt/report.hpp"

using namespace htopt;
namespace fs = std::filesystem;

namespace {

const char* kSweepText = R"(
[problem]
kind = linear-perturbation
eigenvalues = 1, 4
x1 = 1, 1

[noise]
family = pareto
p = 2
alpha = 3
scale = 1

[sweep]
algorithms = alg1, alg2
t_grid = 32, 64, 128
seeds = 3
)";

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "htopt-report-tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("emitting a report twice produces byte-identical artifacts", "[report]") {
  SweepConfig cfg = parse_config_text(kSweepText);
  SweepResult res = sweep(cfg, 1, 11);

  fs::path a = fresh_dir("twice-a");
  fs::path b = fresh_dir("twice-b");
  emit_report(res, a.string());
  emit_report(res, b.string());
  for (const char* name : {"raw.csv", "aggregate.csv", "summary.json", "manifest.json",
                           "plot_alg1.csv", "plot_alg2.csv", "chart.svg"}) {
    INFO(name);
    REQUIRE(slurp(a / name) == slurp(b / name));
  }
}

TEST_CASE("csv artifacts carry their documented headers", "[report]") {
  SweepConfig cfg = parse_config_text(kSweepText);
  SweepResult res = sweep(cfg, 1, 11);

  std::string raw = raw_csv(res);
  REQUIRE(raw.rfind("algorithm,T,seed,avg_grad_norm,min_grad_norm,final_gap,max_x_norm,"
                    "envelope_violated,n_clipped,n_skipped\n",
                    0) == 0);
  size_t raw_lines = static_cast<size_t>(std::count(raw.begin(), raw.end(), '\n'));
  REQUIRE(raw_lines == 1 + res.raw.size());
  REQUIRE(raw.find("alg1,32,11,") != std::string::npos);

  std::string agg = aggregate_csv(res);
  REQUIRE(agg.rfind("algorithm,T,n_seeds,mean_avg_grad_norm,quantile_avg_grad_norm,"
                    "mean_final_gap,max_x_norm,violation_fraction\n",
                    0) == 0);

  std::string plot = plot_csv(res, Algorithm::momentum);
  REQUIRE(plot.rfind("log2_T,T,mean_avg_grad_norm,quantile_avg_grad_norm\n", 0) == 0);
  REQUIRE(plot.find("5,32,") != std::string::npos);
  REQUIRE(std::count(plot.begin(), plot.end(), '\n') == 4);
}

TEST_CASE("summary carries parameters, aggregates and a fit per algorithm", "[report]") {
  SweepConfig cfg = parse_config_text(kSweepText);
  SweepResult res = sweep(cfg, 1, 11);
  ordered_json j = summary_json(res);
  REQUIRE(j["metric"] == "avg_grad_norm");
  REQUIRE(j["quantile_level"].get<double>() == 0.9);
  REQUIRE(j["algorithms"].size() == 2);
  REQUIRE(j["params"].size() == 6);
  REQUIRE(j["aggregate"].size() == 6);
  REQUIRE(j.contains("rate_fits"));
  REQUIRE(j["rate_fits"].contains("alg1"));
  REQUIRE(j["rate_fits"].contains("alg2"));
  REQUIRE(j["rate_fits"]["alg1"].contains("theoretical_slope"));
  REQUIRE(j["params"][0].contains("predicted_avg_grad_bound"));
}

TEST_CASE("short grids omit the rate fits block", "[report]") {
  std::string text = kSweepText;
  size_t at = text.find("t_grid = 32, 64, 128");
  text.replace(at, 20, "t_grid = 32, 64");
  SweepResult res = sweep(parse_config_text(text), 1, 11);
  ordered_json j = summary_json(res);
  REQUIRE(!j.contains("rate_fits"));
}

TEST_CASE("chart is deterministic geometry with one legend entry per algorithm",
          "[report]") {
  SweepConfig cfg = parse_config_text(kSweepText);
  SweepResult res = sweep(cfg, 1, 11);
  std::string svg = chart_svg(res);
  REQUIRE(svg.rfind("<svg xmlns", 0) == 0);
  REQUIRE(svg.find(">alg1<") != std::string::npos);
  REQUIRE(svg.find(">alg2<") != std::string::npos);
  REQUIRE(svg.find("#1f6fb2") != std::string::npos);
  REQUIRE(svg.find("#c4452c") != std::string::npos);
  // Two polylines, one per algorithm series.
  size_t count = 0;
  for (size_t pos = svg.find("<polyline"); pos != std::string::npos;
       pos = svg.find("<polyline", pos + 1))
    ++count;
  REQUIRE(count == 2);
  REQUIRE(svg == chart_svg(res));
}

TEST_CASE("trajectory artifacts expose the canonical columns", "[report]") {
  SweepConfig cfg = parse_config_text(kSweepText);
  ProblemInstance inst = build_instance(cfg);
  HyperParams hp;
  hp.beta = 0.9;
  hp.clip = 5.0;
  hp.eta = 0.01;
  hp.horizon = 40;
  Trajectory traj = run(Algorithm::momentum, inst, hp, 17);

  std::string csv = trajectory_csv(traj);
  REQUIRE(csv.rfind("t,F,grad_norm,d_norm,g_norm,clipped_flag,skipped_flag\n", 0) == 0);
  REQUIRE(std::count(csv.begin(), csv.end(), '\n') == 41);
  REQUIRE(csv.find("\n1,") != std::string::npos);
  REQUIRE(csv.find("\n40,") != std::string::npos);

  ordered_json side = trajectory_sidecar(traj);
  REQUIRE(side["algorithm"] == "alg1");
  REQUIRE(side["T"].get<long>() == 40);
  REQUIRE(side["beta"].get<double>() == 0.9);
  REQUIRE(side["seed"].get<std::uint64_t>() == 17);
  REQUIRE(side["delta1"].get<double>() == 2.5);
  REQUIRE(side.contains("avg_grad_norm"));
  REQUIRE(side.contains("n_skipped"));

  fs::path dir = fresh_dir("trajectory");
  emit_trajectory(traj, dir.string());
  REQUIRE(fs::exists(dir / "trajectory_alg1.csv"));
  REQUIRE(fs::exists(dir / "trajectory_alg1.json"));
}

TEST_CASE("stored raw rows reload into the same aggregates", "[report]") {
  SweepConfig cfg = parse_config_text(kSweepText);
  SweepResult res = sweep(cfg, 1, 11);
  fs::path dir = fresh_dir("roundtrip");
  emit_report(res, dir.string());

  SweepResult loaded = load_raw(dir.string());
  REQUIRE(loaded.raw.size() == res.raw.size());
  REQUIRE(loaded.aggregate.size() == res.aggregate.size());
  for (size_t i = 0; i < res.aggregate.size(); ++i) {
    REQUIRE(loaded.aggregate[i].mean_avg_grad_norm == res.aggregate[i].mean_avg_grad_norm);
    REQUIRE(loaded.aggregate[i].quantile_avg_grad_norm ==
            res.aggregate[i].quantile_avg_grad_norm);
    REQUIRE(loaded.aggregate[i].mean_final_gap == res.aggregate[i].mean_final_gap);
    REQUIRE(loaded.aggregate[i].max_x_norm == res.aggregate[i].max_x_norm);
    REQUIRE(loaded.aggregate[i].violation_fraction ==
            res.aggregate[i].violation_fraction);
  }
  for (size_t i = 0; i < res.params.size(); ++i) {
    REQUIRE(loaded.params[i].beta == res.params[i].beta);
    REQUIRE(loaded.params[i].clip == res.params[i].clip);
    REQUIRE(loaded.params[i].eta == res.params[i].eta);
  }

  // Re-emission from the reload is byte-identical to the original report.
  fs::path again = fresh_dir("roundtrip-again");
  emit_report(loaded, again.string());
  for (const char* name : {"aggregate.csv", "summary.json", "chart.svg"}) {
    INFO(name);
    REQUIRE(slurp(dir / name) == slurp(again / name));
  }

  REQUIRE_THROWS(load_raw((dir / "missing").string()));
}

TEST_CASE("manifest embeds a reparsable config", "[report]") {
  SweepConfig cfg = parse_config_text(kSweepText);
  SweepResult res = sweep(cfg, 1, 11);
  ordered_json manifest = manifest_json(res);
  REQUIRE(manifest["format"] == 1);
  SweepConfig back = parse_config_text(manifest["config"].dump());
  REQUIRE(back.problem.kind == cfg.problem.kind);
  REQUIRE(back.sweep.t_grid == cfg.sweep.t_grid);
  REQUIRE(back.sweep.delta == cfg.sweep.delta);
  REQUIRE(back.noise.alpha == cfg.noise.alpha);
}
