#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "htopt/harness.hpp"
#include "htopt/numeric.hpp"

namespace htopt {

using ordered_json = nlohmann::ordered_json;

namespace detail {

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out << content;
  if (!out) throw std::runtime_error("write to '" + path.string() + "' failed");
}

// Fixed-precision decimal for geometry attributes. Shortest round-trip
// formatting stays reserved for data values; coordinates only need to be
// stable and compact.
inline std::string coord(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

}  // namespace detail

inline ordered_json config_to_json(const SweepConfig& cfg) {
  ordered_json j;
  ordered_json problem;
  problem["kind"] = cfg.problem.kind;
  if (!cfg.problem.eigenvalues.empty()) problem["eigenvalues"] = cfg.problem.eigenvalues;
  if (!cfg.problem.mean_eigenvalues.empty())
    problem["mean_eigenvalues"] = cfg.problem.mean_eigenvalues;
  if (cfg.problem.eigen_spread != 0.0) problem["eigen_spread"] = cfg.problem.eigen_spread;
  if (!cfg.problem.center.empty()) problem["center"] = cfg.problem.center;
  problem["x1"] = cfg.problem.x1;
  if (!cfg.problem.id.empty()) problem["id"] = cfg.problem.id;
  j["problem"] = problem;

  ordered_json noise;
  noise["family"] = cfg.noise.family;
  noise["p"] = cfg.noise.p;
  if (cfg.noise.family == "pareto") {
    noise["alpha"] = cfg.noise.alpha;
    noise["scale"] = cfg.noise.scale;
  }
  if (cfg.noise.family == "gaussian") noise["stddev"] = cfg.noise.stddev;
  j["noise"] = noise;

  ordered_json sweep;
  ordered_json algs = ordered_json::array();
  for (Algorithm a : cfg.sweep.algorithms) algs.push_back(algorithm_token(a));
  sweep["algorithms"] = algs;
  sweep["t_grid"] = cfg.sweep.t_grid;
  if (!cfg.sweep.seed_list.empty()) sweep["seed_list"] = cfg.sweep.seed_list;
  else sweep["seeds"] = cfg.sweep.seeds;
  sweep["delta"] = cfg.sweep.delta;
  sweep["params"] = cfg.sweep.params;
  if (cfg.sweep.halve_delta) sweep["halve_delta"] = true;
  if (cfg.sweep.params == "explicit") {
    sweep["beta"] = *cfg.sweep.beta;
    sweep["clip"] = *cfg.sweep.clip;
    sweep["eta"] = *cfg.sweep.eta;
  }
  if (cfg.sweep.diagnostics) sweep["diagnostics"] = true;
  j["sweep"] = sweep;

  ordered_json output;
  output["dir"] = cfg.output.dir;
  j["output"] = output;
  return j;
}

inline std::string raw_csv(const SweepResult& res) {
  std::ostringstream out;
  out << "algorithm,T,seed,avg_grad_norm,min_grad_norm,final_gap,max_x_norm,"
         "envelope_violated,n_clipped,n_skipped\n";
  for (const RawRow& r : res.raw) {
    out << algorithm_token(r.algorithm) << ',' << r.horizon << ',' << r.seed << ','
        << format_double(r.avg_grad_norm) << ',' << format_double(r.min_grad_norm) << ','
        << format_double(r.final_gap) << ',' << format_double(r.max_x_norm) << ','
        << (r.envelope_violated ? 1 : 0) << ',' << r.n_clipped << ',' << r.n_skipped
        << '\n';
  }
  return out.str();
}

inline std::string aggregate_csv(const SweepResult& res) {
  std::ostringstream out;
  out << "algorithm,T,n_seeds,mean_avg_grad_norm,quantile_avg_grad_norm,"
         "mean_final_gap,max_x_norm,violation_fraction\n";
  for (const AggregateRow& a : res.aggregate) {
    out << algorithm_token(a.algorithm) << ',' << a.horizon << ',' << a.n_seeds << ','
        << format_double(a.mean_avg_grad_norm) << ','
        << format_double(a.quantile_avg_grad_norm) << ','
        << format_double(a.mean_final_gap) << ',' << format_double(a.max_x_norm) << ','
        << format_double(a.violation_fraction) << '\n';
  }
  return out.str();
}

inline std::string plot_csv(const SweepResult& res, Algorithm alg) {
  std::ostringstream out;
  out << "log2_T,T,mean_avg_grad_norm,quantile_avg_grad_norm\n";
  for (const AggregateRow& a : res.aggregate) {
    if (a.algorithm != alg) continue;
    out << format_double(std::log2(static_cast<double>(a.horizon))) << ',' << a.horizon
        << ',' << format_double(a.mean_avg_grad_norm) << ','
        << format_double(a.quantile_avg_grad_norm) << '\n';
  }
  return out.str();
}

inline ordered_json summary_json(const SweepResult& res) {
  ordered_json j;
  j["metric"] = "avg_grad_norm";
  j["delta"] = res.config.sweep.delta;
  j["quantile_level"] = 1.0 - res.config.sweep.delta;
  ordered_json algs = ordered_json::array();
  for (Algorithm a : res.config.sweep.algorithms) algs.push_back(algorithm_token(a));
  j["algorithms"] = algs;
  j["t_grid"] = res.config.sweep.t_grid;
  j["seeds"] = res.seeds;

  ordered_json params = ordered_json::array();
  for (const CellParams& cp : res.params) {
    ordered_json e;
    e["algorithm"] = algorithm_token(cp.algorithm);
    e["T"] = cp.horizon;
    e["source"] = cp.source;
    e["beta"] = cp.beta;
    e["clip"] = cp.clip;
    e["eta"] = cp.eta;
    if (cp.predicted_bound > 0.0) e["predicted_avg_grad_bound"] = cp.predicted_bound;
    params.push_back(e);
  }
  j["params"] = params;

  ordered_json aggregate = ordered_json::array();
  for (const AggregateRow& a : res.aggregate) {
    ordered_json e;
    e["algorithm"] = algorithm_token(a.algorithm);
    e["T"] = a.horizon;
    e["n_seeds"] = a.n_seeds;
    e["mean_avg_grad_norm"] = a.mean_avg_grad_norm;
    e["quantile_avg_grad_norm"] = a.quantile_avg_grad_norm;
    e["mean_final_gap"] = a.mean_final_gap;
    e["max_x_norm"] = a.max_x_norm;
    e["violation_fraction"] = a.violation_fraction;
    aggregate.push_back(e);
  }
  j["aggregate"] = aggregate;

  if (!res.fits.empty()) {
    ordered_json fits;
    for (const AlgorithmFit& af : res.fits) {
      ordered_json e;
      e["slope"] = af.fit.slope;
      e["intercept"] = af.fit.intercept;
      e["residual_ss"] = af.fit.residual_ss;
      e["n"] = af.fit.n;
      if (af.theoretical_slope) e["theoretical_slope"] = *af.theoretical_slope;
      fits[algorithm_token(af.algorithm)] = e;
    }
    j["rate_fits"] = fits;
  }
  return j;
}

/// Log-log chart of the mean metric against T. Pure geometry from the
/// aggregate rows; nothing time- or environment-dependent enters, so the
/// bytes are a fixed function of the sweep result.
inline std::string chart_svg(const SweepResult& res) {
  static const char* const palette[] = {"#1f6fb2", "#c4452c", "#3a8f5d",
                                        "#8355a8", "#b58a1f", "#3f3f3f"};
  const double width = 860, height = 540;
  const double ml = 90, mr = 200, mt = 40, mb = 70;
  const double pw = width - ml - mr, ph = height - mt - mb;

  std::vector<Algorithm> algs = res.config.sweep.algorithms;
  std::vector<long> grid = res.config.sweep.t_grid;

  double xmin = std::log2(static_cast<double>(grid.front()));
  double xmax = std::log2(static_cast<double>(grid.back()));
  if (xmax == xmin) {
    xmin -= 0.5;
    xmax += 0.5;
  }
  double ymin = 0, ymax = 0;
  bool seen = false;
  for (const AggregateRow& a : res.aggregate) {
    if (!(a.mean_avg_grad_norm > 0)) continue;
    double ly = std::log10(a.mean_avg_grad_norm);
    if (!seen) {
      ymin = ymax = ly;
      seen = true;
    } else {
      ymin = std::min(ymin, ly);
      ymax = std::max(ymax, ly);
    }
  }
  if (!seen) {
    ymin = -1;
    ymax = 1;
  }
  if (ymax - ymin < 0.2) {
    ymin -= 0.1;
    ymax += 0.1;
  }
  double ypad = 0.06 * (ymax - ymin);
  ymin -= ypad;
  ymax += ypad;

  auto sx = [&](double log2t) { return ml + pw * (log2t - xmin) / (xmax - xmin); };
  auto sy = [&](double log10v) { return mt + ph * (ymax - log10v) / (ymax - ymin); };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 " << width << ' '
      << height << "\" font-family=\"Helvetica, Arial, sans-serif\">\n";
  svg << "<rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height
      << "\" fill=\"#ffffff\"/>\n";
  svg << "<rect x=\"" << detail::coord(ml) << "\" y=\"" << detail::coord(mt)
      << "\" width=\"" << detail::coord(pw) << "\" height=\"" << detail::coord(ph)
      << "\" fill=\"none\" stroke=\"#444444\" stroke-width=\"1\"/>\n";

  for (long T : grid) {
    double x = sx(std::log2(static_cast<double>(T)));
    svg << "<line x1=\"" << detail::coord(x) << "\" y1=\"" << detail::coord(mt)
        << "\" x2=\"" << detail::coord(x) << "\" y2=\"" << detail::coord(mt + ph)
        << "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
    svg << "<text x=\"" << detail::coord(x) << "\" y=\"" << detail::coord(mt + ph + 22)
        << "\" text-anchor=\"middle\" font-size=\"13\" fill=\"#333333\">" << T
        << "</text>\n";
  }
  int ylo = static_cast<int>(std::ceil(ymin));
  int yhi = static_cast<int>(std::floor(ymax));
  for (int e = ylo; e <= yhi; ++e) {
    double y = sy(e);
    svg << "<line x1=\"" << detail::coord(ml) << "\" y1=\"" << detail::coord(y)
        << "\" x2=\"" << detail::coord(ml + pw) << "\" y2=\"" << detail::coord(y)
        << "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
    svg << "<text x=\"" << detail::coord(ml - 10) << "\" y=\"" << detail::coord(y + 4)
        << "\" text-anchor=\"end\" font-size=\"13\" fill=\"#333333\">1e" << e
        << "</text>\n";
  }
  svg << "<text x=\"" << detail::coord(ml + pw / 2) << "\" y=\""
      << detail::coord(height - 18)
      << "\" text-anchor=\"middle\" font-size=\"15\" fill=\"#111111\">T (log scale)"
         "</text>\n";
  svg << "<text x=\"22\" y=\"" << detail::coord(mt + ph / 2)
      << "\" text-anchor=\"middle\" font-size=\"15\" fill=\"#111111\" transform=\"rotate(-90 "
         "22 "
      << detail::coord(mt + ph / 2) << ")\">mean avg grad norm (log scale)</text>\n";

  for (size_t ai = 0; ai < algs.size(); ++ai) {
    const char* color = palette[ai % 6];
    std::ostringstream points;
    std::vector<std::pair<double, double>> marks;
    for (const AggregateRow& a : res.aggregate) {
      if (a.algorithm != algs[ai] || !(a.mean_avg_grad_norm > 0)) continue;
      double x = sx(std::log2(static_cast<double>(a.horizon)));
      double y = sy(std::log10(a.mean_avg_grad_norm));
      if (!marks.empty()) points << ' ';
      points << detail::coord(x) << ',' << detail::coord(y);
      marks.emplace_back(x, y);
    }
    if (marks.size() > 1)
      svg << "<polyline points=\"" << points.str() << "\" fill=\"none\" stroke=\"" << color
          << "\" stroke-width=\"2\"/>\n";
    for (auto& [x, y] : marks)
      svg << "<circle cx=\"" << detail::coord(x) << "\" cy=\"" << detail::coord(y)
          << "\" r=\"3.5\" fill=\"" << color << "\"/>\n";

    double ly = mt + 16 + 24 * static_cast<double>(ai);
    svg << "<line x1=\"" << detail::coord(ml + pw + 16) << "\" y1=\"" << detail::coord(ly)
        << "\" x2=\"" << detail::coord(ml + pw + 44) << "\" y2=\"" << detail::coord(ly)
        << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    svg << "<text x=\"" << detail::coord(ml + pw + 50) << "\" y=\""
        << detail::coord(ly + 4) << "\" font-size=\"13\" fill=\"#111111\">"
        << algorithm_token(algs[ai]) << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

inline ordered_json manifest_json(const SweepResult& res) {
  ordered_json j;
  j["format"] = 1;
  j["config"] = config_to_json(res.config);
  j["seeds"] = res.seeds;
  return j;
}

/// Writes every sweep artifact under dir. Returns the paths written.
inline std::vector<std::string> emit_report(const SweepResult& res,
                                            const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::vector<std::string> written;
  auto emit = [&](const std::string& name, const std::string& content) {
    fs::path p = fs::path(dir) / name;
    detail::write_file(p, content);
    written.push_back(p.string());
  };
  emit("raw.csv", raw_csv(res));
  emit("aggregate.csv", aggregate_csv(res));
  emit("summary.json", summary_json(res).dump(2) + "\n");
  emit("manifest.json", manifest_json(res).dump(2) + "\n");
  for (Algorithm a : res.config.sweep.algorithms)
    emit(std::string("plot_") + algorithm_token(a) + ".csv", plot_csv(res, a));
  emit("chart.svg", chart_svg(res));
  return written;
}

inline std::string trajectory_csv(const Trajectory& traj) {
  std::ostringstream out;
  out << "t,F,grad_norm,d_norm,g_norm,clipped_flag,skipped_flag\n";
  for (size_t i = 0; i < traj.steps.size(); ++i) {
    const TrajectoryStep& s = traj.steps[i];
    out << (i + 1) << ',' << format_double(s.f) << ',' << format_double(s.grad_norm)
        << ',' << format_double(s.d_norm) << ',' << format_double(s.g_norm) << ','
        << (s.clipped ? 1 : 0) << ',' << (s.skipped ? 1 : 0) << '\n';
  }
  return out.str();
}

inline ordered_json trajectory_sidecar(const Trajectory& traj) {
  ordered_json j;
  j["algorithm"] = algorithm_token(traj.algorithm);
  j["problem_id"] = traj.problem_id;
  j["seed"] = traj.seed;
  j["T"] = traj.hp.horizon;
  j["beta"] = traj.hp.beta;
  j["clip"] = traj.hp.clip;
  j["eta"] = traj.hp.eta;
  j["f_star"] = traj.f_star;
  j["delta1"] = traj.delta1;
  j["final_f"] = traj.final_f;
  j["avg_grad_norm"] = traj.average_grad_norm();
  j["min_grad_norm"] = traj.min_grad_norm;
  j["max_x_norm"] = traj.max_x_norm;
  j["n_clipped"] = traj.n_clipped;
  j["n_skipped"] = traj.n_skipped;
  return j;
}

inline void emit_trajectory(const Trajectory& traj, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::string base = std::string("trajectory_") + algorithm_token(traj.algorithm);
  detail::write_file(fs::path(dir) / (base + ".csv"), trajectory_csv(traj));
  detail::write_file(fs::path(dir) / (base + ".json"),
                     trajectory_sidecar(traj).dump(2) + "\n");
}

/// Rebuilds a SweepResult from a manifest and its raw rows, recomputing
/// aggregates and fits. Used by the report subcommand.
inline SweepResult load_raw(const std::string& dir) {
  namespace fs = std::filesystem;
  fs::path mpath = fs::path(dir) / "manifest.json";
  std::ifstream min(mpath, std::ios::binary);
  if (!min) throw std::runtime_error("cannot open '" + mpath.string() + "'");
  ordered_json manifest;
  try {
    manifest = ordered_json::parse(min);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error("manifest parse failure: " + std::string(e.what()));
  }
  if (!manifest.contains("config"))
    throw std::runtime_error("manifest.json lacks a config block");
  SweepConfig cfg = parse_config_text(manifest["config"].dump());

  fs::path rpath = fs::path(dir) / "raw.csv";
  std::ifstream rin(rpath, std::ios::binary);
  if (!rin) throw std::runtime_error("cannot open '" + rpath.string() + "'");
  std::vector<RawRow> rows;
  std::string line;
  if (!std::getline(rin, line)) throw std::runtime_error("raw.csv is empty");
  while (std::getline(rin, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string cell;
    std::vector<std::string> parts;
    while (std::getline(fields, cell, ',')) parts.push_back(cell);
    if (parts.size() != 10)
      throw std::runtime_error("raw.csv: malformed row '" + line + "'");
    RawRow r;
    r.algorithm = parse_algorithm(parts[0]);
    r.horizon = std::stol(parts[1]);
    r.seed = std::stoull(parts[2]);
    r.avg_grad_norm = std::stod(parts[3]);
    r.min_grad_norm = std::stod(parts[4]);
    r.final_gap = std::stod(parts[5]);
    r.max_x_norm = std::stod(parts[6]);
    r.envelope_violated = parts[7] == "1";
    r.n_clipped = std::stol(parts[8]);
    r.n_skipped = std::stol(parts[9]);
    rows.push_back(r);
  }

  SweepResult res;
  res.config = cfg;
  if (manifest.contains("seeds"))
    res.seeds = manifest["seeds"].get<std::vector<std::uint64_t>>();
  else
    for (int i = 0; i < cfg.sweep.seeds; ++i) res.seeds.push_back(i);
  res.raw = std::move(rows);

  const size_t expected =
      cfg.sweep.algorithms.size() * cfg.sweep.t_grid.size() * res.seeds.size();
  if (res.raw.size() != expected)
    throw std::runtime_error("raw.csv row count does not match the manifest grid");

  const ProblemInstance inst = build_instance(cfg);
  const double sigma = analytic_sigma(build_noise(cfg));
  for (Algorithm alg : cfg.sweep.algorithms)
    for (long T : cfg.sweep.t_grid)
      res.params.push_back(cell_params(cfg, inst, sigma, alg, T));

  aggregate_sweep(res);
  return res;
}

}  // namespace htopt
