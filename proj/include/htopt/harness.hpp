#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "htopt/config.hpp"
#include "htopt/numeric.hpp"
#include "htopt/optim.hpp"
#include "htopt/rng.hpp"
#include "htopt/theory.hpp"

namespace htopt {

struct RawRow {
  Algorithm algorithm;
  long horizon = 0;
  std::uint64_t seed = 0;
  double avg_grad_norm = 0.0;
  double min_grad_norm = 0.0;
  double final_gap = 0.0;  // F(x_{T+1}) - F*
  double max_x_norm = 0.0;
  bool envelope_violated = false;
  long n_clipped = 0;
  long n_skipped = 0;
};

struct AggregateRow {
  Algorithm algorithm;
  long horizon = 0;
  int n_seeds = 0;
  double mean_avg_grad_norm = 0.0;
  double quantile_avg_grad_norm = 0.0;  // nearest-rank at level 1 - delta
  double mean_final_gap = 0.0;
  double max_x_norm = 0.0;
  double violation_fraction = 0.0;
};

struct CellParams {
  Algorithm algorithm;
  long horizon = 0;
  std::string source;  // theorem1 | theorem2 | explicit
  double beta = 0.0;
  double clip = 0.0;
  double eta = 0.0;
  double predicted_bound = 0.0;  // 2*delta1/(eta*T); 0 when explicit
};

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;  // in log space: log(metric) ~ intercept + slope*log(T)
  double residual_ss = 0.0;
  int n = 0;
};

struct AlgorithmFit {
  Algorithm algorithm;
  RateFit fit;
  std::optional<double> theoretical_slope;  // -(p-1)/(3p-2) or -(p-1)/(2p-1)
};

struct SweepResult {
  SweepConfig config;
  std::vector<std::uint64_t> seeds;
  std::vector<RawRow> raw;
  std::vector<CellParams> params;
  std::vector<AggregateRow> aggregate;
  std::vector<AlgorithmFit> fits;
};

/// Nearest-rank quantile: the ceil(q*n)-th smallest value, 1-based.
/// A small backoff keeps ceil() from landing one rank high when q*n is
/// an integer that floating-point rounding nudged upward.
inline double aggregate_quantile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("quantile of an empty set");
  if (!(q > 0.0 && q < 1.0)) throw std::invalid_argument("quantile level must lie in (0, 1)");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size());
  auto rank = static_cast<long>(std::ceil(pos - 1e-9 * std::max(1.0, pos)));
  rank = std::clamp<long>(rank, 1, static_cast<long>(values.size()));
  return values[static_cast<size_t>(rank - 1)];
}

/// Log-log slope through exactly two points; the n >= 3 fit below reduces
/// to this when the points are collinear.
inline double two_point_slope(double t0, double v0, double t1, double v1) {
  if (!(t0 > 0 && t1 > 0 && v0 > 0 && v1 > 0))
    throw std::invalid_argument("slope requires positive coordinates");
  if (t0 == t1) throw std::invalid_argument("slope requires distinct horizons");
  return (std::log(v1) - std::log(v0)) / (std::log(t1) - std::log(t0));
}

/// Least-squares line in (log T, log metric) space.
inline RateFit fit_loglog(const std::vector<double>& horizons,
                          const std::vector<double>& metrics) {
  if (horizons.size() != metrics.size())
    throw std::invalid_argument("rate fit: size mismatch");
  if (horizons.size() < 3)
    throw std::invalid_argument("rate fit requires at least 3 points");
  const size_t n = horizons.size();
  std::vector<double> xs(n), ys(n);
  for (size_t i = 0; i < n; ++i) {
    if (!(horizons[i] > 0) || !(metrics[i] > 0))
      throw std::invalid_argument("rate fit requires positive horizons and metrics");
    xs[i] = std::log(horizons[i]);
    ys[i] = std::log(metrics[i]);
  }
  double xbar = 0, ybar = 0;
  for (size_t i = 0; i < n; ++i) {
    xbar += xs[i];
    ybar += ys[i];
  }
  xbar /= static_cast<double>(n);
  ybar /= static_cast<double>(n);
  double sxx = 0, sxy = 0;
  for (size_t i = 0; i < n; ++i) {
    sxx += (xs[i] - xbar) * (xs[i] - xbar);
    sxy += (xs[i] - xbar) * (ys[i] - ybar);
  }
  RateFit f;
  f.n = static_cast<int>(n);
  f.slope = sxy / sxx;
  f.intercept = ybar - f.slope * xbar;
  for (size_t i = 0; i < n; ++i) {
    double r = ys[i] - (f.intercept + f.slope * xs[i]);
    f.residual_ss += r * r;
  }
  return f;
}

namespace detail {

inline Schedule schedule_for(Algorithm a, const std::string& source) {
  if (source == "theorem1") return Schedule::momentum;
  if (source == "theorem2") return Schedule::variance_reduced;
  // auto: each algorithm gets the schedule whose analysis covers it; the
  // plain clipped baseline borrows the momentum one.
  return a == Algorithm::variance_reduced ? Schedule::variance_reduced : Schedule::momentum;
}

struct CellSpec {
  size_t row_index;
  Algorithm algorithm;
  long horizon;
  std::uint64_t seed;
  HyperParams hp;
};

}  // namespace detail

/// Hyper-parameters used for one (algorithm, horizon) cell of the sweep.
/// Theorem sources recompute the whole prescription at each horizon.
inline CellParams cell_params(const SweepConfig& cfg, const ProblemInstance& inst,
                              double sigma, Algorithm alg, long horizon) {
  CellParams out;
  out.algorithm = alg;
  out.horizon = horizon;
  const auto& S = cfg.sweep;
  if (S.params == "explicit") {
    out.source = "explicit";
    out.beta = *S.beta;
    out.clip = *S.clip;
    out.eta = *S.eta;
    out.predicted_bound = 0.0;
    return out;
  }
  Schedule sched = detail::schedule_for(alg, S.params);
  ProblemConstants c;
  c.p = cfg.noise.p;
  c.sigma = sigma;
  c.L = inst.objective().smoothness;
  c.delta1 = inst.delta1();
  c.T = horizon;
  c.delta = S.delta;
  PrescribedParams tp = prescribe(sched, c, S.halve_delta);
  out.source = sched == Schedule::momentum ? "theorem1" : "theorem2";
  out.beta = tp.beta;
  out.clip = tp.clip;
  out.eta = tp.eta;
  out.predicted_bound = predicted_avg_grad_bound(tp);
  return out;
}

namespace detail {

inline RawRow run_cell(const ProblemInstance& inst, const CellSpec& cell, double delta1) {
  // The stream seed mixes the seed value with the horizon only, so the
  // algorithms of one cell consume identical draws and relabeling the
  // seed list cannot change any row's content.
  std::uint64_t stream = derive_stream_seed(cell.seed, static_cast<std::uint64_t>(cell.horizon));
  Trajectory traj = run(cell.algorithm, inst, cell.hp, stream);

  RawRow row;
  row.algorithm = cell.algorithm;
  row.horizon = cell.horizon;
  row.seed = cell.seed;
  row.avg_grad_norm = traj.average_grad_norm();
  row.min_grad_norm = traj.min_grad_norm;
  row.final_gap = traj.final_f - traj.f_star;
  row.max_x_norm = traj.max_x_norm;
  row.n_clipped = traj.n_clipped;
  row.n_skipped = traj.n_skipped;

  // Distance-travelled envelope: eta * sum ||grad|| + gap must stay
  // within twice the initial gap at every prefix.
  CompensatedSum path;
  row.envelope_violated = false;
  for (size_t t = 0; t < traj.steps.size(); ++t) {
    path.add(traj.steps[t].grad_norm);
    double next_f = (t + 1 < traj.steps.size()) ? traj.steps[t + 1].f : traj.final_f;
    if (cell.hp.eta * path.value() + (next_f - traj.f_star) > 2.0 * delta1) {
      row.envelope_violated = true;
      break;
    }
  }
  return row;
}

}  // namespace detail

/// Recomputes aggregate rows and rate fits from raw rows that are already
/// in (algorithm, horizon, seed) grid order. Shared by the live sweep and
/// by re-aggregation from stored rows.
inline void aggregate_sweep(SweepResult& res) {
  const SweepConfig& cfg = res.config;
  const size_t per_cell = res.seeds.size();
  res.aggregate.clear();
  res.fits.clear();
  size_t base = 0;
  for (Algorithm alg : cfg.sweep.algorithms) {
    for (long T : cfg.sweep.t_grid) {
      AggregateRow agg;
      agg.algorithm = alg;
      agg.horizon = T;
      agg.n_seeds = static_cast<int>(per_cell);
      std::vector<double> metrics, gaps;
      metrics.reserve(per_cell);
      gaps.reserve(per_cell);
      long violations = 0;
      for (size_t k = 0; k < per_cell; ++k) {
        const RawRow& row = res.raw.at(base + k);
        if (row.algorithm != alg || row.horizon != T)
          throw std::runtime_error("raw rows are not in grid order");
        metrics.push_back(row.avg_grad_norm);
        gaps.push_back(row.final_gap);
        agg.max_x_norm = std::max(agg.max_x_norm, row.max_x_norm);
        if (row.envelope_violated) ++violations;
      }
      // Means are taken over value-sorted copies so they depend only on
      // the multiset of row values, never on row order; permuting the
      // seed list then leaves every aggregate bit-identical.
      auto sorted_mean = [per_cell](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        CompensatedSum sum;
        for (double x : v) sum.add(x);
        return sum.value() / static_cast<double>(per_cell);
      };
      agg.mean_avg_grad_norm = sorted_mean(metrics);
      agg.mean_final_gap = sorted_mean(gaps);
      agg.quantile_avg_grad_norm =
          per_cell == 1 ? metrics.front()
                        : aggregate_quantile(metrics, 1.0 - cfg.sweep.delta);
      agg.violation_fraction =
          static_cast<double>(violations) / static_cast<double>(per_cell);
      res.aggregate.push_back(agg);
      base += per_cell;
    }
  }

  // One decay-rate fit per algorithm over the mean metric, when the grid
  // is long enough to support one.
  if (cfg.sweep.t_grid.size() >= 3) {
    std::vector<double> horizons(cfg.sweep.t_grid.begin(), cfg.sweep.t_grid.end());
    size_t row = 0;
    for (Algorithm alg : cfg.sweep.algorithms) {
      std::vector<double> means;
      for (size_t j = 0; j < cfg.sweep.t_grid.size(); ++j)
        means.push_back(res.aggregate[row + j].mean_avg_grad_norm);
      row += cfg.sweep.t_grid.size();
      bool positive = true;
      for (double m : means)
        if (!(m > 0)) positive = false;
      if (!positive) continue;
      AlgorithmFit af;
      af.algorithm = alg;
      af.fit = fit_loglog(horizons, means);
      if (cfg.sweep.params != "explicit")
        af.theoretical_slope =
            -rate_exponent(detail::schedule_for(alg, cfg.sweep.params), cfg.noise.p);
      res.fits.push_back(af);
    }
  }
}

/// Runs the full sweep grid. Rows are ordered (algorithm, horizon, seed)
/// in config order and each row is computed independently from its own
/// derived stream, so the output is one fixed function of the config and
/// seed base regardless of worker count.
inline SweepResult sweep(const SweepConfig& cfg, int workers = 1,
                         std::uint64_t seed_base = 0) {
  if (workers < 1) throw std::invalid_argument("workers must be at least 1");
  SweepResult res;
  res.config = cfg;

  const ProblemInstance inst = build_instance(cfg);
  const double sigma = analytic_sigma(build_noise(cfg));

  if (!cfg.sweep.seed_list.empty()) {
    res.seeds = cfg.sweep.seed_list;
  } else {
    for (int i = 0; i < cfg.sweep.seeds; ++i)
      res.seeds.push_back(seed_base + static_cast<std::uint64_t>(i));
  }

  std::vector<detail::CellSpec> cells;
  for (Algorithm alg : cfg.sweep.algorithms) {
    for (long T : cfg.sweep.t_grid) {
      CellParams cp = cell_params(cfg, inst, sigma, alg, T);
      res.params.push_back(cp);
      HyperParams hp;
      hp.beta = cp.beta;
      hp.clip = cp.clip;
      hp.eta = cp.eta;
      hp.horizon = T;
      for (std::uint64_t s : res.seeds) {
        cells.push_back({cells.size(), alg, T, s, hp});
      }
    }
  }

  res.raw.resize(cells.size());
  const double delta1 = inst.delta1();
  auto worker_body = [&](std::atomic<size_t>& next) {
    for (;;) {
      size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      res.raw[cells[i].row_index] = detail::run_cell(inst, cells[i], delta1);
    }
  };

  std::atomic<size_t> next{0};
  int n_threads = std::min<int>(workers, static_cast<int>(cells.size()));
  if (n_threads <= 1) {
    worker_body(next);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(n_threads));
    for (int w = 0; w < n_threads; ++w)
      pool.emplace_back([&] { worker_body(next); });
    for (auto& th : pool) th.join();
  }

  aggregate_sweep(res);
  return res;
}

}  // namespace htopt
