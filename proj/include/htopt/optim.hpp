#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "htopt/numeric.hpp"
#include "htopt/problems.hpp"
#include "htopt/rng.hpp"

namespace htopt {

enum class Algorithm { momentum, variance_reduced, clipped_sgd };

inline const char* algorithm_token(Algorithm a) {
  switch (a) {
    case Algorithm::momentum: return "alg1";
    case Algorithm::variance_reduced: return "alg2";
    case Algorithm::clipped_sgd: return "clipped-sgd";
  }
  return "?";
}

struct HyperParams {
  double beta = 0.0;   // momentum weight, in [0, 1)
  double clip = 1.0;   // clipping level M, positive
  double eta = 0.0;    // step size, positive
  long horizon = 1;    // T, number of steps
};

inline void validate(const HyperParams& hp) {
  if (!(hp.beta >= 0.0 && hp.beta < 1.0))
    throw std::invalid_argument("hyperparams: beta must lie in [0, 1)");
  if (!(hp.clip > 0.0)) throw std::invalid_argument("hyperparams: clip level must be positive");
  if (!(hp.eta > 0.0)) throw std::invalid_argument("hyperparams: step size must be positive");
  if (hp.horizon < 1) throw std::invalid_argument("hyperparams: horizon must be at least 1");
}

// clip(v, M) = min(1, M/||v||) v. The zero vector passes through untouched.
inline Eigen::VectorXd clip(const Eigen::VectorXd& v, double level) {
  if (!(level > 0.0)) throw std::invalid_argument("clip: level must be positive");
  double n = v.norm();
  if (n <= level) return v;
  return (level / n) * v;
}

struct OptimizerState {
  long t = 1;               // index of the upcoming step
  Eigen::VectorXd x;        // x_t
  Eigen::VectorXd d;        // d_{t-1}, zero before the first step
  Eigen::VectorXd x_prev;   // x_{t-1}; equals x before the first step
};

inline OptimizerState make_state(const Eigen::VectorXd& x1) {
  OptimizerState s;
  s.t = 1;
  s.x = x1;
  s.d = Eigen::VectorXd::Zero(x1.size());
  s.x_prev = x1;
  return s;
}

struct StepOutcome {
  Eigen::VectorXd g;                        // clipped observation
  Eigen::VectorXd raw;                      // observation before clipping
  std::optional<Eigen::VectorXd> raw_prev;  // same sample at x_{t-1} (variance-reduced, t >= 2)
  std::optional<GradientSample> sample;     // the drawn Xi (variance-reduced)
  bool clipped = false;
  bool skipped = false;
};

namespace detail {

// Normalized move shared by the momentum steps. d_t exactly zero means the
// direction is undefined; the iterate stays put and the step is flagged.
inline void move_normalized(OptimizerState& s, double eta, StepOutcome& out) {
  s.x_prev = s.x;
  double n = s.d.norm();
  if (n == 0.0) {
    out.skipped = true;
  } else {
    s.x -= (eta / n) * s.d;
  }
  s.t += 1;
}

}  // namespace detail

// d_t = beta d_{t-1} + (1-beta) g_t,  x_{t+1} = x_t - eta d_t/||d_t||.
inline StepOutcome step_momentum(OptimizerState& s, const HyperParams& hp,
                                 const Eigen::VectorXd& observation) {
  StepOutcome out;
  out.raw = observation;
  out.g = clip(observation, hp.clip);
  out.clipped = observation.norm() > hp.clip;
  s.d = hp.beta * s.d + (1.0 - hp.beta) * out.g;
  detail::move_normalized(s, hp.eta, out);
  return out;
}

// Variance-reduced momentum: the same draw Xi_t is evaluated at x_t and
// x_{t-1}, and the unclipped difference is added as a correction,
//   d_t = beta d_{t-1} + (1-beta) g_t + beta (grad f(x_t,Xi_t) - grad f(x_{t-1},Xi_t)),
// with the correction active from the second step on.
inline StepOutcome step_variance_reduced(OptimizerState& s, const HyperParams& hp,
                                         const ComponentObjective& comp, RngStream& rng) {
  StepOutcome out;
  out.sample = comp.draw_sample(rng);
  out.raw = comp.sample_gradient(s.x, *out.sample);
  out.g = clip(out.raw, hp.clip);
  out.clipped = out.raw.norm() > hp.clip;
  s.d = hp.beta * s.d + (1.0 - hp.beta) * out.g;
  if (s.t >= 2) {
    out.raw_prev = comp.sample_gradient(s.x_prev, *out.sample);
    s.d += hp.beta * (out.raw - *out.raw_prev);
  }
  detail::move_normalized(s, hp.eta, out);
  return out;
}

// Unnormalized baseline: x_{t+1} = x_t - eta g_t.
inline StepOutcome step_clipped_sgd(OptimizerState& s, const HyperParams& hp,
                                    const Eigen::VectorXd& observation) {
  StepOutcome out;
  out.raw = observation;
  out.g = clip(observation, hp.clip);
  out.clipped = observation.norm() > hp.clip;
  s.d = out.g;
  s.x_prev = s.x;
  if (s.d.norm() == 0.0)
    out.skipped = true;
  else
    s.x -= hp.eta * s.d;
  s.t += 1;
  return out;
}

struct TrajectoryStep {
  double f = 0.0;          // F(x_t), true objective
  double grad_norm = 0.0;  // ||grad F(x_t)||, true gradient
  double g_norm = 0.0;     // ||g_t||
  double d_norm = 0.0;     // ||d_t||
  bool clipped = false;
  bool skipped = false;
};

// Per-step vectors kept only when diagnostics are requested; memory grows
// by roughly 4 dim doubles per step plus the sample payload.
struct TrajectoryDiag {
  Eigen::VectorXd x;     // x_t
  Eigen::VectorXd grad;  // grad F(x_t)
  Eigen::VectorXd g;     // clipped observation
  Eigen::VectorXd d;     // d_t after the update
  Eigen::VectorXd z;     // momentum drift term Z_t (zero for t = 1)
  std::optional<GradientSample> sample;
};

struct Trajectory {
  Algorithm algorithm = Algorithm::momentum;
  HyperParams hp;
  std::uint64_t seed = 0;
  std::string problem_id;
  double f_star = 0.0;
  double delta1 = 0.0;
  std::vector<TrajectoryStep> steps;
  std::vector<TrajectoryDiag> diag;  // empty unless diagnostics were on
  Eigen::VectorXd x_final;           // x_{T+1}
  double final_f = 0.0;              // F(x_{T+1})
  double grad_norm_sum = 0.0;        // compensated sum of ||grad F(x_t)||, t = 1..T
  double min_grad_norm = 0.0;
  double max_x_norm = 0.0;           // max over x_1 .. x_{T+1}
  long n_clipped = 0;
  long n_skipped = 0;

  double average_grad_norm() const {
    return steps.empty() ? 0.0 : grad_norm_sum / static_cast<double>(steps.size());
  }
};

struct RunOptions {
  bool diagnostics = false;
};

/// Runs one optimizer for hp.horizon steps from inst.x1(). All randomness
/// comes from the seed, so equal inputs give bit-identical trajectories.
/// The recorded f/grad_norm columns use the true objective and gradient;
/// observations only drive the iterates.
inline Trajectory run(Algorithm alg, const ProblemInstance& inst, const HyperParams& hp,
                      std::uint64_t seed, const RunOptions& opts = {}) {
  validate(hp);
  if (alg == Algorithm::variance_reduced && !inst.has_component())
    throw std::invalid_argument(
        "run: the variance-reduced optimizer needs a component problem "
        "(one sample evaluated at two points)");

  const Objective& obj = inst.objective();
  RngStream rng(seed);
  OptimizerState s = make_state(inst.x1());

  Trajectory traj;
  traj.algorithm = alg;
  traj.hp = hp;
  traj.seed = seed;
  traj.problem_id = inst.id();
  traj.f_star = obj.optimal_value;
  traj.delta1 = inst.delta1();
  traj.steps.reserve(hp.horizon);
  if (opts.diagnostics) traj.diag.reserve(hp.horizon);

  CompensatedSum grad_sum;
  traj.min_grad_norm = std::numeric_limits<double>::infinity();
  traj.max_x_norm = s.x.norm();
  Eigen::VectorXd grad_prev;

  for (long t = 1; t <= hp.horizon; ++t) {
    Eigen::VectorXd grad = obj.gradient(s.x);
    TrajectoryStep rec;
    rec.f = obj.value(s.x);
    rec.grad_norm = grad.norm();
    grad_sum.add(rec.grad_norm);
    traj.min_grad_norm = std::min(traj.min_grad_norm, rec.grad_norm);

    StepOutcome out;
    switch (alg) {
      case Algorithm::momentum:
        out = step_momentum(s, hp, inst.observe_gradient(s.x, rng));
        break;
      case Algorithm::variance_reduced:
        out = step_variance_reduced(s, hp, inst.component_objective(), rng);
        break;
      case Algorithm::clipped_sgd:
        out = step_clipped_sgd(s, hp, inst.observe_gradient(s.x, rng));
        break;
    }

    rec.g_norm = out.g.norm();
    rec.d_norm = s.d.norm();
    rec.clipped = out.clipped;
    rec.skipped = out.skipped;
    traj.steps.push_back(rec);
    traj.n_clipped += out.clipped ? 1 : 0;
    traj.n_skipped += out.skipped ? 1 : 0;
    traj.max_x_norm = std::max(traj.max_x_norm, s.x.norm());

    if (opts.diagnostics) {
      TrajectoryDiag dg;
      dg.x = s.x_prev;  // the pre-move iterate x_t
      dg.grad = grad;
      dg.g = out.g;
      dg.d = s.d;
      if (t >= 2) {
        dg.z = grad_prev - grad;
        if (out.raw_prev) dg.z += out.raw - *out.raw_prev;
      } else {
        dg.z = Eigen::VectorXd::Zero(obj.dim);
      }
      dg.sample = out.sample;
      traj.diag.push_back(std::move(dg));
    }
    grad_prev = std::move(grad);
  }

  traj.x_final = s.x;
  traj.final_f = obj.value(s.x);
  traj.grad_norm_sum = grad_sum.value();
  return traj;
}

}  // namespace htopt
