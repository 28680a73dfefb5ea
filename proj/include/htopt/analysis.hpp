#pragma once

// Checkers for the quantities the convergence analysis manipulates:
// the bias/variance split of clipped observations, the momentum error
// recursion and its closed form, drift terms and their geometric sums,
// the descent envelope, and the concentration bounds (scalar Bernstein,
// a pathwise reduction from vector to scalar martingales, and the
// dimension-free envelope built from the two). Everything here consumes
// recorded trajectories or explicit sequences; nothing feeds back into
// the optimizers.

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "htopt/numeric.hpp"
#include "htopt/optim.hpp"
#include "htopt/problems.hpp"
#include "htopt/rng.hpp"

namespace htopt {

// ---------------------------------------------------------------------------
// Clipped-observation error split at a frozen point.

struct EpsilonSplitReport {
  long samples = 0;
  bool bounds_applicable = false;  // true when ||grad F(x)|| <= M/2
  double bias_norm = 0.0;         // || mean g - grad F(x) ||
  double bias_se = 0.0;           // standard error of that mean, in norm
  double bias_bound = 0.0;        // 2 sigma^p M^(1-p)
  double var_estimate = 0.0;      // mean ||g - mean g||^2
  double var_se = 0.0;
  double var_bound = 0.0;         // 10 sigma^p M^(2-p)
  double max_deviation = 0.0;     // max ||g_i - mean g||; always <= 2M
  bool bias_ok = false;           // bias_norm <= bias_bound + 3 bias_se
  bool var_ok = false;            // var_estimate <= var_bound + 3 var_se
};

/// Resamples K observations at a frozen x, splits the clipped-gradient
/// error into its conditional bias (estimated by the sample mean) and the
/// fluctuation second moment, and compares both against the closed-form
/// bounds that hold whenever ||grad F(x)|| <= M/2. K below 100 gives
/// standard errors too crude to report and is rejected.
inline EpsilonSplitReport epsilon_split_estimate(const ProblemInstance& inst,
                                                 const Eigen::VectorXd& x, double M,
                                                 double sigma, double p, long K,
                                                 RngStream& rng) {
  if (K < 100) throw std::invalid_argument("epsilon split: need at least 100 samples");
  if (!(M > 0.0)) throw std::invalid_argument("epsilon split: clip level must be positive");
  if (!(p > 1.0 && p <= 2.0))
    throw std::invalid_argument("epsilon split: p must lie in (1, 2]");

  const Eigen::VectorXd grad = inst.objective().gradient(x);
  // Accumulate deviations from the known gradient rather than raw
  // observations: the noiseless case then stays exactly zero and the sums
  // never lose the small signal against a large common offset.
  std::vector<Eigen::VectorXd> eps;
  eps.reserve(K);
  Eigen::VectorXd mean_eps = Eigen::VectorXd::Zero(x.size());
  for (long i = 0; i < K; ++i) {
    eps.push_back(clip(inst.observe_gradient(x, rng), M) - grad);
    mean_eps += eps.back();
  }
  mean_eps /= static_cast<double>(K);

  CompensatedSum sq_sum;       // sum ||eps_i - mean eps||^2
  CompensatedSum quad_sum;     // sum ||eps_i - mean eps||^4, for the variance of the variance
  double max_dev = 0.0;
  for (const auto& e : eps) {
    double d2 = (e - mean_eps).squaredNorm();
    sq_sum.add(d2);
    quad_sum.add(d2 * d2);
    max_dev = std::max(max_dev, std::sqrt(d2));
  }
  double n = static_cast<double>(K);
  double var_est = sq_sum.value() / n;
  double second_of_sq = quad_sum.value() / n;

  EpsilonSplitReport rep;
  rep.samples = K;
  rep.bounds_applicable = grad.norm() <= M / 2.0;
  rep.bias_norm = mean_eps.norm();
  // E||mean - E g||^2 = trace Cov(g)/K, estimated by var_est/K.
  rep.bias_se = std::sqrt(var_est / n);
  rep.var_estimate = var_est;
  rep.var_se = std::sqrt(std::max(0.0, second_of_sq - var_est * var_est) / n);
  rep.bias_bound = 2.0 * std::pow(sigma, p) * std::pow(M, 1.0 - p);
  rep.var_bound = 10.0 * std::pow(sigma, p) * std::pow(M, 2.0 - p);
  rep.max_deviation = max_dev;
  rep.bias_ok = rep.bias_norm <= rep.bias_bound + 3.0 * rep.bias_se;
  rep.var_ok = rep.var_estimate <= rep.var_bound + 3.0 * rep.var_se;
  return rep;
}

// ---------------------------------------------------------------------------
// Momentum error recursion.

struct XiResidualReport {
  // Residual of the closed form per step, relative to the magnitudes
  // entering it; max over t is the headline number.
  std::vector<double> residuals;
  double max_residual = 0.0;
};

/// Verifies that the recorded momentum error xi_t = d_t - grad F(x_t)
/// satisfies its closed form
///   xi_t = beta^t xi_0 + beta sum_s beta^(t-s) Z_s
///               + (1-beta) sum_s beta^(t-s) eps_s,
/// with xi_0 = -grad F(x_1), eps_s = g_s - grad F(x_s), and Z_s the
/// recorded drift term. Sums are re-evaluated from scratch with explicit
/// powers rather than by the optimizer's own recursion. Needs diagnostics.
inline XiResidualReport xi_residual_check(const Trajectory& traj, double beta) {
  if (traj.diag.empty())
    throw std::invalid_argument("xi residual: trajectory lacks diagnostics");
  const long T = static_cast<long>(traj.diag.size());
  const Eigen::VectorXd xi0 = (-traj.diag[0].grad).eval();

  XiResidualReport rep;
  rep.residuals.reserve(T);
  for (long t = 1; t <= T; ++t) {
    const auto& dt = traj.diag[t - 1];
    Eigen::VectorXd xi = dt.d - dt.grad;
    Eigen::VectorXd rhs = std::pow(beta, static_cast<double>(t)) * xi0;
    double magnitude = rhs.norm() + xi.norm();
    for (long s = 1; s <= t; ++s) {
      const auto& ds = traj.diag[s - 1];
      double w = std::pow(beta, static_cast<double>(t - s));
      Eigen::VectorXd eps = ds.g - ds.grad;
      rhs += beta * w * ds.z + (1.0 - beta) * w * eps;
      magnitude += beta * w * ds.z.norm() + (1.0 - beta) * w * eps.norm();
    }
    double res = (xi - rhs).norm() / std::max(1.0, magnitude);
    rep.residuals.push_back(res);
    rep.max_residual = std::max(rep.max_residual, res);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Drift terms and their geometric sums.

struct ZSumReport {
  std::vector<double> z_norms;     // ||Z_t||
  std::vector<double> gsum_norms;  // || sum_{s<=t} beta^(t-s) Z_s ||
  double max_z_norm = 0.0;
  double max_gsum_norm = 0.0;
  double per_step_bound = 0.0;   // eta L (momentum) or 2 eta L (variance-reduced)
  bool per_step_ok = true;
  // Deterministic bound on the geometric sums for the momentum method:
  // eta L / (1 - beta). Not meaningful for the variance-reduced method,
  // whose sums obey a probabilistic envelope instead.
  double momentum_sum_bound = 0.0;
  bool momentum_sum_ok = true;
};

/// Accumulates the geometric sums of the recorded drift terms Z_t and
/// checks the per-step norm bounds. Needs diagnostics.
inline ZSumReport z_geometric_sums(const Trajectory& traj, double beta, double eta,
                                   double L) {
  if (traj.diag.empty())
    throw std::invalid_argument("z sums: trajectory lacks diagnostics");
  ZSumReport rep;
  bool vr = traj.algorithm == Algorithm::variance_reduced;
  rep.per_step_bound = (vr ? 2.0 : 1.0) * eta * L;
  rep.momentum_sum_bound =
      beta < 1.0 ? eta * L / (1.0 - beta) : std::numeric_limits<double>::infinity();

  const double tol = 1e-12;
  Eigen::VectorXd gsum = Eigen::VectorXd::Zero(traj.diag[0].z.size());
  for (const auto& dg : traj.diag) {
    gsum = beta * gsum + dg.z;
    double zn = dg.z.norm();
    double gn = gsum.norm();
    rep.z_norms.push_back(zn);
    rep.gsum_norms.push_back(gn);
    rep.max_z_norm = std::max(rep.max_z_norm, zn);
    rep.max_gsum_norm = std::max(rep.max_gsum_norm, gn);
    if (zn > rep.per_step_bound * (1.0 + tol)) rep.per_step_ok = false;
    if (!vr && gn > rep.momentum_sum_bound * (1.0 + tol)) rep.momentum_sum_ok = false;
  }
  return rep;
}

/// High-probability envelope for the variance-reduced drift sums:
/// with probability at least 1 - delta/T per step,
/// || sum_{s<=t} beta^(t-s) Z_s || <= 9 eta L log(3T/delta) / sqrt(1-beta).
inline double vr_zsum_envelope(double eta, double L, double beta, long T, double delta) {
  if (!(beta >= 0.0 && beta < 1.0))
    throw std::invalid_argument("z envelope: beta must lie in [0, 1)");
  if (!(delta > 0.0 && delta < 1.0))
    throw std::invalid_argument("z envelope: delta must lie in (0, 1)");
  return 9.0 * eta * L * std::log(3.0 * static_cast<double>(T) / delta) /
         std::sqrt(1.0 - beta);
}

// ---------------------------------------------------------------------------
// Descent envelope.

/// First step index t (1-based) at which the recorded trajectory leaves
/// the envelope
///   eta sum_{s<=t} ||grad F(x_s)|| + F(x_{t+1}) - F* <= 2 delta1,
/// or nullopt when the envelope holds through the horizon. Equality is
/// inside the envelope; only strict excess counts as a violation.
inline std::optional<long> envelope_first_violation(const Trajectory& traj, double eta,
                                                    double delta1) {
  const long T = static_cast<long>(traj.steps.size());
  CompensatedSum grad_sum;
  for (long t = 1; t <= T; ++t) {
    grad_sum.add(traj.steps[t - 1].grad_norm);
    double next_f = (t < T) ? traj.steps[t].f : traj.final_f;
    double lhs = eta * grad_sum.value() + (next_f - traj.f_star);
    if (lhs > 2.0 * delta1) return t;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Scalar martingale Bernstein bound.

/// Tail weight 2 exp(-a^2 / (2F + 2Ra/3)) for a martingale with increments
/// bounded by R and conditional variance sum at most F.
inline double bernstein_tail(double a, double F, double R) {
  if (!(a > 0.0) || !(F > 0.0) || !(R > 0.0))
    throw std::domain_error("bernstein tail: all inputs must be positive");
  return 2.0 * std::exp(-a * a / (2.0 * F + 2.0 * R * a / 3.0));
}

/// Deviation level a at which bernstein_tail(a, F, R) equals delta.
inline double bernstein_deviation(double delta, double F, double R) {
  if (!(delta > 0.0 && delta < 1.0))
    throw std::domain_error("bernstein deviation: delta must lie in (0, 1)");
  double lg = std::log(2.0 / delta);
  double b = 2.0 * R * lg / 3.0;
  return 0.5 * (b + std::sqrt(b * b + 8.0 * F * lg));
}

// ---------------------------------------------------------------------------
// Pathwise reduction of a vector sequence to a scalar one.

struct PathwiseReport {
  std::vector<double> y;     // the scalar sequence
  double x_sum_norm = 0.0;   // || sum X_t ||
  double bound = 0.0;        // |sum Y_t| + sqrt(max ||X_t||^2 + sum ||X_t||^2)
  double slack = 0.0;        // bound - x_sum_norm, nonnegative up to rounding
  double max_y_excess = 0.0; // max_t (|Y_t| - ||X_t||), nonpositive up to rounding
};

/// Projects each X_t onto the direction of the preceding partial sum,
/// signed by the running scalar sum (sign(0) = +1):
///   Y_t = 0 when the preceding partial X-sum is exactly zero, else
///   Y_t = sign(sum_{i<t} Y_i) <sum_{i<t} X_i, X_t> / ||sum_{i<t} X_i||.
/// Then ||sum X_t|| <= |sum Y_t| + sqrt(max ||X_t||^2 + sum ||X_t||^2)
/// holds pathwise; the report carries the slack.
inline PathwiseReport pathwise_decomposition(const std::vector<Eigen::VectorXd>& xs) {
  if (xs.empty()) throw std::invalid_argument("pathwise: sequence must be nonempty");
  PathwiseReport rep;
  rep.y.reserve(xs.size());
  rep.max_y_excess = -std::numeric_limits<double>::infinity();

  Eigen::VectorXd partial = Eigen::VectorXd::Zero(xs[0].size());
  double y_sum = 0.0;
  double max_sq = 0.0;
  CompensatedSum sq_sum;
  for (const auto& x : xs) {
    double pn = partial.norm();
    double y = 0.0;
    if (pn != 0.0) y = sign_or_one(y_sum) * partial.dot(x) / pn;
    rep.y.push_back(y);
    rep.max_y_excess = std::max(rep.max_y_excess, std::abs(y) - x.norm());
    y_sum += y;
    partial += x;
    max_sq = std::max(max_sq, x.squaredNorm());
    sq_sum.add(x.squaredNorm());
  }
  rep.x_sum_norm = partial.norm();
  rep.bound = std::abs(y_sum) + std::sqrt(max_sq + sq_sum.value());
  rep.slack = rep.bound - rep.x_sum_norm;
  return rep;
}

// ---------------------------------------------------------------------------
// Dimension-free envelope for vector martingales.

/// Envelope radius: with probability at least 1 - delta, every prefix sum
/// of a vector martingale-difference sequence with ||X_s|| <= R and
/// conditional variances sigma_s^2 satisfies
///   || sum_{s<=t} X_s || <= 3 R log(3/delta) + 3 sqrt(sum_s sigma_s^2 log(3/delta)),
/// where the variance sum runs over the whole horizon, not the prefix.
inline double dimension_free_envelope(double R, const std::vector<double>& sigma_sq,
                                      double delta) {
  if (!(R > 0.0)) throw std::invalid_argument("envelope: R must be positive");
  if (!(delta > 0.0 && delta < 1.0))
    throw std::invalid_argument("envelope: delta must lie in (0, 1)");
  CompensatedSum total;
  for (double s : sigma_sq) {
    if (!(s >= 0.0)) throw std::invalid_argument("envelope: variances must be nonnegative");
    total.add(s);
  }
  double lg = std::log(3.0 / delta);
  return 3.0 * R * lg + 3.0 * std::sqrt(total.value() * lg);
}

struct McCheckResult {
  long trials = 0;
  long violations = 0;
  double frequency = 0.0;
  double nominal_delta = 0.0;
};

/// Monte-Carlo check of the dimension-free envelope on the harshest
/// bounded scalar case: i.i.d. signs of magnitude R/2, sigma_s^2 = R^2/4.
/// Counts trials whose running maximum breaches the envelope.
inline McCheckResult check_dimension_free_envelope(double R, int n, double delta,
                                                   long trials, RngStream& rng) {
  std::vector<double> sigma_sq(n, R * R / 4.0);
  double bound = dimension_free_envelope(R, sigma_sq, delta);
  McCheckResult res;
  res.trials = trials;
  res.nominal_delta = delta;
  for (long k = 0; k < trials; ++k) {
    double s = 0.0;
    bool violated = false;
    for (int i = 0; i < n; ++i) {
      s += (rng.uniform01() < 0.5 ? -0.5 : 0.5) * R;
      if (std::abs(s) > bound) violated = true;
    }
    res.violations += violated ? 1 : 0;
  }
  res.frequency = static_cast<double>(res.violations) / static_cast<double>(trials);
  return res;
}

/// Monte-Carlo check of the scalar Bernstein bound at level delta on the
/// same sign sequence (F = n R^2 / 4 is the exact conditional variance
/// sum, so the variance condition always holds).
inline McCheckResult check_bernstein_bound(double R, int n, double delta, long trials,
                                           RngStream& rng) {
  double F = static_cast<double>(n) * R * R / 4.0;
  double a = bernstein_deviation(delta, F, R);
  McCheckResult res;
  res.trials = trials;
  res.nominal_delta = delta;
  for (long k = 0; k < trials; ++k) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += (rng.uniform01() < 0.5 ? -0.5 : 0.5) * R;
    res.violations += std::abs(s) > a ? 1 : 0;
  }
  res.frequency = static_cast<double>(res.violations) / static_cast<double>(trials);
  return res;
}

// ---------------------------------------------------------------------------
// Event thresholds for the fluctuation martingales.

/// Thresholds and variance caps for the two Bernstein events the analysis
/// tracks per step: the scalar reduction U of the weighted fluctuation sum
/// and its squared-norm companion R. Each event asks the running sum to
/// stay under the threshold unless the conditional variance sum exceeds
/// its cap; either way it holds with probability at least 1 - delta/(2T).
struct BernsteinEventBounds {
  double u_threshold = 0.0;     // (4/3 + 2 sqrt(5 r)) M log(4T/delta), r = (sigma/M)^p/(1-beta)
  double u_variance_cap = 0.0;  // 10 sigma^p M^(2-p) / (1-beta) log(4T/delta)
  double r_threshold = 0.0;     // (16/3 + 4 sqrt(5 r)) M^2 log(4T/delta)
  double r_variance_cap = 0.0;  // 40 sigma^p M^(4-p) / (1-beta) log(4T/delta)
};

inline BernsteinEventBounds bernstein_event_check(double beta, double sigma, double M,
                                                  double p, double delta, long T) {
  if (!(beta >= 0.0 && beta < 1.0))
    throw std::invalid_argument("event bounds: beta must lie in [0, 1)");
  if (!(sigma >= 0.0)) throw std::invalid_argument("event bounds: sigma must be nonnegative");
  if (!(M > 0.0)) throw std::invalid_argument("event bounds: M must be positive");
  if (!(p > 1.0 && p <= 2.0))
    throw std::invalid_argument("event bounds: p must lie in (1, 2]");
  if (!(delta > 0.0 && delta < 1.0))
    throw std::invalid_argument("event bounds: delta must lie in (0, 1)");
  if (T < 1) throw std::invalid_argument("event bounds: T must be at least 1");

  double lg = std::log(4.0 * static_cast<double>(T) / delta);
  double moment = std::pow(sigma, p);
  double ratio = sigma > 0.0 ? std::pow(sigma / M, p) / (1.0 - beta) : 0.0;
  BernsteinEventBounds b;
  b.u_threshold = (4.0 / 3.0 + 2.0 * std::sqrt(5.0 * ratio)) * M * lg;
  b.u_variance_cap = 10.0 * moment * std::pow(M, 2.0 - p) / (1.0 - beta) * lg;
  b.r_threshold = (16.0 / 3.0 + 4.0 * std::sqrt(5.0 * ratio)) * M * M * lg;
  b.r_variance_cap = 40.0 * moment * std::pow(M, 4.0 - p) / (1.0 - beta) * lg;
  return b;
}

}  // namespace htopt
