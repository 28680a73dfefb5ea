#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace htopt {

/// Constants describing one problem to the schedule calculators.
///   p       noise moment order, in (1, 2]
///   sigma   (E||noise||^p)^(1/p), nonnegative
///   L       smoothness constant, positive
///   delta1  initial gap F(x1) - F*, positive
///   T       horizon, at least 1
///   delta   failure probability, in (0, 1)
struct ProblemConstants {
  double p = 2.0;
  double sigma = 0.0;
  double L = 1.0;
  double delta1 = 1.0;
  long T = 1;
  double delta = 0.1;
};

inline void validate(const ProblemConstants& c) {
  if (!(c.p > 1.0 && c.p <= 2.0))
    throw std::invalid_argument("constants: p must lie in (1, 2]");
  if (!(c.sigma >= 0.0)) throw std::invalid_argument("constants: sigma must be nonnegative");
  if (!(c.L > 0.0)) throw std::invalid_argument("constants: L must be positive");
  if (c.delta1 == 0.0)
    throw std::invalid_argument(
        "constants: delta1 is zero; the start point is already optimal and "
        "the schedules are undefined (degenerate start)");
  if (!(c.delta1 > 0.0)) throw std::invalid_argument("constants: delta1 must be positive");
  if (c.T < 1) throw std::invalid_argument("constants: T must be at least 1");
  if (!(c.delta > 0.0 && c.delta < 1.0))
    throw std::invalid_argument("constants: delta must lie in (0, 1)");
}

/// Which guarantee a parameter set realizes. The momentum schedule covers
/// any bounded-moment gradient oracle; the variance-reduced schedule
/// additionally assumes per-sample smooth component gradients.
enum class Schedule { momentum, variance_reduced };

struct PrescribedParams {
  Schedule schedule = Schedule::momentum;
  double beta = 0.0;
  double clip = 0.0;  // M
  double eta = 0.0;   // min over the three candidates below
  // Candidates in statement order. A candidate can be +infinity (T = 1
  // makes beta 0 and the middle candidate divides by beta).
  std::array<double, 3> eta_candidates{};
  ProblemConstants constants;      // as supplied
  double effective_delta = 0.0;    // delta actually used in the logs
};

namespace detail {

inline double clip_level(const ProblemConstants& c, double beta) {
  double noise_term =
      c.sigma > 0.0 ? c.sigma * std::pow(1.0 - beta, -1.0 / c.p) : 0.0;
  return std::max(noise_term, 4.0 * std::sqrt(c.L * c.delta1));
}

// The last candidate is shared by both schedules; the middle one too.
inline double eta_shared_middle(const ProblemConstants& c, double beta) {
  if (beta == 0.0) return std::numeric_limits<double>::infinity();
  return (1.0 - beta) / (9.0 * beta) * std::sqrt(c.delta1 / c.L);
}

inline double eta_shared_last(const ProblemConstants& c, double beta, double M,
                              double delta) {
  double T = static_cast<double>(c.T);
  return c.delta1 / (120.0 * T * M * (1.0 - beta) * std::log(4.0 * T / delta));
}

}  // namespace detail

/// Schedule for the plain clipped-momentum method (interface token
/// "theorem1"). Natural logarithms throughout.
///
///   beta = 1 - T^(-p/(3p-2))
///   M    = max(sigma (1-beta)^(-1/p), 4 sqrt(L delta1))
///   eta  = min( sqrt((1-beta) delta1 / (6 T L)),
///               (1-beta)/(9 beta) sqrt(delta1 / L),
///               delta1 / (120 T M (1-beta) log(4T/delta)) )
inline PrescribedParams params_momentum(const ProblemConstants& c) {
  validate(c);
  double T = static_cast<double>(c.T);
  double beta = 1.0 - std::pow(T, -c.p / (3.0 * c.p - 2.0));
  double M = detail::clip_level(c, beta);

  PrescribedParams out;
  out.schedule = Schedule::momentum;
  out.beta = beta;
  out.clip = M;
  out.constants = c;
  out.effective_delta = c.delta;
  out.eta_candidates[0] = std::sqrt((1.0 - beta) * c.delta1 / (6.0 * T * c.L));
  out.eta_candidates[1] = detail::eta_shared_middle(c, beta);
  out.eta_candidates[2] = detail::eta_shared_last(c, beta, M, c.delta);
  out.eta = std::min({out.eta_candidates[0], out.eta_candidates[1], out.eta_candidates[2]});
  return out;
}

/// Schedule for the variance-reduced method (interface token "theorem2").
/// Its guarantee holds with probability 1 - 2 delta as stated; passing
/// halve_delta = true substitutes delta/2 so the failure mass is delta.
///
///   beta = 1 - T^(-p/(2p-1))
///   M    = max(sigma (1-beta)^(-1/p), 4 sqrt(L delta1))
///   eta  = min( sqrt(sqrt(1-beta) delta1 / (60 T L log(4T/delta))),
///               (1-beta)/(9 beta) sqrt(delta1 / L),
///               delta1 / (120 T M (1-beta) log(4T/delta)) )
inline PrescribedParams params_variance_reduced(const ProblemConstants& c,
                                                bool halve_delta = false) {
  validate(c);
  double T = static_cast<double>(c.T);
  double delta = halve_delta ? c.delta / 2.0 : c.delta;
  double beta = 1.0 - std::pow(T, -c.p / (2.0 * c.p - 1.0));
  double M = detail::clip_level(c, beta);

  PrescribedParams out;
  out.schedule = Schedule::variance_reduced;
  out.beta = beta;
  out.clip = M;
  out.constants = c;
  out.effective_delta = delta;
  out.eta_candidates[0] =
      std::sqrt(std::sqrt(1.0 - beta) * c.delta1 / (60.0 * T * c.L * std::log(4.0 * T / delta)));
  out.eta_candidates[1] = detail::eta_shared_middle(c, beta);
  out.eta_candidates[2] = detail::eta_shared_last(c, beta, M, delta);
  out.eta = std::min({out.eta_candidates[0], out.eta_candidates[1], out.eta_candidates[2]});
  return out;
}

inline PrescribedParams prescribe(Schedule s, const ProblemConstants& c,
                                  bool halve_delta = false) {
  return s == Schedule::momentum ? params_momentum(c)
                                 : params_variance_reduced(c, halve_delta);
}

/// Guaranteed decay exponent of the average gradient norm: the bound is
/// O~(T^(-rate)). momentum: (p-1)/(3p-2), so 1/4 at p = 2.
/// variance_reduced: (p-1)/(2p-1), so 1/3 at p = 2.
inline double rate_exponent(Schedule s, double p) {
  if (!(p > 1.0 && p <= 2.0))
    throw std::invalid_argument("rate exponent: p must lie in (1, 2]");
  return s == Schedule::momentum ? (p - 1.0) / (3.0 * p - 2.0)
                                 : (p - 1.0) / (2.0 * p - 1.0);
}

/// The guarantee's right-hand side for the average gradient norm,
/// (1/T) sum_t ||grad F(x_t)|| <= 2 delta1 / (eta T), at the prescribed eta.
inline double predicted_avg_grad_bound(const PrescribedParams& params) {
  return 2.0 * params.constants.delta1 /
         (params.eta * static_cast<double>(params.constants.T));
}

/// Same bound evaluated at an explicit initial gap and horizon, for use
/// when the step size came from somewhere other than a full prescription.
inline double predicted_avg_grad_bound(const PrescribedParams& params, double delta1,
                                       long T) {
  if (!(delta1 > 0.0)) throw std::invalid_argument("predicted bound: delta1 must be positive");
  if (T < 1) throw std::invalid_argument("predicted bound: T must be at least 1");
  return 2.0 * delta1 / (params.eta * static_cast<double>(T));
}

}  // namespace htopt
