#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

#include "htopt/rng.hpp"

namespace htopt {

/// Zero-mean gradient noise families with a declared moment order p.
/// The declared p is the order at which E||zeta||^p is finite and known in
/// closed form; optimizers and schedules consume sigma = (E||zeta||^p)^(1/p).
enum class NoiseFamily { zero, gaussian, pareto_radial };

/// Parameters of one noise distribution on R^dim.
///
///   zero           the constant zero vector
///   gaussian       isotropic N(0, stddev^2 I)
///   pareto_radial  radius r ~ Pareto(tail_index alpha, scale x_m),
///                  direction uniform on the sphere; heavy tailed, with
///                  finite moments only below order alpha
struct NoiseModel {
  NoiseFamily family = NoiseFamily::zero;
  int dim = 1;
  double moment_order = 2.0;  // p, must lie in (1, 2]
  double tail_index = 0.0;    // alpha, pareto only
  double scale = 0.0;         // x_m, pareto only
  double stddev = 0.0;        // gaussian only
};

inline void validate(const NoiseModel& m) {
  if (m.dim < 1) throw std::invalid_argument("noise: dim must be at least 1");
  if (!(m.moment_order > 1.0) || !(m.moment_order <= 2.0))
    throw std::invalid_argument("noise: moment order p must lie in (1, 2]");
  switch (m.family) {
    case NoiseFamily::zero:
      break;
    case NoiseFamily::gaussian:
      if (!(m.stddev >= 0.0) || !std::isfinite(m.stddev))
        throw std::invalid_argument("noise: stddev must be finite and nonnegative");
      break;
    case NoiseFamily::pareto_radial:
      if (!(m.scale > 0.0))
        throw std::invalid_argument("noise: pareto scale x_m must be positive");
      if (!(m.tail_index > m.moment_order))
        throw std::invalid_argument(
            "noise: pareto moment of order p is undefined unless p < alpha (tail index)");
      break;
  }
}

inline NoiseModel make_zero_noise(int dim, double p = 2.0) {
  NoiseModel m;
  m.family = NoiseFamily::zero;
  m.dim = dim;
  m.moment_order = p;
  validate(m);
  return m;
}

inline NoiseModel make_gaussian_noise(int dim, double stddev, double p = 2.0) {
  NoiseModel m;
  m.family = NoiseFamily::gaussian;
  m.dim = dim;
  m.stddev = stddev;
  m.moment_order = p;
  validate(m);
  return m;
}

inline NoiseModel make_pareto_noise(int dim, double alpha, double x_m, double p) {
  NoiseModel m;
  m.family = NoiseFamily::pareto_radial;
  m.dim = dim;
  m.tail_index = alpha;
  m.scale = x_m;
  m.moment_order = p;
  validate(m);
  return m;
}

/// One draw. Pareto radii come from the inverse CDF r = x_m * u^(-1/alpha)
/// with u uniform on (0, 1], so every pareto sample has norm >= x_m.
inline Eigen::VectorXd sample_noise(const NoiseModel& m, RngStream& rng) {
  switch (m.family) {
    case NoiseFamily::zero:
      return Eigen::VectorXd::Zero(m.dim);
    case NoiseFamily::gaussian:
      return m.stddev * rng.normal_vector(m.dim);
    case NoiseFamily::pareto_radial: {
      double r = m.scale * std::pow(rng.uniform_open01(), -1.0 / m.tail_index);
      return r * rng.unit_vector(m.dim);
    }
  }
  throw std::logic_error("noise: unknown family");
}

/// sigma = (E||zeta||^p)^(1/p) at the model's declared moment order.
///
/// pareto_radial: E r^p = alpha * x_m^p / (alpha - p).
/// gaussian:      ||zeta|| = stddev * chi(dim), and
///                E chi(dim)^p = 2^(p/2) Gamma((dim+p)/2) / Gamma(dim/2).
inline double analytic_sigma(const NoiseModel& m) {
  validate(m);
  double p = m.moment_order;
  switch (m.family) {
    case NoiseFamily::zero:
      return 0.0;
    case NoiseFamily::gaussian: {
      if (m.stddev == 0.0) return 0.0;
      double log_moment = 0.5 * p * std::log(2.0) +
                          std::lgamma(0.5 * (m.dim + p)) - std::lgamma(0.5 * m.dim);
      return m.stddev * std::exp(log_moment / p);
    }
    case NoiseFamily::pareto_radial:
      return m.scale * std::pow(m.tail_index / (m.tail_index - p), 1.0 / p);
  }
  throw std::logic_error("noise: unknown family");
}

}  // namespace htopt
