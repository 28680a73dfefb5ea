#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "htopt/noise.hpp"
#include "htopt/rng.hpp"

namespace htopt {

/// A smooth objective F with known smoothness constant and known infimum.
/// Instances are immutable once constructed; the evaluators capture their
/// parameters by value.
struct Objective {
  int dim = 0;
  double smoothness = 0.0;     // L: ||grad F(x) - grad F(y)|| <= L ||x - y||
  double optimal_value = 0.0;  // F*, a true lower bound on F
  std::function<double(const Eigen::VectorXd&)> value;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> gradient;
  std::optional<Eigen::VectorXd> minimizer;
};

/// Diagonal quadratic F(x) = 1/2 sum_i lambda_i (x_i - c_i)^2.
/// L = max lambda_i, F* = 0, minimizer = center.
inline Objective make_quadratic(const Eigen::VectorXd& eigenvalues,
                                const Eigen::VectorXd& center) {
  if (eigenvalues.size() == 0)
    throw std::invalid_argument("quadratic: eigenvalue list must be nonempty");
  if (eigenvalues.size() != center.size())
    throw std::invalid_argument("quadratic: eigenvalues and center differ in dimension");
  for (Eigen::Index i = 0; i < eigenvalues.size(); ++i)
    if (!(eigenvalues[i] > 0.0))
      throw std::invalid_argument("quadratic: eigenvalues must be positive");

  Objective obj;
  obj.dim = static_cast<int>(eigenvalues.size());
  obj.smoothness = eigenvalues.maxCoeff();
  obj.optimal_value = 0.0;
  obj.minimizer = center;
  obj.value = [eigenvalues, center](const Eigen::VectorXd& x) {
    Eigen::VectorXd r = x - center;
    return 0.5 * r.cwiseProduct(r).dot(eigenvalues);
  };
  obj.gradient = [eigenvalues, center](const Eigen::VectorXd& x) {
    return eigenvalues.cwiseProduct(x - center).eval();
  };
  return obj;
}

/// Quadratic centered at the origin.
inline Objective make_quadratic(const Eigen::VectorXd& eigenvalues) {
  return make_quadratic(eigenvalues, Eigen::VectorXd::Zero(eigenvalues.size()));
}

/// Realized randomness of one component draw. The payload layout is owned
/// by the instance that drew it; replaying the same sample at the same
/// point reproduces the gradient bit for bit because evaluation is pure
/// arithmetic on the payload.
struct GradientSample {
  Eigen::VectorXd payload;
};

/// An objective in expectation form: F(x) = E_Xi f(x, Xi), with per-sample
/// gradients that are smooth in x for every fixed Xi. Sampling and
/// evaluation are split so one draw can be evaluated at two points.
struct ComponentObjective {
  Objective base;
  std::function<GradientSample(RngStream&)> draw_sample;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&, const GradientSample&)>
      sample_gradient;
};

/// f(x, Xi) = F(x) + <zeta_Xi, x> for a zero-mean draw zeta. The per-sample
/// gradient is grad F(x) + zeta_Xi; the additive term is independent of x,
/// so differences of one sample's gradients at two points carry no noise.
inline ComponentObjective make_linear_perturbation(Objective base, NoiseModel noise) {
  validate(noise);
  if (noise.dim != base.dim)
    throw std::invalid_argument("linear perturbation: noise dimension differs from objective");
  ComponentObjective comp;
  comp.base = std::move(base);
  comp.draw_sample = [noise](RngStream& rng) {
    return GradientSample{sample_noise(noise, rng)};
  };
  auto grad = comp.base.gradient;
  comp.sample_gradient = [grad](const Eigen::VectorXd& x, const GradientSample& s) {
    return (grad(x) + s.payload).eval();
  };
  return comp;
}

/// f(x, Xi) = 1/2 x' A_Xi x + <b_Xi, x> with A_Xi diagonal.
///
/// Realized eigenvalues are mean_eigenvalues[i] + eigen_spread * u_i with
/// u_i uniform on [-1, 1], so they stay inside
/// [lambda_i - spread, lambda_i + spread] and the declared smoothness
/// max_i lambda_i + spread bounds every realization. b_Xi comes from
/// center_noise. In expectation F(x) = 1/2 x' diag(lambda) x.
///
/// Payload layout: [realized eigenvalues (dim); b (dim)].
inline ComponentObjective make_random_quadratic(const Eigen::VectorXd& mean_eigenvalues,
                                                double eigen_spread,
                                                NoiseModel center_noise) {
  validate(center_noise);
  const int dim = static_cast<int>(mean_eigenvalues.size());
  if (dim == 0)
    throw std::invalid_argument("random quadratic: eigenvalue list must be nonempty");
  if (center_noise.dim != dim)
    throw std::invalid_argument("random quadratic: noise dimension differs from objective");
  if (!(eigen_spread >= 0.0))
    throw std::invalid_argument("random quadratic: eigen_spread must be nonnegative");
  for (Eigen::Index i = 0; i < mean_eigenvalues.size(); ++i)
    if (!(mean_eigenvalues[i] - eigen_spread > 0.0))
      throw std::invalid_argument(
          "random quadratic: realized eigenvalues must stay positive; "
          "require eigen_spread < min mean_eigenvalue");

  ComponentObjective comp;
  comp.base = make_quadratic(mean_eigenvalues, Eigen::VectorXd::Zero(dim));
  comp.base.smoothness = mean_eigenvalues.maxCoeff() + eigen_spread;
  comp.draw_sample = [mean_eigenvalues, eigen_spread, center_noise, dim](RngStream& rng) {
    GradientSample s;
    s.payload.resize(2 * dim);
    for (int i = 0; i < dim; ++i)
      s.payload[i] = mean_eigenvalues[i] + eigen_spread * rng.uniform_sym();
    s.payload.tail(dim) = sample_noise(center_noise, rng);
    return s;
  };
  comp.sample_gradient = [dim](const Eigen::VectorXd& x, const GradientSample& s) {
    return (s.payload.head(dim).cwiseProduct(x) + s.payload.tail(dim)).eval();
  };
  return comp;
}

/// A problem the optimizers can run on: the true objective, a stochastic
/// gradient oracle, a start point, and the initial gap Delta_1 = F(x1) - F*
/// fixed at construction.
///
/// Two oracle forms exist. An additive-noise instance draws zeta and
/// returns grad F(x) + zeta. A component instance draws Xi and returns
/// grad f(x, Xi); it additionally supports replaying one Xi at two points,
/// which the variance-reduced optimizer requires.
class ProblemInstance {
 public:
  static ProblemInstance additive(Objective obj, NoiseModel noise,
                                  const Eigen::VectorXd& x1, std::string id) {
    validate(noise);
    if (noise.dim != obj.dim)
      throw std::invalid_argument("instance: noise dimension differs from objective");
    ProblemInstance inst(std::move(obj), std::move(id), x1);
    inst.noise_ = std::move(noise);
    return inst;
  }

  static ProblemInstance component(ComponentObjective comp,
                                   const Eigen::VectorXd& x1, std::string id) {
    ProblemInstance inst(comp.base, std::move(id), x1);
    inst.component_ = std::move(comp);
    return inst;
  }

  const Objective& objective() const { return objective_; }
  const Eigen::VectorXd& x1() const { return x1_; }
  double delta1() const { return delta1_; }
  const std::string& id() const { return id_; }

  bool has_component() const { return component_.has_value(); }

  const ComponentObjective& component_objective() const {
    if (!component_)
      throw std::logic_error("instance: no component structure on an additive-noise problem");
    return *component_;
  }

  /// One stochastic gradient observation at x. Component instances draw a
  /// fresh Xi per call, so consecutive calls match the per-step sample
  /// consumption of the variance-reduced path.
  Eigen::VectorXd observe_gradient(const Eigen::VectorXd& x, RngStream& rng) const {
    if (component_) {
      GradientSample s = component_->draw_sample(rng);
      return component_->sample_gradient(x, s);
    }
    return objective_.gradient(x) + sample_noise(*noise_, rng);
  }

 private:
  ProblemInstance(Objective obj, std::string id, const Eigen::VectorXd& x1)
      : objective_(std::move(obj)), id_(std::move(id)), x1_(x1) {
    if (x1_.size() != objective_.dim)
      throw std::invalid_argument("instance: x1 dimension differs from objective");
    delta1_ = objective_.value(x1_) - objective_.optimal_value;
    if (!(delta1_ >= 0.0))
      throw std::invalid_argument("instance: F(x1) < F*, optimal_value is not a lower bound");
  }

  Objective objective_;
  std::optional<NoiseModel> noise_;
  std::optional<ComponentObjective> component_;
  std::string id_;
  Eigen::VectorXd x1_;
  double delta1_ = 0.0;
};

struct SmoothnessReport {
  bool descent_ok = true;
  bool gradient_bound_ok = true;
  // Most negative relative slack seen across all checks. Nonnegative slack
  // means the inequality held with room to spare.
  double descent_worst_slack = 0.0;
  double gradient_bound_worst_slack = 0.0;
};

/// Empirically checks two consequences of L-smoothness with known F* on a
/// list of probe points:
///
///   (1) F(x) <= F(y) + <grad F(y), x - y> + (L/2) ||x - y||^2
///       over all ordered pairs (x, y), and
///   (2) ||grad F(x)|| <= sqrt(2 L (F(x) - F*)) at every point.
///
/// Slacks are reported relative to max(1, |both sides|); tolerance 1e-10.
inline SmoothnessReport verify_smoothness_facts(const Objective& obj,
                                                const std::vector<Eigen::VectorXd>& points) {
  if (points.empty())
    throw std::invalid_argument("smoothness check: point list must be nonempty");
  constexpr double kTol = 1e-10;
  SmoothnessReport rep;
  rep.descent_worst_slack = std::numeric_limits<double>::infinity();
  rep.gradient_bound_worst_slack = std::numeric_limits<double>::infinity();

  std::vector<double> values(points.size());
  std::vector<Eigen::VectorXd> grads(points.size());
  for (size_t i = 0; i < points.size(); ++i) {
    values[i] = obj.value(points[i]);
    grads[i] = obj.gradient(points[i]);
  }

  for (size_t i = 0; i < points.size(); ++i) {
    for (size_t j = 0; j < points.size(); ++j) {
      Eigen::VectorXd d = points[i] - points[j];
      double rhs = values[j] + grads[j].dot(d) + 0.5 * obj.smoothness * d.squaredNorm();
      double scale = std::max({1.0, std::abs(values[i]), std::abs(rhs)});
      double slack = (rhs - values[i]) / scale;
      rep.descent_worst_slack = std::min(rep.descent_worst_slack, slack);
    }
    double bound = std::sqrt(2.0 * obj.smoothness * (values[i] - obj.optimal_value));
    double scale = std::max({1.0, grads[i].norm(), bound});
    double slack = (bound - grads[i].norm()) / scale;
    rep.gradient_bound_worst_slack = std::min(rep.gradient_bound_worst_slack, slack);
  }
  rep.descent_ok = rep.descent_worst_slack >= -kTol;
  rep.gradient_bound_ok = rep.gradient_bound_worst_slack >= -kTol;
  return rep;
}

}  // namespace htopt
