#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "htopt/analysis.hpp"
#include "htopt/noise.hpp"
#include "htopt/optim.hpp"
#include "htopt/problems.hpp"
#include "htopt/rng.hpp"

using namespace htopt;

namespace {

Eigen::VectorXd vec2(double a, double b) {
  Eigen::VectorXd v(2);
  v << a, b;
  return v;
}

ProblemInstance quiet_quadratic() {
  return ProblemInstance::additive(make_quadratic(vec2(1.0, 4.0)), make_zero_noise(2),
                                   vec2(1.0, 1.0), "quiet");
}

ProblemInstance pareto_quadratic() {
  return ProblemInstance::additive(make_quadratic(vec2(1.0, 4.0)),
                                   make_pareto_noise(2, 3.0, 1.0, 2.0), vec2(1.0, 1.0),
                                   "pareto-quadratic");
}

ProblemInstance pareto_linear_component() {
  return ProblemInstance::component(
      make_linear_perturbation(make_quadratic(vec2(1.0, 4.0)),
                               make_pareto_noise(2, 3.0, 1.0, 2.0)),
      vec2(1.0, 1.0), "pareto-linear");
}

// A synthetic record with constant unit gradient norms and a constant gap
// of one between every iterate's value and the infimum.
Trajectory flat_gap_trajectory(long T) {
  Trajectory traj;
  traj.f_star = 0.0;
  traj.delta1 = 1.0;
  traj.final_f = 1.0;
  for (long t = 0; t < T; ++t) {
    TrajectoryStep s;
    s.f = 1.0;
    s.grad_norm = 1.0;
    traj.steps.push_back(s);
  }
  return traj;
}

}  // namespace

TEST_CASE("error split is exactly zero without noise", "[analysis]") {
  ProblemInstance inst = quiet_quadratic();
  RngStream rng(7);
  Eigen::VectorXd x = vec2(0.2, 0.1);  // gradient (0.2, 0.4), well under M/2
  EpsilonSplitReport rep = epsilon_split_estimate(inst, x, 10.0, 0.0, 2.0, 200, rng);
  REQUIRE(rep.bounds_applicable);
  REQUIRE(rep.bias_norm == 0.0);
  REQUIRE(rep.var_estimate == 0.0);
  REQUIRE(rep.max_deviation == 0.0);
  REQUIRE(rep.bias_ok);
  REQUIRE(rep.var_ok);
}

TEST_CASE("a generous clip level leaves the observation unbiased", "[analysis]") {
  ProblemInstance inst = ProblemInstance::additive(
      make_quadratic(vec2(1.0, 4.0)), make_gaussian_noise(2, 0.5), vec2(1.0, 1.0), "gauss");
  RngStream rng(11);
  Eigen::VectorXd x = vec2(0.3, 0.1);
  EpsilonSplitReport rep = epsilon_split_estimate(inst, x, 1000.0, 0.7071067811865476,
                                                  2.0, 20000, rng);
  REQUIRE(rep.bounds_applicable);
  REQUIRE(rep.bias_norm <= 4.0 * rep.bias_se);
  REQUIRE(rep.bias_ok);
  REQUIRE(rep.var_ok);
}

TEST_CASE("heavy-tailed observations respect the clipped error bounds", "[analysis]") {
  // Pareto radial noise with alpha = 3 and x_m = 1 has second moment 3.
  // At clip level 10 the bias bound is 0.6 and the second-moment bound 30.
  ProblemInstance inst = pareto_quadratic();
  RngStream rng(13);
  Eigen::VectorXd x = vec2(1.0, 0.0);  // gradient (1, 0), norm 1 <= M/2
  double sigma = std::sqrt(3.0);
  EpsilonSplitReport rep = epsilon_split_estimate(inst, x, 10.0, sigma, 2.0, 20000, rng);
  REQUIRE(rep.bounds_applicable);
  REQUIRE(rep.bias_bound == Catch::Approx(0.6).epsilon(1e-12));
  REQUIRE(rep.var_bound == Catch::Approx(30.0).epsilon(1e-12));
  REQUIRE(rep.bias_ok);
  REQUIRE(rep.var_ok);
  REQUIRE(rep.max_deviation <= 20.0 + 1e-9);
}

TEST_CASE("error split rejects unusable sampling plans", "[analysis]") {
  ProblemInstance inst = quiet_quadratic();
  RngStream rng(1);
  Eigen::VectorXd x = vec2(0.1, 0.1);
  REQUIRE_THROWS(epsilon_split_estimate(inst, x, 10.0, 0.0, 2.0, 99, rng));
  REQUIRE_THROWS(epsilon_split_estimate(inst, x, 0.0, 0.0, 2.0, 200, rng));
  REQUIRE_THROWS(epsilon_split_estimate(inst, x, 10.0, 0.0, 2.5, 200, rng));
}

TEST_CASE("momentum error satisfies its closed form", "[analysis]") {
  HyperParams hp;
  hp.beta = 0.9;
  hp.clip = 8.0;
  hp.eta = 1e-3;
  hp.horizon = 200;
  RunOptions opts;
  opts.diagnostics = true;

  Trajectory a = run(Algorithm::momentum, pareto_quadratic(), hp, 101, opts);
  XiResidualReport ra = xi_residual_check(a, hp.beta);
  REQUIRE(ra.residuals.size() == 200);
  REQUIRE(ra.residuals.front() <= 1e-12);
  REQUIRE(ra.max_residual <= 1e-8);

  Trajectory b = run(Algorithm::variance_reduced, pareto_linear_component(), hp, 101, opts);
  XiResidualReport rb = xi_residual_check(b, hp.beta);
  REQUIRE(rb.max_residual <= 1e-8);

  Trajectory bare = run(Algorithm::momentum, pareto_quadratic(), hp, 101);
  REQUIRE_THROWS(xi_residual_check(bare, hp.beta));
}

TEST_CASE("momentum drift terms stay under the deterministic bounds", "[analysis]") {
  HyperParams hp;
  hp.beta = 0.9;
  hp.clip = 5.0;
  hp.eta = 0.01;
  hp.horizon = 400;
  RunOptions opts;
  opts.diagnostics = true;
  Trajectory traj = run(Algorithm::momentum, pareto_quadratic(), hp, 202, opts);

  double L = 4.0;  // largest curvature of the quadratic
  ZSumReport rep = z_geometric_sums(traj, hp.beta, hp.eta, L);
  REQUIRE(rep.per_step_bound == Catch::Approx(hp.eta * L).epsilon(1e-14));
  REQUIRE(rep.momentum_sum_bound == Catch::Approx(hp.eta * L / 0.1).epsilon(1e-12));
  REQUIRE(rep.per_step_ok);
  REQUIRE(rep.momentum_sum_ok);
  REQUIRE(rep.max_z_norm <= rep.per_step_bound * (1.0 + 1e-12));
  REQUIRE(rep.max_gsum_norm <= rep.momentum_sum_bound * (1.0 + 1e-12));

  REQUIRE_THROWS(z_geometric_sums(run(Algorithm::momentum, pareto_quadratic(), hp, 1),
                                  hp.beta, hp.eta, L));
}

TEST_CASE("linear perturbations cancel the variance-reduced drift", "[analysis]") {
  HyperParams hp;
  hp.beta = 0.9;
  hp.clip = 5.0;
  hp.eta = 0.01;
  hp.horizon = 200;
  RunOptions opts;
  opts.diagnostics = true;
  ProblemInstance inst = pareto_linear_component();
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Trajectory traj = run(Algorithm::variance_reduced, inst, hp, seed, opts);
    for (size_t t = 1; t < traj.diag.size(); ++t) {
      REQUIRE(traj.diag[t].z.norm() <= 1e-12);
    }
  }
}

TEST_CASE("variance-reduced drift sums stay inside the probabilistic envelope",
          "[analysis]") {
  Eigen::VectorXd lam = vec2(1.0, 2.0);
  ProblemInstance inst = ProblemInstance::component(
      make_random_quadratic(lam, 0.5, make_pareto_noise(2, 3.0, 1.0, 2.0)), vec2(1.0, 1.0),
      "random-quadratic");
  double L = inst.objective().smoothness;
  HyperParams hp;
  hp.beta = 0.9;
  hp.clip = 5.0;
  hp.eta = 0.01;
  hp.horizon = 200;
  double delta = 0.1;
  double envelope = vr_zsum_envelope(hp.eta, L, hp.beta, hp.horizon, delta);
  RunOptions opts;
  opts.diagnostics = true;

  int violations = 0;
  const int seeds = 50;
  for (int s = 0; s < seeds; ++s) {
    Trajectory traj = run(Algorithm::variance_reduced, inst, hp, 1000 + s, opts);
    ZSumReport rep = z_geometric_sums(traj, hp.beta, hp.eta, L);
    REQUIRE(rep.per_step_ok);
    if (rep.max_gsum_norm > envelope) ++violations;
  }
  REQUIRE(static_cast<double>(violations) / seeds <= 0.2);

  REQUIRE_THROWS(vr_zsum_envelope(0.01, 1.0, 1.0, 10, 0.1));
  REQUIRE_THROWS(vr_zsum_envelope(0.01, 1.0, 0.5, 10, 0.0));
}

TEST_CASE("descent envelope flags the first strict excess only", "[analysis]") {
  Trajectory long_run = flat_gap_trajectory(50);
  auto hit = envelope_first_violation(long_run, 0.1, 1.0);
  REQUIRE(hit.has_value());
  REQUIRE(*hit == 11);

  // Ten steps reach the boundary exactly; equality stays inside.
  Trajectory boundary = flat_gap_trajectory(10);
  REQUIRE(!envelope_first_violation(boundary, 0.1, 1.0).has_value());

  HyperParams hp;
  hp.beta = 0.5;
  hp.clip = 1.0;
  hp.eta = 0.1;
  hp.horizon = 20;
  ProblemInstance at_opt = ProblemInstance::additive(
      make_quadratic(vec2(1.0, 4.0)), make_zero_noise(2), vec2(0.0, 0.0), "at-opt");
  Trajectory idle = run(Algorithm::momentum, at_opt, hp, 3);
  REQUIRE(!envelope_first_violation(idle, hp.eta, 1.0).has_value());
}

TEST_CASE("scalar tail weight matches the closed form", "[analysis]") {
  REQUIRE(bernstein_tail(1.0, 1.0, 1.0) ==
          Catch::Approx(1.3745785575819445).epsilon(1e-12));
  REQUIRE(bernstein_tail(1e-9, 1.0, 1.0) == Catch::Approx(2.0).epsilon(1e-8));
  REQUIRE(bernstein_tail(1e6, 1.0, 1.0) < 1e-300);
  REQUIRE_THROWS(bernstein_tail(0.0, 1.0, 1.0));
  REQUIRE_THROWS(bernstein_tail(1.0, 0.0, 1.0));
  REQUIRE_THROWS(bernstein_tail(1.0, 1.0, 0.0));
}

TEST_CASE("deviation level inverts the tail weight", "[analysis]") {
  for (double delta : {0.5, 0.1, 0.01, 1e-6}) {
    for (double F : {0.25, 1.0, 100.0}) {
      for (double R : {0.5, 1.0, 10.0}) {
        double a = bernstein_deviation(delta, F, R);
        REQUIRE(bernstein_tail(a, F, R) == Catch::Approx(delta).epsilon(1e-10));
      }
    }
  }
  REQUIRE_THROWS(bernstein_deviation(0.0, 1.0, 1.0));
  REQUIRE_THROWS(bernstein_deviation(1.0, 1.0, 1.0));
}

TEST_CASE("pathwise reduction reproduces the worked example", "[analysis]") {
  Eigen::VectorXd e1 = vec2(1.0, 0.0);
  PathwiseReport two = pathwise_decomposition({e1, e1});
  REQUIRE(two.y.size() == 2);
  REQUIRE(two.y[0] == 0.0);
  REQUIRE(two.y[1] == 1.0);
  REQUIRE(two.x_sum_norm == 2.0);
  REQUIRE(two.bound == Catch::Approx(2.732050807568877).epsilon(1e-12));
  REQUIRE(two.slack >= 0.0);

  PathwiseReport one = pathwise_decomposition({e1});
  REQUIRE(one.y.size() == 1);
  REQUIRE(one.y[0] == 0.0);
  REQUIRE(one.x_sum_norm == 1.0);
  REQUIRE(one.bound == Catch::Approx(std::sqrt(2.0)).epsilon(1e-14));

  REQUIRE_THROWS(pathwise_decomposition({}));
}

TEST_CASE("pathwise reduction bounds every random sequence", "[analysis]") {
  RngStream rng(99);
  for (int trial = 0; trial < 1000; ++trial) {
    int dim = 1 + static_cast<int>(rng.uniform01() * 5.0);
    int len = 1 + static_cast<int>(rng.uniform01() * 40.0);
    std::vector<Eigen::VectorXd> xs;
    xs.reserve(len);
    for (int i = 0; i < len; ++i) xs.push_back(rng.normal_vector(dim));
    PathwiseReport rep = pathwise_decomposition(xs);
    REQUIRE(rep.slack >= -1e-9 * std::max(1.0, rep.bound));
    REQUIRE(rep.max_y_excess <= 1e-9);
  }
}

TEST_CASE("dimension-free envelope matches its closed form", "[analysis]") {
  std::vector<double> no_variance(5, 0.0);
  REQUIRE(dimension_free_envelope(1.0, no_variance, 0.3) ==
          Catch::Approx(6.907755278982138).epsilon(1e-12));
  std::vector<double> unit_total{0.25, 0.25, 0.25, 0.25};
  REQUIRE(dimension_free_envelope(1.0, unit_total, 0.3) ==
          Catch::Approx(11.460036667137576).epsilon(1e-12));
  REQUIRE_THROWS(dimension_free_envelope(0.0, unit_total, 0.3));
  REQUIRE_THROWS(dimension_free_envelope(1.0, unit_total, 0.0));
  REQUIRE_THROWS(dimension_free_envelope(1.0, std::vector<double>{-1.0}, 0.3));
}

TEST_CASE("concentration bounds hold at their nominal level", "[analysis]") {
  RngStream rng(4242);
  McCheckResult env = check_dimension_free_envelope(1.0, 100, 0.1, 10000, rng);
  REQUIRE(env.trials == 10000);
  REQUIRE(env.frequency <= env.nominal_delta);

  McCheckResult bern = check_bernstein_bound(1.0, 100, 0.1, 10000, rng);
  REQUIRE(bern.frequency <= bern.nominal_delta);
}

TEST_CASE("fluctuation event thresholds follow their closed forms", "[analysis]") {
  // Without noise both thresholds lose their variance term.
  BernsteinEventBounds quiet = bernstein_event_check(0.5, 0.0, 1.0, 2.0, 0.5, 1);
  REQUIRE(quiet.u_threshold == Catch::Approx(2.7725887222397807).epsilon(1e-12));
  REQUIRE(quiet.r_threshold == Catch::Approx(4.0 * 2.7725887222397807).epsilon(1e-12));
  REQUIRE(quiet.u_variance_cap == 0.0);
  REQUIRE(quiet.r_variance_cap == 0.0);

  // sigma = M with beta = 0 makes the moment ratio exactly one.
  double lg = std::log(8.0);
  BernsteinEventBounds unit = bernstein_event_check(0.0, 2.0, 2.0, 2.0, 0.5, 1);
  REQUIRE(unit.u_threshold ==
          Catch::Approx((4.0 / 3.0 + 2.0 * std::sqrt(5.0)) * 2.0 * lg).epsilon(1e-12));
  REQUIRE(unit.r_threshold ==
          Catch::Approx((16.0 / 3.0 + 4.0 * std::sqrt(5.0)) * 4.0 * lg).epsilon(1e-12));
  REQUIRE(unit.u_variance_cap == Catch::Approx(40.0 * lg).epsilon(1e-12));
  REQUIRE(unit.r_variance_cap == Catch::Approx(640.0 * lg).epsilon(1e-12));

  REQUIRE_THROWS(bernstein_event_check(1.0, 1.0, 1.0, 2.0, 0.5, 1));
  REQUIRE_THROWS(bernstein_event_check(0.5, 1.0, 0.0, 2.0, 0.5, 1));
  REQUIRE_THROWS(bernstein_event_check(0.5, 1.0, 1.0, 2.5, 0.5, 1));
  REQUIRE_THROWS(bernstein_event_check(0.5, 1.0, 1.0, 2.0, 1.5, 1));
  REQUIRE_THROWS(bernstein_event_check(0.5, 1.0, 1.0, 2.0, 0.5, 0));
}
