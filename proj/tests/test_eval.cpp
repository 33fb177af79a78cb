#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "adp/eval.hpp"

using namespace adp;

TEST_CASE("default horizon matches the discount") {
  CHECK(default_horizon(0.95) == 270);
  CHECK(default_horizon(0.99) == 1375);
}

TEST_CASE("zero stage cost gives exactly zero performance") {
  ProblemSpec s = one_d_example().spec();
  s.L_x.setZero();
  s.L_u = Matrix::Constant(1, 1, 1e-12);  // keep it PD
  auto prob = validate_problem(std::move(s));
  Policy pol = Policy::greedy_v(prob, QuadraticForm::zero(Space::State, 1));
  PerformanceEstimate perf = simulate_performance(pol, prob, 50, 100, 3);
  CHECK(perf.mean <= 1e-10);
}

TEST_CASE("common random numbers and worker-count independence") {
  auto prob = one_d_example();
  QuadraticForm v = QuadraticForm::state(Matrix::Constant(1, 1, 1.2), Vector::Zero(1), 0.0);
  Policy pol = Policy::greedy_v(prob, v);
  PerformanceEstimate a = simulate_performance(pol, prob, 100, 500, 11, 1);
  PerformanceEstimate b = simulate_performance(pol, prob, 100, 500, 11, 2);
  CHECK(a.mean == b.mean);
  CHECK(a.ci_halfwidth == b.ci_halfwidth);
}

TEST_CASE("occupancy weights and truncation mass") {
  auto prob = one_d_example();
  Policy pol = Policy::greedy_v(prob, QuadraticForm::state(Matrix::Identity(1, 1),
                                                           Vector::Zero(1), 0.0));
  const int T = 300, N = 50;
  OccupancyEstimate occ = occupancy_estimate(pol, prob, T, N, 17);
  CHECK(occ.weights.size() == static_cast<Eigen::Index>(N) * (T + 1));
  CHECK(occ.total_weight == doctest::Approx(1.0 - std::pow(0.95, 301)).epsilon(1e-15));
  CHECK(occ.weights.sum() == doctest::Approx(occ.total_weight).epsilon(1e-12));
  // the first weight of every trajectory is (1 - gamma)/N
  CHECK(occ.weights[0] == doctest::Approx(0.05 / N));
  CHECK(occ.weights[T + 1] == doctest::Approx(0.05 / N));
}

TEST_CASE("occupancy at vanishing discount is the initial distribution") {
  ProblemSpec s = one_d_example().spec();
  s.gamma = 1e-12;
  auto prob = validate_problem(std::move(s));
  Policy pol = Policy::greedy_v(prob, QuadraticForm::zero(Space::State, 1));
  const int N = 4000;
  OccupancyEstimate occ = occupancy_estimate(pol, prob, 3, N, 23);
  double mean = 0.0;
  for (Eigen::Index k = 0; k < occ.weights.size(); ++k)
    mean += occ.weights[k] * occ.states(0, k);
  mean /= occ.weights.sum();
  CHECK(std::abs(mean) < 4.0 * std::sqrt(10.0) / std::sqrt(static_cast<double>(N)));
}

TEST_CASE("occupancy identity for a quadratic test function") {
  auto prob = one_d_example();
  QuadraticForm v = QuadraticForm::state(Matrix::Constant(1, 1, 1.2), Vector::Zero(1), 0.0);
  Policy pol = Policy::greedy_v(prob, v);
  const int T = 270, N = 4000;
  OccupancyEstimate occ = occupancy_estimate(pol, prob, T, N, 29);

  QuadraticForm f = QuadraticForm::state(Matrix::Constant(1, 1, 0.7),
                                         Vector::Constant(1, -0.4), 1.3);
  // per-trajectory evaluation of mu-integrals for a standard error
  std::vector<double> residuals(N);
  const double lhs = weighted_integral(f, RelevanceMeasure::state_only(prob->nu));
  for (int traj = 0; traj < N; ++traj) {
    double fmu = 0.0, fnext = 0.0;
    for (int t = 0; t <= T; ++t) {
      const Eigen::Index k = static_cast<Eigen::Index>(traj) * (T + 1) + t;
      const double w = occ.weights[k] * N;  // per-trajectory discounted weight
      const Vector x = occ.states.col(k);
      const Vector u = occ.inputs.col(k);
      fmu += w * f.eval(x);
      fnext += w * expected_next_value(f, prob, x, u);
    }
    residuals[static_cast<std::size_t>(traj)] =
        (fmu - prob->gamma * fnext) / (1.0 - prob->gamma);
  }
  double mean = 0.0, ss = 0.0;
  for (double r : residuals) mean += r / N;
  for (double r : residuals) ss += (r - mean) * (r - mean);
  const double se = std::sqrt(ss / (N - 1.0) / N);
  CHECK(std::abs(mean - lhs) <= 4.0 * se + 1e-6);
}

TEST_CASE("lower bound closed forms") {
  auto prob = one_d_example();
  // the zero function gives the trivial bound 0
  LowerBoundEstimate zero = lower_bound(QuadraticForm::zero(Space::State, 1), prob, 100, 3);
  CHECK(zero.exact);
  CHECK(zero.mean == 0.0);

  // V-form: closed-form nu integral
  QuadraticForm v = QuadraticForm::state(Matrix::Constant(1, 1, 1.5),
                                         Vector::Constant(1, 0.3), -2.0);
  LowerBoundEstimate lbv = lower_bound(v, prob, 100, 3);
  CHECK(lbv.exact);
  CHECK(lbv.mean == doctest::Approx(15.0 - 2.0));

  // Q-form over the box: Monte Carlo agrees with the closed form when the
  // box is wide enough to be inactive
  ProblemSpec wide = prob.spec();
  wide.u_lo[0] = -1e6;
  wide.u_hi[0] = 1e6;
  auto wprob = validate_problem(std::move(wide));
  QuadraticForm q = tu_closed_form(v, wprob);
  LowerBoundEstimate mc = lower_bound(q, prob, 4000, 5);
  const QuadraticForm vmin = partial_min_over_input(q);
  const double exact = weighted_integral(vmin, RelevanceMeasure::state_only(prob->nu));
  // the box [-1,1] truncates the minimizer for large |x|, so MC >= exact
  CHECK(mc.mean >= exact - 1e-9);
}

TEST_CASE("linear gain on the unconstrained oscillator attains the oracle") {
  auto prob = oscillator_spec(2, 0.1);
  RiccatiSolution ric = riccati_oracle(prob);
  const double oracle = weighted_integral(
      QuadraticForm::state(ric.P, Vector::Zero(4), ric.s),
      RelevanceMeasure::state_only(prob->nu));
  Policy pol = Policy::linear_gain(prob, ric.K);
  PerformanceEstimate perf =
      simulate_performance(pol, prob, default_horizon(prob->gamma), 10000, 31);
  CHECK(std::abs(perf.mean - oracle) <= 3.0 * perf.ci_halfwidth);
}

TEST_CASE("grid integration against a gaussian matches closed forms") {
  GridConfig cfg = GridConfig::one_d_coarse(2001, 11);
  QuadraticForm q = QuadraticForm::state(Matrix::Constant(1, 1, 2.0),
                                         Vector::Constant(1, 1.0), -3.0);
  GridFunction g = GridFunction::from_quadratic(q, cfg.state_axes());
  GaussianMeasure nu = GaussianMeasure::scalar(0.5, 2.0);
  const double exact = weighted_integral(q, RelevanceMeasure::state_only(nu));
  CHECK(integrate_grid_against_gaussian(g, nu) == doctest::Approx(exact).epsilon(1e-6));
}

TEST_CASE("bound verifiers hold on the benchmark") {
  auto prob = one_d_example();
  TheoremContext ctx{prob,
                     GridConfig::one_d_coarse(601, 61),
                     GridFunction(),
                     GridFunction(),
                     QuadraticForm(),
                     QuadraticForm(),
                     1,
                     1,
                     RelevanceMeasure::state_only(prob->nu),
                     RelevanceMeasure::with_box_input(prob->nu, prob->u_lo, prob->u_hi),
                     800,
                     270};
  ctx.vstar = value_iteration(prob, ctx.cfg, ValueForm::V);
  ctx.qstar = qstar_from_vstar(ctx.vstar, prob, ctx.cfg);

  SynthesisRequest vreq = SynthesisRequest::defaults(prob, SynthesisForm::VForm, 1);
  vreq.samples_per_inequality = 1500;
  ctx.vhat = synthesize(prob, vreq, sample_relevance(prob, vreq.c, 1500, 2001)).primary;
  SynthesisRequest qreq = SynthesisRequest::defaults(prob, SynthesisForm::QFormEfficient, 1);
  qreq.samples_per_inequality = 1500;
  ctx.qhat = synthesize(prob, qreq, sample_relevance(prob, qreq.c, 1500, 2002)).primary;

  for (TheoremId id : {TheoremId::T1, TheoremId::T2, TheoremId::T3, TheoremId::T4,
                       TheoremId::T5, TheoremId::T6}) {
    BoundReport rep = verify_theorem(id, ctx, 99);
    INFO(to_string(id), " lhs=", rep.lhs, " rhs=", rep.rhs, " slack=", rep.stat_slack);
    CHECK(rep.pass);
    CHECK(rep.lhs <= rep.rhs + rep.stat_slack);
  }
}
