#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "adp/eval.hpp"
#include "adp/synth.hpp"

using namespace adp;

TEST_CASE("sample sets are deterministic and sized as requested") {
  auto prob = one_d_example();
  RelevanceMeasure c = RelevanceMeasure::state_only(prob->nu);
  SampleSet a = sample_relevance(prob, c, 500, 42);
  SampleSet b = sample_relevance(prob, c, 500, 42);
  CHECK(a.count() == 500);
  CHECK((a.states - b.states).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.inputs - b.inputs).cwiseAbs().maxCoeff() == 0.0);

  SampleSet d = sample_relevance(prob, c, 500, 43);
  CHECK((a.states - d.states).cwiseAbs().maxCoeff() > 0.0);

  // inputs inside the box
  CHECK(a.inputs.maxCoeff() <= 1.0);
  CHECK(a.inputs.minCoeff() >= -1.0);
}

TEST_CASE("state samples follow the declared marginal") {
  auto prob = one_d_example();
  RelevanceMeasure c = RelevanceMeasure::state_only(prob->nu);
  const int n = 10000;
  SampleSet s = sample_relevance(prob, c, n, 7);
  const double mean = s.states.row(0).mean();
  double var = 0.0;
  for (int k = 0; k < n; ++k) var += (s.states(0, k) - mean) * (s.states(0, k) - mean) / n;
  CHECK(std::abs(mean) < 4.0 * std::sqrt(10.0) / std::sqrt(static_cast<double>(n)));
  CHECK(var == doctest::Approx(10.0).epsilon(0.10));
}

TEST_CASE("vform assembly: counts and a feasible zero function") {
  auto prob = one_d_example();
  SynthesisRequest req = SynthesisRequest::defaults(prob, SynthesisForm::VForm, 1);
  req.samples_per_inequality = 777;
  SampleSet samples = sample_relevance(prob, req.c, 777, 11);
  LinearProgram lp = build_iterated_lp(prob, req, samples);
  CHECK(lp.num_vars == 3);
  CHECK(lp.num_rows() == 777);
  CHECK(static_cast<int>(lp.labels.size()) == lp.num_vars);
  // l >= 0 makes the zero function feasible: b >= 0 rowwise
  for (double b : lp.b) CHECK(b >= 0.0);
}

TEST_CASE("efficient q-form assembly: variables and constraint groups") {
  auto prob = one_d_example();
  SynthesisRequest req = SynthesisRequest::defaults(prob, SynthesisForm::QFormEfficient, 1);
  req.samples_per_inequality = 100;
  SampleSet samples = sample_relevance(prob, req.c, 100, 13);
  LinearProgram lp = build_iterated_lp(prob, req, samples);
  CHECK(lp.num_vars == 6 + 3);  // dense Q_0 on (x,u) plus one V stage
  CHECK(lp.num_rows() == 200);  // Q_0 <= T_u V_0 and V_0 <= Q_0 at each sample
}

TEST_CASE("variable and row counts: full vs efficient chain") {
  auto prob = one_d_example();
  for (int M : {2, 4}) {
    SynthesisRequest rq = SynthesisRequest::defaults(prob, SynthesisForm::QForm, M);
    rq.samples_per_inequality = 50;
    SynthesisRequest re = rq;
    re.form = SynthesisForm::QFormEfficient;
    SampleSet samples = sample_relevance(prob, rq.c, 50, 17);
    LinearProgram full = build_iterated_lp(prob, rq, samples);
    LinearProgram eff = build_iterated_lp(prob, re, samples);
    const int q_coeffs = 6;
    CHECK(full.num_vars == eff.num_vars + (M - 1) * q_coeffs);
    CHECK(full.num_rows() == 2 * M * 50);
    CHECK(eff.num_rows() == (M + 1) * 50);
  }
}

TEST_CASE("benchmark lower bound, held-out feasibility, underestimation") {
  auto prob = one_d_example();
  SynthesisRequest req = SynthesisRequest::defaults(prob, SynthesisForm::VForm, 1);
  req.samples_per_inequality = 2000;
  SampleSet samples = sample_relevance(prob, req.c, 2000, 1001);
  SynthesisResult res = synthesize(prob, req, samples);
  REQUIRE(res.status == LpStatus::Optimal);
  // sampled relaxation sits a little above the exact restricted optimum 16.09
  CHECK(res.objective > 15.2);
  CHECK(res.objective < 16.9);

  SampleSet heldout = sample_relevance(prob, req.c, 2000, 9009);
  FeasibilityReport rep = check_feasibility(res, prob, req, heldout, 1e-3);
  CHECK(rep.rows_checked == 2000);
  CHECK(rep.violation_rate <= 0.01);

  // under-estimation against the grid oracle wherever feasibility holds
  GridConfig cfg = GridConfig::one_d_coarse(601, 81);
  GridFunction vstar = value_iteration(prob, cfg, ValueForm::V);
  double worst = -kInf;
  for (Eigen::Index i = 0; i < vstar.size(); ++i) {
    const Vector x = Vector::Constant(1, vstar.axes[0][i]);
    worst = std::max(worst, res.primary.eval(x) - vstar.values[i]);
  }
  const double slack =
      std::max(rep.max_violation, 1e-6) / (1.0 - prob->gamma) + 0.05 * vstar.sup_norm();
  CHECK(worst <= slack);
}

TEST_CASE("oracle coefficients pass the held-out check exactly") {
  ProblemSpec raw = one_d_example().spec();
  raw.u_lo[0] = -kInf;
  raw.u_hi[0] = kInf;
  auto prob = validate_problem(std::move(raw));
  RiccatiSolution ric = riccati_oracle(prob);

  SynthesisResult res;
  res.form = SynthesisForm::VForm;
  res.M = 1;
  res.primary = QuadraticForm::state(ric.P, Vector::Zero(1), ric.s);
  res.v_stages = {res.primary};

  SynthesisRequest req = SynthesisRequest::defaults(prob, SynthesisForm::VForm, 1);
  req.samples_per_inequality = 2000;
  SampleSet heldout = sample_relevance(prob, req.c, 2000, 77);
  FeasibilityReport rep = check_feasibility(res, prob, req, heldout, 1e-3);
  CHECK(rep.max_violation <= 1e-8);

  // a constant upshift violates by (1 - gamma) at the greedy action
  res.primary.s += 1.0;
  res.v_stages[0].s += 1.0;
  FeasibilityReport bad = check_feasibility(res, prob, req, heldout, 1e-3);
  CHECK(bad.max_violation > 0.03);
  CHECK(bad.max_violation <= (1.0 - prob->gamma) + 1e-9);
}

TEST_CASE("lemma-7 equivalence of the two q-form chains") {
  auto prob = one_d_example();
  RelevanceMeasure c = RelevanceMeasure::with_box_input(
      prob->nu, prob->u_lo, prob->u_hi);
  for (int M : {1, 3}) {
    SampleSet samples = sample_relevance(prob, c, 500, 55 + M);
    StructureMask dense = StructureMask::dense(Space::StateInput, 1, 1);
    EquivalencePair pair = equivalence_check(prob, M, samples, dense, c);
    CHECK(pair.objective_qform ==
          doctest::Approx(pair.objective_efficient)
              .epsilon(1e-6));
    CHECK(pair.qform_vars == pair.efficient_vars + (M - 1) * 6);
  }
}

TEST_CASE("objective is non-decreasing along an M sweep on fixed samples") {
  auto prob = one_d_example();
  SynthesisRequest base = SynthesisRequest::defaults(prob, SynthesisForm::VForm, 1);
  base.samples_per_inequality = 600;
  SampleSet samples = sample_relevance(prob, base.c, 600, 31);
  double prev = -kInf;
  for (int M : {1, 2, 5, 25}) {
    SynthesisRequest req = base;
    req.M = M;
    SynthesisResult res = synthesize(prob, req, samples);
    REQUIRE(res.status == LpStatus::Optimal);
    CHECK(res.objective >= prev - 1e-6 * (1.0 + std::abs(prev)));
    prev = res.objective;
  }
}

TEST_CASE("objective ranking equals reverse 1-norm ranking for feasible candidates") {
  auto prob = one_d_example();
  GridConfig cfg = GridConfig::one_d_coarse(601, 81);
  GridFunction vstar = value_iteration(prob, cfg, ValueForm::V);
  RelevanceMeasure c = RelevanceMeasure::state_only(prob->nu);

  // grid-certified feasible candidates via the constant downshift
  RandomStream rng(113, 0);
  std::vector<QuadraticForm> candidates;
  while (candidates.size() < 10) {
    Matrix P = Matrix::Constant(1, 1, 0.3 + 2.0 * rng.uniform());
    Vector p = Vector::Constant(1, 0.5 * rng.normal());
    QuadraticForm q = QuadraticForm::state(P, p, 3.0 * rng.normal());
    double gap = -kInf;
    for (Eigen::Index i = 0; i < vstar.size(); ++i)
      gap = std::max(gap, std::abs(q.eval(Vector::Constant(1, vstar.axes[0][i])) -
                                   vstar.values[i]));
    q.s -= (1.0 + prob->gamma) / (1.0 - prob->gamma) * gap;
    candidates.push_back(q);
  }

  std::vector<double> objective, distance;
  const double h = vstar.axes[0][1] - vstar.axes[0][0];
  for (const QuadraticForm& q : candidates) {
    objective.push_back(weighted_integral(q, c));
    double dist = 0.0;
    for (Eigen::Index i = 0; i < vstar.size(); ++i) {
      const double x = vstar.axes[0][i];
      const double w = ((i == 0 || i + 1 == vstar.size()) ? 0.5 : 1.0) * h;
      dist += w * std::abs(vstar.values[i] - q.eval(Vector::Constant(1, x))) *
              std::exp(-x * x / 20.0) / std::sqrt(20.0 * M_PI);
    }
    distance.push_back(dist);
  }
  for (std::size_t i = 0; i < candidates.size(); ++i)
    for (std::size_t j = 0; j < candidates.size(); ++j)
      if (objective[i] > objective[j]) CHECK(distance[i] < distance[j]);
}

TEST_CASE("scale-mixture sampling is reproducible and covers small radii") {
  auto prob = oscillator_spec(2, 0.1);
  RelevanceMeasure c = SynthesisRequest::defaults(prob, SynthesisForm::QFormEfficient, 1).c;
  SampleSet a = sample_relevance_mixture(prob, c, {1.0, 0.1}, 1000, 3);
  SampleSet b = sample_relevance_mixture(prob, c, {1.0, 0.1}, 1000, 3);
  CHECK((a.states - b.states).cwiseAbs().maxCoeff() == 0.0);
  int near = 0;
  for (int k = 0; k < a.count(); ++k)
    if (a.states.col(k).norm() < 0.5) ++near;
  CHECK(near > 100);  // the second component concentrates near the origin
}

TEST_CASE("adaptive resampling tightens the unconstrained-LQ lower bound") {
  auto prob = oscillator_spec(2, 0.1);
  RiccatiSolution ric = riccati_oracle(prob);
  const double opt = weighted_integral(
      QuadraticForm::state(ric.P, Vector::Zero(4), ric.s),
      RelevanceMeasure::state_only(prob->nu));

  SynthesisRequest req = SynthesisRequest::defaults(prob, SynthesisForm::QFormEfficient, 1);
  req.samples_per_inequality = 3000;
  req.sampling_scales = {1.0, 0.3, 0.1};
  req.adaptive_rounds = 3;
  SynthesisResult res = synthesize_from_request(prob, req, 2024);
  LowerBoundEstimate lb = lower_bound(res.primary, prob, 0, 0);
  CHECK(lb.mean <= opt * 1.005);
  CHECK(lb.mean >= opt * 0.9);
}
