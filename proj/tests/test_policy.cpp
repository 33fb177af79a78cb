#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "adp/policy.hpp"
#include "adp/rng.hpp"
#include "adp/synth.hpp"

using namespace adp;

namespace {

// Oracle for 3-d box QPs: enumerate all 27 face patterns (each coordinate at
// its lower bound, free, or upper bound), solve the free block, check
// feasibility and stationarity signs, take the best value.
double face_enumeration_min(const BoxQp& qp) {
  const int n = 3;
  double best = kInf;
  for (int code = 0; code < 27; ++code) {
    int pat[3];
    int c = code;
    for (int i = 0; i < n; ++i) {
      pat[i] = c % 3;  // 0 = lo, 1 = free, 2 = hi
      c /= 3;
    }
    std::vector<int> free_idx;
    Vector u(n);
    for (int i = 0; i < n; ++i) {
      if (pat[i] == 0) u[i] = qp.lo[i];
      else if (pat[i] == 2) u[i] = qp.hi[i];
      else free_idx.push_back(i);
    }
    if (!free_idx.empty()) {
      Matrix Hf(free_idx.size(), free_idx.size());
      Vector gf(free_idx.size());
      for (std::size_t a = 0; a < free_idx.size(); ++a) {
        gf[static_cast<Eigen::Index>(a)] = qp.g[free_idx[a]];
        for (std::size_t b = 0; b < free_idx.size(); ++b)
          Hf(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
              qp.H(free_idx[a], free_idx[b]);
        for (int i = 0; i < n; ++i)
          if (std::find(free_idx.begin(), free_idx.end(), i) == free_idx.end())
            gf[static_cast<Eigen::Index>(a)] += qp.H(free_idx[a], i) * u[i];
      }
      Eigen::FullPivLU<Matrix> lu(Hf);
      if (!lu.isInvertible()) continue;
      const Vector uf = lu.solve(-gf);
      for (std::size_t a = 0; a < free_idx.size(); ++a) u[free_idx[a]] = uf[static_cast<Eigen::Index>(a)];
    }
    bool ok = true;
    for (int i = 0; i < n; ++i)
      if (u[i] < qp.lo[i] - 1e-9 || u[i] > qp.hi[i] + 1e-9) ok = false;
    if (!ok) continue;
    best = std::min(best, 0.5 * u.dot(qp.H * u) + qp.g.dot(u));
  }
  return best;
}

}  // namespace

TEST_CASE("box qp basics") {
  // minimize u^2 - 4u on [-1, 1]: 0.5 u' (2) u + (-4) u
  BoxQp qp{Matrix::Constant(1, 1, 2.0), Vector::Constant(1, -4.0),
           Vector::Constant(1, -1.0), Vector::Constant(1, 1.0)};
  BoxQpResult r = box_qp_min(qp);
  CHECK(r.minimizer[0] == doctest::Approx(1.0));
  CHECK(r.value == doctest::Approx(-3.0));

  BoxQp id{Matrix::Identity(2, 2), Vector::Zero(2), Vector::Constant(2, -1.0),
           Vector::Constant(2, 1.0)};
  CHECK(box_qp_min(id).minimizer.cwiseAbs().maxCoeff() == doctest::Approx(0.0));
}

TEST_CASE("box qp matches face enumeration on random PSD instances") {
  RandomStream rng(211, 0);
  for (int trial = 0; trial < 200; ++trial) {
    Matrix G(3, 3);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) G(i, j) = rng.normal();
    BoxQp qp;
    qp.H = G * G.transpose() + 0.05 * Matrix::Identity(3, 3);
    qp.g = Vector::Zero(3);
    for (int i = 0; i < 3; ++i) qp.g[i] = 2.0 * rng.normal();
    qp.lo = Vector::Constant(3, -1.0);
    qp.hi = Vector::Constant(3, 1.0);
    // break the diagonal-only fast path half the time
    if (trial % 2 == 0) qp.H(0, 1) = qp.H(1, 0) = qp.H(0, 1) + 0.1;

    const double oracle = face_enumeration_min(qp);
    const BoxQpResult r = box_qp_min(qp, 1e-12);
    CHECK(r.value == doctest::Approx(oracle).epsilon(1e-8));
  }
}

TEST_CASE("greedy action on the scalar benchmark") {
  auto prob = one_d_example();
  QuadraticForm v = QuadraticForm::state(Matrix::Identity(1, 1), Vector::Zero(1), 0.0);
  Policy pol = Policy::greedy_v(prob, v);
  // analytic minimizer 0.95 x / 0.675 clipped to the box
  CHECK(pol.action(Vector::Constant(1, 1.0))[0] == doctest::Approx(1.0));
  CHECK(pol.action(Vector::Constant(1, 0.3))[0] ==
        doctest::Approx(std::min(1.0, 0.95 * 0.3 / 0.675)).epsilon(1e-8));
  CHECK(pol.action(Vector::Zero(1))[0] == doctest::Approx(0.0));
  CHECK(pol.action(Vector::Constant(1, -4.0))[0] == doctest::Approx(-1.0));
}

TEST_CASE("actions are invariant to constant offsets of the function") {
  auto prob = one_d_example();
  RandomStream rng(223, 0);
  QuadraticForm v = QuadraticForm::state(Matrix::Constant(1, 1, 1.4),
                                         Vector::Constant(1, 0.2), 0.7);
  QuadraticForm v_shift = v;
  v_shift.s += 123.0;
  Policy a = Policy::greedy_v(prob, v);
  Policy b = Policy::greedy_v(prob, v_shift);
  for (int k = 0; k < 100; ++k) {
    const Vector x = Vector::Constant(1, 8.0 * rng.normal());
    CHECK(a.action(x)[0] == doctest::Approx(b.action(x)[0]).epsilon(1e-12));
  }
}

TEST_CASE("saturation of greedy policies away from the origin") {
  auto prob = one_d_example();
  SynthesisRequest req = SynthesisRequest::defaults(prob, SynthesisForm::VForm, 1);
  req.samples_per_inequality = 2000;
  SampleSet samples = sample_relevance(prob, req.c, 2000, 1001);
  SynthesisResult res = synthesize(prob, req, samples);
  Policy pol = Policy::greedy_v(prob, res.primary);
  for (double x : {3.0, 4.0, 7.5, 11.0, -3.0, -5.5, -10.0}) {
    const double u = pol.action(Vector::Constant(1, x))[0];
    CHECK(std::abs(u) == doctest::Approx(1.0));
    CHECK(u * x < 0.0 ? false : true);  // pushes back toward the origin via B_u = -0.5
  }
}

TEST_CASE("decentralized greedy equals the joint solution and ignores other agents") {
  auto prob = oscillator_spec(3, 0.1);
  RandomStream rng(227, 0);
  // a conforming Q function with strictly convex input block
  Matrix P(9, 9);
  for (int i = 0; i < 9; ++i)
    for (int j = 0; j < 9; ++j) P(i, j) = 0.3 * rng.normal();
  P = (P * P.transpose() + Matrix::Identity(9, 9)).eval();
  QuadraticForm q = apply_structure_mask(
      QuadraticForm::state_input(6, 3, P, Vector::Zero(9), 0.0),
      StructureMask::decentralized(3, 2));

  Policy joint = Policy::greedy_q(prob, q);
  Policy split = Policy::greedy_q(prob, q, AgentPartition::blocks(3, 2));
  for (int k = 0; k < 100; ++k) {
    Vector x(6);
    for (int i = 0; i < 6; ++i) x[i] = 2.0 * rng.normal();
    const Vector uj = joint.action(x);
    const Vector us = split.action(x);
    CHECK((uj - us).cwiseAbs().maxCoeff() < 1e-12);

    // agent 1's action only sees its own state block
    Vector x2 = x;
    x2[2] += 1.7;
    x2[5] -= 2.3;
    CHECK(std::abs(split.action(x2)[0] - us[0]) < 1e-12);
  }
}

TEST_CASE("ce-mpc with horizon one matches the greedy policy") {
  auto prob = one_d_example();
  QuadraticForm v = QuadraticForm::state(Matrix::Constant(1, 1, 1.2),
                                         Vector::Constant(1, -0.1), 0.5);
  Policy greedy = Policy::greedy_v(prob, v);
  Policy mpc = Policy::ce_mpc(prob, v, 1);
  RandomStream rng(229, 0);
  for (int k = 0; k < 100; ++k) {
    const Vector x = Vector::Constant(1, 6.0 * rng.normal());
    CHECK(mpc.action(x)[0] == doctest::Approx(greedy.action(x)[0]).epsilon(1e-9));
  }
}

TEST_CASE("ce-mpc on the Riccati terminal reproduces the linear gain") {
  auto prob = oscillator_spec(2, 0.1);
  RiccatiSolution ric = riccati_oracle(prob);
  const QuadraticForm vstar = QuadraticForm::state(ric.P, Vector::Zero(4), ric.s);
  Policy gain = Policy::linear_gain(prob, ric.K);
  RandomStream rng(233, 0);
  for (int D : {1, 3}) {
    Policy mpc = Policy::ce_mpc(prob, vstar, D);
    for (int k = 0; k < 25; ++k) {
      Vector x(4);
      for (int i = 0; i < 4; ++i) x[i] = rng.normal();
      CHECK((mpc.action(x) - gain.action(x)).cwiseAbs().maxCoeff() < 1e-7);
    }
  }
}

TEST_CASE("ce-mpc rejects an indefinite terminal") {
  auto prob = one_d_example();
  QuadraticForm bad = QuadraticForm::state(Matrix::Constant(1, 1, -50.0), Vector::Zero(1), 0.0);
  CHECK_THROWS_AS(Policy::ce_mpc(prob, bad, 2), NonConvexTerminal);
}

TEST_CASE("q-terminal ce-mpc folds the terminal minimization into the decision") {
  auto prob = one_d_example();
  QuadraticForm v = QuadraticForm::state(Matrix::Constant(1, 1, 1.3), Vector::Zero(1), 0.2);
  const QuadraticForm q = tu_closed_form(v, prob);
  Policy from_q = Policy::ce_mpc(prob, q, 2);
  // folding min_v Q(x_D, v) should match the V-form with terminal T V ~ V
  RandomStream rng(239, 0);
  for (int k = 0; k < 50; ++k) {
    const Vector x = Vector::Constant(1, 5.0 * rng.normal());
    const Vector u = from_q.action(x);
    CHECK(u[0] <= 1.0 + 1e-12);
    CHECK(u[0] >= -1.0 - 1e-12);
  }
}
