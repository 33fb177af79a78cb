#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unsupported/Eigen/MatrixFunctions>

#include "adp/griddp.hpp"
#include "adp/model.hpp"

using namespace adp;

namespace {

ProblemSpec one_d_raw() {
  ProblemSpec s;
  s.A = Matrix::Constant(1, 1, 1.0);
  s.B_u = Matrix::Constant(1, 1, -0.5);
  s.B_xi = Matrix::Constant(1, 1, 1.0);
  s.L_x = Matrix::Constant(1, 1, 1.0);
  s.L_u = Matrix::Constant(1, 1, 0.1);
  s.gamma = 0.95;
  s.u_lo = Vector::Constant(1, -1.0);
  s.u_hi = Vector::Constant(1, 1.0);
  s.xi = GaussianMeasure::scalar(0.0, 0.1);
  s.nu = GaussianMeasure::scalar(0.0, 10.0);
  return s;
}

}  // namespace

TEST_CASE("validate accepts the scalar benchmark") {
  CHECK_NOTHROW(validate_problem(one_d_raw()));
}

TEST_CASE("validate rejects gamma at the boundary") {
  ProblemSpec s = one_d_raw();
  s.gamma = 1.0;
  CHECK_THROWS_AS(validate_problem(std::move(s)), DiscountOutOfRange);
  ProblemSpec s2 = one_d_raw();
  s2.gamma = -0.1;
  CHECK_THROWS_AS(validate_problem(std::move(s2)), DiscountOutOfRange);
}

TEST_CASE("validate rejects an inverted input box") {
  ProblemSpec s = one_d_raw();
  s.u_lo[0] = 2.0;
  s.u_hi[0] = 1.0;
  CHECK_THROWS_AS(validate_problem(std::move(s)), EmptyBox);
}

TEST_CASE("validate rejects dimension mismatches and bad costs") {
  ProblemSpec s = one_d_raw();
  s.B_u = Matrix::Zero(2, 1);
  CHECK_THROWS_AS(validate_problem(std::move(s)), DimensionMismatch);

  ProblemSpec s2 = one_d_raw();
  s2.L_u = Matrix::Constant(1, 1, 0.0);  // PSD but not PD
  CHECK_THROWS_AS(validate_problem(std::move(s2)), NonPsdCost);

  ProblemSpec s3 = one_d_raw();
  s3.L_x = Matrix::Constant(1, 1, -1.0);
  CHECK_THROWS_AS(validate_problem(std::move(s3)), NonPsdCost);
}

TEST_CASE("stage cost is nonnegative on random draws") {
  auto prob = one_d_example();
  auto osc = oscillator_spec(3, 0.1);
  RandomStream rng(11, 0);
  for (int k = 0; k < 10000; ++k) {
    Vector x1 = Vector::Constant(1, 20.0 * (rng.uniform() - 0.5));
    Vector u1 = Vector::Constant(1, 2.0 * (rng.uniform() - 0.5));
    CHECK(prob->stage_cost(x1, u1) >= 0.0);
    Vector x2(6), u2(3);
    for (int i = 0; i < 6; ++i) x2[i] = 4.0 * (rng.uniform() - 0.5);
    for (int i = 0; i < 3; ++i) u2[i] = 4.0 * (rng.uniform() - 0.5);
    CHECK(osc->stage_cost(x2, u2) >= 0.0);
  }
}

TEST_CASE("riccati: no dynamics and no control gives P = L_x") {
  ProblemSpec s = one_d_raw();
  s.A.setZero();
  s.B_u.setZero();
  s.u_lo[0] = -kInf;
  s.u_hi[0] = kInf;
  auto prob = validate_problem(std::move(s));
  RiccatiSolution r = riccati_oracle(prob);
  CHECK(r.P(0, 0) == doctest::Approx(1.0).epsilon(1e-9));
  // s = gamma * trace(L_x Sigma_w) / (1 - gamma) with Sigma_w = 0.1
  CHECK(r.s == doctest::Approx(0.95 * 0.1 / 0.05).epsilon(1e-9));
}

TEST_CASE("riccati solution is symmetric PSD with a stable closed loop") {
  auto prob = oscillator_spec(3, 0.1);
  RiccatiSolution r = riccati_oracle(prob);
  CHECK((r.P - r.P.transpose()).cwiseAbs().maxCoeff() < 1e-12);
  Eigen::SelfAdjointEigenSolver<Matrix> es(r.P);
  CHECK(es.eigenvalues().minCoeff() > 0.0);
  const Matrix closed = std::sqrt(prob->gamma) * (prob->A - prob->B_u * r.K);
  CHECK(closed.eigenvalues().cwiseAbs().maxCoeff() < 1.0);
}

TEST_CASE("riccati quadratic is a Bellman fixed point on an unconstrained grid") {
  ProblemSpec s = one_d_raw();
  s.u_lo[0] = -kInf;
  s.u_hi[0] = kInf;
  auto prob = validate_problem(std::move(s));
  RiccatiSolution r = riccati_oracle(prob);

  GridConfig cfg;
  cfg.x_lo = Vector::Constant(1, -6.0);
  cfg.x_hi = Vector::Constant(1, 6.0);
  cfg.x_res = {1201};
  // wide surrogate input grid for the unconstrained minimization
  cfg.u_lo = Vector::Constant(1, -12.0);
  cfg.u_hi = Vector::Constant(1, 12.0);
  cfg.u_res = {2401};
  cfg.gh_nodes = 11;

  const QuadraticForm vstar = QuadraticForm::state(r.P, Vector::Zero(1), r.s);
  const GridFunction v = GridFunction::from_quadratic(vstar, cfg.state_axes());
  const GridFunction tv = apply_T(v, prob, cfg);
  // interior nodes only: the boundary sees clamped next states
  double max_resid = 0.0;
  const Vector& ax = v.axes[0];
  for (Eigen::Index i = 0; i < ax.size(); ++i) {
    if (std::abs(ax[i]) > 4.0) continue;
    max_resid = std::max(max_resid, std::abs(tv.values[i] - v.values[i]));
  }
  CHECK(max_resid < 1e-2 * (1.0 + v.sup_norm()));
}

TEST_CASE("oscillator dimensions and chain structure") {
  auto prob = oscillator_spec(3, 0.1);
  CHECK(prob->nx() == 6);
  CHECK(prob->nu_dim() == 3);
  CHECK(prob->nxi() == 1);
  CHECK(prob->gamma == doctest::Approx(0.99));
  CHECK(prob->input_unbounded());

  OscillatorContinuous ct = oscillator_continuous(3);
  // interior masses: -(k_left + k_right)/m = -6 on the acceleration diagonal
  CHECK(ct.A(1, 0) == doctest::Approx(-6.0));
  CHECK(ct.A(3, 2) == doctest::Approx(-6.0));
  // free end couples only to its left neighbour
  CHECK(ct.A(5, 4) == doctest::Approx(-3.0));
  CHECK(ct.A(5, 2) == doctest::Approx(3.0));
  // shared disturbance on every velocity row
  CHECK(ct.B_xi(1, 0) == doctest::Approx(0.1));
  CHECK(ct.B_xi(5, 0) == doctest::Approx(0.1));
}

TEST_CASE("oscillator zero-hold limit dt -> 0") {
  auto prob = oscillator_spec(1, 1e-8);
  CHECK((prob->A - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-6);
  CHECK(prob->B_u.cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("oscillator rejects bad arguments") {
  CHECK_THROWS_AS(oscillator_spec(3, 0.0), InvalidDt);
  CHECK_THROWS_AS(oscillator_spec(3, -1.0), InvalidDt);
}

TEST_CASE("undamped oscillator conserves stiffness-weighted energy") {
  const int n = 3;
  const double dt = 1e-3;
  OscillatorContinuous ct = oscillator_continuous(n, 1.0, 3.0, 0.0);
  const Matrix Ad = (ct.A * dt).exp();

  auto energy = [&](const Vector& x) {
    double e = 0.0;
    for (int i = 0; i < n; ++i) e += 0.5 * x[2 * i + 1] * x[2 * i + 1];
    Vector pos(n);
    for (int i = 0; i < n; ++i) pos[i] = x[2 * i];
    e += 0.5 * pos.dot(ct.stiffness * pos);
    return e;
  };

  RandomStream rng(5, 0);
  Vector x(2 * n);
  for (int i = 0; i < 2 * n; ++i) x[i] = rng.normal();
  const double e0 = energy(x);
  for (int t = 0; t < 100; ++t) x = Ad * x;
  CHECK(std::abs(energy(x) - e0) < 1e-2 * (1.0 + e0));
}

TEST_CASE("gaussian second moment and sampling are consistent") {
  GaussianMeasure g;
  g.mean = Vector::Constant(2, 1.0);
  g.cov = Matrix::Identity(2, 2) * 2.0;
  const Matrix m2 = g.second_moment();
  CHECK(m2(0, 0) == doctest::Approx(3.0));
  CHECK(m2(0, 1) == doctest::Approx(1.0));

  RandomStream rng(3, 0);
  const int n = 40000;
  Vector mean = Vector::Zero(2);
  double var0 = 0.0;
  for (int k = 0; k < n; ++k) {
    Vector z = g.sample(rng);
    mean += z / n;
    var0 += (z[0] - 1.0) * (z[0] - 1.0) / n;
  }
  CHECK(mean[0] == doctest::Approx(1.0).epsilon(0.05));
  CHECK(var0 == doctest::Approx(2.0).epsilon(0.05));
}
