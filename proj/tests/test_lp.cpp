#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <functional>

#include "adp/lp.hpp"
#include "adp/rng.hpp"

using namespace adp;

namespace {

// Brute-force oracle: enumerate all vertex candidates (square subsystems),
// keep the feasible ones, take the best objective.
double vertex_enumeration_optimum(const LinearProgram& lp, bool* bounded = nullptr) {
  const Matrix A = lp.dense_A();
  const int m = lp.num_rows();
  const int n = lp.num_vars;
  double best = -kInf;
  std::vector<int> pick(static_cast<std::size_t>(n), 0);

  std::function<void(int, int)> rec = [&](int start, int depth) {
    if (depth == n) {
      Matrix As(n, n);
      Vector bs(n);
      for (int i = 0; i < n; ++i) {
        As.row(i) = A.row(pick[static_cast<std::size_t>(i)]);
        bs[i] = lp.b[static_cast<std::size_t>(pick[static_cast<std::size_t>(i)])];
      }
      Eigen::FullPivLU<Matrix> lu(As);
      if (!lu.isInvertible()) return;
      const Vector z = lu.solve(bs);
      const Vector resid = A * z;
      for (int r = 0; r < m; ++r)
        if (resid[r] > lp.b[static_cast<std::size_t>(r)] + 1e-8) return;
      best = std::max(best, lp.c.dot(z));
      return;
    }
    for (int r = start; r < m; ++r) {
      pick[static_cast<std::size_t>(depth)] = r;
      rec(r + 1, depth + 1);
    }
  };
  rec(0, 0);
  if (bounded) *bounded = std::isfinite(best);
  return best;
}

LinearProgram random_bounded_lp(RandomStream& rng) {
  LinearProgram lp;
  const int n = 1 + static_cast<int>(rng.next_u64() % 4);  // up to 4 vars
  const int extra = static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(13 - 2 * n));
  lp.num_vars = n;
  lp.c.resize(n);
  for (int i = 0; i < n; ++i) lp.c[i] = rng.normal();
  // box rows guarantee boundedness and count toward the constraint budget
  for (int i = 0; i < n; ++i) {
    lp.add_row({{i, 1.0}}, 2.0 + 3.0 * rng.uniform());
    lp.add_row({{i, -1.0}}, 2.0 + 3.0 * rng.uniform());
  }
  for (int r = 0; r < extra; ++r) {
    std::vector<std::pair<int, double>> terms;
    for (int i = 0; i < n; ++i) terms.push_back({i, rng.normal()});
    lp.add_row(std::move(terms), 1.0 + 2.0 * rng.uniform());
  }
  return lp;
}

}  // namespace

TEST_CASE("trivial maximization against a single bound") {
  LinearProgram lp;
  lp.num_vars = 1;
  lp.c = Vector::Constant(1, 1.0);
  lp.add_row({{0, 1.0}}, 1.0);
  LpSolution sol = solve_lp(lp);
  CHECK(sol.status == LpStatus::Optimal);
  CHECK(sol.z[0] == doctest::Approx(1.0).epsilon(1e-7));
  CHECK(sol.objective_value == doctest::Approx(1.0).epsilon(1e-7));
}

TEST_CASE("no constraints") {
  LinearProgram lp;
  lp.num_vars = 1;
  lp.c = Vector::Constant(1, 1.0);
  CHECK(solve_lp(lp).status == LpStatus::Unbounded);

  LinearProgram lp0;
  lp0.num_vars = 1;
  lp0.c = Vector::Zero(1);
  CHECK(solve_lp(lp0).status == LpStatus::Optimal);
}

TEST_CASE("one-sided constraint leaves the objective unbounded") {
  LinearProgram lp;
  lp.num_vars = 1;
  lp.c = Vector::Constant(1, 1.0);
  lp.add_row({{0, -1.0}}, 0.0);  // z >= 0
  LpSolution sol = solve_lp(lp);
  CHECK(sol.status == LpStatus::Unbounded);
}

TEST_CASE("infeasible system is detected") {
  LinearProgram lp;
  lp.num_vars = 1;
  lp.c = Vector::Constant(1, 1.0);
  lp.add_row({{0, 1.0}}, -1.0);   // z <= -1
  lp.add_row({{0, -1.0}}, -1.0);  // z >= 1
  LpSolution sol = solve_lp(lp);
  CHECK(sol.status == LpStatus::Infeasible);
}

TEST_CASE("random bounded LPs agree with vertex enumeration") {
  RandomStream rng(103, 0);
  int solved = 0;
  for (int trial = 0; trial < 200; ++trial) {
    LinearProgram lp = random_bounded_lp(rng);
    bool bounded = false;
    const double oracle = vertex_enumeration_optimum(lp, &bounded);
    REQUIRE(bounded);
    LpSolution sol = solve_lp(lp);
    REQUIRE(sol.status == LpStatus::Optimal);
    CHECK(sol.objective_value ==
          doctest::Approx(oracle).epsilon(1e-7));
    // weak duality and independent feasibility of the returned point
    CHECK(sol.dual_objective >= sol.objective_value - 1e-6 * (1.0 + std::abs(oracle)));
    for (int r = 0; r < lp.num_rows(); ++r)
      CHECK(lp.row_value(r, sol.z) <=
            lp.b[static_cast<std::size_t>(r)] + 1e-7 * (1.0 + std::abs(lp.b[static_cast<std::size_t>(r)])));
    ++solved;
  }
  CHECK(solved == 200);
}

TEST_CASE("row scaling leaves the maximizer unchanged") {
  RandomStream rng(107, 0);
  for (int trial = 0; trial < 20; ++trial) {
    LinearProgram lp = random_bounded_lp(rng);
    LpSolution base = solve_lp(lp);
    REQUIRE(base.status == LpStatus::Optimal);

    LinearProgram scaled = lp;
    for (int r = 0; r < scaled.num_rows(); ++r) {
      const double f = 0.1 + 10.0 * rng.uniform();
      for (auto& [col, val] : scaled.rows[static_cast<std::size_t>(r)]) val *= f;
      scaled.b[static_cast<std::size_t>(r)] *= f;
      (void)col;
    }
    LpSolution s2 = solve_lp(scaled);
    REQUIRE(s2.status == LpStatus::Optimal);
    CHECK((s2.z - base.z).cwiseAbs().maxCoeff() < 1e-6 * (1.0 + base.z.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("variable bounds are honored and flagged when active") {
  LinearProgram lp;
  lp.num_vars = 2;
  lp.c.resize(2);
  lp.c << 1.0, 0.25;
  lp.add_row({{0, 1.0}, {1, 1.0}}, 50.0);
  lp.z_lo = Vector::Constant(2, -5.0);
  lp.z_hi = Vector::Constant(2, 5.0);
  LpSolution sol = solve_lp(lp);
  CHECK(sol.status == LpStatus::Optimal);
  CHECK(sol.z[0] == doctest::Approx(5.0).epsilon(1e-6));
  CHECK(sol.any_bound_active);
}

TEST_CASE("determinism: identical input, identical output") {
  RandomStream rng(109, 0);
  LinearProgram lp = random_bounded_lp(rng);
  LpSolution a = solve_lp(lp);
  LpSolution b = solve_lp(lp);
  CHECK(a.objective_value == b.objective_value);
  CHECK((a.z - b.z).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.iterations == b.iterations);
}
