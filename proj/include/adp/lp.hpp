#pragma once

#include <string>
#include <vector>

#include "adp/quadratic.hpp"

namespace adp {

// Where an LP column came from in the basis parameterization.
struct VariableLabel {
  int func_index = 0;  // which stage function
  MaskEntry entry;     // which coefficient of that function
};

// maximize c'z subject to A z <= b (rows stored sparse) and optional box
// bounds on z. Bound rows are appended internally by the solver.
struct LinearProgram {
  int num_vars = 0;
  Vector c;
  std::vector<std::vector<std::pair<int, double>>> rows;
  std::vector<double> b;
  std::vector<VariableLabel> labels;
  Vector z_lo, z_hi;  // empty = unbounded

  int num_rows() const { return static_cast<int>(rows.size()); }
  void add_row(std::vector<std::pair<int, double>> terms, double rhs);
  Matrix dense_A() const;
  double row_value(int r, const Vector& z) const;
};

enum class LpStatus { Optimal, Infeasible, Unbounded, IterationLimit };

struct LpSolution {
  LpStatus status = LpStatus::IterationLimit;
  Vector z;
  double objective_value = 0.0;
  Vector dual;  // multipliers for the stored rows (bound rows excluded)
  double dual_objective = 0.0;
  int iterations = 0;
  double primal_residual = 0.0;  // max(A z - b) relative to 1 + ||b||_inf
  double dual_residual = 0.0;
  double complementarity = 0.0;
  bool any_bound_active = false;  // a variable bound is active at the optimum
};

// Primal-dual interior point (Mehrotra predictor-corrector) on the
// inequality form; the per-iteration solve is a dense normal-equations
// system of size num_vars. Deterministic given identical input.
LpSolution solve_lp(const LinearProgram& lp, double feas_tol = 1e-8,
                    double opt_tol = 1e-8, int max_iter = 200);

// Dump (c, A, b) for external cross-checks.
void lp_to_csv(const LinearProgram& lp, const std::string& path);

const char* to_string(LpStatus s);

}  // namespace adp
