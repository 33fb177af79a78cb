#pragma once

#include <memory>
#include <string>
#include <vector>

#include "adp/quadratic.hpp"

namespace adp {

// Nodes/weights such that E[f(Z)] ~= sum_i w_i f(z_i) for Z ~ N(0, 1).
struct Quadrature {
  Vector nodes;
  Vector weights;
};
Quadrature gauss_hermite(int n);

// Dense tabulation on a rectangular grid. For StateInput functions the
// leading axes are the state axes.
struct GridFunction {
  Space space = Space::State;
  int state_dims = 0;
  std::vector<Vector> axes;
  Vector values;  // row-major, last axis fastest

  int dims() const { return static_cast<int>(axes.size()); }
  Eigen::Index size() const { return values.size(); }

  Eigen::Index flat_index(const std::vector<int>& idx) const;
  Vector point(Eigen::Index flat) const;

  // Multilinear interpolation; coordinates outside the grid are clamped to
  // the boundary.
  double interpolate(const Vector& z) const;

  double sup_norm() const { return values.cwiseAbs().maxCoeff(); }

  static GridFunction zeros(Space space, int state_dims, std::vector<Vector> axes);
  static GridFunction from_quadratic(const QuadraticForm& q, std::vector<Vector> axes);
};

struct GridConfig {
  Vector x_lo, x_hi;
  std::vector<int> x_res;
  Vector u_lo, u_hi;
  std::vector<int> u_res;
  int gh_nodes = 11;

  std::vector<Vector> state_axes() const;
  std::vector<Vector> input_axes() const;
  std::vector<Vector> state_input_axes() const;
  void validate(const ValidatedProblem& prob) const;

  // x in [-11, 11] with 6001 nodes, u in [-1, 1] with 201 nodes, 11
  // quadrature points: the discretization the benchmark's reference values
  // correspond to.
  static GridConfig one_d_default();
  // Cheaper variant for property tests and bound verification.
  static GridConfig one_d_coarse(int x_res = 1201, int u_res = 101);
};

Vector linspace(double lo, double hi, int n);

// One Bellman sweep: (T V)(x) = min_u l(x,u) + gamma E[V(f(x,u,xi))].
GridFunction apply_T(const GridFunction& V, const ValidatedProblem& prob,
                     const GridConfig& cfg);

// Q-function sweep: (F Q)(x,u) = l(x,u) + gamma E[min_v Q(f(x,u,xi), v)].
GridFunction apply_F(const GridFunction& Q, const ValidatedProblem& prob,
                     const GridConfig& cfg);

enum class ValueForm { V, Q };

// Fixed point of T (or F) from the zero function; stops when the sup-norm
// change falls below 1e-6 * scale * (1 - gamma) / gamma.
GridFunction value_iteration(const ValidatedProblem& prob, const GridConfig& cfg,
                             ValueForm form, int* iterations_out = nullptr);

// Q* = T_u V* evaluated on the state-input grid; agrees with Q-form value
// iteration to grid resolution and is much cheaper on fine grids.
GridFunction qstar_from_vstar(const GridFunction& vstar, const ValidatedProblem& prob,
                              const GridConfig& cfg);

// Minimizer over the input grid; ties break toward the smallest input.
Vector greedy_on_grid(const GridFunction& v_or_q, const ValidatedProblem& prob,
                      const GridConfig& cfg, const Vector& x);

// Reusable greedy evaluator for rollouts: the quadrature and input-grid
// precomputation is done once at construction.
class GreedyEvaluator {
 public:
  GreedyEvaluator(GridFunction v_or_q, const ValidatedProblem& prob, const GridConfig& cfg);
  Vector action(const Vector& x) const;
  const GridFunction& function() const { return f_; }

 private:
  struct Context;
  GridFunction f_;
  std::shared_ptr<const Context> ctx_;
};

enum class HKind { HV, HQ };

// Worst-case expected next-value operators:
//   (H_V f)(x)   = max_u E[f(f(x,u,xi))]
//   (H_Q f)(x,u) = max_v E[f(f(x,u,xi), v)]
GridFunction apply_H(const GridFunction& f, const ValidatedProblem& prob,
                     const GridConfig& cfg, HKind kind);

// max over nodes of gamma (H f) / f for strictly positive f; the function is
// a Lyapunov candidate iff the result is < 1.
double beta_constant(const GridFunction& f, const ValidatedProblem& prob,
                     const GridConfig& cfg, HKind kind);
double beta_constant(const QuadraticForm& f, const ValidatedProblem& prob,
                     const GridConfig& cfg, HKind kind);

// Q - (1 + gamma^M) / (1 - gamma^M) * ||Qstar - Qhat||_inf, the constant
// downshift that restores feasibility of the M-iterated inequality.
GridFunction downshift_infnorm(const GridFunction& qhat, const GridFunction& qstar,
                               double gamma, int M);

// Lyapunov downshift: fhat - eps (2 / (1 - beta^M) - 1) fplus with
// eps = ||fstar - fhat||_{inf, 1/fplus}. Throws NotLyapunov when beta >= 1.
// Also verifies the supporting ratio inequality for fplus on the grid.
GridFunction downshift_lyapunov(const GridFunction& fhat, const GridFunction& fplus,
                                const GridFunction& fstar, const ValidatedProblem& prob,
                                const GridConfig& cfg, int M, HKind kind,
                                double* beta_out = nullptr);

// min over nodes of LHS - RHS for the Lyapunov ratio inequality
//   (2/(1-beta^M) - 1) (f - gamma^M H^M f) >= f + gamma^M H^M f.
double lyapunov_ratio_gap(const GridFunction& fplus, const ValidatedProblem& prob,
                          const GridConfig& cfg, int M, HKind kind);

// Long-format CSV: one coordinate column per axis plus a value column.
void grid_to_csv(const GridFunction& g, const std::string& path);

}  // namespace adp
