#pragma once

#include <optional>
#include <variant>
#include <vector>

#include "adp/model.hpp"

namespace adp {

enum class Space { State, StateInput };

// z' P z + p' z + s over the declared variable space. For StateInput forms
// the variable is z = [x; u] with the state block leading.
struct QuadraticForm {
  Space space = Space::State;
  int nx = 0;
  int nu = 0;  // 0 for State space
  Matrix P;
  Vector p;
  double s = 0.0;

  int dim() const { return nx + nu; }

  double eval(const Vector& z) const;

  // Blocks of a StateInput form.
  Matrix Pxx() const { return P.topLeftCorner(nx, nx); }
  Matrix Pxu() const { return P.topRightCorner(nx, nu); }
  Matrix Puu() const { return P.bottomRightCorner(nu, nu); }
  Vector px() const { return p.head(nx); }
  Vector pu() const { return p.tail(nu); }

  static QuadraticForm state(Matrix P, Vector p, double s);
  static QuadraticForm state_input(int nx, int nu, Matrix P, Vector p, double s);
  static QuadraticForm zero(Space space, int nx, int nu = 0);
};

// Which coefficients of a QuadraticForm are free; everything else is pinned
// to zero. Tie groups constrain listed entries to a shared value.
struct MaskEntry {
  enum class Kind { P, LinP, Const } kind = Kind::P;
  int i = 0;
  int j = 0;  // only for Kind::P; stored with i <= j
};

struct StructureMask {
  Space space = Space::State;
  int nx = 0;
  int nu = 0;
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> P_free;  // symmetric pattern
  Eigen::Matrix<bool, Eigen::Dynamic, 1> p_free;
  bool s_free = true;
  std::vector<std::vector<MaskEntry>> tie_groups;

  int dim() const { return nx + nu; }

  static StructureMask dense(Space space, int nx, int nu = 0);

  // Per-agent Q-function structure: a dense state-only block plus, for each
  // agent, couplings between its input and its own state block; all
  // cross-agent input couplings are pinned to zero. Agents own contiguous
  // state blocks of size states_per_agent and one input each.
  static StructureMask decentralized(int n_agents, int states_per_agent);
};

// Product relevance measure: a Gaussian on the state block and optionally a
// Gaussian or uniform-box marginal on the input block.
struct UniformBox {
  Vector lo;
  Vector hi;
};

struct RelevanceMeasure {
  GaussianMeasure state;
  std::optional<std::variant<GaussianMeasure, UniformBox>> input;

  int dim() const;
  Vector mean() const;
  Matrix second_moment() const;

  static RelevanceMeasure state_only(GaussianMeasure g);
  static RelevanceMeasure with_gaussian_input(GaussianMeasure g, GaussianMeasure u);
  static RelevanceMeasure with_box_input(GaussianMeasure g, Vector lo, Vector hi);
};

// E_xi[ V(A x + B_u u + B_xi xi) ] in closed form from the first and second
// moments of xi.
double expected_next_value(const QuadraticForm& V, const ValidatedProblem& prob,
                           const Vector& x, const Vector& u);

// The exact one-step map V -> Q with Q(x,u) = l(x,u) + gamma E[V(next)].
// Quadratic in, quadratic out; no sampling or quadrature error.
QuadraticForm tu_closed_form(const QuadraticForm& V, const ValidatedProblem& prob);

// integral of q against c: trace(P M2) + p' mu + s.
double weighted_integral(const QuadraticForm& q, const RelevanceMeasure& c);

// Zeroes non-free entries and averages each tie group. Idempotent.
QuadraticForm apply_structure_mask(const QuadraticForm& q, const StructureMask& mask);

bool conforms_to_mask(const QuadraticForm& q, const StructureMask& mask, double tol = 0.0);

// Exact partial minimization over the input block of a StateInput form with
// positive definite input block (unconstrained u). Returns a State form.
QuadraticForm partial_min_over_input(const QuadraticForm& q);

}  // namespace adp
