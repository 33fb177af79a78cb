#pragma once

#include <optional>

#include "adp/griddp.hpp"

namespace adp {

struct BoxQp {
  Matrix H;  // symmetric, eigenvalues >= -1e-8
  Vector g;
  Vector lo, hi;  // +-inf for unconstrained coordinates
};

struct BoxQpResult {
  Vector minimizer;
  double value = 0.0;
  int iterations = 0;
};

// Minimizes 0.5 u'Hu + g'u over the box. Diagonal H gets the exact clipped
// solution; a fully unconstrained positive definite problem is solved
// directly; otherwise projected gradient with exact line search, stopping
// when the projected gradient norm falls below tol (default
// 1e-9 * (1 + ||g||)).
BoxQpResult box_qp_min(const BoxQp& qp, double tol = -1.0, int max_iter = 10000);

// Which inputs and states belong to each agent of a decentralized problem.
struct AgentPartition {
  struct Agent {
    std::vector<int> state_indices;
    std::vector<int> input_indices;
  };
  std::vector<Agent> agents;

  // Contiguous blocks: agent i owns states [i*spa, (i+1)*spa) and input i.
  static AgentPartition blocks(int n_agents, int states_per_agent);
};

enum class PolicyKind { GreedyV, GreedyQ, CeMpc, LinearGain, GridOptimal };

// Immutable decision rule; action evaluation is deterministic and
// re-entrant, so rollouts can share one policy across workers.
class Policy {
 public:
  static Policy greedy_v(const ValidatedProblem& prob, const QuadraticForm& vhat);
  static Policy greedy_q(const ValidatedProblem& prob, QuadraticForm qhat,
                         std::optional<AgentPartition> partition = std::nullopt);
  // Certainty-equivalence MPC with horizon D >= 1 and terminal cost
  // terminal (a State form, or a StateInput form whose inner minimization
  // is folded into the decision vector).
  static Policy ce_mpc(const ValidatedProblem& prob, const QuadraticForm& terminal, int D);
  static Policy linear_gain(const ValidatedProblem& prob, Matrix K);
  static Policy grid_optimal(GridFunction v_or_q, const ValidatedProblem& prob,
                             const GridConfig& cfg);

  Vector action(const Vector& x) const;
  PolicyKind kind() const { return kind_; }

 private:
  Policy() = default;

  PolicyKind kind_ = PolicyKind::GreedyV;
  int nx_ = 0, nu_ = 0;
  Vector u_lo_, u_hi_;

  // GreedyV / GreedyQ: minimize the u-restriction of q_.
  QuadraticForm q_;
  std::optional<AgentPartition> partition_;

  // CeMpc: condensed quadratic over the stacked decision vector.
  Matrix mpc_H_;
  Matrix mpc_G_;  // g(x0) = mpc_G_ x0 + mpc_g0_
  Vector mpc_g0_;
  Vector mpc_lo_, mpc_hi_;

  Matrix gain_;
  std::optional<GreedyEvaluator> grid_;
};

}  // namespace adp
