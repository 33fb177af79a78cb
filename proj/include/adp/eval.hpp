#pragma once

#include <map>
#include <string>

#include "adp/policy.hpp"
#include "adp/synth.hpp"

namespace adp {

struct PerformanceEstimate {
  double mean = 0.0;
  double ci_halfwidth = 0.0;  // 95% normal approximation
  double stddev = 0.0;
  int trials = 0;
};

// Truncation horizon with gamma^T <= 1e-6.
int default_horizon(double gamma);

// Sample mean of sum_{t<=T} gamma^t l(x_t, pi(x_t)) over x0 ~ nu with fresh
// disturbance draws. Streams are keyed by (seed, trajectory), so two
// policies evaluated with the same seed see common random numbers, and the
// result does not depend on the worker count.
PerformanceEstimate simulate_performance(const Policy& pol, const ValidatedProblem& prob,
                                         int horizon, int trials, std::uint64_t seed,
                                         int threads = 1);

// Discounted state(-by-action) visitation cloud under a fixed policy.
struct OccupancyEstimate {
  Matrix states;   // nx x count
  Matrix inputs;   // nu x count
  Vector weights;  // gamma^t (1 - gamma) / trajectories
  double total_weight = 0.0;  // = 1 - gamma^{T+1} before renormalization
  int trajectories = 0;
  int horizon = 0;
  std::uint64_t seed = 0;
};

OccupancyEstimate occupancy_estimate(const Policy& pol, const ValidatedProblem& prob,
                                     int horizon, int trials, std::uint64_t seed);

struct LowerBoundEstimate {
  double mean = 0.0;
  double ci_halfwidth = 0.0;  // zero when computed in closed form
  bool exact = false;
};

// E_nu[ V(x) ] for a state form (closed form), or E_nu[ min_u Q(x, u) ] for
// a state-input form (closed form on an unbounded box, Monte Carlo over the
// box-constrained minimization otherwise).
LowerBoundEstimate lower_bound(const QuadraticForm& fhat, const ValidatedProblem& prob,
                               int nu_samples, std::uint64_t seed);

enum class TheoremId { T1, T2, T3, T4, T5, T6 };

struct BoundReport {
  TheoremId id = TheoremId::T1;
  double lhs = 0.0;
  double rhs = 0.0;
  double stat_slack = 0.0;  // 4 standard errors of the MC estimates
  bool pass = false;
  int M = 1;
  int D = 0;
  std::uint64_t seed = 0;
  std::map<std::string, double> details;  // beta, epsilon, norms, ...
};

// Everything the bound verifiers need about the benchmark instance.
struct TheoremContext {
  ValidatedProblem prob;
  GridConfig cfg;
  GridFunction vstar;  // state grid oracle
  GridFunction qstar;  // state-input grid oracle
  QuadraticForm vhat;  // V-form LP solution
  QuadraticForm qhat;  // Q-form LP solution (Q_0)
  int M = 1;
  int D = 0;
  RelevanceMeasure c_v;
  RelevanceMeasure c_q;
  int mc_trials = 2000;
  int horizon = 270;
};

// Numerically evaluates both sides of the named bound. LHS norms come from
// grid oracles and Monte-Carlo occupancy; RHS minima over the basis are
// approximated from above (which only loosens the bound).
BoundReport verify_theorem(TheoremId id, const TheoremContext& ctx, std::uint64_t seed);

const char* to_string(TheoremId id);

// Trapezoid integration of a tabulated state function against a Gaussian
// density (1-d or 2-d state grids).
double integrate_grid_against_gaussian(const GridFunction& v, const GaussianMeasure& g);

}  // namespace adp
