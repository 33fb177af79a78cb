#pragma once

#include <cstdint>
#include <string>

#include "adp/lp.hpp"

namespace adp {

// Paired (x, u) draws realizing the for-all quantifier of the Bellman
// inequalities. Regeneration from (seed, descriptor) is bit-for-bit.
struct SampleSet {
  Matrix states;  // nx x count
  Matrix inputs;  // nu x count
  std::uint64_t seed = 0;
  std::string descriptor;

  int count() const { return static_cast<int>(states.cols()); }
  Vector state(int k) const { return states.col(k); }
  Vector input(int k) const { return inputs.col(k); }
};

// Draws states from the state marginal of c and inputs from its input
// marginal (uniform-box samples are exact; Gaussian input draws are clamped
// into the problem's box when one is present).
SampleSet sample_relevance(const ValidatedProblem& prob, const RelevanceMeasure& c,
                           int count, std::uint64_t seed);

// Scale-mixture variant: the draws are split evenly across copies of c with
// the state (and Gaussian input) standard deviations multiplied by each
// scale. Small scales place samples near the attractor, where the Bellman
// inequality pins the constant coefficient and plain nu-sampling leaves an
// enforcement hole in higher dimensions.
SampleSet sample_relevance_mixture(const ValidatedProblem& prob, const RelevanceMeasure& c,
                                   const std::vector<double>& scales, int count,
                                   std::uint64_t seed);

enum class SynthesisForm { VForm, QForm, QFormEfficient };

struct SynthesisRequest {
  SynthesisForm form = SynthesisForm::VForm;
  int M = 1;
  StructureMask v_mask;        // basis for every V stage
  StructureMask q0_mask;       // basis for Q_0 (= Q_M)
  StructureMask q_inner_mask;  // basis for Q_1..Q_{M-1} (QForm only)
  RelevanceMeasure c;
  int samples_per_inequality = 2000;
  double coefficient_bound = 1e6;
  // Constraint-sampling controls: state-scale mixture for the draws, and
  // optional resampling rounds along the current solution's greedy actions
  // (both matter once gamma is close to 1 and the dimension grows).
  std::vector<double> sampling_scales{1.0};
  int adaptive_rounds = 1;
  double adaptive_exploration = 0.05;

  // Dense bases and the default relevance weighting (nu on states; uniform
  // box or standard normal on inputs depending on the problem's box).
  static SynthesisRequest defaults(const ValidatedProblem& prob, SynthesisForm form, int M);
};

// Assembles the sampled LP: one column per free coefficient of every stage
// function, one row per (inequality family, sample). The T_u operator is
// evaluated in closed form, so the only approximation is the sampling of
// the universal quantifier.
LinearProgram build_iterated_lp(const ValidatedProblem& prob, const SynthesisRequest& req,
                                const SampleSet& samples);

struct SynthesisResult {
  SynthesisForm form = SynthesisForm::VForm;
  int M = 1;
  QuadraticForm primary;  // V_0 for VForm, Q_0 otherwise
  std::vector<QuadraticForm> v_stages;
  std::vector<QuadraticForm> q_stages;  // QForm: Q_1..Q_{M-1}
  double objective = 0.0;
  LpStatus status = LpStatus::IterationLimit;
  int lp_rows = 0;
  int lp_vars = 0;
  int lp_iterations = 0;
  bool bound_active_warning = false;
  bool u_block_projected = false;
};

// build + solve + decode. For Q-function forms the input block of Q_0 is
// checked for convexity and projected onto the PSD cone if the smallest
// eigenvalue falls below -1e-8.
SynthesisResult synthesize(const ValidatedProblem& prob, const SynthesisRequest& req,
                           const SampleSet& samples);

// Draws per the request (scale mixture), solves, and reruns with extra
// samples placed along the solved function's greedy actions when
// adaptive_rounds > 1. The final sample set is returned through
// samples_out when given.
SynthesisResult synthesize_from_request(const ValidatedProblem& prob,
                                        const SynthesisRequest& req, std::uint64_t seed,
                                        SampleSet* samples_out = nullptr);

struct FeasibilityReport {
  double max_violation = 0.0;
  double scale = 1.0;
  double violation_rate = 0.0;  // fraction of rows violated beyond tol*(1+scale)
  int rows_checked = 0;
  bool pass = false;  // max_violation <= tol*(1+scale)
};

// Re-evaluates every sampled inequality of the request at held-out points.
FeasibilityReport check_feasibility(const SynthesisResult& result,
                                    const ValidatedProblem& prob,
                                    const SynthesisRequest& req,
                                    const SampleSet& heldout, double tol);

// Solves the QForm and QFormEfficient LPs on the same sample set; the two
// optimal objectives agree when the Q basis contains the T_u image of the
// V basis.
struct EquivalencePair {
  double objective_qform = 0.0;
  double objective_efficient = 0.0;
  int qform_vars = 0;
  int efficient_vars = 0;
};
EquivalencePair equivalence_check(const ValidatedProblem& prob, int M,
                                  const SampleSet& samples, const StructureMask& q0_mask,
                                  const RelevanceMeasure& c);

}  // namespace adp
