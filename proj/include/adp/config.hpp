#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "adp/eval.hpp"

namespace adp {

struct ProblemConfig {
  std::string builtin;  // "oned" | "oscillator" | "" (custom)
  int n_masses = 3;
  double dt = 0.1;
  std::optional<ProblemSpec> custom;
};

struct SynthesisConfig {
  SynthesisForm form = SynthesisForm::VForm;
  std::vector<int> m_values{1};
  std::optional<int> samples_per_inequality;  // default depends on M
  int heldout_samples = 2000;
  double heldout_tol = 1e-3;
  std::uint64_t seed = 0;
  bool decentralized_mask = false;
  double coefficient_bound = 1e6;
  std::vector<double> sampling_scales{1.0};
  int adaptive_rounds = 1;
  double adaptive_exploration = 0.05;
};

struct PolicyConfig {
  std::vector<int> d_values{0};
};

struct EvaluationConfig {
  int trials = 10000;
  std::optional<int> horizon;  // default: gamma^T <= 1e-6
  std::uint64_t seed = 0;
  bool common_random_numbers = true;
};

struct VerificationConfig {
  bool enabled = false;
  std::vector<std::uint64_t> seeds;
  std::vector<TheoremId> theorems{TheoremId::T1, TheoremId::T2, TheoremId::T3,
                                  TheoremId::T4, TheoremId::T5, TheoremId::T6};
  int M = 1;
  int D = 1;
  int mc_trials = 2000;
  int grid_x_res = 1201;
  int grid_u_res = 101;
};

struct GridOverride {
  std::optional<double> x_lo, x_hi;
  std::optional<int> x_res, u_res, gh_nodes;
};

struct ExperimentConfig {
  ProblemConfig problem;
  SynthesisConfig synthesis;
  PolicyConfig policy;
  EvaluationConfig evaluation;
  VerificationConfig verification;
  GridOverride grid;
  std::string output_dir = "out";
  int threads = 1;

  std::string config_hash;  // FNV-1a over the canonical serialized config
};

// Parses and validates the JSON config file. Unknown keys and missing seeds
// are hard errors.
ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config(const std::string& json_text);

ValidatedProblem build_problem(const ProblemConfig& pc);

}  // namespace adp
