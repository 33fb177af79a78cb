#pragma once

#include "adp/config.hpp"

namespace adp {

// One line of report.csv. NaN fields render as blanks.
struct ReportRow {
  std::string kind;    // "oracle" | "policy"
  std::string form;    // "vform" | "qform" | "qform_efficient" | ""
  int M = -1;          // -1 renders blank
  std::string policy;  // "optimal" | "greedy" | "cempc"
  int D = -1;
  double lower_bound = std::numeric_limits<double>::quiet_NaN();
  double lower_bound_ci = std::numeric_limits<double>::quiet_NaN();
  double online_mean = std::numeric_limits<double>::quiet_NaN();
  double online_ci = std::numeric_limits<double>::quiet_NaN();
  double feas_max_violation = std::numeric_limits<double>::quiet_NaN();
  double feas_violation_rate = std::numeric_limits<double>::quiet_NaN();
  std::string lp_status;
  bool bound_active = false;
  bool u_block_projected = false;
  std::uint64_t synth_seed = 0;
  std::uint64_t eval_seed = 0;
};

struct NamedForm {
  std::string name;
  QuadraticForm form;
};

struct StageTiming {
  std::string stage;
  double seconds = 0.0;
};

struct OracleData {
  bool has_grid = false;
  GridConfig grid_cfg;
  GridFunction vstar;
  double grid_optimum = std::numeric_limits<double>::quiet_NaN();
  bool has_riccati = false;
  RiccatiSolution riccati;
  double riccati_optimum = std::numeric_limits<double>::quiet_NaN();

  double optimum() const { return has_grid ? grid_optimum : riccati_optimum; }
};

struct RunOutput {
  std::vector<ReportRow> rows;
  std::vector<BoundReport> bounds;
  std::vector<NamedForm> functions;
  std::vector<StageTiming> timings;
  OracleData oracle;
  bool verification_pass = true;
  bool verification_ran = false;
};

// Oracle computation only (grid value iteration and/or Riccati).
OracleData compute_oracle(const ValidatedProblem& prob, const ExperimentConfig& cfg);

// Full pipeline: oracle, synthesis sweep, policies, evaluation, optional
// bound verification.
RunOutput run_experiment(const ExperimentConfig& cfg);

// Bound/property verification only.
RunOutput run_verification(const ExperimentConfig& cfg);

// Writes report.csv, functions.csv, bounds.csv, timings.csv and the grid
// exports into cfg.output_dir.
void write_outputs(const RunOutput& out, const ExperimentConfig& cfg);

std::string report_csv_text(const RunOutput& out, const ExperimentConfig& cfg);

const char* to_string(SynthesisForm f);

}  // namespace adp
