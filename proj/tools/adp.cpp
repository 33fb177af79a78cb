#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

#include "adp/runner.hpp"

namespace {

void apply_overrides(adp::ExperimentConfig& cfg, const std::string& out_dir,
                     long long seed_override, int threads) {
  if (!out_dir.empty()) cfg.output_dir = out_dir;
  if (seed_override >= 0) {
    cfg.synthesis.seed = static_cast<std::uint64_t>(seed_override);
    cfg.evaluation.seed = static_cast<std::uint64_t>(seed_override) ^ 0x65766c75ull;
  }
  if (threads > 0) cfg.threads = threads;
}

void print_rows(const adp::RunOutput& out) {
  for (const adp::ReportRow& r : out.rows) {
    std::printf("%-7s %-16s M=%-4s %-7s D=%-2s lb=%-12s online=%-12s\n", r.kind.c_str(),
                r.form.c_str(), r.M < 0 ? "-" : std::to_string(r.M).c_str(), r.policy.c_str(),
                r.D < 0 ? "-" : std::to_string(r.D).c_str(),
                std::isnan(r.lower_bound) ? "-" : std::to_string(r.lower_bound).c_str(),
                std::isnan(r.online_mean) ? "-" : std::to_string(r.online_mean).c_str());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LP-based approximate dynamic programming toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  long long seed_override = -1;
  int threads = 0;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("config", config_path, "experiment config file (JSON)")->required();
    cmd->add_option("--out", out_dir, "output directory override");
    cmd->add_option("--seed-override", seed_override, "replace all configured seeds");
    cmd->add_option("--threads", threads, "evaluation worker count");
  };

  CLI::App* run = app.add_subcommand("run", "synthesis, policies, evaluation, reports");
  add_common(run);
  CLI::App* verify = app.add_subcommand("verify", "bound verification suite only");
  add_common(verify);
  CLI::App* oracle = app.add_subcommand("oracle", "grid/Riccati oracles only");
  add_common(oracle);

  CLI11_PARSE(app, argc, argv);

  try {
    adp::ExperimentConfig cfg = adp::load_config(config_path);
    apply_overrides(cfg, out_dir, seed_override, threads);

    if (run->parsed()) {
      const adp::RunOutput out = adp::run_experiment(cfg);
      adp::write_outputs(out, cfg);
      print_rows(out);
      if (out.verification_ran)
        std::printf("bounds: %s\n", out.verification_pass ? "pass" : "FAIL");
      std::printf("wrote %s/report.csv\n", cfg.output_dir.c_str());
      return (out.verification_ran && !out.verification_pass) ? 1 : 0;
    }
    if (verify->parsed()) {
      if (!cfg.verification.enabled || cfg.verification.seeds.empty())
        throw adp::ConfigError("verify: config needs verification.enabled with explicit seeds");
      const adp::RunOutput out = adp::run_verification(cfg);
      adp::write_outputs(out, cfg);
      int failed = 0;
      for (const adp::BoundReport& b : out.bounds) {
        std::printf("%s seed=%llu lhs=%.6g rhs=%.6g slack=%.3g %s\n", adp::to_string(b.id),
                    static_cast<unsigned long long>(b.seed), b.lhs, b.rhs, b.stat_slack,
                    b.pass ? "pass" : "FAIL");
        failed += b.pass ? 0 : 1;
      }
      std::printf("%zu bound checks, %d failed\n", out.bounds.size(), failed);
      return failed == 0 ? 0 : 1;
    }
    // oracle
    adp::ExperimentConfig ocfg = cfg;
    adp::RunOutput out;
    const adp::ValidatedProblem prob = adp::build_problem(ocfg.problem);
    out.oracle = adp::compute_oracle(prob, ocfg);
    adp::ReportRow row;
    row.kind = "oracle";
    row.policy = "optimal";
    row.online_mean = out.oracle.optimum();
    out.rows.push_back(row);
    adp::write_outputs(out, ocfg);
    std::printf("E_nu[V*] = %.6f\n", out.oracle.optimum());
    if (out.oracle.has_grid) std::printf("wrote %s/vstar.csv\n", ocfg.output_dir.c_str());
    return 0;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
