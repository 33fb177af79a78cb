#include "adp/runner.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace adp {

namespace {

class Stopwatch {
 public:
  explicit Stopwatch(std::vector<StageTiming>& sink, std::string stage)
      : sink_(sink), stage_(std::move(stage)), start_(std::chrono::steady_clock::now()) {}
  ~Stopwatch() {
    const auto dt = std::chrono::steady_clock::now() - start_;
    sink_.push_back({stage_, std::chrono::duration<double>(dt).count()});
  }

 private:
  std::vector<StageTiming>& sink_;
  std::string stage_;
  std::chrono::steady_clock::time_point start_;
};

std::string fmt(double v) {
  if (std::isnan(v)) return "";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

std::string fmt_int(int v) { return v < 0 ? "" : std::to_string(v); }

GridConfig grid_config_for(const ValidatedProblem& prob, const ExperimentConfig& cfg) {
  GridConfig g;
  if (prob->nx() == 1 && prob->nu_dim() == 1) {
    g = GridConfig::one_d_default();
    // For problems other than the benchmark, size the state box from nu.
    const double sd = std::sqrt(prob->nu.cov(0, 0));
    if (std::abs(sd * sd - 10.0) > 1e-9) {
      g.x_lo[0] = prob->nu.mean[0] - 9.5 * sd;
      g.x_hi[0] = prob->nu.mean[0] + 9.5 * sd;
    }
    g.u_lo = prob->u_lo;
    g.u_hi = prob->u_hi;
  } else {
    throw GridTooCoarse("grid oracle requested for an unsupported problem size");
  }
  if (cfg.grid.x_lo) g.x_lo[0] = *cfg.grid.x_lo;
  if (cfg.grid.x_hi) g.x_hi[0] = *cfg.grid.x_hi;
  if (cfg.grid.x_res) g.x_res[0] = *cfg.grid.x_res;
  if (cfg.grid.u_res) g.u_res[0] = *cfg.grid.u_res;
  if (cfg.grid.gh_nodes) g.gh_nodes = *cfg.grid.gh_nodes;
  return g;
}

bool grid_oracle_possible(const ValidatedProblem& prob) {
  return prob->nx() <= 2 && prob->nu_dim() == 1 && !prob->input_unbounded() &&
         prob->nxi() == 1;
}

SynthesisRequest make_request(const ValidatedProblem& prob, const ExperimentConfig& cfg,
                              int M) {
  SynthesisRequest req = SynthesisRequest::defaults(prob, cfg.synthesis.form, M);
  if (cfg.synthesis.samples_per_inequality)
    req.samples_per_inequality = *cfg.synthesis.samples_per_inequality;
  req.coefficient_bound = cfg.synthesis.coefficient_bound;
  req.sampling_scales = cfg.synthesis.sampling_scales;
  req.adaptive_rounds = cfg.synthesis.adaptive_rounds;
  req.adaptive_exploration = cfg.synthesis.adaptive_exploration;
  if (cfg.synthesis.decentralized_mask) {
    const int n_agents = prob->nu_dim();
    if (prob->nx() % n_agents != 0)
      throw ConfigError("decentralized_mask: state dimension must split evenly across agents");
    req.q0_mask = StructureMask::decentralized(n_agents, prob->nx() / n_agents);
    if (cfg.synthesis.form == SynthesisForm::VForm)
      throw ConfigError("decentralized_mask: requires a Q-function form");
  }
  return req;
}

Policy make_policy(const ValidatedProblem& prob, const ExperimentConfig& cfg,
                   const SynthesisResult& synth, int D) {
  const bool qform = (synth.form != SynthesisForm::VForm);
  if (D == 0) {
    if (!qform) return Policy::greedy_v(prob, synth.primary);
    std::optional<AgentPartition> part;
    if (cfg.synthesis.decentralized_mask)
      part = AgentPartition::blocks(prob->nu_dim(), prob->nx() / prob->nu_dim());
    return Policy::greedy_q(prob, synth.primary, std::move(part));
  }
  return Policy::ce_mpc(prob, synth.primary, D);
}

}  // namespace

const char* to_string(SynthesisForm f) {
  switch (f) {
    case SynthesisForm::VForm: return "vform";
    case SynthesisForm::QForm: return "qform";
    case SynthesisForm::QFormEfficient: return "qform_efficient";
  }
  return "?";
}

OracleData compute_oracle(const ValidatedProblem& prob, const ExperimentConfig& cfg) {
  OracleData oracle;
  if (grid_oracle_possible(prob)) {
    oracle.grid_cfg = grid_config_for(prob, cfg);
    oracle.vstar = value_iteration(prob, oracle.grid_cfg, ValueForm::V);
    oracle.grid_optimum = integrate_grid_against_gaussian(oracle.vstar, prob->nu);
    oracle.has_grid = true;
  }
  if (prob->input_unbounded()) {
    oracle.riccati = riccati_oracle(prob);
    const QuadraticForm vstar =
        QuadraticForm::state(oracle.riccati.P, Vector::Zero(prob->nx()), oracle.riccati.s);
    oracle.riccati_optimum =
        weighted_integral(vstar, RelevanceMeasure::state_only(prob->nu));
    oracle.has_riccati = true;
  }
  if (!oracle.has_grid && !oracle.has_riccati)
    throw Error("compute_oracle: no oracle available for this problem");
  return oracle;
}

RunOutput run_experiment(const ExperimentConfig& cfg) {
  RunOutput out;
  const ValidatedProblem prob = build_problem(cfg.problem);
  const int horizon =
      cfg.evaluation.horizon ? *cfg.evaluation.horizon : default_horizon(prob->gamma);

  {
    Stopwatch sw(out.timings, "oracle");
    out.oracle = compute_oracle(prob, cfg);
  }

  ReportRow oracle_row;
  oracle_row.kind = "oracle";
  oracle_row.policy = "optimal";
  oracle_row.online_mean = out.oracle.optimum();
  oracle_row.online_ci = 0.0;
  oracle_row.synth_seed = cfg.synthesis.seed;
  oracle_row.eval_seed = cfg.evaluation.seed;
  out.rows.push_back(oracle_row);
  if (out.oracle.has_riccati) {
    out.functions.push_back(
        {"riccati_vstar", QuadraticForm::state(out.oracle.riccati.P,
                                               Vector::Zero(prob->nx()),
                                               out.oracle.riccati.s)});
  }

  int policy_counter = 0;
  for (std::size_t mi = 0; mi < cfg.synthesis.m_values.size(); ++mi) {
    const int M = cfg.synthesis.m_values[mi];
    SynthesisRequest req = make_request(prob, cfg, M);

    const std::uint64_t sample_seed = cfg.synthesis.seed + static_cast<std::uint64_t>(M);
    SynthesisResult synth;
    FeasibilityReport feas;
    {
      Stopwatch sw(out.timings, "synthesis_M" + std::to_string(M));
      synth = synthesize_from_request(prob, req, sample_seed);
      const SampleSet heldout =
          sample_relevance_mixture(prob, req.c, req.sampling_scales,
                                   cfg.synthesis.heldout_samples, sample_seed ^ 0x68656c646f7574ull);
      SynthesisRequest heldout_req = req;
      heldout_req.samples_per_inequality = cfg.synthesis.heldout_samples;
      feas = check_feasibility(synth, prob, heldout_req, heldout, cfg.synthesis.heldout_tol);
    }

    LowerBoundEstimate lb;
    {
      Stopwatch sw(out.timings, "lower_bound_M" + std::to_string(M));
      lb = lower_bound(synth.primary, prob, cfg.evaluation.trials, cfg.evaluation.seed ^ 0x1bull);
    }

    const std::string mname = "M" + std::to_string(M);
    out.functions.push_back({mname + "_" + ((synth.form == SynthesisForm::VForm) ? "V0" : "Q0"),
                             synth.primary});

    for (int D : cfg.policy.d_values) {
      ReportRow row;
      row.kind = "policy";
      row.form = to_string(synth.form);
      row.M = M;
      row.policy = (D == 0) ? "greedy" : "cempc";
      row.D = D;
      row.lower_bound = lb.mean;
      row.lower_bound_ci = lb.exact ? 0.0 : lb.ci_halfwidth;
      row.feas_max_violation = feas.max_violation;
      row.feas_violation_rate = feas.violation_rate;
      row.lp_status = to_string(synth.status);
      row.bound_active = synth.bound_active_warning;
      row.u_block_projected = synth.u_block_projected;
      row.synth_seed = sample_seed;

      const std::uint64_t eval_seed =
          cfg.evaluation.common_random_numbers
              ? cfg.evaluation.seed
              : cfg.evaluation.seed + static_cast<std::uint64_t>(++policy_counter);
      row.eval_seed = eval_seed;
      {
        Stopwatch sw(out.timings,
                     "evaluate_M" + std::to_string(M) + "_D" + std::to_string(D));
        const Policy pol = make_policy(prob, cfg, synth, D);
        const PerformanceEstimate perf =
            simulate_performance(pol, prob, horizon, cfg.evaluation.trials, eval_seed,
                                 cfg.threads);
        row.online_mean = perf.mean;
        row.online_ci = perf.ci_halfwidth;
      }
      out.rows.push_back(row);
    }
  }

  if (cfg.verification.enabled) {
    Stopwatch sw(out.timings, "verification");
    RunOutput ver = run_verification(cfg);
    out.bounds = std::move(ver.bounds);
    out.verification_pass = ver.verification_pass;
    out.verification_ran = true;
  }
  return out;
}

RunOutput run_verification(const ExperimentConfig& cfg) {
  RunOutput out;
  const ValidatedProblem prob = build_problem(cfg.problem);
  if (!grid_oracle_possible(prob))
    throw Error("verification needs the grid oracle (nx <= 2, nu = 1, bounded box)");

  TheoremContext ctx{prob,
                     GridConfig(),
                     GridFunction(),
                     GridFunction(),
                     QuadraticForm(),
                     QuadraticForm(),
                     cfg.verification.M,
                     cfg.verification.D,
                     RelevanceMeasure(),
                     RelevanceMeasure(),
                     cfg.verification.mc_trials,
                     default_horizon(prob->gamma)};

  {
    Stopwatch sw(out.timings, "verification_oracle");
    ExperimentConfig tmp = cfg;
    tmp.grid.x_res = cfg.verification.grid_x_res;
    tmp.grid.u_res = cfg.verification.grid_u_res;
    ctx.cfg = grid_config_for(prob, tmp);
    ctx.vstar = value_iteration(prob, ctx.cfg, ValueForm::V);
    ctx.qstar = qstar_from_vstar(ctx.vstar, prob, ctx.cfg);
  }

  {
    Stopwatch sw(out.timings, "verification_synthesis");
    const int M = cfg.verification.M;
    SynthesisRequest vreq = SynthesisRequest::defaults(prob, SynthesisForm::VForm, M);
    SynthesisRequest qreq = SynthesisRequest::defaults(prob, SynthesisForm::QFormEfficient, M);
    const SampleSet vs = sample_relevance(prob, vreq.c, vreq.samples_per_inequality,
                                          cfg.synthesis.seed + 101);
    const SampleSet qs = sample_relevance(prob, qreq.c, qreq.samples_per_inequality,
                                          cfg.synthesis.seed + 202);
    ctx.vhat = synthesize(prob, vreq, vs).primary;
    ctx.qhat = synthesize(prob, qreq, qs).primary;
    ctx.c_v = vreq.c;
    ctx.c_q = qreq.c;
  }

  {
    Stopwatch sw(out.timings, "verification_bounds");
    for (std::uint64_t seed : cfg.verification.seeds) {
      for (TheoremId id : cfg.verification.theorems) {
        BoundReport rep = verify_theorem(id, ctx, seed);
        out.verification_pass = out.verification_pass && rep.pass;
        out.bounds.push_back(std::move(rep));
      }
    }
  }
  out.verification_ran = true;
  return out;
}

std::string report_csv_text(const RunOutput& out, const ExperimentConfig& cfg) {
  std::string text =
      "kind,form,M,policy,D,lower_bound,lower_bound_ci,online_mean,online_ci,"
      "feas_max_violation,feas_violation_rate,lp_status,bound_active,u_block_projected,"
      "bounds_pass,config_hash,synth_seed,eval_seed\n";
  const std::string bounds_pass =
      out.verification_ran ? (out.verification_pass ? "yes" : "no") : "";
  for (const ReportRow& r : out.rows) {
    text += r.kind + "," + r.form + "," + fmt_int(r.M) + "," + r.policy + "," + fmt_int(r.D) +
            "," + fmt(r.lower_bound) + "," + fmt(r.lower_bound_ci) + "," + fmt(r.online_mean) +
            "," + fmt(r.online_ci) + "," + fmt(r.feas_max_violation) + "," +
            fmt(r.feas_violation_rate) + "," + r.lp_status + "," +
            (r.bound_active ? "yes" : "no") + "," + (r.u_block_projected ? "yes" : "no") + "," +
            bounds_pass + "," + cfg.config_hash + "," + std::to_string(r.synth_seed) + "," +
            std::to_string(r.eval_seed) + "\n";
  }
  return text;
}

void write_outputs(const RunOutput& out, const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  fs::create_directories(cfg.output_dir);
  const fs::path dir(cfg.output_dir);

  {
    std::ofstream f(dir / "report.csv", std::ios::binary);
    f << report_csv_text(out, cfg);
  }

  if (!out.functions.empty()) {
    std::ofstream f(dir / "functions.csv", std::ios::binary);
    for (const NamedForm& nf : out.functions) {
      f << "function," << nf.name << ",space,"
        << (nf.form.space == Space::State ? "state" : "state_input") << ",nx," << nf.form.nx
        << ",nu," << nf.form.nu << "\n";
      for (Eigen::Index i = 0; i < nf.form.P.rows(); ++i) {
        f << "P";
        for (Eigen::Index j = 0; j < nf.form.P.cols(); ++j) f << "," << fmt(nf.form.P(i, j));
        f << "\n";
      }
      f << "p";
      for (Eigen::Index i = 0; i < nf.form.p.size(); ++i) f << "," << fmt(nf.form.p[i]);
      f << "\ns," << fmt(nf.form.s) << "\n";
    }
  }

  if (!out.bounds.empty()) {
    std::ofstream f(dir / "bounds.csv", std::ios::binary);
    f << "theorem,seed,M,D,lhs,rhs,stat_slack,pass,beta,details\n";
    for (const BoundReport& b : out.bounds) {
      const auto beta_it = b.details.find("beta");
      std::string details;
      for (const auto& [k, v] : b.details) {
        if (!details.empty()) details += ";";
        details += k + "=" + fmt(v);
      }
      f << to_string(b.id) << "," << b.seed << "," << b.M << "," << b.D << "," << fmt(b.lhs)
        << "," << fmt(b.rhs) << "," << fmt(b.stat_slack) << "," << (b.pass ? "yes" : "no")
        << "," << (beta_it == b.details.end() ? "" : fmt(beta_it->second)) << "," << details
        << "\n";
    }
  }

  if (out.oracle.has_grid) {
    grid_to_csv(out.oracle.vstar, (dir / "vstar.csv").string());
    // Greedy policy of the oracle on the state grid.
    const ValidatedProblem prob = build_problem(cfg.problem);
    const GreedyEvaluator greedy(out.oracle.vstar, prob, out.oracle.grid_cfg);
    std::ofstream f(dir / "policy.csv", std::ios::binary);
    f << "x,action\n";
    const Vector& ax = out.oracle.vstar.axes[0];
    for (Eigen::Index i = 0; i < ax.size(); ++i) {
      const Vector u = greedy.action(Vector::Constant(1, ax[i]));
      f << fmt(ax[i]) << "," << fmt(u[0]) << "\n";
    }
  }

  {
    // Wall-clock timings live outside report.csv so reruns stay
    // byte-identical.
    std::ofstream f(dir / "timings.csv", std::ios::binary);
    f << "stage,seconds\n";
    for (const StageTiming& t : out.timings) f << t.stage << "," << fmt(t.seconds) << "\n";
  }
}

}  // namespace adp
