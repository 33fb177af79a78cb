#include "adp/config.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <sstream>

namespace adp {

namespace {

using nlohmann::json;

void require_keys(const json& obj, const std::string& where,
                  const std::set<std::string>& allowed,
                  const std::set<std::string>& required = {}) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    if (!allowed.count(key))
      throw ConfigError(where + ": unknown key '" + key + "'");
  }
  for (const std::string& key : required) {
    if (!obj.count(key)) throw ConfigError(where + ": missing required key '" + key + "'");
  }
}

double as_number(const json& v, const std::string& where) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    const std::string s = v.get<std::string>();
    if (s == "inf" || s == "+inf") return kInf;
    if (s == "-inf") return -kInf;
  }
  throw ConfigError(where + ": expected a number (or \"inf\"/\"-inf\")");
}

Vector parse_vector(const json& v, const std::string& where) {
  if (!v.is_array()) throw ConfigError(where + ": expected an array");
  Vector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i)
    out[static_cast<Eigen::Index>(i)] = as_number(v[i], where);
  return out;
}

Matrix parse_matrix(const json& v, const std::string& where) {
  if (!v.is_array() || v.empty()) throw ConfigError(where + ": expected a non-empty 2-d array");
  const std::size_t rows = v.size();
  const std::size_t cols = v[0].is_array() ? v[0].size() : 0;
  if (cols == 0) throw ConfigError(where + ": expected a 2-d array");
  Matrix out(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    if (!v[r].is_array() || v[r].size() != cols)
      throw ConfigError(where + ": ragged rows");
    for (std::size_t c = 0; c < cols; ++c)
      out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          as_number(v[r][c], where);
  }
  return out;
}

SynthesisForm parse_form(const std::string& s, const std::string& where) {
  if (s == "vform") return SynthesisForm::VForm;
  if (s == "qform") return SynthesisForm::QForm;
  if (s == "qform_efficient") return SynthesisForm::QFormEfficient;
  throw ConfigError(where + ": unknown form '" + s + "'");
}

TheoremId parse_theorem(const std::string& s, const std::string& where) {
  if (s == "T1") return TheoremId::T1;
  if (s == "T2") return TheoremId::T2;
  if (s == "T3") return TheoremId::T3;
  if (s == "T4") return TheoremId::T4;
  if (s == "T5") return TheoremId::T5;
  if (s == "T6") return TheoremId::T6;
  throw ConfigError(where + ": unknown theorem '" + s + "'");
}

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

ProblemSpec parse_custom_problem(const json& j) {
  require_keys(j, "problem.custom",
               {"A", "B_u", "B_xi", "L_x", "L_u", "gamma", "u_lo", "u_hi", "xi_mean",
                "xi_cov", "nu_mean", "nu_cov"},
               {"A", "B_u", "B_xi", "L_x", "L_u", "gamma", "u_lo", "u_hi", "xi_mean",
                "xi_cov", "nu_mean", "nu_cov"});
  ProblemSpec s;
  s.A = parse_matrix(j.at("A"), "problem.custom.A");
  s.B_u = parse_matrix(j.at("B_u"), "problem.custom.B_u");
  s.B_xi = parse_matrix(j.at("B_xi"), "problem.custom.B_xi");
  s.L_x = parse_matrix(j.at("L_x"), "problem.custom.L_x");
  s.L_u = parse_matrix(j.at("L_u"), "problem.custom.L_u");
  s.gamma = as_number(j.at("gamma"), "problem.custom.gamma");
  s.u_lo = parse_vector(j.at("u_lo"), "problem.custom.u_lo");
  s.u_hi = parse_vector(j.at("u_hi"), "problem.custom.u_hi");
  s.xi.mean = parse_vector(j.at("xi_mean"), "problem.custom.xi_mean");
  s.xi.cov = parse_matrix(j.at("xi_cov"), "problem.custom.xi_cov");
  s.nu.mean = parse_vector(j.at("nu_mean"), "problem.custom.nu_mean");
  s.nu.cov = parse_matrix(j.at("nu_cov"), "problem.custom.nu_cov");
  return s;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: JSON parse error: ") + e.what());
  }

  require_keys(root, "config",
               {"problem", "synthesis", "policy", "evaluation", "verification", "grid",
                "output_dir", "threads"},
               {"problem", "synthesis", "evaluation"});

  ExperimentConfig cfg;
  cfg.config_hash = fnv1a_hex(root.dump());

  {
    const json& p = root.at("problem");
    require_keys(p, "problem", {"builtin", "n_masses", "dt", "custom"});
    if (p.count("builtin")) {
      cfg.problem.builtin = p.at("builtin").get<std::string>();
      if (cfg.problem.builtin != "oned" && cfg.problem.builtin != "oscillator")
        throw ConfigError("problem.builtin: unknown builtin '" + cfg.problem.builtin + "'");
    }
    if (p.count("n_masses")) cfg.problem.n_masses = p.at("n_masses").get<int>();
    if (p.count("dt")) cfg.problem.dt = as_number(p.at("dt"), "problem.dt");
    if (p.count("custom")) {
      if (!cfg.problem.builtin.empty())
        throw ConfigError("problem: give either 'builtin' or 'custom', not both");
      cfg.problem.custom = parse_custom_problem(p.at("custom"));
    }
    if (cfg.problem.builtin.empty() && !cfg.problem.custom)
      throw ConfigError("problem: needs 'builtin' or 'custom'");
  }

  {
    const json& s = root.at("synthesis");
    require_keys(s, "synthesis",
                 {"form", "m_values", "samples_per_inequality", "heldout_samples",
                  "heldout_tol", "seed", "decentralized_mask", "coefficient_bound",
                  "sampling_scales", "adaptive_rounds", "adaptive_exploration"},
                 {"form", "m_values", "seed"});
    cfg.synthesis.form = parse_form(s.at("form").get<std::string>(), "synthesis.form");
    cfg.synthesis.m_values = s.at("m_values").get<std::vector<int>>();
    if (cfg.synthesis.m_values.empty()) throw ConfigError("synthesis.m_values: empty");
    if (s.count("samples_per_inequality"))
      cfg.synthesis.samples_per_inequality = s.at("samples_per_inequality").get<int>();
    if (s.count("heldout_samples"))
      cfg.synthesis.heldout_samples = s.at("heldout_samples").get<int>();
    if (s.count("heldout_tol"))
      cfg.synthesis.heldout_tol = as_number(s.at("heldout_tol"), "synthesis.heldout_tol");
    cfg.synthesis.seed = s.at("seed").get<std::uint64_t>();
    if (s.count("decentralized_mask"))
      cfg.synthesis.decentralized_mask = s.at("decentralized_mask").get<bool>();
    if (s.count("coefficient_bound"))
      cfg.synthesis.coefficient_bound =
          as_number(s.at("coefficient_bound"), "synthesis.coefficient_bound");
    if (s.count("sampling_scales"))
      cfg.synthesis.sampling_scales = s.at("sampling_scales").get<std::vector<double>>();
    if (s.count("adaptive_rounds"))
      cfg.synthesis.adaptive_rounds = s.at("adaptive_rounds").get<int>();
    if (s.count("adaptive_exploration"))
      cfg.synthesis.adaptive_exploration =
          as_number(s.at("adaptive_exploration"), "synthesis.adaptive_exploration");
  }

  if (root.count("policy")) {
    const json& p = root.at("policy");
    require_keys(p, "policy", {"d_values"});
    if (p.count("d_values")) cfg.policy.d_values = p.at("d_values").get<std::vector<int>>();
  }

  {
    const json& e = root.at("evaluation");
    require_keys(e, "evaluation",
                 {"trials", "horizon", "seed", "common_random_numbers"}, {"trials", "seed"});
    cfg.evaluation.trials = e.at("trials").get<int>();
    if (e.count("horizon")) cfg.evaluation.horizon = e.at("horizon").get<int>();
    cfg.evaluation.seed = e.at("seed").get<std::uint64_t>();
    if (e.count("common_random_numbers"))
      cfg.evaluation.common_random_numbers = e.at("common_random_numbers").get<bool>();
  }

  if (root.count("verification")) {
    const json& v = root.at("verification");
    require_keys(v, "verification",
                 {"enabled", "seeds", "theorems", "M", "D", "mc_trials", "grid_x_res",
                  "grid_u_res"},
                 {"enabled"});
    cfg.verification.enabled = v.at("enabled").get<bool>();
    if (cfg.verification.enabled && !v.count("seeds"))
      throw ConfigError("verification: 'seeds' must be explicit when enabled");
    if (v.count("seeds"))
      cfg.verification.seeds = v.at("seeds").get<std::vector<std::uint64_t>>();
    if (v.count("theorems")) {
      cfg.verification.theorems.clear();
      for (const auto& t : v.at("theorems"))
        cfg.verification.theorems.push_back(
            parse_theorem(t.get<std::string>(), "verification.theorems"));
    }
    if (v.count("M")) cfg.verification.M = v.at("M").get<int>();
    if (v.count("D")) cfg.verification.D = v.at("D").get<int>();
    if (v.count("mc_trials")) cfg.verification.mc_trials = v.at("mc_trials").get<int>();
    if (v.count("grid_x_res")) cfg.verification.grid_x_res = v.at("grid_x_res").get<int>();
    if (v.count("grid_u_res")) cfg.verification.grid_u_res = v.at("grid_u_res").get<int>();
  }

  if (root.count("grid")) {
    const json& g = root.at("grid");
    require_keys(g, "grid", {"x_lo", "x_hi", "x_res", "u_res", "gh_nodes"});
    if (g.count("x_lo")) cfg.grid.x_lo = as_number(g.at("x_lo"), "grid.x_lo");
    if (g.count("x_hi")) cfg.grid.x_hi = as_number(g.at("x_hi"), "grid.x_hi");
    if (g.count("x_res")) cfg.grid.x_res = g.at("x_res").get<int>();
    if (g.count("u_res")) cfg.grid.u_res = g.at("u_res").get<int>();
    if (g.count("gh_nodes")) cfg.grid.gh_nodes = g.at("gh_nodes").get<int>();
  }

  if (root.count("output_dir")) cfg.output_dir = root.at("output_dir").get<std::string>();
  if (root.count("threads")) cfg.threads = root.at("threads").get<int>();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config: cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

ValidatedProblem build_problem(const ProblemConfig& pc) {
  if (pc.builtin == "oned") return one_d_example();
  if (pc.builtin == "oscillator") return oscillator_spec(pc.n_masses, pc.dt);
  if (pc.custom) return validate_problem(*pc.custom);
  throw ConfigError("problem: nothing to build");
}

}  // namespace adp
