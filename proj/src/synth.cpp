#include "adp/synth.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace adp {

namespace {

// Column layout for the free coefficients of one stage function. P entries
// are parameterized by their upper triangle; a column index of -1 marks a
// coefficient pinned to zero by the mask.
struct CoeffLayout {
  Space space = Space::State;
  int nx = 0;
  int nu = 0;
  Eigen::MatrixXi P_col;
  Eigen::VectorXi p_col;
  int s_col = -1;
  int func_index = 0;

  int dim() const { return nx + nu; }
};

struct VariableTable {
  std::vector<CoeffLayout> stages;
  int num_vars = 0;
  std::vector<VariableLabel> labels;

  // Allocates columns for the free entries of `mask`, honoring tie groups.
  void add_stage(const StructureMask& mask, int func_index) {
    CoeffLayout lay;
    lay.space = mask.space;
    lay.nx = mask.nx;
    lay.nu = mask.nu;
    lay.func_index = func_index;
    const int d = mask.dim();
    lay.P_col.setConstant(d, d, -1);
    lay.p_col.setConstant(d, -1);

    // Representative entry per tie group, keyed by canonical entry id.
    auto entry_id = [d](const MaskEntry& e) {
      switch (e.kind) {
        case MaskEntry::Kind::P: {
          const int i = std::min(e.i, e.j), j = std::max(e.i, e.j);
          return i * d + j;
        }
        case MaskEntry::Kind::LinP: return d * d + e.i;
        case MaskEntry::Kind::Const: return d * d + d;
      }
      return -1;
    };
    std::map<int, int> rep;  // entry id -> representative id
    for (const auto& group : mask.tie_groups) {
      if (group.empty()) continue;
      const int head = entry_id(group.front());
      for (const MaskEntry& e : group) {
        if (e.kind == MaskEntry::Kind::P && !mask.P_free(e.i, e.j))
          throw MaskMismatch("tie group references a masked-out P entry");
        if (e.kind == MaskEntry::Kind::LinP && !mask.p_free(e.i))
          throw MaskMismatch("tie group references a masked-out p entry");
        rep[entry_id(e)] = head;
      }
    }
    std::map<int, int> col_of_rep;
    auto assign = [&](const MaskEntry& e) {
      const int id = entry_id(e);
      const int r = rep.count(id) ? rep[id] : id;
      auto it = col_of_rep.find(r);
      if (it != col_of_rep.end()) return it->second;
      const int col = num_vars++;
      col_of_rep.emplace(r, col);
      labels.push_back(VariableLabel{func_index, e});
      return col;
    };

    for (int i = 0; i < d; ++i)
      for (int j = i; j < d; ++j)
        if (mask.P_free(i, j)) {
          if (!mask.P_free(j, i))
            throw MaskMismatch("StructureMask: P pattern must be symmetric");
          lay.P_col(i, j) = lay.P_col(j, i) =
              assign(MaskEntry{MaskEntry::Kind::P, i, j});
        }
    for (int i = 0; i < d; ++i)
      if (mask.p_free(i)) lay.p_col(i) = assign(MaskEntry{MaskEntry::Kind::LinP, i, 0});
    if (mask.s_free) lay.s_col = assign(MaskEntry{MaskEntry::Kind::Const, 0, 0});

    stages.push_back(std::move(lay));
  }

  QuadraticForm decode(int stage, const Vector& z) const {
    const CoeffLayout& lay = stages[static_cast<std::size_t>(stage)];
    const int d = lay.dim();
    Matrix P = Matrix::Zero(d, d);
    Vector p = Vector::Zero(d);
    double s = 0.0;
    for (int i = 0; i < d; ++i)
      for (int j = i; j < d; ++j)
        if (lay.P_col(i, j) >= 0) P(i, j) = P(j, i) = z[lay.P_col(i, j)];
    for (int i = 0; i < d; ++i)
      if (lay.p_col(i) >= 0) p[i] = z[lay.p_col(i)];
    if (lay.s_col >= 0) s = z[lay.s_col];
    if (lay.space == Space::State) return QuadraticForm::state(std::move(P), std::move(p), s);
    return QuadraticForm::state_input(lay.nx, lay.nu, std::move(P), std::move(p), s);
  }
};

// Accumulates one constraint row as sparse (column, coefficient) terms.
struct RowBuilder {
  std::map<int, double> terms;

  void add(int col, double w) {
    if (col >= 0 && w != 0.0) terms[col] += w;
  }

  // += w * f_stage(z)
  void add_eval(const CoeffLayout& lay, const Vector& z, double w) {
    const int d = lay.dim();
    for (int i = 0; i < d; ++i) {
      for (int j = i; j < d; ++j) {
        const double mult = (i == j) ? 1.0 : 2.0;
        add(lay.P_col(i, j), w * mult * z[i] * z[j]);
      }
      add(lay.p_col(i), w * z[i]);
    }
    add(lay.s_col, w);
  }

  // += w * E[f_stage(y)] for y ~ (ybar, Sw): second moment ybar ybar' + Sw.
  void add_expectation(const CoeffLayout& lay, const Vector& ybar, const Matrix& Sw,
                       double w) {
    const int d = lay.dim();
    for (int i = 0; i < d; ++i) {
      for (int j = i; j < d; ++j) {
        const double mult = (i == j) ? 1.0 : 2.0;
        add(lay.P_col(i, j), w * mult * (ybar[i] * ybar[j] + Sw(i, j)));
      }
      add(lay.p_col(i), w * ybar[i]);
    }
    add(lay.s_col, w);
  }

  std::vector<std::pair<int, double>> take() {
    std::vector<std::pair<int, double>> out(terms.begin(), terms.end());
    terms.clear();
    return out;
  }
};

struct Assembly {
  VariableTable table;
  // Stage indices into table.stages.
  int q0 = -1;                  // Q_0 (Q forms)
  std::vector<int> v;           // V_0..V_{M-1}
  std::vector<int> q_inner;     // Q_1..Q_{M-1} (QForm)
};

Assembly make_assembly(const ValidatedProblem& prob, const SynthesisRequest& req) {
  const int nx = prob->nx();
  const int nu = prob->nu_dim();
  if (req.M < 1) throw Error("build_iterated_lp: M must be >= 1");
  if (req.v_mask.nx != nx || req.v_mask.space != Space::State)
    throw MaskMismatch("build_iterated_lp: V mask must be a state mask of matching dimension");

  Assembly a;
  int func = 0;
  if (req.form != SynthesisForm::VForm) {
    if (req.q0_mask.space != Space::StateInput || req.q0_mask.nx != nx || req.q0_mask.nu != nu)
      throw MaskMismatch("build_iterated_lp: Q_0 mask dimension mismatch");
    a.table.add_stage(req.q0_mask, func++);
    a.q0 = 0;
  }
  for (int j = 0; j < req.M; ++j) {
    a.v.push_back(static_cast<int>(a.table.stages.size()));
    a.table.add_stage(req.v_mask, func++);
  }
  if (req.form == SynthesisForm::QForm) {
    for (int j = 1; j < req.M; ++j) {
      if (req.q_inner_mask.space != Space::StateInput || req.q_inner_mask.nx != nx ||
          req.q_inner_mask.nu != nu)
        throw MaskMismatch("build_iterated_lp: inner Q mask dimension mismatch");
      a.q_inner.push_back(static_cast<int>(a.table.stages.size()));
      a.table.add_stage(req.q_inner_mask, func++);
    }
  }
  return a;
}

}  // namespace

SampleSet sample_relevance(const ValidatedProblem& prob, const RelevanceMeasure& c,
                           int count, std::uint64_t seed) {
  if (count < 1) throw EmptySamples("sample_relevance: need at least one sample");
  const ProblemSpec& s = prob.spec();
  if (c.state.dim() != s.nx())
    throw UnsupportedMeasure("sample_relevance: state marginal dimension mismatch");

  SampleSet set;
  set.seed = seed;
  set.states.resize(s.nx(), count);
  set.inputs.resize(s.nu_dim(), count);

  std::ostringstream desc;
  desc << "state_gaussian(" << s.nx() << ")";

  const Matrix L = c.state.sqrt_factor();
  RandomStream rng(seed, 0);
  for (int k = 0; k < count; ++k) {
    Vector z(s.nx());
    for (int i = 0; i < s.nx(); ++i) z[i] = rng.normal();
    set.states.col(k) = c.state.mean + L * z;
  }

  // State-only measures still need paired inputs for the sampled
  // constraints: default to uniform on the box, standard normal when the
  // box is unbounded.
  std::variant<GaussianMeasure, UniformBox> input_marginal;
  if (c.input) {
    input_marginal = *c.input;
  } else if (s.input_unbounded()) {
    GaussianMeasure g;
    g.mean = Vector::Zero(s.nu_dim());
    g.cov = Matrix::Identity(s.nu_dim(), s.nu_dim());
    input_marginal = std::move(g);
  } else {
    for (int i = 0; i < s.nu_dim(); ++i)
      if (!std::isfinite(s.u_lo[i]) || !std::isfinite(s.u_hi[i]))
        throw UnsupportedMeasure("sample_relevance: mixed finite/infinite input box needs an explicit marginal");
    input_marginal = UniformBox{s.u_lo, s.u_hi};
  }
  if (std::holds_alternative<UniformBox>(input_marginal)) {
    const UniformBox& box = std::get<UniformBox>(input_marginal);
    if (box.lo.size() != s.nu_dim())
      throw UnsupportedMeasure("sample_relevance: input box dimension mismatch");
    desc << "|input_uniform_box";
    RandomStream urng(seed, 1);
    for (int k = 0; k < count; ++k)
      for (int i = 0; i < s.nu_dim(); ++i)
        set.inputs(i, k) = urng.uniform(box.lo[i], box.hi[i]);
  } else {
    const GaussianMeasure& g = std::get<GaussianMeasure>(input_marginal);
    if (g.dim() != s.nu_dim())
      throw UnsupportedMeasure("sample_relevance: input marginal dimension mismatch");
    desc << "|input_gaussian";
    const Matrix Lu = g.sqrt_factor();
    RandomStream urng(seed, 1);
    for (int k = 0; k < count; ++k) {
      Vector z(s.nu_dim());
      for (int i = 0; i < s.nu_dim(); ++i) z[i] = urng.normal();
      Vector u = g.mean + Lu * z;
      // Keep draws inside the problem's box.
      for (int i = 0; i < s.nu_dim(); ++i) u[i] = std::clamp(u[i], s.u_lo[i], s.u_hi[i]);
      set.inputs.col(k) = u;
    }
  }
  set.descriptor = desc.str();
  return set;
}

SampleSet sample_relevance_mixture(const ValidatedProblem& prob, const RelevanceMeasure& c,
                                   const std::vector<double>& scales, int count,
                                   std::uint64_t seed) {
  if (scales.empty() || (scales.size() == 1 && scales[0] == 1.0))
    return sample_relevance(prob, c, count, seed);
  const ProblemSpec& s = prob.spec();
  SampleSet set;
  set.seed = seed;
  set.states.resize(s.nx(), count);
  set.inputs.resize(s.nu_dim(), count);
  std::ostringstream desc;
  desc << "scale_mixture(";
  int filled = 0;
  for (std::size_t k = 0; k < scales.size(); ++k) {
    const int part = (k + 1 == scales.size())
                         ? count - filled
                         : count / static_cast<int>(scales.size());
    if (part <= 0) continue;
    RelevanceMeasure ck = c;
    ck.state.cov *= scales[k] * scales[k];
    if (ck.input && std::holds_alternative<GaussianMeasure>(*ck.input))
      std::get<GaussianMeasure>(*ck.input).cov *= scales[k] * scales[k];
    const SampleSet part_set =
        sample_relevance(prob, ck, part, seed + 0x70617274ull * (k + 1));
    set.states.middleCols(filled, part) = part_set.states;
    set.inputs.middleCols(filled, part) = part_set.inputs;
    filled += part;
    desc << scales[k] << (k + 1 < scales.size() ? "," : "");
  }
  desc << ")";
  set.descriptor = desc.str();
  return set;
}

SynthesisRequest SynthesisRequest::defaults(const ValidatedProblem& prob, SynthesisForm form,
                                            int M) {
  const ProblemSpec& s = prob.spec();
  SynthesisRequest req;
  req.form = form;
  req.M = M;
  req.v_mask = StructureMask::dense(Space::State, s.nx());
  req.q0_mask = StructureMask::dense(Space::StateInput, s.nx(), s.nu_dim());
  req.q_inner_mask = req.q0_mask;
  if (form == SynthesisForm::VForm) {
    req.c = RelevanceMeasure::state_only(s.nu);
  } else if (s.input_unbounded()) {
    GaussianMeasure g;
    g.mean = Vector::Zero(s.nu_dim());
    g.cov = Matrix::Identity(s.nu_dim(), s.nu_dim());
    req.c = RelevanceMeasure::with_gaussian_input(s.nu, std::move(g));
  } else {
    req.c = RelevanceMeasure::with_box_input(s.nu, s.u_lo, s.u_hi);
  }
  req.samples_per_inequality = (M <= 5) ? 2000 : 400;
  return req;
}

LinearProgram build_iterated_lp(const ValidatedProblem& prob, const SynthesisRequest& req,
                                const SampleSet& samples) {
  if (samples.count() < 1) throw EmptySamples("build_iterated_lp: empty sample set");
  const ProblemSpec& s = prob.spec();
  if (samples.states.rows() != s.nx() || samples.inputs.rows() != s.nu_dim())
    throw DimensionMismatch("build_iterated_lp: sample dimensions do not match the problem");

  Assembly a = make_assembly(prob, req);
  const int M = req.M;
  const int n_samples = std::min(req.samples_per_inequality, samples.count());

  LinearProgram lp;
  lp.num_vars = a.table.num_vars;
  lp.c = Vector::Zero(lp.num_vars);
  lp.labels = a.table.labels;

  // Objective: the c-integral of the primary function, coefficient by
  // coefficient (off-diagonal P entries appear twice in the form).
  {
    const int primary = (req.form == SynthesisForm::VForm) ? a.v[0] : a.q0;
    const CoeffLayout& lay = a.table.stages[static_cast<std::size_t>(primary)];
    const Vector mu = req.c.mean();
    const Matrix m2 = req.c.second_moment();
    if (mu.size() != lay.dim())
      throw UnsupportedMeasure("build_iterated_lp: relevance measure does not match the objective space");
    for (int i = 0; i < lay.dim(); ++i) {
      for (int j = i; j < lay.dim(); ++j)
        if (lay.P_col(i, j) >= 0)
          lp.c[lay.P_col(i, j)] += ((i == j) ? 1.0 : 2.0) * m2(i, j);
      if (lay.p_col(i) >= 0) lp.c[lay.p_col(i)] += mu[i];
    }
    if (lay.s_col >= 0) lp.c[lay.s_col] += 1.0;
  }

  const Matrix Sw = s.noise_cov();
  const Vector mw = s.noise_mean();
  const double g = s.gamma;
  RowBuilder row;

  auto lhs_minus_tu = [&](int lhs_stage, bool lhs_state_only, int v_stage, int k) {
    // lhs(x[,u]) <= l(x,u) + gamma E[V_stage(next)]
    const Vector x = samples.state(k);
    const Vector u = samples.input(k);
    const CoeffLayout& lhs = a.table.stages[static_cast<std::size_t>(lhs_stage)];
    if (lhs_state_only) {
      row.add_eval(lhs, x, 1.0);
    } else {
      Vector z(s.nx() + s.nu_dim());
      z << x, u;
      row.add_eval(lhs, z, 1.0);
    }
    const Vector ybar = s.A * x + s.B_u * u + mw;
    row.add_expectation(a.table.stages[static_cast<std::size_t>(v_stage)], ybar, Sw, -g);
    lp.add_row(row.take(), s.stage_cost(x, u));
  };

  auto v_below_q = [&](int v_stage, int q_stage, int k) {
    // V(x) <= Q(x, u)
    const Vector x = samples.state(k);
    Vector z(s.nx() + s.nu_dim());
    z << x, samples.input(k);
    row.add_eval(a.table.stages[static_cast<std::size_t>(v_stage)], x, 1.0);
    row.add_eval(a.table.stages[static_cast<std::size_t>(q_stage)], z, -1.0);
    lp.add_row(row.take(), 0.0);
  };

  switch (req.form) {
    case SynthesisForm::VForm:
      // V_j(x) <= T_u V_{j+1 mod M}(x, u), closing the chain on V_0.
      for (int j = 0; j < M; ++j)
        for (int k = 0; k < n_samples; ++k)
          lhs_minus_tu(a.v[static_cast<std::size_t>(j)], true,
                       a.v[static_cast<std::size_t>((j + 1) % M)], k);
      break;
    case SynthesisForm::QForm:
      // Q_j <= T_u V_j and V_j <= Q_{j+1}, with Q_M identified with Q_0.
      for (int j = 0; j < M; ++j) {
        const int qj = (j == 0) ? a.q0 : a.q_inner[static_cast<std::size_t>(j - 1)];
        for (int k = 0; k < n_samples; ++k)
          lhs_minus_tu(qj, false, a.v[static_cast<std::size_t>(j)], k);
      }
      for (int j = 0; j < M; ++j) {
        const int qnext = (j + 1 == M) ? a.q0 : a.q_inner[static_cast<std::size_t>(j)];
        for (int k = 0; k < n_samples; ++k)
          v_below_q(a.v[static_cast<std::size_t>(j)], qnext, k);
      }
      break;
    case SynthesisForm::QFormEfficient:
      // Q_0 <= T_u V_0; V_{j-1} <= T_u V_j; V_{M-1} <= Q_0.
      for (int k = 0; k < n_samples; ++k) lhs_minus_tu(a.q0, false, a.v[0], k);
      for (int j = 1; j < M; ++j)
        for (int k = 0; k < n_samples; ++k)
          lhs_minus_tu(a.v[static_cast<std::size_t>(j - 1)], true,
                       a.v[static_cast<std::size_t>(j)], k);
      for (int k = 0; k < n_samples; ++k) v_below_q(a.v[static_cast<std::size_t>(M - 1)], a.q0, k);
      break;
  }

  // Coefficient box precluding unboundedness from sampling gaps.
  lp.z_lo = Vector::Constant(lp.num_vars, -req.coefficient_bound);
  lp.z_hi = Vector::Constant(lp.num_vars, req.coefficient_bound);
  return lp;
}

SynthesisResult synthesize(const ValidatedProblem& prob, const SynthesisRequest& req,
                           const SampleSet& samples) {
  Assembly a = make_assembly(prob, req);
  LinearProgram lp = build_iterated_lp(prob, req, samples);
  LpSolution sol = solve_lp(lp);

  SynthesisResult out;
  out.form = req.form;
  out.M = req.M;
  out.status = sol.status;
  out.objective = sol.objective_value;
  out.lp_rows = lp.num_rows();
  out.lp_vars = lp.num_vars;
  out.lp_iterations = sol.iterations;
  out.bound_active_warning = sol.any_bound_active;

  for (int j = 0; j < req.M; ++j)
    out.v_stages.push_back(a.table.decode(a.v[static_cast<std::size_t>(j)], sol.z));
  if (req.form == SynthesisForm::VForm) {
    out.primary = out.v_stages[0];
  } else {
    out.primary = a.table.decode(a.q0, sol.z);
    for (std::size_t j = 0; j < a.q_inner.size(); ++j)
      out.q_stages.push_back(a.table.decode(a.q_inner[j], sol.z));
    // Convexity in u is not an LP constraint; enforce it post-hoc. The
    // floor keeps the projected block invertible for the greedy QP.
    Eigen::SelfAdjointEigenSolver<Matrix> es(out.primary.Puu());
    const double lam_floor = 1e-8 * (1.0 + es.eigenvalues().cwiseAbs().maxCoeff());
    if (es.eigenvalues().minCoeff() < lam_floor) {
      const Vector lam = es.eigenvalues().cwiseMax(lam_floor);
      out.primary.P.bottomRightCorner(out.primary.nu, out.primary.nu) =
          es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
      out.u_block_projected = es.eigenvalues().minCoeff() < -1e-8;
    }
  }
  return out;
}

SynthesisResult synthesize_from_request(const ValidatedProblem& prob,
                                        const SynthesisRequest& req, std::uint64_t seed,
                                        SampleSet* samples_out) {
  const ProblemSpec& s = prob.spec();
  const int n = req.samples_per_inequality;
  SampleSet samples = sample_relevance_mixture(prob, req.c, req.sampling_scales, n, seed);
  SynthesisRequest work = req;
  SynthesisResult res = synthesize(prob, work, samples);

  for (int round = 2; round <= req.adaptive_rounds; ++round) {
    // Greedy actions of the current solution (exact for the unconstrained
    // PD case, clamped otherwise), jittered for local coverage.
    const QuadraticForm q = (res.form == SynthesisForm::VForm)
                                ? tu_closed_form(res.primary, prob)
                                : res.primary;
    Matrix Puu = q.Puu();
    Eigen::SelfAdjointEigenSolver<Matrix> es(Puu);
    if (es.eigenvalues().minCoeff() <= 1e-10)
      Puu += (1e-10 - es.eigenvalues().minCoeff() + 1e-8) * Matrix::Identity(q.nu, q.nu);
    Eigen::LDLT<Matrix> ldlt(Puu);

    const SampleSet fresh = sample_relevance_mixture(
        prob, req.c, req.sampling_scales, n, seed + 0xad0000ull * static_cast<std::uint64_t>(round));
    RandomStream rng(seed ^ 0x6a7a7a, static_cast<std::uint64_t>(round));
    SampleSet merged;
    merged.seed = seed;
    merged.descriptor = samples.descriptor + "+greedy_round" + std::to_string(round);
    const int old = samples.count();
    merged.states.resize(s.nx(), old + n);
    merged.inputs.resize(s.nu_dim(), old + n);
    merged.states.leftCols(old) = samples.states;
    merged.inputs.leftCols(old) = samples.inputs;
    for (int k = 0; k < n; ++k) {
      const Vector x = fresh.states.col(k);
      Vector u = -ldlt.solve(q.Pxu().transpose() * x + 0.5 * q.pu());
      for (int i = 0; i < u.size(); ++i) {
        u[i] += req.adaptive_exploration * (1.0 + std::abs(u[i])) * rng.normal();
        u[i] = std::clamp(u[i], s.u_lo[i], s.u_hi[i]);
      }
      merged.states.col(old + k) = x;
      merged.inputs.col(old + k) = u;
    }
    samples = std::move(merged);
    work.samples_per_inequality = samples.count();
    res = synthesize(prob, work, samples);
  }
  if (samples_out) *samples_out = std::move(samples);
  return res;
}

FeasibilityReport check_feasibility(const SynthesisResult& result,
                                    const ValidatedProblem& prob,
                                    const SynthesisRequest& req,
                                    const SampleSet& heldout, double tol) {
  const ProblemSpec& s = prob.spec();
  const double g = s.gamma;
  const Matrix Sw = s.noise_cov();
  const Vector mw = s.noise_mean();
  const int M = result.M;
  const int n = std::min(req.samples_per_inequality, heldout.count());

  auto expect_v = [&](const QuadraticForm& V, const Vector& x, const Vector& u) {
    const Vector ybar = s.A * x + s.B_u * u + mw;
    return ybar.dot(V.P * ybar) + (V.P * Sw).trace() + V.p.dot(ybar) + V.s;
  };

  FeasibilityReport rep;
  double scale = 1.0;
  std::vector<double> violations;
  auto record = [&](double lhs, double rhs) {
    violations.push_back(lhs - rhs);
    scale = std::max({scale, std::abs(lhs), std::abs(rhs)});
  };

  for (int k = 0; k < n; ++k) {
    const Vector x = heldout.state(k);
    const Vector u = heldout.input(k);
    Vector z(s.nx() + s.nu_dim());
    z << x, u;
    const double l = s.stage_cost(x, u);

    switch (result.form) {
      case SynthesisForm::VForm:
        for (int j = 0; j < M; ++j) {
          const QuadraticForm& vj = result.v_stages[static_cast<std::size_t>(j)];
          const QuadraticForm& vn = result.v_stages[static_cast<std::size_t>((j + 1) % M)];
          record(vj.eval(x), l + g * expect_v(vn, x, u));
        }
        break;
      case SynthesisForm::QForm:
        for (int j = 0; j < M; ++j) {
          const QuadraticForm& qj =
              (j == 0) ? result.primary : result.q_stages[static_cast<std::size_t>(j - 1)];
          record(qj.eval(z), l + g * expect_v(result.v_stages[static_cast<std::size_t>(j)], x, u));
        }
        for (int j = 0; j < M; ++j) {
          const QuadraticForm& qn =
              (j + 1 == M) ? result.primary : result.q_stages[static_cast<std::size_t>(j)];
          record(result.v_stages[static_cast<std::size_t>(j)].eval(x), qn.eval(z));
        }
        break;
      case SynthesisForm::QFormEfficient:
        record(result.primary.eval(z), l + g * expect_v(result.v_stages[0], x, u));
        for (int j = 1; j < M; ++j)
          record(result.v_stages[static_cast<std::size_t>(j - 1)].eval(x),
                 l + g * expect_v(result.v_stages[static_cast<std::size_t>(j)], x, u));
        record(result.v_stages[static_cast<std::size_t>(M - 1)].eval(x), result.primary.eval(z));
        break;
    }
  }

  rep.rows_checked = static_cast<int>(violations.size());
  rep.scale = scale;
  const double threshold = tol * (1.0 + scale);
  int beyond = 0;
  for (double v : violations) {
    rep.max_violation = std::max(rep.max_violation, v);
    if (v > threshold) ++beyond;
  }
  rep.violation_rate = violations.empty() ? 0.0
                                          : static_cast<double>(beyond) /
                                                static_cast<double>(violations.size());
  rep.pass = rep.max_violation <= threshold;
  return rep;
}

EquivalencePair equivalence_check(const ValidatedProblem& prob, int M,
                                  const SampleSet& samples, const StructureMask& q0_mask,
                                  const RelevanceMeasure& c) {
  SynthesisRequest rq = SynthesisRequest::defaults(prob, SynthesisForm::QForm, M);
  rq.q0_mask = q0_mask;
  rq.c = c;
  rq.samples_per_inequality = samples.count();
  SynthesisRequest re = rq;
  re.form = SynthesisForm::QFormEfficient;

  const SynthesisResult full = synthesize(prob, rq, samples);
  const SynthesisResult eff = synthesize(prob, re, samples);
  EquivalencePair out;
  out.objective_qform = full.objective;
  out.objective_efficient = eff.objective;
  out.qform_vars = full.lp_vars;
  out.efficient_vars = eff.lp_vars;
  return out;
}

}  // namespace adp
