#include "adp/quadratic.hpp"

#include <cmath>

namespace adp {

namespace {

Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

void check_dims(const QuadraticForm& q) {
  const int d = q.dim();
  if (q.P.rows() != d || q.P.cols() != d || q.p.size() != d)
    throw DimensionMismatch("QuadraticForm: P/p size inconsistent with declared space");
}

}  // namespace

double QuadraticForm::eval(const Vector& z) const {
  if (z.size() != dim())
    throw DimensionMismatch("QuadraticForm::eval: argument dimension mismatch");
  return z.dot(P * z) + p.dot(z) + s;
}

QuadraticForm QuadraticForm::state(Matrix P, Vector p, double s) {
  QuadraticForm q;
  q.space = Space::State;
  q.nx = static_cast<int>(p.size());
  q.nu = 0;
  q.P = symmetrize(P);
  q.p = std::move(p);
  q.s = s;
  check_dims(q);
  return q;
}

QuadraticForm QuadraticForm::state_input(int nx, int nu, Matrix P, Vector p, double s) {
  QuadraticForm q;
  q.space = Space::StateInput;
  q.nx = nx;
  q.nu = nu;
  q.P = symmetrize(P);
  q.p = std::move(p);
  q.s = s;
  check_dims(q);
  return q;
}

QuadraticForm QuadraticForm::zero(Space space, int nx, int nu) {
  const int d = nx + nu;
  QuadraticForm q;
  q.space = space;
  q.nx = nx;
  q.nu = (space == Space::State) ? 0 : nu;
  q.P = Matrix::Zero(d, d);
  q.p = Vector::Zero(d);
  q.s = 0.0;
  return q;
}

StructureMask StructureMask::dense(Space space, int nx, int nu) {
  StructureMask m;
  m.space = space;
  m.nx = nx;
  m.nu = (space == Space::State) ? 0 : nu;
  const int d = m.dim();
  m.P_free.setConstant(d, d, true);
  m.p_free.setConstant(d, true);
  m.s_free = true;
  return m;
}

StructureMask StructureMask::decentralized(int n_agents, int states_per_agent) {
  const int nx = n_agents * states_per_agent;
  const int nu = n_agents;
  StructureMask m;
  m.space = Space::StateInput;
  m.nx = nx;
  m.nu = nu;
  const int d = nx + nu;
  m.P_free.setConstant(d, d, false);
  m.p_free.setConstant(d, true);
  m.s_free = true;

  // Dense state-only block q(x): it never affects the greedy input.
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < nx; ++j) m.P_free(i, j) = true;

  // Agent i: u_i couples to itself and to its own state block only.
  for (int a = 0; a < n_agents; ++a) {
    const int ui = nx + a;
    m.P_free(ui, ui) = true;
    for (int k = 0; k < states_per_agent; ++k) {
      const int xi = a * states_per_agent + k;
      m.P_free(ui, xi) = true;
      m.P_free(xi, ui) = true;
    }
  }
  return m;
}

int RelevanceMeasure::dim() const {
  int d = state.dim();
  if (input) {
    if (std::holds_alternative<GaussianMeasure>(*input))
      d += std::get<GaussianMeasure>(*input).dim();
    else
      d += static_cast<int>(std::get<UniformBox>(*input).lo.size());
  }
  return d;
}

Vector RelevanceMeasure::mean() const {
  if (!input) return state.mean;
  Vector mu(dim());
  mu.head(state.dim()) = state.mean;
  if (std::holds_alternative<GaussianMeasure>(*input)) {
    mu.tail(std::get<GaussianMeasure>(*input).dim()) = std::get<GaussianMeasure>(*input).mean;
  } else {
    const UniformBox& box = std::get<UniformBox>(*input);
    for (int i = 0; i < box.lo.size(); ++i) {
      if (!std::isfinite(box.lo[i]) || !std::isfinite(box.hi[i]))
        throw UnsupportedMeasure("RelevanceMeasure: uniform-box marginal needs finite bounds");
      mu[state.dim() + i] = 0.5 * (box.lo[i] + box.hi[i]);
    }
  }
  return mu;
}

Matrix RelevanceMeasure::second_moment() const {
  const Vector mu = mean();
  // Independent blocks: cross second moments factor into products of means.
  Matrix m2 = mu * mu.transpose();
  m2.topLeftCorner(state.dim(), state.dim()) = state.second_moment();
  if (input) {
    const int off = state.dim();
    if (std::holds_alternative<GaussianMeasure>(*input)) {
      const GaussianMeasure& g = std::get<GaussianMeasure>(*input);
      m2.block(off, off, g.dim(), g.dim()) = g.second_moment();
    } else {
      const UniformBox& box = std::get<UniformBox>(*input);
      const int n = static_cast<int>(box.lo.size());
      for (int i = 0; i < n; ++i) {
        // E[u^2] on [lo, hi] = (lo^2 + lo hi + hi^2) / 3.
        m2(off + i, off + i) =
            (box.lo[i] * box.lo[i] + box.lo[i] * box.hi[i] + box.hi[i] * box.hi[i]) / 3.0;
      }
    }
  }
  return m2;
}

RelevanceMeasure RelevanceMeasure::state_only(GaussianMeasure g) {
  RelevanceMeasure c;
  c.state = std::move(g);
  return c;
}

RelevanceMeasure RelevanceMeasure::with_gaussian_input(GaussianMeasure g, GaussianMeasure u) {
  RelevanceMeasure c;
  c.state = std::move(g);
  c.input = std::move(u);
  return c;
}

RelevanceMeasure RelevanceMeasure::with_box_input(GaussianMeasure g, Vector lo, Vector hi) {
  RelevanceMeasure c;
  c.state = std::move(g);
  c.input = UniformBox{std::move(lo), std::move(hi)};
  return c;
}

double expected_next_value(const QuadraticForm& V, const ValidatedProblem& prob,
                           const Vector& x, const Vector& u) {
  if (V.space != Space::State)
    throw DimensionMismatch("expected_next_value: V must be a state-space form");
  const ProblemSpec& s = prob.spec();
  if (x.size() != s.nx() || u.size() != s.nu_dim() || V.nx != s.nx())
    throw DimensionMismatch("expected_next_value: dimension mismatch");
  const Vector ybar = s.A * x + s.B_u * u + s.noise_mean();
  return ybar.dot(V.P * ybar) + (V.P * s.noise_cov()).trace() + V.p.dot(ybar) + V.s;
}

QuadraticForm tu_closed_form(const QuadraticForm& V, const ValidatedProblem& prob) {
  if (V.space != Space::State)
    throw DimensionMismatch("tu_closed_form: V must be a state-space form");
  const ProblemSpec& s = prob.spec();
  if (V.nx != s.nx())
    throw DimensionMismatch("tu_closed_form: V dimension mismatch");

  const int nx = s.nx();
  const int nu = s.nu_dim();
  Matrix G(nx, nx + nu);  // next-state mean is G [x; u] + m_w
  G.leftCols(nx) = s.A;
  G.rightCols(nu) = s.B_u;
  const Vector mw = s.noise_mean();
  const Matrix Sw = s.noise_cov();

  Matrix P = Matrix::Zero(nx + nu, nx + nu);
  P.topLeftCorner(nx, nx) = s.L_x;
  P.bottomRightCorner(nu, nu) = s.L_u;
  P += s.gamma * G.transpose() * V.P * G;

  Vector p = s.gamma * G.transpose() * (2.0 * V.P * mw + V.p);
  const double c =
      s.gamma * (mw.dot(V.P * mw) + (V.P * Sw).trace() + V.p.dot(mw) + V.s);
  return QuadraticForm::state_input(nx, nu, std::move(P), std::move(p), c);
}

double weighted_integral(const QuadraticForm& q, const RelevanceMeasure& c) {
  if (q.dim() != c.dim())
    throw UnsupportedMeasure("weighted_integral: measure dimension does not match the form");
  if (q.space == Space::StateInput && !c.input)
    throw UnsupportedMeasure("weighted_integral: StateInput form needs an input marginal");
  return (q.P * c.second_moment()).trace() + q.p.dot(c.mean()) + q.s;
}

QuadraticForm apply_structure_mask(const QuadraticForm& q, const StructureMask& mask) {
  if (q.space != mask.space || q.nx != mask.nx || q.nu != mask.nu)
    throw DimensionMismatch("apply_structure_mask: mask does not match form");

  QuadraticForm out = q;
  const int d = q.dim();
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j)
      if (!mask.P_free(i, j)) out.P(i, j) = 0.0;
    if (!mask.p_free(i)) out.p[i] = 0.0;
  }
  if (!mask.s_free) out.s = 0.0;
  out.P = 0.5 * (out.P + out.P.transpose());

  for (const auto& group : mask.tie_groups) {
    if (group.empty()) continue;
    double sum = 0.0;
    for (const MaskEntry& e : group) {
      switch (e.kind) {
        case MaskEntry::Kind::P: sum += out.P(e.i, e.j); break;
        case MaskEntry::Kind::LinP: sum += out.p[e.i]; break;
        case MaskEntry::Kind::Const: sum += out.s; break;
      }
    }
    const double avg = sum / static_cast<double>(group.size());
    for (const MaskEntry& e : group) {
      switch (e.kind) {
        case MaskEntry::Kind::P:
          out.P(e.i, e.j) = avg;
          out.P(e.j, e.i) = avg;
          break;
        case MaskEntry::Kind::LinP: out.p[e.i] = avg; break;
        case MaskEntry::Kind::Const: out.s = avg; break;
      }
    }
  }
  return out;
}

bool conforms_to_mask(const QuadraticForm& q, const StructureMask& mask, double tol) {
  if (q.space != mask.space || q.nx != mask.nx || q.nu != mask.nu) return false;
  const int d = q.dim();
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j)
      if (!mask.P_free(i, j) && std::abs(q.P(i, j)) > tol) return false;
    if (!mask.p_free(i) && std::abs(q.p[i]) > tol) return false;
  }
  if (!mask.s_free && std::abs(q.s) > tol) return false;
  return true;
}

QuadraticForm partial_min_over_input(const QuadraticForm& q) {
  if (q.space != Space::StateInput)
    throw DimensionMismatch("partial_min_over_input: need a StateInput form");
  const Matrix Puu = q.Puu();
  Eigen::LDLT<Matrix> ldlt(Puu);
  Eigen::SelfAdjointEigenSolver<Matrix> es(Puu);
  if (es.eigenvalues().minCoeff() <= 0.0)
    throw NonConvexTerminal("partial_min_over_input: input block must be positive definite");

  const Matrix Pxu = q.Pxu();
  const Matrix W = ldlt.solve(Pxu.transpose());        // Puu^-1 Pux
  const Vector w = ldlt.solve(q.pu());                 // Puu^-1 pu
  Matrix P = q.Pxx() - Pxu * W;
  Vector p = q.px() - Pxu * w;
  const double s = q.s - 0.25 * q.pu().dot(w);
  return QuadraticForm::state(std::move(P), std::move(p), s);
}

}  // namespace adp
