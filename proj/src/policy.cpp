#include "adp/policy.hpp"

#include <algorithm>
#include <cmath>

namespace adp {

namespace {

Vector clamp_to_box(Vector u, const Vector& lo, const Vector& hi) {
  for (Eigen::Index i = 0; i < u.size(); ++i) u[i] = std::clamp(u[i], lo[i], hi[i]);
  return u;
}

bool is_diagonal(const Matrix& H) {
  for (Eigen::Index i = 0; i < H.rows(); ++i)
    for (Eigen::Index j = 0; j < H.cols(); ++j)
      if (i != j && H(i, j) != 0.0) return false;
  return true;
}

// Minimize g*u over [lo, hi] in one coordinate (the H_ii == 0 case).
double linear_min_coordinate(double g, double lo, double hi) {
  if (g > 0.0) {
    if (!std::isfinite(lo)) throw IterationLimit("box_qp_min: unbounded linear direction");
    return lo;
  }
  if (g < 0.0) {
    if (!std::isfinite(hi)) throw IterationLimit("box_qp_min: unbounded linear direction");
    return hi;
  }
  return std::clamp(0.0, lo, hi);
}

}  // namespace

BoxQpResult box_qp_min(const BoxQp& qp, double tol, int max_iter) {
  const Eigen::Index n = qp.g.size();
  if (qp.H.rows() != n || qp.H.cols() != n || qp.lo.size() != n || qp.hi.size() != n)
    throw DimensionMismatch("box_qp_min: inconsistent dimensions");
  if (tol < 0.0) tol = 1e-9 * (1.0 + qp.g.cwiseAbs().maxCoeff());

  BoxQpResult out;

  if (is_diagonal(qp.H)) {
    Vector u(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double h = qp.H(i, i);
      u[i] = (h > 0.0) ? std::clamp(-qp.g[i] / h, qp.lo[i], qp.hi[i])
                       : linear_min_coordinate(qp.g[i], qp.lo[i], qp.hi[i]);
    }
    out.minimizer = u;
    out.value = 0.5 * u.dot(qp.H * u) + qp.g.dot(u);
    return out;
  }

  Eigen::SelfAdjointEigenSolver<Matrix> es(qp.H);
  const double lam_min = es.eigenvalues().minCoeff();
  const double lam_max = es.eigenvalues().maxCoeff();
  const bool unconstrained =
      (qp.lo.array() == -kInf).all() && (qp.hi.array() == kInf).all();

  if (unconstrained && lam_min > 1e-12 * std::max(1.0, lam_max)) {
    Vector u = -qp.H.ldlt().solve(qp.g);
    out.minimizer = u;
    out.value = 0.5 * u.dot(qp.H * u) + qp.g.dot(u);
    return out;
  }

  // Projected gradient with exact line search along the projected step.
  const double step = 1.0 / std::max(lam_max, 1e-12);
  Vector u = clamp_to_box(Vector::Zero(n), qp.lo, qp.hi);
  Vector grad = qp.H * u + qp.g;
  int it = 0;
  for (; it < max_iter; ++it) {
    const Vector pg = u - clamp_to_box(u - grad, qp.lo, qp.hi);
    if (pg.cwiseAbs().maxCoeff() <= tol) break;
    const Vector d = clamp_to_box(u - step * grad, qp.lo, qp.hi) - u;
    const double dHd = d.dot(qp.H * d);
    double alpha = 1.0;
    if (dHd > 0.0) alpha = std::clamp(-grad.dot(d) / dHd, 0.0, 1.0);
    if (alpha == 0.0) break;
    u += alpha * d;
    grad = qp.H * u + qp.g;
    if (!u.allFinite()) throw IterationLimit("box_qp_min: iterates diverged");
  }
  if (it >= max_iter) throw IterationLimit("box_qp_min: projected gradient did not converge");

  out.minimizer = u;
  out.value = 0.5 * u.dot(qp.H * u) + qp.g.dot(u);
  out.iterations = it;
  return out;
}

AgentPartition AgentPartition::blocks(int n_agents, int states_per_agent) {
  AgentPartition p;
  for (int a = 0; a < n_agents; ++a) {
    Agent ag;
    for (int k = 0; k < states_per_agent; ++k) ag.state_indices.push_back(a * states_per_agent + k);
    ag.input_indices.push_back(a);
    p.agents.push_back(std::move(ag));
  }
  return p;
}

Policy Policy::greedy_v(const ValidatedProblem& prob, const QuadraticForm& vhat) {
  Policy pol;
  pol.kind_ = PolicyKind::GreedyV;
  pol.nx_ = prob->nx();
  pol.nu_ = prob->nu_dim();
  pol.u_lo_ = prob->u_lo;
  pol.u_hi_ = prob->u_hi;
  pol.q_ = tu_closed_form(vhat, prob);
  return pol;
}

Policy Policy::greedy_q(const ValidatedProblem& prob, QuadraticForm qhat,
                        std::optional<AgentPartition> partition) {
  if (qhat.space != Space::StateInput || qhat.nx != prob->nx() || qhat.nu != prob->nu_dim())
    throw DimensionMismatch("Policy::greedy_q: form does not match the problem");
  Policy pol;
  pol.kind_ = PolicyKind::GreedyQ;
  pol.nx_ = prob->nx();
  pol.nu_ = prob->nu_dim();
  pol.u_lo_ = prob->u_lo;
  pol.u_hi_ = prob->u_hi;
  pol.q_ = std::move(qhat);
  pol.partition_ = std::move(partition);
  return pol;
}

Policy Policy::ce_mpc(const ValidatedProblem& prob, const QuadraticForm& terminal, int D) {
  if (D < 1) throw Error("Policy::ce_mpc: horizon must be >= 1");
  const ProblemSpec& s = prob.spec();
  const int nx = s.nx();
  const int nu = s.nu_dim();
  const bool q_terminal = (terminal.space == Space::StateInput);
  if (terminal.nx != nx || (q_terminal && terminal.nu != nu))
    throw DimensionMismatch("Policy::ce_mpc: terminal form does not match the problem");

  const int nz = D * nu + (q_terminal ? nu : 0);
  Policy pol;
  pol.kind_ = PolicyKind::CeMpc;
  pol.nx_ = nx;
  pol.nu_ = nu;
  pol.u_lo_ = s.u_lo;
  pol.u_hi_ = s.u_hi;

  // Deterministic prediction with the disturbance replaced by its mean:
  // x_t = A^t x0 + S_t z + h_t, where z stacks (u_0..u_{D-1} [, v]).
  Matrix H = Matrix::Zero(nz, nz);
  Matrix G = Matrix::Zero(nz, nx);
  Vector g0 = Vector::Zero(nz);

  Matrix At = Matrix::Identity(nx, nx);  // A^t
  Matrix St = Matrix::Zero(nx, nz);
  Vector ht = Vector::Zero(nx);
  const Vector mw = s.noise_mean();
  double gamma_t = 1.0;

  for (int t = 0; t < D; ++t) {
    // Stage cost gamma^t (x_t' L_x x_t + u_t' L_u u_t).
    H += 2.0 * gamma_t * (St.transpose() * s.L_x * St);
    G += 2.0 * gamma_t * (St.transpose() * s.L_x * At);
    g0 += 2.0 * gamma_t * (St.transpose() * s.L_x * ht);
    H.block(t * nu, t * nu, nu, nu) += 2.0 * gamma_t * s.L_u;

    // x_{t+1} = A x_t + B_u u_t + mw.
    St = s.A * St;
    St.block(0, t * nu, nx, nu) += s.B_u;
    ht = s.A * ht + mw;
    At = s.A * At;
    gamma_t *= s.gamma;
  }

  // Terminal cost gamma^D terminal(x_D [, v]).
  if (!q_terminal) {
    H += 2.0 * gamma_t * (St.transpose() * terminal.P * St);
    G += 2.0 * gamma_t * (St.transpose() * terminal.P * At);
    g0 += gamma_t * (2.0 * St.transpose() * terminal.P * ht + St.transpose() * terminal.p);
  } else {
    // Augmented map [x_D; v] = Sq z + [A^D x0 + h_D; 0].
    Matrix Sq = Matrix::Zero(nx + nu, nz);
    Sq.topRows(nx) = St;
    Sq.block(nx, D * nu, nu, nu) = Matrix::Identity(nu, nu);
    Vector hq = Vector::Zero(nx + nu);
    hq.head(nx) = ht;
    Matrix Aq = Matrix::Zero(nx + nu, nx);
    Aq.topRows(nx) = At;
    H += 2.0 * gamma_t * (Sq.transpose() * terminal.P * Sq);
    G += 2.0 * gamma_t * (Sq.transpose() * terminal.P * Aq);
    g0 += gamma_t * (2.0 * Sq.transpose() * terminal.P * hq + Sq.transpose() * terminal.p);
  }

  H = 0.5 * (H + H.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(H);
  const double lam_min = es.eigenvalues().minCoeff();
  if (lam_min < -1e-8 * (1.0 + es.eigenvalues().cwiseAbs().maxCoeff()))
    throw NonConvexTerminal("Policy::ce_mpc: condensed Hessian is indefinite");
  if (lam_min < 0.0) H.diagonal().array() += -lam_min;

  pol.mpc_H_ = std::move(H);
  pol.mpc_G_ = std::move(G);
  pol.mpc_g0_ = std::move(g0);
  pol.mpc_lo_.resize(nz);
  pol.mpc_hi_.resize(nz);
  const int stages = nz / nu;
  for (int t = 0; t < stages; ++t) {
    pol.mpc_lo_.segment(t * nu, nu) = s.u_lo;
    pol.mpc_hi_.segment(t * nu, nu) = s.u_hi;
  }
  return pol;
}

Policy Policy::linear_gain(const ValidatedProblem& prob, Matrix K) {
  if (K.rows() != prob->nu_dim() || K.cols() != prob->nx())
    throw DimensionMismatch("Policy::linear_gain: gain dimensions do not match");
  Policy pol;
  pol.kind_ = PolicyKind::LinearGain;
  pol.nx_ = prob->nx();
  pol.nu_ = prob->nu_dim();
  pol.u_lo_ = prob->u_lo;
  pol.u_hi_ = prob->u_hi;
  pol.gain_ = std::move(K);
  return pol;
}

Policy Policy::grid_optimal(GridFunction v_or_q, const ValidatedProblem& prob,
                            const GridConfig& cfg) {
  Policy pol;
  pol.kind_ = PolicyKind::GridOptimal;
  pol.nx_ = prob->nx();
  pol.nu_ = prob->nu_dim();
  pol.u_lo_ = prob->u_lo;
  pol.u_hi_ = prob->u_hi;
  pol.grid_.emplace(std::move(v_or_q), prob, cfg);
  return pol;
}

Vector Policy::action(const Vector& x) const {
  if (x.size() != nx_) throw DimensionMismatch("Policy::action: bad state dimension");

  switch (kind_) {
    case PolicyKind::GreedyV:
    case PolicyKind::GreedyQ: {
      // Restrict q_ to this state: 0.5 u'Hu + g'u with H = 2 Puu,
      // g = 2 Pxu' x + pu.
      const Vector gfull = 2.0 * q_.Pxu().transpose() * x + q_.pu();
      if (partition_) {
        Vector u(nu_);
        for (const AgentPartition::Agent& ag : partition_->agents) {
          const int na = static_cast<int>(ag.input_indices.size());
          BoxQp sub;
          sub.H.resize(na, na);
          sub.g.resize(na);
          sub.lo.resize(na);
          sub.hi.resize(na);
          for (int a = 0; a < na; ++a) {
            const int ia = ag.input_indices[static_cast<std::size_t>(a)];
            sub.g[a] = gfull[ia];
            sub.lo[a] = u_lo_[ia];
            sub.hi[a] = u_hi_[ia];
            for (int b = 0; b < na; ++b)
              sub.H(a, b) = 2.0 * q_.Puu()(ia, ag.input_indices[static_cast<std::size_t>(b)]);
          }
          const BoxQpResult r = box_qp_min(sub);
          for (int a = 0; a < na; ++a)
            u[ag.input_indices[static_cast<std::size_t>(a)]] = r.minimizer[a];
        }
        return u;
      }
      BoxQp qp{2.0 * q_.Puu(), gfull, u_lo_, u_hi_};
      return box_qp_min(qp).minimizer;
    }
    case PolicyKind::CeMpc: {
      BoxQp qp{mpc_H_, mpc_G_ * x + mpc_g0_, mpc_lo_, mpc_hi_};
      return box_qp_min(qp).minimizer.head(nu_);
    }
    case PolicyKind::LinearGain:
      return clamp_to_box(-gain_ * x, u_lo_, u_hi_);
    case PolicyKind::GridOptimal:
      return grid_->action(x);
  }
  throw Error("Policy::action: unreachable");
}

}  // namespace adp
