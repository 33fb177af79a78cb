#include "adp/model.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <sstream>

namespace adp {

namespace {

bool is_symmetric(const Matrix& m, double tol = 1e-9) {
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= tol * (1.0 + m.cwiseAbs().maxCoeff());
}

double min_eigenvalue(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (m + m.transpose()));
  return es.eigenvalues().minCoeff();
}

}  // namespace

Matrix GaussianMeasure::sqrt_factor() const {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (cov + cov.transpose()));
  Vector lam = es.eigenvalues().cwiseMax(0.0);
  return es.eigenvectors() * lam.cwiseSqrt().asDiagonal();
}

Vector GaussianMeasure::sample(RandomStream& rng) const {
  Vector z(dim());
  for (int i = 0; i < dim(); ++i) z[i] = rng.normal();
  return mean + sqrt_factor() * z;
}

GaussianMeasure GaussianMeasure::scalar(double mean, double variance) {
  GaussianMeasure g;
  g.mean = Vector::Constant(1, mean);
  g.cov = Matrix::Constant(1, 1, variance);
  return g;
}

ValidatedProblem validate_problem(ProblemSpec spec) {
  const int nx = static_cast<int>(spec.A.rows());
  const int nu = static_cast<int>(spec.B_u.cols());
  const int nxi = static_cast<int>(spec.B_xi.cols());

  auto fail_dim = [](const std::string& what) -> void {
    throw DimensionMismatch("validate_problem: inconsistent dimensions for " + what);
  };

  if (spec.A.cols() != nx) fail_dim("A");
  if (spec.B_u.rows() != nx) fail_dim("B_u");
  if (spec.B_xi.rows() != nx) fail_dim("B_xi");
  if (spec.L_x.rows() != nx || spec.L_x.cols() != nx) fail_dim("L_x");
  if (spec.L_u.rows() != nu || spec.L_u.cols() != nu) fail_dim("L_u");
  if (spec.u_lo.size() != nu || spec.u_hi.size() != nu) fail_dim("input box");
  if (spec.xi.dim() != nxi || spec.xi.cov.rows() != nxi || spec.xi.cov.cols() != nxi)
    fail_dim("xi");
  if (spec.nu.dim() != nx || spec.nu.cov.rows() != nx || spec.nu.cov.cols() != nx)
    fail_dim("nu");

  if (!(spec.gamma >= 0.0 && spec.gamma < 1.0))
    throw DiscountOutOfRange("validate_problem: gamma must lie in [0, 1)");

  if (!is_symmetric(spec.L_x) || min_eigenvalue(spec.L_x) < -1e-10)
    throw NonPsdCost("validate_problem: L_x must be symmetric PSD");
  if (!is_symmetric(spec.L_u) || min_eigenvalue(spec.L_u) <= 0.0)
    throw NonPsdCost("validate_problem: L_u must be symmetric positive definite");

  for (int i = 0; i < nu; ++i) {
    if (!(spec.u_lo[i] <= spec.u_hi[i]))
      throw EmptyBox("validate_problem: u_lo exceeds u_hi in coordinate " + std::to_string(i));
  }

  for (const GaussianMeasure* g : {&spec.xi, &spec.nu}) {
    if (!is_symmetric(g->cov) || min_eigenvalue(g->cov) < -1e-10)
      throw NonPsdCost("validate_problem: Gaussian covariance must be symmetric PSD");
  }

  return ValidatedProblem(std::move(spec));
}

RiccatiSolution riccati_oracle(const ValidatedProblem& prob, double rel_tol, int max_iter) {
  const ProblemSpec& s = prob.spec();
  if (!s.input_unbounded())
    throw Error("riccati_oracle: input box must be unbounded");
  if (s.xi.mean.cwiseAbs().maxCoeff() > 1e-12)
    throw Error("riccati_oracle: disturbance must be zero-mean");

  const double g = s.gamma;
  Matrix P = Matrix::Zero(s.nx(), s.nx());
  int it = 0;
  for (; it < max_iter; ++it) {
    const Matrix BtP = s.B_u.transpose() * P;
    const Matrix inner = s.L_u + g * BtP * s.B_u;
    const Matrix K = g * inner.ldlt().solve(BtP * s.A);
    Matrix Pn = s.L_x + g * s.A.transpose() * P * s.A -
                g * s.A.transpose() * P * s.B_u * K;
    Pn = 0.5 * (Pn + Pn.transpose());
    const double diff = (Pn - P).cwiseAbs().maxCoeff();
    P = Pn;
    if (diff <= rel_tol * (1.0 + P.cwiseAbs().maxCoeff())) break;
  }
  if (it >= max_iter)
    throw NoConvergence("riccati_oracle: no fixed point after iteration cap (problem may be unstabilizable)");

  RiccatiSolution out;
  out.P = P;
  const Matrix inner = s.L_u + g * s.B_u.transpose() * P * s.B_u;
  out.K = g * inner.ldlt().solve(s.B_u.transpose() * P * s.A);
  out.s = (g < 1.0) ? g * (P * s.noise_cov()).trace() / (1.0 - g) : 0.0;
  out.iterations = it + 1;
  return out;
}

ValidatedProblem one_d_example() {
  ProblemSpec s;
  s.A = Matrix::Constant(1, 1, 1.0);
  s.B_u = Matrix::Constant(1, 1, -0.5);
  s.B_xi = Matrix::Constant(1, 1, 1.0);
  s.L_x = Matrix::Constant(1, 1, 1.0);
  s.L_u = Matrix::Constant(1, 1, 0.1);
  s.gamma = 0.95;
  s.u_lo = Vector::Constant(1, -1.0);
  s.u_hi = Vector::Constant(1, 1.0);
  s.xi = GaussianMeasure::scalar(0.0, 0.1);
  s.nu = GaussianMeasure::scalar(0.0, 10.0);
  return validate_problem(std::move(s));
}

OscillatorContinuous oscillator_continuous(int n, double mass, double spring,
                                           double damper, double alpha) {
  OscillatorContinuous out;
  out.A = Matrix::Zero(2 * n, 2 * n);
  out.B_u = Matrix::Zero(2 * n, n);
  out.B_xi = Matrix::Zero(2 * n, 1);
  out.stiffness = Matrix::Zero(n, n);
  Matrix damping = Matrix::Zero(n, n);

  // Chain topology: wall -- m_1 -- m_2 -- ... -- m_n (free end). Mass i is
  // coupled to its left neighbour (the wall for i = 1) and, except for the
  // last mass, to its right neighbour.
  for (int i = 0; i < n; ++i) {
    double k_diag = spring;            // coupling to left neighbour / wall
    double c_diag = damper;
    if (i + 1 < n) {
      k_diag += spring;
      c_diag += damper;
      out.stiffness(i, i + 1) = -spring;
      out.stiffness(i + 1, i) = -spring;
      damping(i, i + 1) = -damper;
      damping(i + 1, i) = -damper;
    }
    out.stiffness(i, i) += k_diag;
    damping(i, i) += c_diag;
  }

  // State ordering [x_1, xdot_1, ..., x_n, xdot_n].
  for (int i = 0; i < n; ++i) {
    out.A(2 * i, 2 * i + 1) = 1.0;
    for (int j = 0; j < n; ++j) {
      out.A(2 * i + 1, 2 * j) = -out.stiffness(i, j) / mass;
      out.A(2 * i + 1, 2 * j + 1) = -damping(i, j) / mass;
    }
    out.B_u(2 * i + 1, i) = 1.0 / mass;
    out.B_xi(2 * i + 1, 0) = alpha / mass;
  }
  return out;
}

ValidatedProblem oscillator_spec(int n_masses, double dt) {
  if (n_masses < 1) throw Error("oscillator_spec: need at least one mass");
  if (!(dt > 0.0)) throw InvalidDt("oscillator_spec: dt must be positive");

  const int n = n_masses;
  OscillatorContinuous ct = oscillator_continuous(n);

  // Zero-order hold on u and xi: exponential of the augmented system
  // [A B_u B_xi; 0 0 0; 0 0 0] * dt.
  const int nz = 2 * n + n + 1;
  Matrix aug = Matrix::Zero(nz, nz);
  aug.topLeftCorner(2 * n, 2 * n) = ct.A;
  aug.block(0, 2 * n, 2 * n, n) = ct.B_u;
  aug.block(0, 3 * n, 2 * n, 1) = ct.B_xi;
  const Matrix phi = (aug * dt).exp();

  ProblemSpec s;
  s.A = phi.topLeftCorner(2 * n, 2 * n);
  s.B_u = phi.block(0, 2 * n, 2 * n, n);
  s.B_xi = phi.block(0, 3 * n, 2 * n, 1);
  s.L_x = Matrix::Identity(2 * n, 2 * n);
  s.L_u = 0.5 * Matrix::Identity(n, n);
  s.gamma = 0.99;
  s.u_lo = Vector::Constant(n, -kInf);
  s.u_hi = Vector::Constant(n, kInf);
  s.xi = GaussianMeasure::scalar(0.0, 1.0);
  s.nu.mean = Vector::Zero(2 * n);
  s.nu.cov = Matrix::Identity(2 * n, 2 * n);
  return validate_problem(std::move(s));
}

}  // namespace adp
