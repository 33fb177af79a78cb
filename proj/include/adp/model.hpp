#pragma once

#include <Eigen/Dense>
#include <limits>

#include "adp/errors.hpp"
#include "adp/rng.hpp"

namespace adp {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct GaussianMeasure {
  Vector mean;
  Matrix cov;

  int dim() const { return static_cast<int>(mean.size()); }

  // E[z z^T] = cov + mean mean^T.
  Matrix second_moment() const { return cov + mean * mean.transpose(); }

  // Cholesky-like factor L with L L^T = cov; tolerates PSD-singular cov.
  Matrix sqrt_factor() const;

  Vector sample(RandomStream& rng) const;

  static GaussianMeasure scalar(double mean, double variance);
};

// Discounted linear-Gaussian control problem with quadratic stage cost and
// a box-constrained input:
//   x+ = A x + B_u u + B_xi xi,   l(x, u) = x' L_x x + u' L_u u,
//   xi ~ N(xi.mean, xi.cov), x0 ~ nu, u in [u_lo, u_hi].
struct ProblemSpec {
  Matrix A;
  Matrix B_u;
  Matrix B_xi;
  Matrix L_x;
  Matrix L_u;
  double gamma = 0.0;
  Vector u_lo;
  Vector u_hi;
  GaussianMeasure xi;
  GaussianMeasure nu;

  int nx() const { return static_cast<int>(A.rows()); }
  int nu_dim() const { return static_cast<int>(B_u.cols()); }
  int nxi() const { return static_cast<int>(B_xi.cols()); }

  double stage_cost(const Vector& x, const Vector& u) const {
    return x.dot(L_x * x) + u.dot(L_u * u);
  }
  Vector step(const Vector& x, const Vector& u, const Vector& w) const {
    return A * x + B_u * u + B_xi * w;
  }
  bool input_unbounded() const {
    return (u_lo.array() == -kInf).all() && (u_hi.array() == kInf).all();
  }
  // Disturbance pushed through B_xi: mean and covariance in state space.
  Vector noise_mean() const { return B_xi * xi.mean; }
  Matrix noise_cov() const { return B_xi * xi.cov * B_xi.transpose(); }
};

// A ProblemSpec that has passed validate_problem. All downstream operations
// take this wrapper so unchecked specs cannot leak in.
class ValidatedProblem {
 public:
  const ProblemSpec& spec() const { return spec_; }
  const ProblemSpec* operator->() const { return &spec_; }

 private:
  friend ValidatedProblem validate_problem(ProblemSpec spec);
  explicit ValidatedProblem(ProblemSpec spec) : spec_(std::move(spec)) {}
  ProblemSpec spec_;
};

// Checks dimensional consistency, PSD of the cost matrices, the discount
// range and the input box. Throws on the first violation found.
ValidatedProblem validate_problem(ProblemSpec spec);

struct RiccatiSolution {
  Matrix P;        // V*(x) = x'Px + s
  double s = 0.0;  // discounted noise constant
  Matrix K;        // optimal policy pi*(x) = -K x
  int iterations = 0;
};

// Exact oracle for the unconstrained-input case: fixed point of the
// discounted Riccati recursion. Requires zero-mean disturbance and an
// unbounded input box.
RiccatiSolution riccati_oracle(const ValidatedProblem& prob,
                               double rel_tol = 1e-10,
                               int max_iter = 100000);

// The scalar benchmark problem: x+ = x - 0.5 u + xi, l = x^2 + 0.1 u^2,
// gamma = 0.95, |u| <= 1, xi ~ N(0, 0.1), x0 ~ N(0, 10).
ValidatedProblem one_d_example();

// Chain of n point masses coupled by springs/dampers to each other and to a
// wall at one end, driven per-mass by a force input and a shared scalar
// disturbance. Discretized exactly with a zero-order hold of length dt on
// both u and xi. Parameters: m = 1, k = 3, c = 0.05, alpha = 0.1,
// l_i = x_i^2 + xdot_i^2 + 0.5 u_i^2, gamma = 0.99, xi ~ N(0,1),
// x0 ~ N(0, I). Inputs are unconstrained.
ValidatedProblem oscillator_spec(int n_masses, double dt);

// Continuous-time oscillator matrices (before discretization); exposed for
// tests of the chain structure and energy conservation.
struct OscillatorContinuous {
  Matrix A;     // 2n x 2n
  Matrix B_u;   // 2n x n
  Matrix B_xi;  // 2n x 1
  Matrix stiffness;  // n x n, position-block coupling (rows of -A accel part)
};
OscillatorContinuous oscillator_continuous(int n_masses, double mass = 1.0,
                                           double spring = 3.0,
                                           double damper = 0.05,
                                           double alpha = 0.1);

}  // namespace adp
