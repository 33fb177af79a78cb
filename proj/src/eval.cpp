#include "adp/eval.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <thread>

namespace adp {

namespace {

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

MeanSe mean_se(const std::vector<double>& xs) {
  MeanSe out;
  const double n = static_cast<double>(xs.size());
  if (xs.empty()) return out;
  double sum = 0.0;
  for (double x : xs) sum += x;
  out.mean = sum / n;
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - out.mean) * (x - out.mean);
    out.se = std::sqrt(ss / (n - 1.0) / n);
  }
  return out;
}

void parallel_over(int count, int threads, const std::function<void(int)>& body) {
  threads = std::max(1, threads);
  if (threads == 1) {
    for (int i = 0; i < count; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  const int chunk = (count + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    const int lo = t * chunk;
    const int hi = std::min(count, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &body] {
      for (int i = lo; i < hi; ++i) body(i);
    });
  }
  for (std::thread& th : pool) th.join();
}

}  // namespace

int default_horizon(double gamma) {
  if (gamma <= 0.0) return 1;
  return static_cast<int>(std::ceil(std::log(1e-6) / std::log(gamma)));
}

PerformanceEstimate simulate_performance(const Policy& pol, const ValidatedProblem& prob,
                                         int horizon, int trials, std::uint64_t seed,
                                         int threads) {
  const ProblemSpec& s = prob.spec();
  const Matrix Lnu = s.nu.sqrt_factor();
  const Matrix Lxi = s.xi.sqrt_factor();
  std::vector<double> costs(static_cast<std::size_t>(trials), 0.0);

  parallel_over(trials, threads, [&](int k) {
    RandomStream rng(seed, static_cast<std::uint64_t>(k));
    Vector z(s.nx());
    for (int i = 0; i < s.nx(); ++i) z[i] = rng.normal();
    Vector x = s.nu.mean + Lnu * z;
    Vector zxi(s.nxi());
    double cost = 0.0;
    double disc = 1.0;
    for (int t = 0; t <= horizon; ++t) {
      const Vector u = pol.action(x);
      cost += disc * s.stage_cost(x, u);
      for (int i = 0; i < s.nxi(); ++i) zxi[i] = rng.normal();
      x = s.step(x, u, s.xi.mean + Lxi * zxi);
      disc *= s.gamma;
    }
    costs[static_cast<std::size_t>(k)] = cost;
  });

  // Ordered reduction keeps the result independent of the worker count.
  const MeanSe ms = mean_se(costs);
  PerformanceEstimate out;
  out.mean = ms.mean;
  out.ci_halfwidth = 1.96 * ms.se;
  out.stddev = ms.se * std::sqrt(static_cast<double>(trials));
  out.trials = trials;
  return out;
}

OccupancyEstimate occupancy_estimate(const Policy& pol, const ValidatedProblem& prob,
                                     int horizon, int trials, std::uint64_t seed) {
  const ProblemSpec& s = prob.spec();
  const Matrix Lnu = s.nu.sqrt_factor();
  const Matrix Lxi = s.xi.sqrt_factor();

  OccupancyEstimate occ;
  occ.trajectories = trials;
  occ.horizon = horizon;
  occ.seed = seed;
  const Eigen::Index count = static_cast<Eigen::Index>(trials) * (horizon + 1);
  occ.states.resize(s.nx(), count);
  occ.inputs.resize(s.nu_dim(), count);
  occ.weights.resize(count);

  const double wnorm = (1.0 - s.gamma) / static_cast<double>(trials);
  Eigen::Index col = 0;
  for (int k = 0; k < trials; ++k) {
    RandomStream rng(seed, static_cast<std::uint64_t>(k));
    Vector z(s.nx());
    for (int i = 0; i < s.nx(); ++i) z[i] = rng.normal();
    Vector x = s.nu.mean + Lnu * z;
    Vector zxi(s.nxi());
    double disc = 1.0;
    for (int t = 0; t <= horizon; ++t) {
      const Vector u = pol.action(x);
      occ.states.col(col) = x;
      occ.inputs.col(col) = u;
      occ.weights[col] = disc * wnorm;
      ++col;
      for (int i = 0; i < s.nxi(); ++i) zxi[i] = rng.normal();
      x = s.step(x, u, s.xi.mean + Lxi * zxi);
      disc *= s.gamma;
    }
  }
  occ.total_weight = 1.0 - std::pow(s.gamma, horizon + 1);
  return occ;
}

LowerBoundEstimate lower_bound(const QuadraticForm& fhat, const ValidatedProblem& prob,
                               int nu_samples, std::uint64_t seed) {
  const ProblemSpec& s = prob.spec();
  LowerBoundEstimate out;
  if (fhat.space == Space::State) {
    out.mean = weighted_integral(fhat, RelevanceMeasure::state_only(s.nu));
    out.exact = true;
    return out;
  }
  if (s.input_unbounded()) {
    const QuadraticForm vmin = partial_min_over_input(fhat);
    out.mean = weighted_integral(vmin, RelevanceMeasure::state_only(s.nu));
    out.exact = true;
    return out;
  }
  // Monte Carlo over x ~ nu of the box-constrained minimization.
  const Matrix Lnu = s.nu.sqrt_factor();
  RandomStream rng(seed, 0);
  std::vector<double> vals(static_cast<std::size_t>(nu_samples));
  for (int k = 0; k < nu_samples; ++k) {
    Vector z(s.nx());
    for (int i = 0; i < s.nx(); ++i) z[i] = rng.normal();
    const Vector x = s.nu.mean + Lnu * z;
    BoxQp qp{2.0 * fhat.Puu(), 2.0 * fhat.Pxu().transpose() * x + fhat.pu(), s.u_lo, s.u_hi};
    const BoxQpResult r = box_qp_min(qp);
    const double xpart = x.dot(fhat.Pxx() * x) + fhat.px().dot(x) + fhat.s;
    vals[static_cast<std::size_t>(k)] = xpart + r.value;
  }
  const MeanSe ms = mean_se(vals);
  out.mean = ms.mean;
  out.ci_halfwidth = 1.96 * ms.se;
  return out;
}

namespace {

// ---- helpers for the bound verifiers ----

GridFunction iterate_operator(GridFunction f, const ValidatedProblem& prob,
                              const GridConfig& cfg, int times, ValueForm form) {
  for (int i = 0; i < times; ++i)
    f = (form == ValueForm::V) ? apply_T(f, prob, cfg) : apply_F(f, prob, cfg);
  return f;
}

// Sample mean and se of |target(z)| over draws from a relevance measure.
MeanSe weighted_one_norm_mc(const std::function<double(const Vector&)>& f,
                            const ValidatedProblem& prob, const RelevanceMeasure& c,
                            int n, std::uint64_t seed, bool state_only) {
  std::vector<double> vals(static_cast<std::size_t>(n));
  if (state_only) {
    const Matrix L = c.state.sqrt_factor();
    RandomStream rng(seed, 7);
    for (int k = 0; k < n; ++k) {
      Vector z(c.state.dim());
      for (int i = 0; i < z.size(); ++i) z[i] = rng.normal();
      vals[static_cast<std::size_t>(k)] = std::abs(f(c.state.mean + L * z));
    }
  } else {
    const SampleSet set = sample_relevance(prob, c, n, seed ^ 0x5eedf00dull);
    for (int k = 0; k < n; ++k) {
      Vector z(set.states.rows() + set.inputs.rows());
      z << set.state(k), set.input(k);
      vals[static_cast<std::size_t>(k)] = std::abs(f(z));
    }
  }
  return mean_se(vals);
}

// Monomial design matrix for a dense quadratic over the given points:
// columns are upper-triangle P entries (off-diagonal doubled), then linear
// terms, then the constant.
struct QuadFit {
  Matrix phi;
  int d = 0;

  explicit QuadFit(const GridFunction& grid) {
    d = grid.dims();
    const Eigen::Index n = grid.size();
    const int ncols = d * (d + 1) / 2 + d + 1;
    phi.resize(n, ncols);
    for (Eigen::Index k = 0; k < n; ++k) {
      const Vector z = grid.point(k);
      int c = 0;
      for (int i = 0; i < d; ++i)
        for (int j = i; j < d; ++j) phi(k, c++) = (i == j) ? z[i] * z[j] : 2.0 * z[i] * z[j];
      for (int i = 0; i < d; ++i) phi(k, c++) = z[i];
      phi(k, c++) = 1.0;
    }
  }

  int num_coeffs() const { return static_cast<int>(phi.cols()); }

  // sup over the grid of w(z) |target(z) - quad_theta(z)|.
  double weighted_sup(const Vector& theta, const Vector& target, const Vector& winv) const {
    return ((target - phi * theta).cwiseAbs().cwiseProduct(winv)).maxCoeff();
  }
};

// Derivative-free Nelder-Mead, small and deterministic.
Vector nelder_mead(const std::function<double(const Vector&)>& f, Vector x0, int max_iter) {
  const int n = static_cast<int>(x0.size());
  std::vector<Vector> xs(static_cast<std::size_t>(n + 1));
  std::vector<double> fs(static_cast<std::size_t>(n + 1));
  xs[0] = x0;
  for (int i = 0; i < n; ++i) {
    Vector xi = x0;
    xi[i] += (x0[i] != 0.0) ? 0.05 * x0[i] : 0.25;
    xs[static_cast<std::size_t>(i + 1)] = xi;
  }
  for (std::size_t i = 0; i < xs.size(); ++i) fs[i] = f(xs[i]);

  auto order = [&] {
    std::vector<std::size_t> idx(xs.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return fs[a] < fs[b]; });
    std::vector<Vector> xs2;
    std::vector<double> fs2;
    for (std::size_t i : idx) {
      xs2.push_back(xs[i]);
      fs2.push_back(fs[i]);
    }
    xs = std::move(xs2);
    fs = std::move(fs2);
  };

  for (int it = 0; it < max_iter; ++it) {
    order();
    Vector centroid = Vector::Zero(n);
    for (int i = 0; i < n; ++i) centroid += xs[static_cast<std::size_t>(i)];
    centroid /= static_cast<double>(n);
    const Vector& worst = xs.back();
    const Vector xr = centroid + (centroid - worst);
    const double fr = f(xr);
    if (fr < fs[0]) {
      const Vector xe = centroid + 2.0 * (centroid - worst);
      const double fe = f(xe);
      if (fe < fr) {
        xs.back() = xe;
        fs.back() = fe;
      } else {
        xs.back() = xr;
        fs.back() = fr;
      }
    } else if (fr < fs[static_cast<std::size_t>(n - 1)]) {
      xs.back() = xr;
      fs.back() = fr;
    } else {
      const Vector xc = centroid + 0.5 * (worst - centroid);
      const double fc = f(xc);
      if (fc < fs.back()) {
        xs.back() = xc;
        fs.back() = fc;
      } else {
        for (std::size_t i = 1; i < xs.size(); ++i) {
          xs[i] = xs[0] + 0.5 * (xs[i] - xs[0]);
          fs[i] = f(xs[i]);
        }
      }
    }
  }
  order();
  return xs[0];
}

// Upper bound on min over dense quadratics of the (weighted) sup-norm gap to
// `target`, from five seeded Nelder-Mead starts.
double min_supnorm_over_basis(const GridFunction& target_grid, const Vector& winv,
                              const QuadraticForm& warm, std::uint64_t seed) {
  const QuadFit fit(target_grid);
  const Vector& target = target_grid.values;
  auto obj = [&](const Vector& th) { return fit.weighted_sup(th, target, winv); };

  // Encode the warm start in the monomial parameterization.
  Vector warm_theta = Vector::Zero(fit.num_coeffs());
  {
    int c = 0;
    for (int i = 0; i < fit.d; ++i)
      for (int j = i; j < fit.d; ++j) warm_theta[c++] = warm.P(i, j);
    for (int i = 0; i < fit.d; ++i) warm_theta[c++] = warm.p[i];
    warm_theta[c++] = warm.s;
  }

  double best = obj(warm_theta);
  RandomStream rng(seed, 42);
  for (int start = 0; start < 5; ++start) {
    Vector x0 = warm_theta;
    if (start > 0)
      for (int i = 0; i < x0.size(); ++i) x0[i] *= 1.0 + 0.2 * (rng.uniform() - 0.5);
    const Vector th = nelder_mead(obj, x0, 400);
    best = std::min(best, obj(th));
  }
  return best;
}

// Grows the constant offset of a positive-definite quadratic until its beta
// constant drops below 1 on the grid.
QuadraticForm make_lyapunov_candidate(const QuadraticForm& base, const TheoremContext& ctx,
                                      HKind kind, double* beta_out) {
  // Positive-definite curvature from the base form.
  Eigen::SelfAdjointEigenSolver<Matrix> es(base.P);
  const Vector lam = es.eigenvalues().cwiseMax(0.1);
  const Matrix Ppos = es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();

  double c = 1.0;
  for (int attempt = 0; attempt < 48; ++attempt) {
    QuadraticForm cand = base;
    cand.P = Ppos;
    cand.p.setZero();
    cand.s = c;
    const GridFunction g = GridFunction::from_quadratic(
        cand, (cand.space == Space::State) ? ctx.cfg.state_axes() : ctx.cfg.state_input_axes());
    if (g.values.minCoeff() > 0.0) {
      const double beta = beta_constant(g, ctx.prob, ctx.cfg, kind);
      if (beta < 1.0) {
        if (beta_out) *beta_out = beta;
        return cand;
      }
    }
    c *= 2.0;
  }
  throw NotLyapunov("make_lyapunov_candidate: no beta < 1 candidate found");
}

BoundReport online_bound(TheoremId id, const TheoremContext& ctx, std::uint64_t seed) {
  const bool qform = (id == TheoremId::T1);
  const ProblemSpec& s = ctx.prob.spec();
  BoundReport rep;
  rep.id = id;
  rep.M = ctx.M;
  rep.D = ctx.D;
  rep.seed = seed;

  // Certified under-estimator via the constant downshift.
  GridFunction fhat_grid =
      qform ? GridFunction::from_quadratic(ctx.qhat, ctx.cfg.state_input_axes())
            : GridFunction::from_quadratic(ctx.vhat, ctx.cfg.state_axes());
  const GridFunction& star = qform ? ctx.qstar : ctx.vstar;
  GridFunction shifted = downshift_infnorm(fhat_grid, star, s.gamma, ctx.M);

  // Exact D-iterated objective on the grid and its greedy policy.
  const GridFunction iterated =
      iterate_operator(shifted, ctx.prob, ctx.cfg, ctx.D, qform ? ValueForm::Q : ValueForm::V);
  const Policy pol = Policy::grid_optimal(iterated, ctx.prob, ctx.cfg);

  // LHS: || V_pi - V* ||_{1, nu} by common-trajectory Monte Carlo.
  const Matrix Lnu = s.nu.sqrt_factor();
  const Matrix Lxi = s.xi.sqrt_factor();
  std::vector<double> lhs_vals(static_cast<std::size_t>(ctx.mc_trials));
  for (int k = 0; k < ctx.mc_trials; ++k) {
    RandomStream rng(seed, static_cast<std::uint64_t>(k));
    Vector z(s.nx());
    for (int i = 0; i < s.nx(); ++i) z[i] = rng.normal();
    Vector x = s.nu.mean + Lnu * z;
    const double v0 = ctx.vstar.interpolate(x);
    Vector zxi(s.nxi());
    double cost = 0.0;
    double disc = 1.0;
    for (int t = 0; t <= ctx.horizon; ++t) {
      const Vector u = pol.action(x);
      cost += disc * s.stage_cost(x, u);
      for (int i = 0; i < s.nxi(); ++i) zxi[i] = rng.normal();
      x = s.step(x, u, s.xi.mean + Lxi * zxi);
      disc *= s.gamma;
    }
    lhs_vals[static_cast<std::size_t>(k)] = cost - v0;
  }
  const MeanSe lhs = mean_se(lhs_vals);

  // RHS: 1/(1-gamma) * || gap |_pi ||_{1,(1-gamma) mu} via per-trajectory
  // discounted sums over an independent occupancy run.
  std::vector<double> rhs_vals(static_cast<std::size_t>(ctx.mc_trials));
  for (int k = 0; k < ctx.mc_trials; ++k) {
    RandomStream rng(seed ^ 0xabcdef12345ull, static_cast<std::uint64_t>(k));
    Vector z(s.nx());
    for (int i = 0; i < s.nx(); ++i) z[i] = rng.normal();
    Vector x = s.nu.mean + Lnu * z;
    Vector zxi(s.nxi());
    double acc = 0.0;
    double disc = 1.0;
    for (int t = 0; t <= ctx.horizon; ++t) {
      const Vector u = pol.action(x);
      double gap;
      if (qform) {
        Vector xu(s.nx() + s.nu_dim());
        xu << x, u;
        gap = std::abs(ctx.qstar.interpolate(xu) - iterated.interpolate(xu));
      } else {
        gap = std::abs(ctx.vstar.interpolate(x) - iterated.interpolate(x));
      }
      acc += disc * gap;
      for (int i = 0; i < s.nxi(); ++i) zxi[i] = rng.normal();
      x = s.step(x, u, s.xi.mean + Lxi * zxi);
      disc *= s.gamma;
    }
    rhs_vals[static_cast<std::size_t>(k)] = acc;
  }
  const MeanSe rhs = mean_se(rhs_vals);

  rep.lhs = lhs.mean;
  rep.rhs = rhs.mean;
  rep.stat_slack = 4.0 * (lhs.se + rhs.se);
  rep.pass = rep.lhs <= rep.rhs + rep.stat_slack;
  rep.details["lhs_se"] = lhs.se;
  rep.details["rhs_se"] = rhs.se;
  rep.details["downshift_sup_gap"] = (star.values - fhat_grid.values).cwiseAbs().maxCoeff();
  return rep;
}

BoundReport fitting_bound_infnorm(TheoremId id, const TheoremContext& ctx, std::uint64_t seed) {
  const bool qform = (id == TheoremId::T3);
  BoundReport rep;
  rep.id = id;
  rep.M = ctx.M;
  rep.seed = seed;

  const GridFunction& star = qform ? ctx.qstar : ctx.vstar;
  const QuadraticForm& hat = qform ? ctx.qhat : ctx.vhat;
  const RelevanceMeasure& c = qform ? ctx.c_q : ctx.c_v;

  const MeanSe lhs = weighted_one_norm_mc(
      [&](const Vector& z) { return star.interpolate(z) - hat.eval(z); }, ctx.prob, c,
      ctx.mc_trials, seed, !qform);

  const Vector ones = Vector::Ones(star.size());
  const double min_inf = min_supnorm_over_basis(star, ones, hat, seed);
  const double factor = 2.0 / (1.0 - std::pow(ctx.prob->gamma, ctx.M));

  rep.lhs = lhs.mean;
  rep.rhs = factor * min_inf;
  rep.stat_slack = 4.0 * lhs.se;
  rep.pass = rep.lhs <= rep.rhs + rep.stat_slack;
  rep.details["min_inf_norm"] = min_inf;
  rep.details["factor"] = factor;
  rep.details["lhs_se"] = lhs.se;
  return rep;
}

BoundReport fitting_bound_lyapunov(TheoremId id, const TheoremContext& ctx, std::uint64_t seed) {
  const bool qform = (id == TheoremId::T6);
  BoundReport rep;
  rep.id = id;
  rep.M = ctx.M;
  rep.seed = seed;

  const GridFunction& star = qform ? ctx.qstar : ctx.vstar;
  const QuadraticForm& hat = qform ? ctx.qhat : ctx.vhat;
  const RelevanceMeasure& c = qform ? ctx.c_q : ctx.c_v;
  const HKind kind = qform ? HKind::HQ : HKind::HV;

  double beta = 0.0;
  const QuadraticForm lyap = make_lyapunov_candidate(hat, ctx, kind, &beta);
  const GridFunction lyap_grid = GridFunction::from_quadratic(
      lyap, qform ? ctx.cfg.state_input_axes() : ctx.cfg.state_axes());

  const MeanSe lhs = weighted_one_norm_mc(
      [&](const Vector& z) { return star.interpolate(z) - hat.eval(z); }, ctx.prob, c,
      ctx.mc_trials, seed, !qform);

  const Vector winv = lyap_grid.values.cwiseInverse();
  const double min_weighted = min_supnorm_over_basis(star, winv, hat, seed);
  const double lyap_mass = weighted_integral(lyap, c);
  const double factor = 2.0 * lyap_mass / (1.0 - std::pow(beta, ctx.M));

  rep.lhs = lhs.mean;
  rep.rhs = factor * min_weighted;
  rep.stat_slack = 4.0 * lhs.se;
  rep.pass = rep.lhs <= rep.rhs + rep.stat_slack;
  rep.details["beta"] = beta;
  rep.details["min_weighted_inf_norm"] = min_weighted;
  rep.details["lyapunov_mass"] = lyap_mass;
  rep.details["lhs_se"] = lhs.se;
  return rep;
}

}  // namespace

BoundReport verify_theorem(TheoremId id, const TheoremContext& ctx, std::uint64_t seed) {
  switch (id) {
    case TheoremId::T1:
    case TheoremId::T2:
      return online_bound(id, ctx, seed);
    case TheoremId::T3:
    case TheoremId::T4:
      return fitting_bound_infnorm(id, ctx, seed);
    case TheoremId::T5:
    case TheoremId::T6:
      return fitting_bound_lyapunov(id, ctx, seed);
  }
  throw Error("verify_theorem: unknown theorem id");
}

const char* to_string(TheoremId id) {
  switch (id) {
    case TheoremId::T1: return "T1";
    case TheoremId::T2: return "T2";
    case TheoremId::T3: return "T3";
    case TheoremId::T4: return "T4";
    case TheoremId::T5: return "T5";
    case TheoremId::T6: return "T6";
  }
  return "?";
}

double integrate_grid_against_gaussian(const GridFunction& v, const GaussianMeasure& g) {
  if (v.space != Space::State || v.dims() > 2)
    throw DimensionMismatch("integrate_grid_against_gaussian: need a 1-d or 2-d state grid");
  const double two_pi = 6.283185307179586476925286766559;

  if (v.dims() == 1) {
    const Vector& ax = v.axes[0];
    const double var = g.cov(0, 0);
    const double mean = g.mean[0];
    double acc = 0.0;
    for (Eigen::Index i = 0; i < ax.size(); ++i) {
      const double h_lo = (i > 0) ? ax[i] - ax[i - 1] : 0.0;
      const double h_hi = (i + 1 < ax.size()) ? ax[i + 1] - ax[i] : 0.0;
      const double w = 0.5 * (h_lo + h_hi);
      const double d = ax[i] - mean;
      acc += w * v.values[i] * std::exp(-0.5 * d * d / var) / std::sqrt(two_pi * var);
    }
    return acc;
  }

  // 2-d product-rule trapezoid with the exact bivariate density.
  const Vector& ax0 = v.axes[0];
  const Vector& ax1 = v.axes[1];
  const Matrix cov_inv = g.cov.inverse();
  const double norm = 1.0 / (two_pi * std::sqrt(g.cov.determinant()));
  auto trap = [](const Vector& ax, Eigen::Index i) {
    const double h_lo = (i > 0) ? ax[i] - ax[i - 1] : 0.0;
    const double h_hi = (i + 1 < ax.size()) ? ax[i + 1] - ax[i] : 0.0;
    return 0.5 * (h_lo + h_hi);
  };
  double acc = 0.0;
  for (Eigen::Index i = 0; i < ax0.size(); ++i) {
    for (Eigen::Index j = 0; j < ax1.size(); ++j) {
      Vector d(2);
      d << ax0[i] - g.mean[0], ax1[j] - g.mean[1];
      const double dens = norm * std::exp(-0.5 * d.dot(cov_inv * d));
      acc += trap(ax0, i) * trap(ax1, j) * dens * v.values[i * ax1.size() + j];
    }
  }
  return acc;
}

}  // namespace adp
