#include "otalign/error.hpp"
#include "otalign/ot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace otalign {

namespace {

// Plain sweeps at the target epsilon before switching to Newton steps on the
// dual; Sinkhorn alone stalls on near-degenerate plans at small epsilon.
constexpr int kSweepsBeforeNewton = 10;

// out_j = -eps * log sum_i exp(log_w_i + (pot_i - cost(i, j)) / eps)
// The cost is column-major, so each reduction walks a contiguous column.
void softmin_over_rows(const Matrix& cost, double eps, const Vector& log_w,
                       const Vector& pot, Vector& out) {
  const Eigen::Index n = cost.rows();
  const Eigen::Index m = cost.cols();
  out.resize(m);
  Vector z(n);
  for (Eigen::Index j = 0; j < m; ++j) {
    const double* col = cost.data() + j * n;
    double zmax = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < n; ++i) {
      z[i] = log_w[i] + (pot[i] - col[i]) / eps;
      zmax = std::max(zmax, z[i]);
    }
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) acc += std::exp(z[i] - zmax);
    out[j] = -eps * (zmax + std::log(acc));
  }
}

// L1 distance between the implied row sums and `weights`, given the current
// potential and the one a fresh update would produce from the other side.
// Row sum i equals w_i * exp((pot_i - next_i) / eps).
double row_violation(const Vector& weights, const Vector& pot,
                     const Vector& next, double eps) {
  double v = 0.0;
  for (Eigen::Index i = 0; i < weights.size(); ++i) {
    v += weights[i] * std::abs(std::exp((pot[i] - next[i]) / eps) - 1.0);
  }
  return v;
}

Matrix assemble_plan(const Matrix& cost, double eps, const Vector& log_a,
                     const Vector& log_b, const Vector& f, const Vector& g) {
  Matrix plan(cost.rows(), cost.cols());
  for (Eigen::Index j = 0; j < cost.cols(); ++j) {
    for (Eigen::Index i = 0; i < cost.rows(); ++i) {
      plan(i, j) =
          std::exp(log_a[i] + log_b[j] + (f[i] + g[j] - cost(i, j)) / eps);
    }
  }
  return plan;
}

constexpr double kMinStep = 1e-6;

// Levenberg-style diagonal shift for the Newton system, relative to its
// largest diagonal entry. Blocks of the plan can be coupled by entries far
// below rounding, leaving the system numerically singular along their
// relative shifts; the shift grows when steps fail and shrinks when full
// steps succeed, so the last steps converge quadratically.
struct Damping {
  double value = 1e-6;

  void accept(bool full_step) {
    if (full_step) value = std::max(value * 0.1, 1e-16);
  }
  void reject() { value = std::min(value * 10.0, 1e-2); }
};

// L1 norm of the marginal residual (the dual gradient) at the given
// potentials; infinite if the plan overflows.
double residual_norm(const Matrix& cost, double eps, const Vector& log_a,
                     const Vector& log_b, const Vector& f, const Vector& g,
                     Matrix& plan) {
  plan = assemble_plan(cost, eps, log_a, log_b, f, g);
  if (!plan.allFinite()) return std::numeric_limits<double>::infinity();
  return (plan.rowwise().sum() - log_a.array().exp().matrix()).lpNorm<1>() +
         (plan.colwise().sum().transpose() - log_b.array().exp().matrix())
             .lpNorm<1>();
}

// One damped Newton step on the dual optimality condition (marginals match),
// with backtracking on the residual norm. The potentials are only defined up
// to f + k, g - k, so the last entry of g is held fixed. Returns false if no
// step reduced the residual.
bool newton_step(const Matrix& cost, double eps, const Vector& log_a,
                 const Vector& log_b, Vector& f, Vector& g, Damping& damping) {
  const Eigen::Index n = f.size();
  const Eigen::Index m = g.size();
  Matrix plan;
  const double base = residual_norm(cost, eps, log_a, log_b, f, g, plan);
  const Vector rows = plan.rowwise().sum();
  const Vector cols = plan.colwise().sum().transpose();

  const Eigen::Index k = n + m - 1;
  Matrix h = Matrix::Zero(k, k);
  Vector grad(k);
  h.topLeftCorner(n, n).diagonal() = rows;
  h.topRightCorner(n, m - 1) = plan.leftCols(m - 1);
  h.bottomLeftCorner(m - 1, n) = plan.leftCols(m - 1).transpose();
  h.bottomRightCorner(m - 1, m - 1).diagonal() = cols.head(m - 1);
  grad.head(n) = log_a.array().exp().matrix() - rows;
  grad.tail(m - 1) = log_b.head(m - 1).array().exp().matrix() - cols.head(m - 1);
  // Blocks of the plan can be coupled by entries far below rounding, which
  // leaves h numerically singular along their relative shifts.
  h.diagonal().array() += damping.value * h.diagonal().maxCoeff();

  const Eigen::LDLT<Matrix> ldlt(h);
  const Vector step = eps * ldlt.solve(grad);
  if (ldlt.info() != Eigen::Success || !step.allFinite()) {
    damping.reject();
    return false;
  }

  Vector f_try(n), g_try(m);
  for (double t = 1.0; t > kMinStep; t *= 0.5) {
    f_try = f + t * step.head(n);
    g_try = g;
    g_try.head(m - 1) += t * step.tail(m - 1);
    if (residual_norm(cost, eps, log_a, log_b, f_try, g_try, plan) < base) {
      f.swap(f_try);
      g.swap(g_try);
      damping.accept(t == 1.0);
      return true;
    }
  }
  damping.reject();
  return false;
}

// Symmetric counterpart on a single potential (f == g); no gauge freedom.
bool newton_step_symmetric(const Matrix& cost, double eps, const Vector& log_a,
                           Vector& f, Damping& damping) {
  Matrix plan;
  const double base = residual_norm(cost, eps, log_a, log_a, f, f, plan);
  const Vector rows = plan.rowwise().sum();
  Matrix h = plan;
  h.diagonal() += rows;
  const Vector grad = log_a.array().exp().matrix() - rows;
  h.diagonal().array() += damping.value * h.diagonal().maxCoeff();
  const Eigen::LDLT<Matrix> ldlt(h);
  const Vector step = eps * ldlt.solve(grad);
  if (ldlt.info() != Eigen::Success || !step.allFinite()) {
    damping.reject();
    return false;
  }
  Vector f_try;
  for (double t = 1.0; t > kMinStep; t *= 0.5) {
    f_try = f + t * step;
    if (residual_norm(cost, eps, log_a, log_a, f_try, f_try, plan) < base) {
      f.swap(f_try);
      damping.accept(t == 1.0);
      return true;
    }
  }
  damping.reject();
  return false;
}

// Once the tolerance is met, a few extra Newton steps drive the violation
// toward tolerance * kRefineFactor. The reported value then resolves
// differences far below the stopping threshold, which the debiased
// divergence relies on when its terms nearly cancel.
constexpr double kRefineFactor = 1e-4;
constexpr int kRefineSteps = 4;

class StopRule {
 public:
  explicit StopRule(const SinkhornConfig& cfg)
      : tolerance_(cfg.tolerance), max_iters_(cfg.max_iters) {}

  bool refining() const { return refine_steps_ > 0; }

  bool done(double violation, int iters) {
    if (iters >= max_iters_ || violation <= tolerance_ * kRefineFactor) {
      return true;
    }
    if (violation <= tolerance_) return ++refine_steps_ > kRefineSteps;
    return false;
  }

 private:
  double tolerance_;
  int max_iters_;
  int refine_steps_ = 0;
};

double plan_violation(const Matrix& plan, const Vector& a, const Vector& b) {
  const double rows = (plan.rowwise().sum() - a).lpNorm<1>();
  const double cols = (plan.colwise().sum().transpose() - b).lpNorm<1>();
  return std::max(rows, cols);
}

void check_shapes(const CostMatrix& cost, const Weights& alpha,
                  const Weights& beta) {
  if (cost.rows() != alpha.size() || cost.cols() != beta.size()) {
    throw InputError("cost is " + std::to_string(cost.rows()) + "x" +
                     std::to_string(cost.cols()) + " but weights have sizes " +
                     std::to_string(alpha.size()) + " and " +
                     std::to_string(beta.size()));
  }
}

}  // namespace

void SinkhornConfig::validate() const {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
    throw InputError("epsilon must be positive");
  }
  if (max_iters < 1) throw InputError("max_iters must be positive");
  if (!(tolerance > 0.0)) throw InputError("tolerance must be positive");
  if (!(scaling_factor > 0.0 && scaling_factor < 1.0)) {
    throw InputError("epsilon scaling factor must lie in (0, 1)");
  }
}

TransportResult sinkhorn_solve(const CostMatrix& cost, const Weights& alpha,
                               const Weights& beta, const SinkhornConfig& cfg) {
  cfg.validate();
  check_shapes(cost, alpha, beta);

  const Matrix& c = cost.values();
  // Transposed copy so that both half-steps reduce over contiguous memory.
  const Matrix ct = c.transpose();
  const Vector log_a = alpha.values().array().log();
  const Vector log_b = beta.values().array().log();
  const double eps = cfg.epsilon;

  Vector f = Vector::Zero(c.rows());
  Vector g = Vector::Zero(c.cols());
  int iters = 0;

  if (cfg.epsilon_scaling) {
    for (double e = c.maxCoeff(); e > eps && iters < cfg.max_iters;
         e *= cfg.scaling_factor) {
      softmin_over_rows(c, e, log_a, f, g);
      softmin_over_rows(ct, e, log_b, g, f);
      ++iters;
    }
  }

  // Each sweep ends on a g-update, so the column marginals are exact and
  // only the rows need checking.
  softmin_over_rows(c, eps, log_a, f, g);
  ++iters;
  StopRule stop(cfg);
  Damping damping;
  Vector f_next, best_f = f, best_g = g;
  double best = std::numeric_limits<double>::infinity();
  for (int sweeps = 1;; ++sweeps) {
    softmin_over_rows(ct, eps, log_b, g, f_next);
    const double violation = row_violation(alpha.values(), f, f_next, eps);
    if (violation < best) {
      best = violation;
      best_f = f;
      best_g = g;
    }
    if (stop.done(violation, iters)) break;
    const bool use_newton = stop.refining() || sweeps >= kSweepsBeforeNewton;
    if (!use_newton || !newton_step(c, eps, log_a, log_b, f, g, damping)) {
      if (stop.refining()) break;
      f.swap(f_next);
    }
    softmin_over_rows(c, eps, log_a, f, g);
    ++iters;
  }
  f.swap(best_f);
  g.swap(best_g);

  TransportResult result;
  result.plan = assemble_plan(c, eps, log_a, log_b, f, g);
  result.marginal_violation =
      plan_violation(result.plan, alpha.values(), beta.values());
  result.converged = result.marginal_violation <= cfg.tolerance;
  result.iterations = iters;
  result.ot_eps_value = alpha.values().dot(f) + beta.values().dot(g) -
                        eps * (result.plan.sum() - 1.0);
  result.potentials_f = std::move(f);
  result.potentials_g = std::move(g);
  return result;
}

TransportResult sinkhorn_solve_symmetric(const CostMatrix& cost,
                                         const Weights& alpha,
                                         const SinkhornConfig& cfg) {
  cfg.validate();
  check_shapes(cost, alpha, alpha);
  const Matrix& c = cost.values();
  if ((c - c.transpose()).cwiseAbs().maxCoeff() >
      1e-12 * std::max(1.0, c.maxCoeff())) {
    throw InputError("symmetric solve requires a symmetric cost");
  }

  const Vector log_a = alpha.values().array().log();
  const double eps = cfg.epsilon;

  Vector f = Vector::Zero(c.rows());
  Vector t;
  int iters = 0;

  if (cfg.epsilon_scaling) {
    for (double e = c.maxCoeff(); e > eps && iters < cfg.max_iters;
         e *= cfg.scaling_factor) {
      softmin_over_rows(c, e, log_a, f, t);
      f = 0.5 * (f + t);
      ++iters;
    }
  }

  StopRule stop(cfg);
  Damping damping;
  Vector best_f = f;
  double best = std::numeric_limits<double>::infinity();
  for (int sweeps = 0;; ++sweeps) {
    softmin_over_rows(c, eps, log_a, f, t);
    const double violation = row_violation(alpha.values(), f, t, eps);
    if (violation < best) {
      best = violation;
      best_f = f;
    }
    if (stop.done(violation, iters)) break;
    const bool use_newton = stop.refining() || sweeps >= kSweepsBeforeNewton;
    if (!use_newton || !newton_step_symmetric(c, eps, log_a, f, damping)) {
      if (stop.refining()) break;
      f = 0.5 * (f + t);
    }
    ++iters;
  }
  f.swap(best_f);

  TransportResult result;
  result.plan = assemble_plan(c, eps, log_a, log_a, f, f);
  result.marginal_violation =
      plan_violation(result.plan, alpha.values(), alpha.values());
  result.converged = result.marginal_violation <= cfg.tolerance;
  result.iterations = iters;
  result.ot_eps_value =
      2.0 * alpha.values().dot(f) - eps * (result.plan.sum() - 1.0);
  result.potentials_f = f;
  result.potentials_g = std::move(f);
  return result;
}

}  // namespace otalign
