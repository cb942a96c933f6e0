#include "otalign/error.hpp"
#include "otalign/ot.hpp"

#include <cmath>

namespace otalign {

namespace {

constexpr double kCoincidentDistance = 1e-12;

// d c(a, b) / d a for the given metric. Coincident points get the zero
// subgradient under the Euclidean metric.
Eigen::RowVectorXd cost_gradient(const Eigen::RowVectorXd& diff,
                                 Metric metric) {
  if (metric == Metric::kSquaredEuclidean) return 2.0 * diff;
  const double norm = diff.norm();
  if (norm < kCoincidentDistance) {
    return Eigen::RowVectorXd::Zero(diff.size());
  }
  return diff / norm;
}

// rows_i = sum_j plan(i, j) * d c(a_i, b_j) / d a_i
Matrix transport_pull(const Matrix& plan, const Matrix& a, const Matrix& b,
                      Metric metric) {
  Matrix out = Matrix::Zero(a.rows(), a.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < b.rows(); ++j) {
      const double mass = plan(i, j);
      if (mass == 0.0) continue;
      out.row(i) += mass * cost_gradient(a.row(i) - b.row(j), metric);
    }
  }
  return out;
}

}  // namespace

DivergenceResult sinkhorn_divergence(const PointCloud& x, const PointCloud& y,
                                     const Weights& alpha, const Weights& beta,
                                     const SinkhornConfig& cfg) {
  if (x.size() != alpha.size() || y.size() != beta.size()) {
    throw InputError("weights do not match point cloud sizes");
  }
  const Metric metric = cfg.metric;
  DivergenceResult r;
  r.transport_xy =
      sinkhorn_solve(build_cost_matrix(x, y, metric), alpha, beta, cfg);
  r.transport_xx =
      sinkhorn_solve_symmetric(build_cost_matrix(x, x, metric), alpha, cfg);
  r.transport_yy =
      sinkhorn_solve_symmetric(build_cost_matrix(y, y, metric), beta, cfg);
  r.ot_xy = r.transport_xy.ot_eps_value;
  r.ot_xx = r.transport_xx.ot_eps_value;
  r.ot_yy = r.transport_yy.ot_eps_value;
  r.s_eps = r.ot_xy - 0.5 * r.ot_xx - 0.5 * r.ot_yy;
  r.converged = r.transport_xy.converged && r.transport_xx.converged &&
                r.transport_yy.converged;
  return r;
}

DivergenceGradient divergence_gradient(const PointCloud& x, const PointCloud& y,
                                       const Weights& alpha,
                                       const Weights& beta,
                                       const SinkhornConfig& cfg) {
  DivergenceGradient out;
  out.divergence = sinkhorn_divergence(x, y, alpha, beta, cfg);
  const DivergenceResult& d = out.divergence;
  if (!d.converged) {
    throw ConvergenceError(
        "sinkhorn did not converge; refusing to differentiate (violations " +
        std::to_string(d.transport_xy.marginal_violation) + ", " +
        std::to_string(d.transport_xx.marginal_violation) + ", " +
        std::to_string(d.transport_yy.marginal_violation) + ")");
  }
  const Matrix& xp = x.points();
  const Matrix& yp = y.points();
  const Metric metric = cfg.metric;

  // The self terms enter with weight 1/2 but each point appears on both
  // sides of the symmetric plan, which cancels the 1/2.
  out.grad_x = transport_pull(d.transport_xy.plan, xp, yp, metric) -
               transport_pull(d.transport_xx.plan, xp, xp, metric);
  out.grad_y = transport_pull(d.transport_xy.plan.transpose(), yp, xp, metric) -
               transport_pull(d.transport_yy.plan, yp, yp, metric);
  return out;
}

double kl_penalty(const Matrix& plan, const Weights& alpha,
                  const Weights& beta) {
  if (plan.rows() != alpha.size() || plan.cols() != beta.size()) {
    throw InputError("plan shape does not match weights");
  }
  double kl = 0.0;
  for (Eigen::Index j = 0; j < plan.cols(); ++j) {
    for (Eigen::Index i = 0; i < plan.rows(); ++i) {
      const double p = plan(i, j);
      if (p < 0.0) throw InputError("plan has negative entries");
      const double q = alpha[i] * beta[j];
      if (p > 0.0) kl += p * std::log(p / q);
      kl += q - p;
    }
  }
  return kl;
}

}  // namespace otalign
