#pragma once

// Entropic optimal transport between weighted point clouds and the debiased
// Sinkhorn divergence built on top of it.

#include <Eigen/Dense>

#include <string_view>

namespace otalign {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// n points in R^d, one per row. Entries are finite.
class PointCloud {
 public:
  explicit PointCloud(Matrix points);

  const Matrix& points() const { return points_; }
  Eigen::Index size() const { return points_.rows(); }
  Eigen::Index dim() const { return points_.cols(); }

 private:
  Matrix points_;
};

// Strictly positive probability vector; sums to one within 1e-9.
class Weights {
 public:
  static constexpr double kSumTolerance = 1e-9;

  explicit Weights(Vector values);

  const Vector& values() const { return values_; }
  Eigen::Index size() const { return values_.size(); }
  double operator[](Eigen::Index i) const { return values_[i]; }

 private:
  Vector values_;
};

enum class Metric { kEuclidean, kSquaredEuclidean };

std::string_view to_string(Metric metric);
Metric parse_metric(std::string_view name);

class CostMatrix {
 public:
  CostMatrix(Matrix values, Metric metric);

  const Matrix& values() const { return values_; }
  Metric metric() const { return metric_; }
  Eigen::Index rows() const { return values_.rows(); }
  Eigen::Index cols() const { return values_.cols(); }

 private:
  Matrix values_;
  Metric metric_;
};

struct SinkhornConfig {
  double epsilon = 0.05;
  int max_iters = 500;
  // Stop once the L1 violation of both marginals is at most this.
  double tolerance = 1e-6;
  Metric metric = Metric::kEuclidean;
  // Geometric annealing of epsilon from the cost diameter down to `epsilon`,
  // one sweep per intermediate value.
  bool epsilon_scaling = true;
  double scaling_factor = 0.5;

  // Throws InputError on out-of-range fields.
  void validate() const;
};

struct TransportResult {
  Matrix plan;
  Vector potentials_f;
  Vector potentials_g;
  // Dual objective at the returned potentials; equals
  // <plan, C> + eps * KL(plan, alpha x beta) at the optimum.
  double ot_eps_value = 0.0;
  int iterations = 0;
  bool converged = false;
  // max of the L1 violations of the row and column marginals.
  double marginal_violation = 0.0;
};

struct DivergenceResult {
  double ot_xy = 0.0;
  double ot_xx = 0.0;
  double ot_yy = 0.0;
  double s_eps = 0.0;
  bool converged = false;
  TransportResult transport_xy;
  TransportResult transport_xx;
  TransportResult transport_yy;
};

struct DivergenceGradient {
  Matrix grad_x;
  Matrix grad_y;
  DivergenceResult divergence;
};

CostMatrix build_cost_matrix(const PointCloud& x, const PointCloud& y,
                             Metric metric);

// Log-domain Sinkhorn for min <pi, C> + eps KL(pi, alpha x beta) subject to
// pi 1 = alpha, pi^T 1 = beta, pi >= 0. Non-convergence is reported through
// `converged`, never thrown.
TransportResult sinkhorn_solve(const CostMatrix& cost, const Weights& alpha,
                               const Weights& beta, const SinkhornConfig& cfg);

// Same problem with beta = alpha on a symmetric cost; iterates a single
// potential so that f == g holds exactly.
TransportResult sinkhorn_solve_symmetric(const CostMatrix& cost,
                                         const Weights& alpha,
                                         const SinkhornConfig& cfg);

// S_eps = OT(a, b) - OT(a, a) / 2 - OT(b, b) / 2.
DivergenceResult sinkhorn_divergence(const PointCloud& x, const PointCloud& y,
                                     const Weights& alpha, const Weights& beta,
                                     const SinkhornConfig& cfg);

// Gradient of S_eps with respect to the point positions, taken at the
// converged plans (envelope theorem). Throws ConvergenceError if any of the
// three solves did not converge.
DivergenceGradient divergence_gradient(const PointCloud& x, const PointCloud& y,
                                       const Weights& alpha,
                                       const Weights& beta,
                                       const SinkhornConfig& cfg);

// Generalized KL(plan || alpha x beta) with 0 log 0 = 0.
double kl_penalty(const Matrix& plan, const Weights& alpha,
                  const Weights& beta);

}  // namespace otalign
