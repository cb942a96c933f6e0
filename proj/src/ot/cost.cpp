#include "otalign/error.hpp"
#include "otalign/ot.hpp"

#include <cmath>
#include <string>

namespace otalign {

PointCloud::PointCloud(Matrix points) : points_(std::move(points)) {
  if (points_.rows() < 1 || points_.cols() < 1) {
    throw InputError("point cloud must have at least one point and dimension");
  }
  if (!points_.allFinite()) {
    throw InputError("point cloud contains non-finite coordinates");
  }
}

Weights::Weights(Vector values) : values_(std::move(values)) {
  if (values_.size() < 1) {
    throw InputError("weights must be non-empty");
  }
  for (Eigen::Index i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i]) || values_[i] <= 0.0) {
      throw InputError("weight " + std::to_string(i) +
                       " is not strictly positive");
    }
  }
  if (std::abs(values_.sum() - 1.0) > kSumTolerance) {
    throw InputError("weights do not sum to 1");
  }
}

std::string_view to_string(Metric metric) {
  switch (metric) {
    case Metric::kEuclidean:
      return "euclidean";
    case Metric::kSquaredEuclidean:
      return "sqeuclidean";
  }
  return "unknown";
}

Metric parse_metric(std::string_view name) {
  if (name == "euclidean") return Metric::kEuclidean;
  if (name == "sqeuclidean" || name == "squared-euclidean") {
    return Metric::kSquaredEuclidean;
  }
  throw InputError("unknown metric '" + std::string(name) + "'");
}

CostMatrix::CostMatrix(Matrix values, Metric metric)
    : values_(std::move(values)), metric_(metric) {
  if (!values_.allFinite() || (values_.array() < 0.0).any()) {
    throw InputError("cost entries must be finite and non-negative");
  }
}

CostMatrix build_cost_matrix(const PointCloud& x, const PointCloud& y,
                             Metric metric) {
  if (x.dim() != y.dim()) {
    throw InputError("dimension mismatch: " + std::to_string(x.dim()) +
                     " vs " + std::to_string(y.dim()));
  }
  const Matrix& xp = x.points();
  const Matrix& yp = y.points();
  Matrix c(x.size(), y.size());
  for (Eigen::Index j = 0; j < y.size(); ++j) {
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      // Direct differences keep c(i, j) == 0 exactly for coincident points.
      const double sq = (xp.row(i) - yp.row(j)).squaredNorm();
      c(i, j) = metric == Metric::kEuclidean ? std::sqrt(sq) : sq;
    }
  }
  return CostMatrix(std::move(c), metric);
}

}  // namespace otalign
