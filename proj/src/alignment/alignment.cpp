#include "otalign/alignment.hpp"

#include <algorithm>
#include <string>

#include "otalign/error.hpp"

namespace otalign {

namespace {

Vector checked_row_sums(const Matrix& plan) {
  if (plan.rows() < 1 || plan.cols() < 1) {
    throw InputError("plan must be non-empty");
  }
  if ((plan.array() < 0.0).any() || !plan.allFinite()) {
    throw InputError("plan must be finite and non-negative");
  }
  const Vector sums = plan.rowwise().sum();
  for (Eigen::Index i = 0; i < sums.size(); ++i) {
    if (!(sums[i] > 0.0)) {
      throw InputError("degenerate plan: row " + std::to_string(i) +
                       " carries no mass");
    }
  }
  return sums;
}

// Lowest index among the maxima of row i.
Eigen::Index row_argmax(const Matrix& plan, Eigen::Index i) {
  Eigen::Index best = 0;
  for (Eigen::Index j = 1; j < plan.cols(); ++j) {
    if (plan(i, j) > plan(i, best)) best = j;
  }
  return best;
}

Eigen::Index col_argmax(const Matrix& plan, Eigen::Index j) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < plan.rows(); ++i) {
    if (plan(i, j) > plan(best, j)) best = i;
  }
  return best;
}

}  // namespace

AlignmentSet::AlignmentSet(int n, int m, AlignmentMode mode,
                           std::vector<Link> links)
    : n_(n), m_(m), mode_(mode), links_(std::move(links)) {
  if (n < 0 || m < 0) throw InputError("negative sentence length");
  std::sort(links_.begin(), links_.end(), [](const Link& a, const Link& b) {
    return std::pair(a.source, a.target) < std::pair(b.source, b.target);
  });
  for (std::size_t k = 0; k < links_.size(); ++k) {
    const Link& l = links_[k];
    if (l.source < 0 || l.source >= n || l.target < 0 || l.target >= m) {
      throw InputError("link " + std::to_string(l.source) + "-" +
                       std::to_string(l.target) + " out of bounds");
    }
    if (!(l.weight > 0.0 && l.weight <= 1.0)) {
      throw InputError("link weight outside (0, 1]");
    }
    if (mode == AlignmentMode::kHard && l.weight != 1.0) {
      throw InputError("hard links must have weight 1");
    }
    if (k > 0 && links_[k - 1].source == l.source &&
        links_[k - 1].target == l.target) {
      throw InputError("duplicate link " + std::to_string(l.source) + "-" +
                       std::to_string(l.target));
    }
  }
}

std::set<std::pair<int, int>> AlignmentSet::pairs() const {
  std::set<std::pair<int, int>> out;
  for (const Link& l : links_) out.emplace(l.source, l.target);
  return out;
}

HardMode parse_hard_mode(std::string_view name) {
  if (name == "argmax" || name == "argmax-row") return HardMode::kArgmaxRow;
  if (name == "intersect" || name == "bidirectional-intersect") {
    return HardMode::kIntersect;
  }
  throw InputError("unknown hard alignment mode '" + std::string(name) + "'");
}

AlignmentSet extract_soft(const Matrix& plan, double threshold) {
  if (!(threshold >= 0.0 && threshold < 1.0)) {
    throw InputError("soft threshold must lie in [0, 1)");
  }
  const Vector sums = checked_row_sums(plan);
  std::vector<Link> links;
  for (Eigen::Index i = 0; i < plan.rows(); ++i) {
    for (Eigen::Index j = 0; j < plan.cols(); ++j) {
      const double w = plan(i, j) / sums[i];
      if (w > threshold) {
        links.push_back({static_cast<int>(i), static_cast<int>(j),
                         std::min(w, 1.0)});
      }
    }
  }
  return AlignmentSet(static_cast<int>(plan.rows()),
                      static_cast<int>(plan.cols()), AlignmentMode::kSoft,
                      std::move(links));
}

AlignmentSet extract_hard(const Matrix& plan, HardMode mode) {
  checked_row_sums(plan);
  std::vector<Link> links;
  for (Eigen::Index i = 0; i < plan.rows(); ++i) {
    const Eigen::Index j = row_argmax(plan, i);
    if (mode == HardMode::kIntersect && col_argmax(plan, j) != i) continue;
    links.push_back({static_cast<int>(i), static_cast<int>(j), 1.0});
  }
  return AlignmentSet(static_cast<int>(plan.rows()),
                      static_cast<int>(plan.cols()), AlignmentMode::kHard,
                      std::move(links));
}

AerCounts& AerCounts::operator+=(const AerCounts& other) {
  predicted += other.predicted;
  sure += other.sure;
  predicted_sure += other.predicted_sure;
  predicted_possible += other.predicted_possible;
  return *this;
}

AerCounts aer_counts(const LinkPairs& predicted, const GoldAlignment& gold) {
  AerCounts c;
  c.predicted = predicted.size();
  c.sure = gold.sure.size();
  for (const auto& link : predicted) {
    if (gold.sure.count(link)) ++c.predicted_sure;
    if (gold.possible.count(link) || gold.sure.count(link)) {
      ++c.predicted_possible;
    }
  }
  return c;
}

double aer(const AerCounts& counts) {
  const std::size_t denom = counts.predicted + counts.sure;
  if (denom == 0) {
    throw InputError("AER undefined: no predicted and no sure links");
  }
  return 1.0 - static_cast<double>(counts.predicted_sure +
                                   counts.predicted_possible) /
                   static_cast<double>(denom);
}

double aer(const AlignmentSet& predicted, const GoldAlignment& gold) {
  return aer(aer_counts(predicted.pairs(), gold));
}

}  // namespace otalign
