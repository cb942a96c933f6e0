#pragma once

// Word alignments read off transport plans, the Pharaoh interchange format
// and alignment error rate.

#include <cstddef>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "otalign/ot.hpp"

namespace otalign {

struct Link {
  int source = 0;
  int target = 0;
  double weight = 1.0;

  friend bool operator==(const Link&, const Link&) = default;
};

enum class AlignmentMode { kSoft, kHard };

// Links between a length-n source and length-m target sentence, kept sorted
// by (source, target) with no duplicate pairs. Weights lie in (0, 1].
class AlignmentSet {
 public:
  AlignmentSet(int n, int m, AlignmentMode mode, std::vector<Link> links);

  int source_length() const { return n_; }
  int target_length() const { return m_; }
  AlignmentMode mode() const { return mode_; }
  const std::vector<Link>& links() const { return links_; }
  bool empty() const { return links_.empty(); }

  std::set<std::pair<int, int>> pairs() const;

 private:
  int n_;
  int m_;
  AlignmentMode mode_;
  std::vector<Link> links_;
};

using LinkPairs = std::set<std::pair<int, int>>;

struct GoldAlignment {
  LinkPairs sure;
  LinkPairs possible;  // always contains `sure`
};

enum class HardMode { kArgmaxRow, kIntersect };

HardMode parse_hard_mode(std::string_view name);

inline constexpr double kDefaultSoftThreshold = 0.1;

// Keeps (i, j) whose row-normalized mass exceeds `threshold`; the weight is
// that normalized mass. Throws InputError on an all-zero row.
AlignmentSet extract_soft(const Matrix& plan,
                          double threshold = kDefaultSoftThreshold);

// kArgmaxRow: one link per source row, ties to the lowest target index.
// kIntersect: links that are both row- and column-argmax.
AlignmentSet extract_hard(const Matrix& plan, HardMode mode);

// "i-j" tokens sorted by (i, j), separated by single spaces.
std::string to_pharaoh(const AlignmentSet& alignment);

// Parses one Pharaoh line of "i-j" tokens into a hard alignment. Lengths are
// inferred from the largest indices unless given. Throws FormatError.
AlignmentSet parse_pharaoh(std::string_view line, int n = -1, int m = -1);

// Gold line: "i-j" is a sure link, "i?j" a possible one.
GoldAlignment parse_gold(std::string_view line);

struct AerCounts {
  std::size_t predicted = 0;
  std::size_t sure = 0;
  std::size_t predicted_sure = 0;
  std::size_t predicted_possible = 0;

  AerCounts& operator+=(const AerCounts& other);
};

AerCounts aer_counts(const LinkPairs& predicted, const GoldAlignment& gold);

// 1 - (|A & S| + |A & P|) / (|A| + |S|). Throws InputError when
// |A| + |S| == 0.
double aer(const AerCounts& counts);
double aer(const AlignmentSet& predicted, const GoldAlignment& gold);

}  // namespace otalign
