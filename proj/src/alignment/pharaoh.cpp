#include <algorithm>
#include <charconv>
#include <string>

#include "otalign/alignment.hpp"
#include "otalign/error.hpp"

namespace otalign {

namespace {

struct Token {
  int source;
  int target;
  char separator;
};

int parse_index(std::string_view text, std::string_view token) {
  int value = -1;
  const auto [end, ec] =
      std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || end != text.data() + text.size() || value < 0) {
    throw FormatError("bad alignment token '" + std::string(token) + "'");
  }
  return value;
}

std::vector<Token> tokenize(std::string_view line) {
  std::vector<Token> out;
  std::size_t pos = 0;
  while (pos < line.size()) {
    while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t' ||
                                 line[pos] == '\r')) {
      ++pos;
    }
    if (pos >= line.size()) break;
    std::size_t end = pos;
    while (end < line.size() && line[end] != ' ' && line[end] != '\t' &&
           line[end] != '\r') {
      ++end;
    }
    const std::string_view token = line.substr(pos, end - pos);
    const std::size_t sep = token.find_first_of("-?");
    if (sep == std::string_view::npos) {
      throw FormatError("bad alignment token '" + std::string(token) + "'");
    }
    out.push_back({parse_index(token.substr(0, sep), token),
                   parse_index(token.substr(sep + 1), token), token[sep]});
    pos = end;
  }
  return out;
}

}  // namespace

std::string to_pharaoh(const AlignmentSet& alignment) {
  std::string out;
  for (const auto& [i, j] : alignment.pairs()) {
    if (!out.empty()) out += ' ';
    out += std::to_string(i);
    out += '-';
    out += std::to_string(j);
  }
  return out;
}

AlignmentSet parse_pharaoh(std::string_view line, int n, int m) {
  std::vector<Link> links;
  int max_i = -1, max_j = -1;
  for (const Token& t : tokenize(line)) {
    if (t.separator != '-') {
      throw FormatError("possible links are only valid in gold alignments");
    }
    links.push_back({t.source, t.target, 1.0});
    max_i = std::max(max_i, t.source);
    max_j = std::max(max_j, t.target);
  }
  std::sort(links.begin(), links.end(), [](const Link& a, const Link& b) {
    return std::pair(a.source, a.target) < std::pair(b.source, b.target);
  });
  links.erase(std::unique(links.begin(), links.end()), links.end());
  try {
    return AlignmentSet(n < 0 ? max_i + 1 : n, m < 0 ? max_j + 1 : m,
                        AlignmentMode::kHard, std::move(links));
  } catch (const InputError& e) {
    throw FormatError(e.what());
  }
}

GoldAlignment parse_gold(std::string_view line) {
  GoldAlignment gold;
  for (const Token& t : tokenize(line)) {
    if (t.separator == '-') gold.sure.emplace(t.source, t.target);
    gold.possible.emplace(t.source, t.target);
  }
  return gold;
}

}  // namespace otalign
