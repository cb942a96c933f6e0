#include <fstream>
#include <string>

#include "json.hpp"

#include "otalign/corpus.hpp"
#include "otalign/error.hpp"

namespace otalign {

namespace {

Units read_side(const nlohmann::json& record, const char* key) {
  const auto it = record.find(key);
  if (it == record.end() || !it->is_array()) {
    throw FormatError(std::string("missing array \"") + key + "\"");
  }
  Units units;
  for (const auto& u : *it) {
    if (!u.is_string()) {
      throw FormatError(std::string("non-string unit in \"") + key + "\"");
    }
    units.push_back(u.get<std::string>());
  }
  if (units.empty()) {
    throw FormatError(std::string("empty \"") + key + "\" side");
  }
  return units;
}

}  // namespace

ParallelCorpus::ParallelCorpus(std::string language_pair,
                               std::vector<SentencePair> pairs)
    : language_pair_(std::move(language_pair)), pairs_(std::move(pairs)) {
  if (pairs_.empty()) throw InputError("parallel corpus has no pairs");
  for (std::size_t i = 0; i < pairs_.size(); ++i) {
    if (pairs_[i].source.empty() || pairs_[i].target.empty()) {
      throw InputError("sentence pair " + std::to_string(i) +
                       " has an empty side");
    }
  }
}

ParallelCorpus read_parallel(std::istream& in, std::string_view origin) {
  std::vector<SentencePair> pairs;
  std::string language;
  std::string line;
  std::size_t line_no = 0;
  const std::string where = origin.empty() ? "line " : std::string(origin) + ":";
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const nlohmann::json record = nlohmann::json::parse(line);
      if (!record.is_object()) throw FormatError("record is not an object");
      const auto lang = record.find("lang");
      if (lang == record.end() || !lang->is_string()) {
        throw FormatError("missing string \"lang\"");
      }
      if (language.empty()) {
        language = lang->get<std::string>();
      } else if (*lang != language) {
        throw FormatError("mixed language tags '" + language + "' and '" +
                          lang->get<std::string>() + "'");
      }
      pairs.push_back({read_side(record, "src"), read_side(record, "tgt")});
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(where + std::to_string(line_no) + ": " + e.what());
    } catch (const FormatError& e) {
      throw FormatError(where + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (pairs.empty()) {
    throw FormatError(std::string(origin) + ": no sentence pairs");
  }
  return ParallelCorpus(std::move(language), std::move(pairs));
}

ParallelCorpus load_parallel(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  return read_parallel(in, path.string());
}

void write_parallel(std::ostream& out, const ParallelCorpus& corpus) {
  for (const SentencePair& p : corpus.pairs()) {
    nlohmann::json record;
    record["src"] = p.source;
    record["tgt"] = p.target;
    record["lang"] = corpus.language_pair();
    out << record.dump() << '\n';
  }
}

void write_parallel(const std::filesystem::path& path,
                    const ParallelCorpus& corpus) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  write_parallel(out, corpus);
}

}  // namespace otalign
