#include <cmath>
#include <unordered_set>

#include "otalign/corpus.hpp"
#include "otalign/error.hpp"

namespace otalign {

Weights uniform_weights(std::size_t n) {
  if (n == 0) throw InputError("uniform weights need at least one unit");
  return Weights(Vector::Constant(static_cast<Eigen::Index>(n),
                                  1.0 / static_cast<double>(n)));
}

void CorpusStats::add_sentence(std::span<const std::string> units) {
  ++documents_;
  std::unordered_set<std::string> seen(units.begin(), units.end());
  for (const std::string& u : seen) ++df_[u];
}

std::size_t CorpusStats::document_frequency(const std::string& unit) const {
  const auto it = df_.find(unit);
  return it == df_.end() ? 0 : it->second;
}

Weights tfidf_weights(const CorpusStats& stats,
                      std::span<const std::string> sentence) {
  if (sentence.empty()) throw InputError("tf-idf weights of an empty sentence");
  std::unordered_map<std::string, std::size_t> tf;
  for (const std::string& u : sentence) ++tf[u];

  const double n_docs = static_cast<double>(stats.documents());
  Vector w(static_cast<Eigen::Index>(sentence.size()));
  for (std::size_t i = 0; i < sentence.size(); ++i) {
    const double df = static_cast<double>(stats.document_frequency(sentence[i]));
    // Units unseen by the stats count as df = 0; idf is clamped so a unit
    // never gets less than the +1 floor.
    const double idf = std::max(0.0, std::log((1.0 + n_docs) / (1.0 + df)));
    w[static_cast<Eigen::Index>(i)] =
        static_cast<double>(tf[sentence[i]]) * idf + 1.0;
  }
  return Weights(w / w.sum());
}

}  // namespace otalign
