#pragma once

// Parallel corpora, the binary embedding file format, batching and unit
// weight initialization.

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "otalign/ot.hpp"

namespace otalign {

using Units = std::vector<std::string>;

struct SentencePair {
  Units source;
  Units target;

  friend bool operator==(const SentencePair&, const SentencePair&) = default;
};

// Sentence pairs for one language pair, tagged "xx-en". Both sides of every
// pair are non-empty and there is at least one pair.
class ParallelCorpus {
 public:
  ParallelCorpus(std::string language_pair, std::vector<SentencePair> pairs);

  const std::string& language_pair() const { return language_pair_; }
  const std::vector<SentencePair>& pairs() const { return pairs_; }
  std::size_t size() const { return pairs_.size(); }
  const SentencePair& operator[](std::size_t i) const { return pairs_[i]; }

 private:
  std::string language_pair_;
  std::vector<SentencePair> pairs_;
};

// One JSON object per line: {"src": [...], "tgt": [...], "lang": "xx-en"}.
// Errors carry the 1-based line number.
ParallelCorpus read_parallel(std::istream& in, std::string_view origin = "");
ParallelCorpus load_parallel(const std::filesystem::path& path);
void write_parallel(std::ostream& out, const ParallelCorpus& corpus);
void write_parallel(const std::filesystem::path& path,
                    const ParallelCorpus& corpus);

enum class Granularity : std::uint32_t { kWord = 0, kSubword = 1 };

std::string_view to_string(Granularity g);
Granularity parse_granularity(std::string_view name);

using FloatMatrix =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct EmbeddedSentence {
  Units units;
  FloatMatrix vectors;  // one row per unit

  PointCloud cloud() const;
};

struct EmbeddingFile {
  Granularity granularity = Granularity::kWord;
  std::uint32_t dim = 0;
  std::vector<EmbeddedSentence> sentences;
};

// Layout, all integers little-endian uint32:
//   "OTEMB" 0x01 | granularity | d | sentence count
//   per sentence: n | n x (byte length, UTF-8 bytes) | n*d float32 row-major
// Reading throws FormatError on bad magic/version, truncation, trailing
// bytes or inconsistent shapes; nothing is returned on failure.
EmbeddingFile read_embeddings(std::istream& in);
EmbeddingFile load_embeddings(const std::filesystem::path& path);
void write_embeddings(std::ostream& out, const EmbeddingFile& file);
void write_embeddings(const std::filesystem::path& path,
                      const EmbeddingFile& file);

// Position of a sentence pair within the list of corpora given to
// make_batches.
struct BatchItem {
  std::size_t corpus = 0;
  std::size_t pair = 0;

  friend bool operator==(const BatchItem&, const BatchItem&) = default;
};

using Batch = std::vector<BatchItem>;

// Every corpus is repeated cyclically up to max(upsample_to, largest corpus)
// pairs, optionally shuffled, then each batch takes an equal share
// (batch_size / number of corpora, at least 1) from every corpus. Over the
// returned sequence each upsampled pair appears exactly once.
std::vector<Batch> make_batches(std::span<const ParallelCorpus> corpora,
                                std::size_t batch_size,
                                std::size_t upsample_to, bool shuffle,
                                std::uint64_t seed);

Weights uniform_weights(std::size_t n);

// Document frequencies with one document per sentence.
class CorpusStats {
 public:
  void add_sentence(std::span<const std::string> units);

  std::size_t documents() const { return documents_; }
  std::size_t document_frequency(const std::string& unit) const;

 private:
  std::size_t documents_ = 0;
  std::unordered_map<std::string, std::size_t> df_;
};

// w_i proportional to tf(u_i) * log((1 + N) / (1 + df(u_i))) + 1, where tf
// counts u_i within the sentence; normalized to sum to one.
Weights tfidf_weights(const CorpusStats& stats,
                      std::span<const std::string> sentence);

}  // namespace otalign
