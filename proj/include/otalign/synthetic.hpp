#pragma once

// Synthetic parallel corpora with a planted translation dictionary, used by
// the training tests and the `synth` CLI subcommand.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "otalign/corpus.hpp"
#include "otalign/finetune.hpp"

namespace otalign {

struct SyntheticConfig {
  std::size_t train_pairs = 500;
  std::size_t heldout_pairs = 100;
  std::size_t vocab = 200;  // source units; targets have the same count
  int dim = 16;
  std::size_t min_length = 3;
  std::size_t max_length = 8;
  double scale = 0.05;    // per-coordinate std of source rows
  double rotation = 0.3;  // radians, applied in every plane of a random basis
  double noise = 0.002;   // per-coordinate std added to target rows
  std::uint64_t seed = 0;
};

struct SyntheticTask {
  std::vector<ParallelCorpus> train;
  std::vector<std::vector<SentencePair>> heldout;  // one list per corpus
  std::map<std::string, std::string> dictionary;   // source unit -> target unit
  EmbeddingModel initial;
};

// Source unit "s<i>" translates to "t<i>"; target sentences hold the
// translations in a shuffled order. Target rows start at R * source row plus
// noise for a rotation R close to the identity.
SyntheticTask rotated_bijection(const SyntheticConfig& cfg);

// Two language pairs sharing one target vocabulary. "xa-en" is one-to-one;
// "xb-en" splits every target word into two source units, so its sentences are
// twice as long as their translations. Each language sits at its own rotation
// of the target space.
SyntheticTask split_morphology_pair(const SyntheticConfig& cfg);

// Fraction of argmax-row links (taken from the xy transport plan) that agree
// with the dictionary.
double dictionary_precision(const EmbeddingModel& model,
                            std::span<const SentencePair> pairs,
                            const std::map<std::string, std::string>& dictionary,
                            const SinkhornConfig& cfg);

}  // namespace otalign
