#include <algorithm>
#include <random>

#include "otalign/corpus.hpp"
#include "otalign/error.hpp"

namespace otalign {

namespace {

// std::uniform_int_distribution is implementation-defined; batches must be
// identical across standard libraries for a given seed.
std::size_t draw_below(std::mt19937_64& rng, std::size_t bound) {
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
  std::uint64_t x = rng();
  while (x >= limit) x = rng();
  return static_cast<std::size_t>(x % bound);
}

void shuffle_in_place(std::vector<std::size_t>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[draw_below(rng, i)]);
  }
}

}  // namespace

std::vector<Batch> make_batches(std::span<const ParallelCorpus> corpora,
                                std::size_t batch_size,
                                std::size_t upsample_to, bool shuffle,
                                std::uint64_t seed) {
  if (batch_size == 0) throw InputError("batch size must be at least 1");
  if (corpora.empty()) throw InputError("no corpora to batch");

  std::size_t target = upsample_to;
  for (const ParallelCorpus& c : corpora) target = std::max(target, c.size());

  std::mt19937_64 rng(seed);
  std::vector<std::vector<std::size_t>> order(corpora.size());
  for (std::size_t k = 0; k < corpora.size(); ++k) {
    order[k].resize(target);
    for (std::size_t i = 0; i < target; ++i) order[k][i] = i % corpora[k].size();
    if (shuffle) shuffle_in_place(order[k], rng);
  }

  const std::size_t share = std::max<std::size_t>(1, batch_size / corpora.size());
  std::vector<Batch> batches;
  for (std::size_t start = 0; start < target; start += share) {
    const std::size_t stop = std::min(target, start + share);
    Batch batch;
    for (std::size_t k = 0; k < corpora.size(); ++k) {
      for (std::size_t i = start; i < stop; ++i) batch.push_back({k, order[k][i]});
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

}  // namespace otalign
