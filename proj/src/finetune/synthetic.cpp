#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <Eigen/QR>

#include "otalign/alignment.hpp"
#include "otalign/error.hpp"
#include "otalign/synthetic.hpp"

namespace otalign {

namespace {

Matrix random_rotation(std::mt19937_64& rng, int dim, double angle) {
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix a(dim, dim);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = g(rng);
  const Matrix q = Eigen::HouseholderQR<Matrix>(a).householderQ();
  Matrix block = Matrix::Identity(dim, dim);
  for (int k = 0; k + 1 < dim; k += 2) {
    block(k, k) = block(k + 1, k + 1) = std::cos(angle);
    block(k, k + 1) = -std::sin(angle);
    block(k + 1, k) = std::sin(angle);
  }
  return q * block * q.transpose();
}

Matrix gaussian_rows(std::mt19937_64& rng, std::size_t rows, int dim,
                     double scale) {
  std::normal_distribution<double> g(0.0, scale);
  Matrix m(static_cast<Eigen::Index>(rows), dim);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

// Distinct concept ids for one sentence.
std::vector<std::size_t> draw_concepts(std::mt19937_64& rng,
                                       const SyntheticConfig& cfg) {
  std::uniform_int_distribution<std::size_t> len(cfg.min_length, cfg.max_length);
  std::vector<std::size_t> pool(cfg.vocab);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  const std::size_t n = std::min(len(rng), cfg.vocab);
  for (std::size_t i = 0; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, cfg.vocab - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(n);
  return pool;
}

std::string target_unit(std::size_t i) { return "t" + std::to_string(i); }

void check(const SyntheticConfig& cfg) {
  if (cfg.vocab < 1 || cfg.dim < 1 || cfg.min_length < 1 ||
      cfg.max_length < cfg.min_length || cfg.train_pairs < 1) {
    throw InputError("invalid synthetic corpus configuration");
  }
}

}  // namespace

SyntheticTask rotated_bijection(const SyntheticConfig& cfg) {
  check(cfg);
  std::mt19937_64 rng(cfg.seed);
  const Matrix rotation = random_rotation(rng, cfg.dim, cfg.rotation);
  const Matrix source = gaussian_rows(rng, cfg.vocab, cfg.dim, cfg.scale);
  const Matrix target = source * rotation.transpose() +
                        gaussian_rows(rng, cfg.vocab, cfg.dim, cfg.noise);

  std::map<std::string, std::string> dictionary;
  std::vector<std::string> vocabulary;
  for (std::size_t i = 0; i < cfg.vocab; ++i) {
    dictionary["s" + std::to_string(i)] = target_unit(i);
    vocabulary.push_back("s" + std::to_string(i));
  }
  for (std::size_t i = 0; i < cfg.vocab; ++i) vocabulary.push_back(target_unit(i));

  Matrix table(static_cast<Eigen::Index>(2 * cfg.vocab + 1), cfg.dim);
  table.row(0).setZero();
  table.middleRows(1, source.rows()) = source;
  table.middleRows(1 + source.rows(), target.rows()) = target;

  auto make_pairs = [&](std::size_t count) {
    std::vector<SentencePair> pairs;
    for (std::size_t p = 0; p < count; ++p) {
      std::vector<std::size_t> concepts = draw_concepts(rng, cfg);
      SentencePair pair;
      for (std::size_t c : concepts) pair.source.push_back("s" + std::to_string(c));
      std::shuffle(concepts.begin(), concepts.end(), rng);
      for (std::size_t c : concepts) pair.target.push_back(target_unit(c));
      pairs.push_back(std::move(pair));
    }
    return pairs;
  };
  std::vector<SentencePair> train = make_pairs(cfg.train_pairs);
  std::vector<SentencePair> heldout = make_pairs(cfg.heldout_pairs);

  return SyntheticTask{{ParallelCorpus("sx-en", std::move(train))},
                       {std::move(heldout)},
                       std::move(dictionary),
                       EmbeddingModel(std::move(vocabulary), std::move(table),
                                      false, 0)};
}

SyntheticTask split_morphology_pair(const SyntheticConfig& cfg) {
  check(cfg);
  std::mt19937_64 rng(cfg.seed);
  const Matrix target = gaussian_rows(rng, cfg.vocab, cfg.dim, cfg.scale);
  const Matrix rot_a = random_rotation(rng, cfg.dim, cfg.rotation);
  const Matrix rot_b = random_rotation(rng, cfg.dim, cfg.rotation);

  std::vector<std::string> vocabulary;
  std::vector<Matrix> blocks;
  std::map<std::string, std::string> dictionary;
  for (std::size_t i = 0; i < cfg.vocab; ++i) {
    vocabulary.push_back("a" + std::to_string(i));
    dictionary["a" + std::to_string(i)] = target_unit(i);
  }
  blocks.push_back(target * rot_a.transpose() +
                   gaussian_rows(rng, cfg.vocab, cfg.dim, cfg.noise));
  for (const char* part : {"p", "q"}) {
    for (std::size_t i = 0; i < cfg.vocab; ++i) {
      const std::string unit = "b" + std::to_string(i) + part;
      vocabulary.push_back(unit);
      dictionary[unit] = target_unit(i);
    }
    blocks.push_back(target * rot_b.transpose() +
                     gaussian_rows(rng, cfg.vocab, cfg.dim, cfg.noise));
  }
  for (std::size_t i = 0; i < cfg.vocab; ++i) vocabulary.push_back(target_unit(i));
  blocks.push_back(target);

  Matrix table(static_cast<Eigen::Index>(4 * cfg.vocab + 1), cfg.dim);
  table.row(0).setZero();
  Eigen::Index row = 1;
  for (const Matrix& b : blocks) {
    table.middleRows(row, b.rows()) = b;
    row += b.rows();
  }

  auto make_pairs = [&](std::size_t count, bool split) {
    std::vector<SentencePair> pairs;
    for (std::size_t p = 0; p < count; ++p) {
      std::vector<std::size_t> concepts = draw_concepts(rng, cfg);
      SentencePair pair;
      for (std::size_t c : concepts) {
        if (split) {
          pair.source.push_back("b" + std::to_string(c) + "p");
          pair.source.push_back("b" + std::to_string(c) + "q");
        } else {
          pair.source.push_back("a" + std::to_string(c));
        }
      }
      std::shuffle(concepts.begin(), concepts.end(), rng);
      for (std::size_t c : concepts) pair.target.push_back(target_unit(c));
      pairs.push_back(std::move(pair));
    }
    return pairs;
  };
  std::vector<SentencePair> train_a = make_pairs(cfg.train_pairs, false);
  std::vector<SentencePair> train_b = make_pairs(cfg.train_pairs, true);
  std::vector<SentencePair> held_a = make_pairs(cfg.heldout_pairs, false);
  std::vector<SentencePair> held_b = make_pairs(cfg.heldout_pairs, true);

  return SyntheticTask{
      {ParallelCorpus("xa-en", std::move(train_a)),
       ParallelCorpus("xb-en", std::move(train_b))},
      {std::move(held_a), std::move(held_b)},
      std::move(dictionary),
      EmbeddingModel(std::move(vocabulary), std::move(table), false, 0)};
}

double dictionary_precision(const EmbeddingModel& model,
                            std::span<const SentencePair> pairs,
                            const std::map<std::string, std::string>& dictionary,
                            const SinkhornConfig& cfg) {
  std::size_t links = 0, correct = 0;
  for (const SentencePair& p : pairs) {
    const PointCloud x(model.forward(p.source));
    const PointCloud y(model.forward(p.target));
    const TransportResult t = sinkhorn_solve(
        build_cost_matrix(x, y, cfg.metric), uniform_weights(p.source.size()),
        uniform_weights(p.target.size()), cfg);
    for (const auto& [i, j] : extract_hard(t.plan, HardMode::kArgmaxRow).pairs()) {
      ++links;
      const auto it = dictionary.find(p.source[static_cast<std::size_t>(i)]);
      if (it != dictionary.end() &&
          it->second == p.target[static_cast<std::size_t>(j)]) {
        ++correct;
      }
    }
  }
  if (links == 0) throw InputError("no links to score");
  return static_cast<double>(correct) / static_cast<double>(links);
}

}  // namespace otalign
