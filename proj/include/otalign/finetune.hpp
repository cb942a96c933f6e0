#pragma once

// Toy contextual embedding model trained to align parallel sentences by
// minimizing the Sinkhorn divergence plus a target drift penalty.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "otalign/corpus.hpp"
#include "otalign/ot.hpp"

namespace otalign {

struct ModelGradients {
  Matrix table;
  Matrix mixer;  // empty when the model has no mixer

  void add(const ModelGradients& other);
  double norm() const;
};

// Row j of the output is table[u_j] + mixer * mean(table[u_k] for |k - j| <= r),
// the mean taken over in-sentence positions only. Row 0 of the table is the
// reserved unknown-unit row.
class EmbeddingModel {
 public:
  static constexpr const char* kUnknown = "<unk>";

  // Vocabulary entries must be unique and must not contain kUnknown.
  EmbeddingModel(std::vector<std::string> vocabulary, Matrix table,
                 bool with_mixer, int window);
  EmbeddingModel(std::vector<std::string> vocabulary, Matrix table,
                 Matrix mixer, int window);

  // Gaussian table entries with standard deviation `scale`, mixer zero.
  static EmbeddingModel random(std::vector<std::string> vocabulary, int dim,
                               double scale, bool with_mixer, int window,
                               std::uint64_t seed);

  std::size_t index(const std::string& unit) const;
  std::vector<std::size_t> indices(std::span<const std::string> units) const;

  Matrix forward(std::span<const std::string> units) const;
  Matrix forward(std::span<const std::size_t> ids) const;

  // Accumulates d(loss)/d(parameters) given d(loss)/d(output) for `ids`.
  void backward(std::span<const std::size_t> ids, const Matrix& grad_output,
                ModelGradients& grads) const;

  ModelGradients zero_gradients() const;

  // Full vocabulary including kUnknown at position 0.
  const std::vector<std::string>& vocabulary() const { return vocabulary_; }
  const Matrix& table() const { return table_; }
  Matrix& table() { return table_; }
  const Matrix& mixer() const { return mixer_; }
  Matrix& mixer() { return mixer_; }
  bool has_mixer() const { return mixer_.size() > 0; }
  int window() const { return window_; }
  int dim() const { return static_cast<int>(table_.cols()); }

 private:
  void validate() const;

  std::vector<std::string> vocabulary_;
  std::unordered_map<std::string, std::size_t> lookup_;
  Matrix table_;
  Matrix mixer_;
  int window_ = 0;
};

// Sorted unique units of both sides of every pair, for building a model.
std::vector<std::string> collect_vocabulary(
    std::span<const ParallelCorpus> corpora);

// Sum over target sentences t and positions j of |c(j,t) - c0(j,t)|^2.
double drift(const EmbeddingModel& model, const EmbeddingModel& initial,
             std::span<const Units> target_sentences);

struct AdamConfig {
  double learning_rate = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_hat = 1e-8;
};

struct AdamMoments {
  Matrix m;
  Matrix v;
};

// One bias-corrected update of `params`; `step` is the 1-based update count.
void adam_step(AdamMoments& moments, std::int64_t step, Matrix& params,
               const Matrix& grads, const AdamConfig& cfg);

class AdamOptimizer {
 public:
  explicit AdamOptimizer(const EmbeddingModel& model);
  AdamOptimizer(AdamMoments table, AdamMoments mixer, std::int64_t steps);

  void step(EmbeddingModel& model, const ModelGradients& grads,
            const AdamConfig& cfg);

  std::int64_t steps() const { return steps_; }
  const AdamMoments& table_moments() const { return table_; }
  const AdamMoments& mixer_moments() const { return mixer_; }

 private:
  AdamMoments table_;
  AdamMoments mixer_;
  std::int64_t steps_ = 0;
};

struct FinetuneConfig {
  double lambda = 1.0;
  double learning_rate = 5e-5;
  std::size_t batch_size = 24;
  std::size_t grad_accum_steps = 2;
  std::size_t epochs = 1;
  bool mix_languages = false;
  std::uint64_t seed = 0;
  SinkhornConfig sinkhorn;

  void validate() const;
};

struct PairLoss {
  double loss = 0.0;
  double divergence = 0.0;
  double drift = 0.0;
  ModelGradients grads;
};

// S_eps(source, target) with uniform weights + lambda * drift over the target.
// Throws ConvergenceError when any of the three solves did not converge.
PairLoss pair_loss(const EmbeddingModel& model, const EmbeddingModel& initial,
                   std::span<const std::string> source,
                   std::span<const std::string> target,
                   const FinetuneConfig& cfg);

// One OT problem over the concatenated sources and concatenated targets of
// several pairs. The divergence is scaled by the number of pairs so the loss
// stays on the scale of the per-pair sum; drift is summed per sentence.
PairLoss group_loss(const EmbeddingModel& model, const EmbeddingModel& initial,
                    std::span<const SentencePair> pairs,
                    const FinetuneConfig& cfg);

struct StepRecord {
  std::size_t batch = 0;
  std::int64_t optimizer_step = 0;
  double loss = 0.0;
  std::vector<double> mean_divergence;  // one entry per corpus
  double drift = 0.0;
  double grad_norm = 0.0;
  std::size_t skipped = 0;
};

struct TrainStats {
  std::vector<std::string> language_pairs;
  std::vector<StepRecord> steps;

  void write_csv(std::ostream& out, bool header = true) const;
};

struct TrainOptions {
  std::size_t upsample_to = 0;
  bool shuffle = true;
  std::size_t threads = 1;
  bool skip_nonconverged = false;
  std::size_t epoch = 0;  // mixed into the batching seed
};

// Per-pair (or per-group, in mixed mode) losses are computed concurrently
// against the parameters as they stand at the start of the batch and summed
// in batch order. Adam updates every grad_accum_steps batches; any remainder
// is applied at the end of the epoch.
TrainStats train_epoch(EmbeddingModel& model, const EmbeddingModel& initial,
                       AdamOptimizer& optimizer,
                       std::span<const ParallelCorpus> corpora,
                       const FinetuneConfig& cfg, const TrainOptions& opts);

// Mean per-pair S_eps under the model with uniform weights.
double mean_divergence(const EmbeddingModel& model,
                       std::span<const SentencePair> pairs,
                       const SinkhornConfig& cfg, std::size_t threads = 1);

// Single file: "OTCKP" 0x01 | u32 manifest length | JSON manifest |
// vocabulary (u32 length + bytes each) | tensors as little-endian float64.
// Written to a sibling temporary and renamed into place.
struct Checkpoint {
  EmbeddingModel model;
  AdamOptimizer optimizer;
};

void save_checkpoint(const std::filesystem::path& path,
                     const EmbeddingModel& model,
                     const AdamOptimizer& optimizer);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace otalign
