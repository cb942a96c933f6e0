#include <cmath>
#include <cstdio>
#include <exception>
#include <ostream>

#include "otalign/error.hpp"
#include "otalign/finetune.hpp"
#include "otalign/parallel.hpp"

namespace otalign {

namespace {

struct Job {
  std::vector<SentencePair> pairs;
  std::vector<std::size_t> corpora;
};

// Batches are laid out corpus-major with the same count from every corpus.
std::vector<Job> make_jobs(const Batch& batch,
                           std::span<const ParallelCorpus> corpora, bool mix) {
  std::vector<Job> jobs;
  if (!mix) {
    for (const BatchItem& item : batch) {
      jobs.push_back({{corpora[item.corpus][item.pair]}, {item.corpus}});
    }
    return jobs;
  }
  const std::size_t per_corpus = batch.size() / corpora.size();
  for (std::size_t i = 0; i < per_corpus; ++i) {
    Job job;
    for (std::size_t k = 0; k < corpora.size(); ++k) {
      const BatchItem& item = batch[k * per_corpus + i];
      job.pairs.push_back(corpora[item.corpus][item.pair]);
      job.corpora.push_back(item.corpus);
    }
    jobs.push_back(std::move(job));
  }
  return jobs;
}

}  // namespace

TrainStats train_epoch(EmbeddingModel& model, const EmbeddingModel& initial,
                       AdamOptimizer& optimizer,
                       std::span<const ParallelCorpus> corpora,
                       const FinetuneConfig& cfg, const TrainOptions& opts) {
  cfg.validate();
  if (corpora.empty()) throw InputError("training needs at least one corpus");

  TrainStats stats;
  for (const ParallelCorpus& c : corpora) stats.language_pairs.push_back(c.language_pair());

  const AdamConfig adam{cfg.learning_rate};
  const std::vector<Batch> batches =
      make_batches(corpora, cfg.batch_size, opts.upsample_to, opts.shuffle,
                   cfg.seed + opts.epoch);

  ModelGradients pending = model.zero_gradients();
  std::size_t pending_batches = 0;
  for (std::size_t b = 0; b < batches.size(); ++b) {
    const std::vector<Job> jobs = make_jobs(batches[b], corpora, cfg.mix_languages);
    std::vector<PairLoss> results(jobs.size());
    const auto errors = parallel_for(jobs.size(), opts.threads, [&](std::size_t i) {
      results[i] = jobs[i].pairs.size() == 1
                       ? pair_loss(model, initial, jobs[i].pairs[0].source,
                                   jobs[i].pairs[0].target, cfg)
                       : group_loss(model, initial, jobs[i].pairs, cfg);
    });

    StepRecord rec;
    rec.batch = b;
    rec.mean_divergence.assign(corpora.size(), 0.0);
    std::vector<std::size_t> counted(corpora.size(), 0);
    ModelGradients batch_grads = model.zero_gradients();
    for (std::size_t i = 0; i < jobs.size(); ++i) {
      if (errors[i]) {
        try {
          std::rethrow_exception(errors[i]);
        } catch (const ConvergenceError&) {
          if (!opts.skip_nonconverged) throw;
          ++rec.skipped;
          continue;
        }
      }
      rec.loss += results[i].loss;
      rec.drift += results[i].drift;
      for (std::size_t k : jobs[i].corpora) {
        rec.mean_divergence[k] += results[i].divergence;
        ++counted[k];
      }
      batch_grads.add(results[i].grads);
    }
    for (std::size_t k = 0; k < corpora.size(); ++k) {
      if (counted[k] > 0) rec.mean_divergence[k] /= static_cast<double>(counted[k]);
    }
    rec.grad_norm = batch_grads.norm();
    if (!std::isfinite(rec.loss)) {
      throw ConvergenceError("non-finite loss at batch " + std::to_string(b));
    }

    pending.add(batch_grads);
    if (++pending_batches == cfg.grad_accum_steps) {
      optimizer.step(model, pending, adam);
      pending = model.zero_gradients();
      pending_batches = 0;
    }
    rec.optimizer_step = optimizer.steps();
    stats.steps.push_back(std::move(rec));
  }
  if (pending_batches > 0) {
    optimizer.step(model, pending, adam);
    if (!stats.steps.empty()) stats.steps.back().optimizer_step = optimizer.steps();
  }
  return stats;
}

double mean_divergence(const EmbeddingModel& model,
                       std::span<const SentencePair> pairs,
                       const SinkhornConfig& cfg, std::size_t threads) {
  if (pairs.empty()) throw InputError("no pairs to evaluate");
  std::vector<double> values(pairs.size());
  const auto errors = parallel_for(pairs.size(), threads, [&](std::size_t i) {
    const DivergenceResult r = sinkhorn_divergence(
        PointCloud(model.forward(pairs[i].source)),
        PointCloud(model.forward(pairs[i].target)),
        uniform_weights(pairs[i].source.size()),
        uniform_weights(pairs[i].target.size()), cfg);
    if (!r.converged) throw ConvergenceError("evaluation solve did not converge");
    values[i] = r.s_eps;
  });
  double total = 0.0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (errors[i]) std::rethrow_exception(errors[i]);
    total += values[i];
  }
  return total / static_cast<double>(pairs.size());
}

void TrainStats::write_csv(std::ostream& out, bool header) const {
  if (header) {
    out << "step,optimizer_step,loss";
    for (const std::string& lang : language_pairs) out << ",s_eps_" << lang;
    out << ",drift,grad_norm,skipped\n";
  }
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  for (const StepRecord& r : steps) {
    out << r.batch << ',' << r.optimizer_step << ',' << num(r.loss);
    for (double s : r.mean_divergence) out << ',' << num(s);
    out << ',' << num(r.drift) << ',' << num(r.grad_norm) << ',' << r.skipped
        << '\n';
  }
}

}  // namespace otalign
