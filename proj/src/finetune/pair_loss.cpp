#include <vector>

#include "otalign/error.hpp"
#include "otalign/finetune.hpp"

namespace otalign {

namespace {

PairLoss assemble(const EmbeddingModel& model, const EmbeddingModel& initial,
                  const std::vector<std::size_t>& src_ids,
                  const std::vector<std::size_t>& tgt_ids,
                  std::span<const Units> targets, double divergence_scale,
                  const FinetuneConfig& cfg) {
  const Matrix x = model.forward(src_ids);
  const Matrix y = model.forward(tgt_ids);
  const DivergenceGradient dg = divergence_gradient(
      PointCloud(x), PointCloud(y), uniform_weights(src_ids.size()),
      uniform_weights(tgt_ids.size()), cfg.sinkhorn);

  Matrix y0(y.rows(), y.cols());
  Eigen::Index row = 0;
  for (const Units& t : targets) {
    const Matrix part = initial.forward(t);
    y0.middleRows(row, part.rows()) = part;
    row += part.rows();
  }
  const Matrix shift = y - y0;

  PairLoss out;
  out.divergence = dg.divergence.s_eps;
  out.drift = shift.squaredNorm();
  out.loss = divergence_scale * out.divergence + cfg.lambda * out.drift;
  out.grads = model.zero_gradients();
  model.backward(src_ids, divergence_scale * dg.grad_x, out.grads);
  model.backward(tgt_ids, divergence_scale * dg.grad_y + 2.0 * cfg.lambda * shift,
                 out.grads);
  return out;
}

}  // namespace

void FinetuneConfig::validate() const {
  if (!(lambda >= 0.0)) throw InputError("lambda must be >= 0");
  if (!(learning_rate > 0.0)) throw InputError("learning rate must be > 0");
  if (batch_size < 1) throw InputError("batch size must be >= 1");
  if (grad_accum_steps < 1) throw InputError("gradient accumulation must be >= 1");
  sinkhorn.validate();
}

PairLoss pair_loss(const EmbeddingModel& model, const EmbeddingModel& initial,
                   std::span<const std::string> source,
                   std::span<const std::string> target,
                   const FinetuneConfig& cfg) {
  if (source.empty() || target.empty()) {
    throw InputError("pair_loss needs non-empty sentences");
  }
  const Units target_units(target.begin(), target.end());
  return assemble(model, initial, model.indices(source), model.indices(target),
                  std::span<const Units>(&target_units, 1), 1.0, cfg);
}

PairLoss group_loss(const EmbeddingModel& model, const EmbeddingModel& initial,
                    std::span<const SentencePair> pairs,
                    const FinetuneConfig& cfg) {
  if (pairs.empty()) throw InputError("group_loss needs at least one pair");
  std::vector<std::size_t> src_ids, tgt_ids;
  std::vector<Units> targets;
  for (const SentencePair& p : pairs) {
    if (p.source.empty() || p.target.empty()) {
      throw InputError("group_loss needs non-empty sentences");
    }
    for (std::size_t id : model.indices(p.source)) src_ids.push_back(id);
    for (std::size_t id : model.indices(p.target)) tgt_ids.push_back(id);
    targets.push_back(p.target);
  }
  return assemble(model, initial, src_ids, tgt_ids, targets,
                  static_cast<double>(pairs.size()), cfg);
}

}  // namespace otalign
