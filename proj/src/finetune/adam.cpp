#include <cmath>

#include "otalign/error.hpp"
#include "otalign/finetune.hpp"

namespace otalign {

void adam_step(AdamMoments& moments, std::int64_t step, Matrix& params,
               const Matrix& grads, const AdamConfig& cfg) {
  if (step < 1) throw InputError("adam step count is 1-based");
  if (grads.rows() != params.rows() || grads.cols() != params.cols() ||
      moments.m.rows() != params.rows() || moments.m.cols() != params.cols()) {
    throw InputError("adam shapes do not match");
  }
  moments.m = cfg.beta1 * moments.m + (1.0 - cfg.beta1) * grads;
  moments.v = cfg.beta2 * moments.v + (1.0 - cfg.beta2) * grads.cwiseAbs2();
  const double t = static_cast<double>(step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  params.array() -= cfg.learning_rate * (moments.m.array() / c1) /
                    ((moments.v.array() / c2).sqrt() + cfg.eps_hat);
}

AdamOptimizer::AdamOptimizer(const EmbeddingModel& model) {
  const Matrix& t = model.table();
  table_ = {Matrix::Zero(t.rows(), t.cols()), Matrix::Zero(t.rows(), t.cols())};
  if (model.has_mixer()) {
    const Matrix& m = model.mixer();
    mixer_ = {Matrix::Zero(m.rows(), m.cols()), Matrix::Zero(m.rows(), m.cols())};
  }
}

AdamOptimizer::AdamOptimizer(AdamMoments table, AdamMoments mixer,
                             std::int64_t steps)
    : table_(std::move(table)), mixer_(std::move(mixer)), steps_(steps) {
  if (steps_ < 0) throw InputError("negative adam step count");
}

void AdamOptimizer::step(EmbeddingModel& model, const ModelGradients& grads,
                         const AdamConfig& cfg) {
  ++steps_;
  adam_step(table_, steps_, model.table(), grads.table, cfg);
  if (model.has_mixer()) adam_step(mixer_, steps_, model.mixer(), grads.mixer, cfg);
}

}  // namespace otalign
