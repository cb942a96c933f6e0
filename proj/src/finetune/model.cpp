#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "otalign/error.hpp"
#include "otalign/finetune.hpp"

namespace otalign {

void ModelGradients::add(const ModelGradients& other) {
  table += other.table;
  if (mixer.size() > 0) mixer += other.mixer;
}

double ModelGradients::norm() const {
  return std::sqrt(table.squaredNorm() + mixer.squaredNorm());
}

EmbeddingModel::EmbeddingModel(std::vector<std::string> vocabulary,
                               Matrix table, bool with_mixer, int window)
    : EmbeddingModel(std::move(vocabulary), table,
                     with_mixer ? Matrix::Zero(table.cols(), table.cols())
                                : Matrix(),
                     window) {}

EmbeddingModel::EmbeddingModel(std::vector<std::string> vocabulary,
                               Matrix table, Matrix mixer, int window)
    : table_(std::move(table)), mixer_(std::move(mixer)), window_(window) {
  vocabulary_.reserve(vocabulary.size() + 1);
  vocabulary_.push_back(kUnknown);
  for (std::string& u : vocabulary) {
    if (u == kUnknown) throw InputError("vocabulary contains the unknown marker");
    vocabulary_.push_back(std::move(u));
  }
  for (std::size_t i = 0; i < vocabulary_.size(); ++i) {
    if (!lookup_.emplace(vocabulary_[i], i).second) {
      throw InputError("duplicate vocabulary entry '" + vocabulary_[i] + "'");
    }
  }
  validate();
}

void EmbeddingModel::validate() const {
  if (table_.cols() < 1) throw InputError("embedding dimension must be >= 1");
  if (static_cast<std::size_t>(table_.rows()) != vocabulary_.size()) {
    throw InputError("table has " + std::to_string(table_.rows()) +
                     " rows for a vocabulary of " +
                     std::to_string(vocabulary_.size()) + " (with unknown)");
  }
  if (mixer_.size() > 0 &&
      (mixer_.rows() != table_.cols() || mixer_.cols() != table_.cols())) {
    throw InputError("mixer must be d x d");
  }
  if (window_ < 0) throw InputError("window radius must be >= 0");
  if (!table_.allFinite() || !mixer_.allFinite()) {
    throw InputError("model parameters must be finite");
  }
}

EmbeddingModel EmbeddingModel::random(std::vector<std::string> vocabulary,
                                      int dim, double scale, bool with_mixer,
                                      int window, std::uint64_t seed) {
  if (dim < 1) throw InputError("embedding dimension must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, scale);
  Matrix table(static_cast<Eigen::Index>(vocabulary.size() + 1), dim);
  for (Eigen::Index i = 0; i < table.rows(); ++i) {
    for (Eigen::Index k = 0; k < table.cols(); ++k) table(i, k) = g(rng);
  }
  return EmbeddingModel(std::move(vocabulary), std::move(table), with_mixer,
                        window);
}

std::size_t EmbeddingModel::index(const std::string& unit) const {
  const auto it = lookup_.find(unit);
  return it == lookup_.end() ? 0 : it->second;
}

std::vector<std::size_t> EmbeddingModel::indices(
    std::span<const std::string> units) const {
  std::vector<std::size_t> ids;
  ids.reserve(units.size());
  for (const std::string& u : units) ids.push_back(index(u));
  return ids;
}

Matrix EmbeddingModel::forward(std::span<const std::string> units) const {
  const std::vector<std::size_t> ids = indices(units);
  return forward(ids);
}

Matrix EmbeddingModel::forward(std::span<const std::size_t> ids) const {
  const auto n = static_cast<Eigen::Index>(ids.size());
  Matrix out(n, table_.cols());
  for (Eigen::Index j = 0; j < n; ++j) out.row(j) = table_.row(ids[j]);
  if (!has_mixer()) return out;

  Matrix means = Matrix::Zero(n, table_.cols());
  for (Eigen::Index j = 0; j < n; ++j) {
    const Eigen::Index lo = std::max<Eigen::Index>(0, j - window_);
    const Eigen::Index hi = std::min<Eigen::Index>(n - 1, j + window_);
    for (Eigen::Index k = lo; k <= hi; ++k) means.row(j) += table_.row(ids[k]);
    means.row(j) /= static_cast<double>(hi - lo + 1);
  }
  out.noalias() += means * mixer_.transpose();
  return out;
}

void EmbeddingModel::backward(std::span<const std::size_t> ids,
                              const Matrix& grad_output,
                              ModelGradients& grads) const {
  const auto n = static_cast<Eigen::Index>(ids.size());
  for (Eigen::Index j = 0; j < n; ++j) grads.table.row(ids[j]) += grad_output.row(j);
  if (!has_mixer()) return;

  // Through the mixer: out_j += M m_j gives dM += g_j m_j^T and every window
  // member k of j receives M^T g_j / |window_j|.
  const Matrix pulled = grad_output * mixer_;
  for (Eigen::Index j = 0; j < n; ++j) {
    const Eigen::Index lo = std::max<Eigen::Index>(0, j - window_);
    const Eigen::Index hi = std::min<Eigen::Index>(n - 1, j + window_);
    const double share = 1.0 / static_cast<double>(hi - lo + 1);
    Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(table_.cols());
    for (Eigen::Index k = lo; k <= hi; ++k) {
      mean += table_.row(ids[k]);
      grads.table.row(ids[k]) += share * pulled.row(j);
    }
    grads.mixer.noalias() += grad_output.row(j).transpose() * (share * mean);
  }
}

ModelGradients EmbeddingModel::zero_gradients() const {
  ModelGradients g;
  g.table = Matrix::Zero(table_.rows(), table_.cols());
  if (has_mixer()) g.mixer = Matrix::Zero(mixer_.rows(), mixer_.cols());
  return g;
}

std::vector<std::string> collect_vocabulary(
    std::span<const ParallelCorpus> corpora) {
  std::set<std::string> units;
  for (const ParallelCorpus& c : corpora) {
    for (const SentencePair& p : c.pairs()) {
      units.insert(p.source.begin(), p.source.end());
      units.insert(p.target.begin(), p.target.end());
    }
  }
  units.erase(EmbeddingModel::kUnknown);
  return {units.begin(), units.end()};
}

double drift(const EmbeddingModel& model, const EmbeddingModel& initial,
             std::span<const Units> target_sentences) {
  double total = 0.0;
  for (const Units& t : target_sentences) {
    total += (model.forward(t) - initial.forward(t)).squaredNorm();
  }
  return total;
}

}  // namespace otalign
