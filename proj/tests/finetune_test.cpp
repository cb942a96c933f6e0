#include "otalign/error.hpp"
#include "otalign/finetune.hpp"
#include "otalign/synthetic.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "oracles.hpp"

namespace otalign {
namespace {

EmbeddingModel small_model(bool mixer, int window, std::uint64_t seed) {
  std::vector<std::string> vocab{"a", "b", "c", "x", "y", "z"};
  EmbeddingModel m = EmbeddingModel::random(vocab, 3, 0.5, mixer, window, seed);
  if (mixer) {
    std::mt19937_64 rng(seed + 100);
    m.mixer() = oracle::gaussian_matrix(rng, 3, 3, 0.3);
  }
  return m;
}

FinetuneConfig tight_config(double lambda) {
  FinetuneConfig cfg;
  cfg.lambda = lambda;
  cfg.sinkhorn.tolerance = 1e-10;
  return cfg;
}

TEST(ForwardTest, PlainLookup) {
  const EmbeddingModel m = small_model(false, 0, 1);
  const Units s{"b"};
  EXPECT_EQ(m.forward(s), m.table().row(m.index("b")));
}

TEST(ForwardTest, ZeroMixerIsPlainLookup) {
  EmbeddingModel m = small_model(true, 2, 2);
  m.mixer().setZero();
  const Units s{"a", "c", "b"};
  Matrix expected(3, 3);
  expected << m.table().row(m.index("a")), m.table().row(m.index("c")),
      m.table().row(m.index("b"));
  EXPECT_EQ(m.forward(s), expected);
}

TEST(ForwardTest, IdentityMixerWindowZeroDoubles) {
  EmbeddingModel m = small_model(true, 0, 3);
  m.mixer().setIdentity();
  const Units s{"a", "z"};
  const Matrix out = m.forward(s);
  EXPECT_EQ(out.row(0), 2.0 * m.table().row(m.index("a")));
  EXPECT_EQ(out.row(1), 2.0 * m.table().row(m.index("z")));
}

TEST(ForwardTest, WindowMeanByHand) {
  EmbeddingModel m = small_model(true, 1, 4);
  const Units s{"a", "b", "c"};
  const Matrix& t = m.table();
  const Eigen::RowVectorXd ta = t.row(m.index("a")), tb = t.row(m.index("b")),
                           tc = t.row(m.index("c"));
  const Matrix& mix = m.mixer();
  const Matrix out = m.forward(s);
  const Eigen::RowVectorXd mean1 = (ta + tb + tc) / 3.0;
  const Eigen::RowVectorXd mean2 = (tb + tc) / 2.0;
  EXPECT_LT((out.row(1) - (tb + (mix * mean1.transpose()).transpose())).norm(),
            1e-14);
  EXPECT_LT((out.row(2) - (tc + (mix * mean2.transpose()).transpose())).norm(),
            1e-14);
}

TEST(ForwardTest, UnknownUnitsUseReservedRow) {
  const EmbeddingModel m = small_model(false, 0, 5);
  const Units s{"never-seen"};
  EXPECT_EQ(m.index("never-seen"), 0u);
  EXPECT_EQ(m.forward(s), m.table().row(0));
  EXPECT_EQ(m.vocabulary().front(), EmbeddingModel::kUnknown);
}

TEST(ModelTest, RejectsBadShapes) {
  EXPECT_THROW(EmbeddingModel({"a"}, Matrix::Zero(3, 2), false, 0), InputError);
  EXPECT_THROW(EmbeddingModel({"a", "a"}, Matrix::Zero(3, 2), false, 0),
               InputError);
  EXPECT_THROW(EmbeddingModel({"a"}, Matrix::Zero(2, 2), Matrix::Zero(3, 3), 0),
               InputError);
  EXPECT_THROW(EmbeddingModel({"a"}, Matrix::Zero(2, 2), false, -1), InputError);
}

TEST(DriftTest, Definition) {
  const EmbeddingModel initial = small_model(false, 0, 6);
  EmbeddingModel moved = initial;
  EXPECT_EQ(drift(moved, initial, std::vector<Units>{{"x", "y"}}), 0.0);

  moved.table().row(moved.index("x")) += Eigen::RowVector3d(0.0, 2.0, 0.0);
  EXPECT_DOUBLE_EQ(drift(moved, initial, std::vector<Units>{{"x", "y"}}), 4.0);
  EXPECT_DOUBLE_EQ(
      drift(moved, initial,
            std::vector<Units>{{"x", "y"}, {"z", "x"}, {"x"}}),
      12.0);
}

TEST(PairLossTest, IdenticalSentencesAtInitialization) {
  const EmbeddingModel m = small_model(true, 1, 7);
  const Units s{"a", "b", "c"};
  const PairLoss l = pair_loss(m, m, s, s, FinetuneConfig{});
  EXPECT_NEAR(l.loss, 0.0, 1e-9);
  EXPECT_LT(l.grads.table.cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LT(l.grads.mixer.cwiseAbs().maxCoeff(), 1e-9);
}

TEST(PairLossTest, ForcedPlanSingleUnits) {
  Matrix table = Matrix::Zero(3, 1);
  table(1, 0) = 0.0;
  table(2, 0) = 3.0;
  const EmbeddingModel m({"p", "q"}, table, false, 0);
  FinetuneConfig cfg;
  cfg.lambda = 0.0;
  const Units p{"p"}, q{"q"};
  EXPECT_NEAR(pair_loss(m, m, p, q, cfg).loss, 3.0, 1e-12);
}

TEST(PairLossTest, RecomposesFromIndependentTerms) {
  std::mt19937_64 rng(8);
  const EmbeddingModel initial = small_model(false, 0, 8);
  EmbeddingModel model = initial;
  const Matrix delta = oracle::gaussian_matrix(rng, 1, 3, 0.2);
  model.table().row(model.index("y")) += delta.row(0);
  const Units src{"a", "b"}, tgt{"x", "y", "z"};
  const FinetuneConfig cfg;

  const PairLoss l = pair_loss(model, initial, src, tgt, cfg);
  EXPECT_NEAR(l.drift, delta.squaredNorm(), 1e-15);

  Matrix xs(2, 3), ys(3, 3);
  xs << model.table().row(model.index("a")), model.table().row(model.index("b"));
  ys << model.table().row(model.index("x")), model.table().row(model.index("y")),
      model.table().row(model.index("z"));
  const double s = oracle::sinkhorn_divergence(
      xs, ys, oracle::Vec::Constant(2, 0.5), oracle::Vec::Constant(3, 1.0 / 3.0),
      0.05);
  EXPECT_NEAR(l.loss, s + delta.squaredNorm(), 1e-8);
}

TEST(PairLossTest, TableAndMixerGradientsMatchFiniteDifferences) {
  const EmbeddingModel initial = small_model(true, 1, 9);
  EmbeddingModel model = initial;
  std::mt19937_64 rng(9);
  model.table() += oracle::gaussian_matrix(rng, model.table().rows(), 3, 0.05);
  model.mixer() += oracle::gaussian_matrix(rng, 3, 3, 0.05);
  const Units src{"a", "b", "c"}, tgt{"x", "y", "z"};
  const FinetuneConfig cfg = tight_config(0.7);
  const PairLoss l = pair_loss(model, initial, src, tgt, cfg);

  const Matrix fd_table = oracle::finite_difference(
      [&](const Matrix& t) {
        EmbeddingModel probe = model;
        probe.table() = t;
        return pair_loss(probe, initial, src, tgt, cfg).loss;
      },
      model.table(), 1e-4);
  const Matrix fd_mixer = oracle::finite_difference(
      [&](const Matrix& mix) {
        EmbeddingModel probe = model;
        probe.mixer() = mix;
        return pair_loss(probe, initial, src, tgt, cfg).loss;
      },
      model.mixer(), 1e-4);
  EXPECT_LT(oracle::max_relative_error(l.grads.table, fd_table, 1e-6), 1e-3);
  EXPECT_LT(oracle::max_relative_error(l.grads.mixer, fd_mixer, 1e-6), 1e-3);
}

TEST(PairLossTest, DriftGradientTouchesOnlyTargetRows) {
  const EmbeddingModel initial = small_model(false, 0, 10);
  EmbeddingModel model = initial;
  std::mt19937_64 rng(10);
  model.table() += oracle::gaussian_matrix(rng, model.table().rows(), 3, 0.1);
  const Units src{"a", "b"}, tgt{"x", "z"};
  const PairLoss with = pair_loss(model, initial, src, tgt, tight_config(2.0));
  const PairLoss without = pair_loss(model, initial, src, tgt, tight_config(0.0));
  const Matrix diff = with.grads.table - without.grads.table;
  for (Eigen::Index r = 0; r < diff.rows(); ++r) {
    const std::string& unit = model.vocabulary()[static_cast<std::size_t>(r)];
    if (unit == "x" || unit == "z") {
      EXPECT_GT(diff.row(r).norm(), 0.0) << unit;
    } else {
      EXPECT_LT(diff.row(r).norm(), 1e-12) << unit;
    }
  }
}

TEST(PairLossTest, GroupOfOneEqualsPairLoss) {
  const EmbeddingModel initial = small_model(true, 1, 11);
  EmbeddingModel model = initial;
  model.table().array() += 0.05;
  const SentencePair p{{"a", "c"}, {"y", "x", "z"}};
  const PairLoss a = pair_loss(model, initial, p.source, p.target, FinetuneConfig{});
  const PairLoss b =
      group_loss(model, initial, std::span<const SentencePair>(&p, 1), FinetuneConfig{});
  EXPECT_DOUBLE_EQ(a.loss, b.loss);
  EXPECT_EQ(a.grads.table, b.grads.table);
}

TEST(PairLossTest, NonConvergedSolveRaises) {
  const EmbeddingModel m = small_model(false, 0, 12);
  FinetuneConfig cfg;
  cfg.sinkhorn.max_iters = 1;
  const Units s{"a", "b", "c"}, t{"x", "y"};
  EXPECT_THROW(pair_loss(m, m, s, t, cfg), ConvergenceError);
}

TEST(AdamTest, ZeroGradientLeavesParameters) {
  Matrix p(2, 2);
  p << 1, -2, 3, 0.5;
  const Matrix before = p;
  AdamMoments mo{Matrix::Zero(2, 2), Matrix::Zero(2, 2)};
  adam_step(mo, 1, p, Matrix::Zero(2, 2), AdamConfig{0.1});
  EXPECT_EQ(p, before);
}

TEST(AdamTest, FirstStepClosedForm) {
  Matrix p = Matrix::Zero(1, 3);
  Matrix g(1, 3);
  g << 4.0, -0.25, 1e-3;
  AdamMoments mo{Matrix::Zero(1, 3), Matrix::Zero(1, 3)};
  const AdamConfig cfg{0.01};
  adam_step(mo, 1, p, g, cfg);
  for (int k = 0; k < 3; ++k) {
    EXPECT_NEAR(p(0, k), -0.01 * g(0, k) / (std::abs(g(0, k)) + 1e-8), 1e-15);
  }
}

TEST(AdamTest, QuadraticTrace) {
  Matrix x = Matrix::Constant(1, 1, 1.0);
  AdamMoments mo{Matrix::Zero(1, 1), Matrix::Zero(1, 1)};
  const double expected[] = {0.9000000005, 0.8004122286917927, 0.70158627294603};
  double previous = 1.0;
  for (int t = 1; t <= 3; ++t) {
    adam_step(mo, t, x, 2.0 * x, AdamConfig{0.1});
    EXPECT_NEAR(x(0, 0), expected[t - 1], 1e-14);
    EXPECT_LT(x(0, 0), previous);
    previous = x(0, 0);
  }
}

std::vector<ParallelCorpus> repeated_pair(std::size_t copies) {
  return {ParallelCorpus("de-en", std::vector<SentencePair>(
                                      copies, SentencePair{{"a", "b"}, {"x", "y"}}))};
}

TEST(TrainTest, RepeatedPairDivergenceDecreases) {
  const EmbeddingModel initial = small_model(false, 0, 13);
  EmbeddingModel model = initial;
  AdamOptimizer opt(model);
  FinetuneConfig cfg;
  cfg.lambda = 0.0;
  cfg.learning_rate = 1e-3;
  cfg.batch_size = 1;
  cfg.grad_accum_steps = 1;
  const auto corpora = repeated_pair(50);
  const TrainStats stats = train_epoch(model, initial, opt, corpora, cfg, {});
  ASSERT_EQ(stats.steps.size(), 50u);
  EXPECT_EQ(opt.steps(), 50);
  EXPECT_LT(stats.steps.back().mean_divergence[0],
            stats.steps.front().mean_divergence[0]);
  EXPECT_LT(mean_divergence(model, corpora[0].pairs(), cfg.sinkhorn),
            mean_divergence(initial, corpora[0].pairs(), cfg.sinkhorn));
}

TEST(TrainTest, HugeLambdaPinsTargetRows) {
  const EmbeddingModel initial = small_model(false, 0, 14);
  EmbeddingModel model = initial;
  AdamOptimizer opt(model);
  FinetuneConfig cfg;
  cfg.lambda = 1e6;
  cfg.learning_rate = 1e-3;
  cfg.batch_size = 2;
  cfg.grad_accum_steps = 1;
  train_epoch(model, initial, opt, repeated_pair(40), cfg, {});
  for (const char* u : {"x", "y"}) {
    const std::size_t r = model.index(u);
    EXPECT_LT((model.table().row(r) - initial.table().row(r)).norm(), 1e-3) << u;
  }
}

TEST(TrainTest, AccumulationAndRemainderFlush) {
  const EmbeddingModel initial = small_model(false, 0, 15);
  EmbeddingModel model = initial;
  AdamOptimizer opt(model);
  FinetuneConfig cfg;
  cfg.batch_size = 2;
  cfg.grad_accum_steps = 2;
  const TrainStats stats = train_epoch(model, initial, opt, repeated_pair(5), cfg, {});
  ASSERT_EQ(stats.steps.size(), 3u);
  EXPECT_EQ(stats.steps[0].optimizer_step, 0);
  EXPECT_EQ(stats.steps[1].optimizer_step, 1);
  EXPECT_EQ(stats.steps[2].optimizer_step, 2);
}

std::string train_csv(std::size_t threads, bool mix) {
  SyntheticConfig sc;
  sc.train_pairs = 60;
  sc.heldout_pairs = 1;
  sc.seed = 3;
  const SyntheticTask task = split_morphology_pair(sc);
  EmbeddingModel model = task.initial;
  AdamOptimizer opt(model);
  FinetuneConfig cfg;
  cfg.learning_rate = 1e-3;
  cfg.batch_size = 6;
  cfg.mix_languages = mix;
  cfg.seed = 5;
  TrainOptions opts;
  opts.threads = threads;
  std::ostringstream out;
  train_epoch(model, task.initial, opt, task.train, cfg, opts).write_csv(out);
  return out.str();
}

TEST(TrainTest, DeterministicReplayAcrossThreadCounts) {
  for (bool mix : {false, true}) {
    const std::string a = train_csv(1, mix);
    EXPECT_EQ(a, train_csv(1, mix));
    EXPECT_EQ(a, train_csv(4, mix));
  }
  EXPECT_NE(train_csv(1, false), train_csv(1, true));
}

TEST(TrainTest, SkipFlagRecordsNonConvergedPairs) {
  const EmbeddingModel initial = small_model(false, 0, 16);
  EmbeddingModel model = initial;
  AdamOptimizer opt(model);
  FinetuneConfig cfg;
  cfg.sinkhorn.max_iters = 1;
  const auto corpora = repeated_pair(4);
  EXPECT_THROW(train_epoch(model, initial, opt, corpora, cfg, {}),
               ConvergenceError);
  TrainOptions opts;
  opts.skip_nonconverged = true;
  const TrainStats stats = train_epoch(model, initial, opt, corpora, cfg, opts);
  ASSERT_EQ(stats.steps.size(), 1u);
  EXPECT_EQ(stats.steps[0].skipped, 4u);
  EXPECT_EQ(stats.steps[0].loss, 0.0);
}

TEST(TrainTest, RotatedBijectionImproves) {
  for (std::uint64_t seed : {0u, 1u}) {
    SyntheticConfig sc;
    sc.seed = seed;
    const SyntheticTask task = rotated_bijection(sc);
    FinetuneConfig cfg;
    cfg.learning_rate = 1e-3;
    EmbeddingModel model = task.initial;
    AdamOptimizer opt(model);
    const double before = mean_divergence(model, task.heldout[0], cfg.sinkhorn);
    train_epoch(model, task.initial, opt, task.train, cfg, {});
    const double after = mean_divergence(model, task.heldout[0], cfg.sinkhorn);
    EXPECT_LE(after, 0.5 * before) << "seed " << seed;
    EXPECT_GE(dictionary_precision(model, task.heldout[0], task.dictionary,
                                   cfg.sinkhorn),
              0.9);
  }
}

TEST(TrainTest, MixingLanguagesIsNoBetterOnSplitMorphology) {
  SyntheticConfig sc;
  sc.train_pairs = 250;
  const SyntheticTask task = split_morphology_pair(sc);
  double heldout[2];
  for (int mix = 0; mix < 2; ++mix) {
    FinetuneConfig cfg;
    cfg.learning_rate = 1e-3;
    cfg.mix_languages = mix == 1;
    EmbeddingModel model = task.initial;
    AdamOptimizer opt(model);
    train_epoch(model, task.initial, opt, task.train, cfg, {});
    heldout[mix] = 0.5 * (mean_divergence(model, task.heldout[0], cfg.sinkhorn) +
                          mean_divergence(model, task.heldout[1], cfg.sinkhorn));
  }
  EXPECT_GE(heldout[1], heldout[0]);
}

TEST(CheckpointTest, RoundTripIsExact) {
  EmbeddingModel model = small_model(true, 2, 17);
  AdamOptimizer opt(model);
  FinetuneConfig cfg;
  cfg.batch_size = 1;
  cfg.grad_accum_steps = 1;
  const EmbeddingModel initial = model;
  train_epoch(model, initial, opt, repeated_pair(3), cfg, {});

  const auto path = std::filesystem::temp_directory_path() / "otalign_test.ckpt";
  save_checkpoint(path, model, opt);
  EXPECT_FALSE(std::filesystem::exists(path.string() + ".tmp"));
  const Checkpoint back = load_checkpoint(path);
  EXPECT_EQ(back.model.vocabulary(), model.vocabulary());
  EXPECT_EQ(back.model.table(), model.table());
  EXPECT_EQ(back.model.mixer(), model.mixer());
  EXPECT_EQ(back.model.window(), 2);
  EXPECT_EQ(back.optimizer.steps(), 3);
  EXPECT_EQ(back.optimizer.table_moments().v, opt.table_moments().v);
  EXPECT_EQ(back.optimizer.mixer_moments().m, opt.mixer_moments().m);

  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.put('X');
  }
  EXPECT_THROW(load_checkpoint(path), FormatError);
  std::filesystem::resize_file(path, 20);
  EXPECT_THROW(load_checkpoint(path), FormatError);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace otalign
