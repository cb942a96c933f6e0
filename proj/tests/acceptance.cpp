// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "oracles.hpp"
#include "otalign/alignment.hpp"
#include "otalign/corpus.hpp"
#include "otalign/finetune.hpp"
#include "otalign/ot.hpp"
#include "otalign/synthetic.hpp"

namespace {

using namespace otalign;
using Clock = std::chrono::steady_clock;

struct Verdict {
  bool pass;
  std::string detail;
};

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

Weights uniform(Eigen::Index n) { return uniform_weights(static_cast<std::size_t>(n)); }

SinkhornConfig at_epsilon(double eps) {
  SinkhornConfig cfg;
  cfg.epsilon = eps;
  return cfg;
}

Verdict marginal_feasibility() {
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<int> size(1, 16), dim(1, 8);
  double worst = 0.0;
  int max_iters = 0, failures = 0;
  const auto t0 = Clock::now();
  for (int trial = 0; trial < 200; ++trial) {
    const int n = size(rng), m = size(rng), d = dim(rng);
    const PointCloud x(oracle::gaussian_matrix(rng, n, d));
    const PointCloud y(oracle::gaussian_matrix(rng, m, d));
    const Weights a(oracle::random_simplex(rng, n));
    const Weights b(oracle::random_simplex(rng, m));
    const TransportResult r =
        sinkhorn_solve(build_cost_matrix(x, y, Metric::kEuclidean), a, b,
                       at_epsilon(trial % 2 == 0 ? 0.05 : 0.01));
    const double violation =
        (r.plan.rowwise().sum() - a.values()).lpNorm<1>() +
        (r.plan.colwise().sum().transpose() - b.values()).lpNorm<1>();
    worst = std::max(worst, violation);
    max_iters = std::max(max_iters, r.iterations);
    if (!r.converged || violation > 1e-6 || r.iterations > 500) ++failures;
  }
  const double elapsed = seconds_since(t0);
  return {failures == 0 && elapsed < 10.0,
          fmt("200 solves, worst L1 violation %.2e, max iterations %.0f, %.2f s",
              worst, max_iters, elapsed)};
}

Verdict debias_identity() {
  std::mt19937_64 rng(102);
  std::uniform_int_distribution<int> size(1, 16), dim(1, 8);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int n = size(rng);
    const PointCloud x(oracle::gaussian_matrix(rng, n, dim(rng)));
    const Weights a(oracle::random_simplex(rng, n));
    worst = std::max(worst, std::abs(sinkhorn_divergence(x, x, a, a, at_epsilon(0.05)).s_eps));
  }
  return {worst <= 1e-9, fmt("50 clouds, max |S(x,x)| %.2e", worst)};
}

Verdict lp_oracle() {
  std::mt19937_64 rng(103);
  SinkhornConfig cfg = at_epsilon(1e-3);
  cfg.max_iters = 5000;
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + trial % 5;
    const PointCloud x(oracle::gaussian_matrix(rng, n, 2));
    const PointCloud y(oracle::gaussian_matrix(rng, n, 2));
    const CostMatrix c = build_cost_matrix(x, y, Metric::kEuclidean);
    const TransportResult r = sinkhorn_solve(c, uniform(n), uniform(n), cfg);
    const double cost = (r.plan.array() * c.values().array()).sum();
    const double exact = oracle::brute_force_assignment(c.values());
    worst = std::max(worst, std::abs(cost - exact) / exact);
  }
  return {worst <= 0.01, fmt("50 instances n=2..6, worst relative gap %.2e", worst)};
}

Verdict divergence_oracle() {
  std::mt19937_64 rng(104);
  std::uniform_int_distribution<int> size(1, 10), dim(1, 6);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const int n = size(rng), m = size(rng), d = dim(rng);
    const Matrix x = oracle::gaussian_matrix(rng, n, d);
    const Matrix y = oracle::gaussian_matrix(rng, m, d);
    const Vector a = oracle::random_simplex(rng, n);
    const Vector b = oracle::random_simplex(rng, m);
    const double got =
        sinkhorn_divergence(PointCloud(x), PointCloud(y), Weights(a), Weights(b),
                            at_epsilon(0.05))
            .s_eps;
    worst = std::max(worst, std::abs(got - oracle::sinkhorn_divergence(x, y, a, b, 0.05)));
  }
  return {worst <= 1e-5, fmt("20 instances, max |diff| %.2e", worst)};
}

Verdict gradient_suite() {
  std::mt19937_64 rng(105);
  double worst_div = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 2 + trial % 4, m = 1 + trial % 5, d = 1 + trial % 3;
    const Matrix x = oracle::gaussian_matrix(rng, n, d);
    const Matrix y = oracle::gaussian_matrix(rng, m, d);
    const Weights a(oracle::random_simplex(rng, n));
    const Weights b(oracle::random_simplex(rng, m));
    const SinkhornConfig cfg = at_epsilon(0.05);
    const DivergenceGradient g =
        divergence_gradient(PointCloud(x), PointCloud(y), a, b, cfg);
    const Matrix fx = oracle::finite_difference(
        [&](const Matrix& p) {
          return sinkhorn_divergence(PointCloud(p), PointCloud(y), a, b, cfg).s_eps;
        },
        x, 1e-4);
    const Matrix fy = oracle::finite_difference(
        [&](const Matrix& p) {
          return sinkhorn_divergence(PointCloud(x), PointCloud(p), a, b, cfg).s_eps;
        },
        y, 1e-4);
    worst_div = std::max({worst_div, oracle::max_relative_error(g.grad_x, fx),
                          oracle::max_relative_error(g.grad_y, fy)});
  }

  double worst_loss = 0.0;
  for (int trial = 0; trial < 3; ++trial) {
    const EmbeddingModel initial = EmbeddingModel::random(
        {"a", "b", "c", "x", "y", "z"}, 3, 0.5, true, 1, 200 + trial);
    EmbeddingModel model = initial;
    model.mixer() = oracle::gaussian_matrix(rng, 3, 3, 0.3);
    model.table() += oracle::gaussian_matrix(rng, model.table().rows(), 3, 0.05);
    const Units src{"a", "b", "c"}, tgt{"x", "y", "z"};
    FinetuneConfig cfg;
    cfg.sinkhorn.tolerance = 1e-10;
    const PairLoss l = pair_loss(model, initial, src, tgt, cfg);
    const Matrix fd = oracle::finite_difference(
        [&](const Matrix& t) {
          EmbeddingModel probe = model;
          probe.table() = t;
          return pair_loss(probe, initial, src, tgt, cfg).loss;
        },
        model.table(), 1e-4);
    worst_loss = std::max(worst_loss, oracle::max_relative_error(l.grads.table, fd, 1e-6));
  }
  return {worst_div < 1e-4 && worst_loss < 1e-3,
          fmt("divergence max rel err %.2e, pair loss table max rel err %.2e",
              worst_div, worst_loss)};
}

Verdict loss_composition() {
  std::mt19937_64 rng(106);
  const std::vector<std::string> vocab{"a", "b", "c", "d", "w", "x", "y", "z"};
  const EmbeddingModel initial = EmbeddingModel::random(vocab, 4, 0.5, false, 0, 106);
  const Units src{"a", "c", "d"}, tgt{"w", "y", "x", "z"};
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    EmbeddingModel model = initial;
    model.table() += oracle::gaussian_matrix(rng, model.table().rows(), 4, 0.1);
    FinetuneConfig cfg;
    cfg.lambda = 0.25 * trial;
    const PairLoss l = pair_loss(model, initial, src, tgt, cfg);

    Matrix xs(3, 4), ys(4, 4);
    double drift_sum = 0.0;
    for (int i = 0; i < 3; ++i) xs.row(i) = model.table().row(model.index(src[i]));
    for (int j = 0; j < 4; ++j) {
      const std::size_t r = model.index(tgt[j]);
      ys.row(j) = model.table().row(r);
      drift_sum += (model.table().row(r) - initial.table().row(r)).squaredNorm();
    }
    const double s = oracle::sinkhorn_divergence(
        xs, ys, Vector::Constant(3, 1.0 / 3.0), Vector::Constant(4, 0.25), 0.05);
    worst = std::max(worst, std::abs(l.loss - (s + cfg.lambda * drift_sum)));
  }
  return {worst <= 1e-8, fmt("20 perturbations, max |diff| %.2e", worst)};
}

Verdict training_property() {
  const auto t0 = Clock::now();
  const SyntheticTask task = rotated_bijection(SyntheticConfig{});
  FinetuneConfig cfg;
  cfg.learning_rate = 1e-3;
  EmbeddingModel model = task.initial;
  AdamOptimizer opt(model);
  const double before = mean_divergence(model, task.heldout[0], cfg.sinkhorn);
  train_epoch(model, task.initial, opt, task.train, cfg, {});
  const double after = mean_divergence(model, task.heldout[0], cfg.sinkhorn);
  const double precision =
      dictionary_precision(model, task.heldout[0], task.dictionary, cfg.sinkhorn);
  const double elapsed = seconds_since(t0);
  const double reduction = 1.0 - after / before;
  return {reduction >= 0.5 && precision >= 0.9 && elapsed < 120.0,
          fmt("held-out S %.3g%% lower, precision %.3f, %.2f s", 100.0 * reduction,
              precision, elapsed)};
}

Matrix rows(std::initializer_list<std::initializer_list<double>> values) {
  Matrix m(values.size(), values.begin()->size());
  Eigen::Index i = 0;
  for (const auto& r : values) {
    Eigen::Index j = 0;
    for (double v : r) m(i, j++) = v;
    ++i;
  }
  return m;
}

Verdict many_to_many() {
  const Matrix src = rows({{0.0, 1.0}, {0.4, 1.0}, {3.0, 0.0}, {3.4, 0.0}});
  const Matrix tgt = rows({{0.2, 1.1}, {3.2, 0.1}});
  const AlignmentSet compound = extract_soft(
      sinkhorn_divergence(PointCloud(src), PointCloud(tgt), uniform(4), uniform(2),
                          SinkhornConfig{})
          .transport_xy.plan);
  double w0 = 0.0, w1 = 0.0;
  for (const Link& l : compound.links()) {
    if (l.target != 0) continue;
    if (l.source == 0) w0 = l.weight;
    if (l.source == 1) w1 = l.weight;
  }

  const Matrix one = rows({{1.0, 0.0}, {0.0, 2.0}});
  const Matrix dup = rows({{1.0, 0.0}, {-2.0, 0.0}, {0.0, 2.0}, {1.0, 0.0}});
  const AlignmentSet repeated = extract_soft(
      sinkhorn_divergence(PointCloud(one), PointCloud(dup), uniform(2), uniform(4),
                          SinkhornConfig{})
          .transport_xy.plan);
  double first = 0.0, second = 0.0;
  for (const Link& l : repeated.links()) {
    if (l.source == 0 && l.target == 0) first = l.weight;
    if (l.source == 0 && l.target == 3) second = l.weight;
  }
  const bool ok = w0 > 0.3 && w1 > 0.3 && std::abs(first - 0.5) <= 0.05 &&
                  std::abs(second - 0.5) <= 0.05;
  return {ok, fmt("compound weights %.3f/%.3f, ", w0, w1) +
                  fmt("duplicate split %.3f/%.3f", first, second)};
}

Verdict mixed_language_direction() {
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
  return {heldout[1] >= heldout[0],
          fmt("held-out mean S mixed %.5g vs per-pair %.5g", heldout[1], heldout[0])};
}

Verdict determinism() {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "otalign_acceptance";
  fs::remove_all(dir);
  std::ostringstream sink;
  auto run = [&](std::vector<std::string> args) {
    return cli::run(args, sink, sink);
  };
  int status = run({"synth", "--out-dir", dir.string(), "--kind", "split",
                    "--pairs", "100", "--heldout", "5"});
  std::string csv[2];
  for (int i = 0; i < 2 && status == 0; ++i) {
    const fs::path stats = dir / ("stats" + std::to_string(i) + ".csv");
    status = run({"train", "--corpus", (dir / "train.xa-en.jsonl").string(),
                  "--corpus", (dir / "train.xb-en.jsonl").string(), "--seed", "7",
                  "--lr", "1e-3", "--epochs", "2", "--threads", "2", "--output",
                  (dir / "model.ckpt").string(), "--stats", stats.string()});
    std::ifstream in(stats, std::ios::binary);
    std::stringstream text;
    text << in.rdbuf();
    csv[i] = text.str();
  }
  fs::remove_all(dir);
  const bool ok = status == 0 && !csv[0].empty() && csv[0] == csv[1];
  return {ok, fmt("two seeded runs, %.0f bytes each, identical=%.0f",
                  static_cast<double>(csv[0].size()), csv[0] == csv[1] ? 1.0 : 0.0)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria{
      {"marginal-feasibility", marginal_feasibility},
      {"debias-identity", debias_identity},
      {"lp-oracle", lp_oracle},
      {"divergence-oracle", divergence_oracle},
      {"gradient-suite", gradient_suite},
      {"loss-composition", loss_composition},
      {"training-property", training_property},
      {"many-to-many", many_to_many},
      {"mixed-language-direction", mixed_language_direction},
      {"determinism", determinism},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    Verdict v{false, ""};
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s %s: %s\n", v.pass ? "PASS" : "FAIL", name, v.detail.c_str());
    failed += v.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
