#include "cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "otalign/alignment.hpp"
#include "otalign/corpus.hpp"
#include "otalign/error.hpp"
#include "otalign/finetune.hpp"
#include "otalign/parallel.hpp"
#include "otalign/synthetic.hpp"

namespace otalign::cli {

namespace {

namespace fs = std::filesystem;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct SinkhornFlags {
  double epsilon = 0.05;
  std::string metric = "euclidean";
  int max_iters = 500;
  double tolerance = 1e-6;
  bool no_scaling = false;

  void attach(CLI::App* app) {
    app->add_option("--epsilon", epsilon, "entropic regularization")
        ->capture_default_str();
    app->add_option("--metric", metric, "euclidean | sqeuclidean")
        ->capture_default_str();
    app->add_option("--max-iters", max_iters, "Sinkhorn iteration budget")
        ->capture_default_str();
    app->add_option("--tolerance", tolerance, "L1 marginal violation target")
        ->capture_default_str();
    app->add_flag("--no-eps-scaling", no_scaling, "solve at the target epsilon only");
  }

  SinkhornConfig build() const {
    SinkhornConfig cfg;
    cfg.epsilon = epsilon;
    cfg.metric = parse_metric(metric);
    cfg.max_iters = max_iters;
    cfg.tolerance = tolerance;
    cfg.epsilon_scaling = !no_scaling;
    cfg.validate();
    return cfg;
  }
};

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  return out;
}

// Shared by align and divergence.
struct PairJob {
  std::string src_path;
  std::string tgt_path;
  std::string weights = "uniform";
  std::string unit;
  bool skip_nonconverged = false;
  std::size_t threads = 1;
  SinkhornFlags sinkhorn;

  void attach(CLI::App* app) {
    app->add_option("--src", src_path, "source embedding file")->required();
    app->add_option("--tgt", tgt_path, "target embedding file")->required();
    app->add_option("--weights", weights, "uniform | tfidf")->capture_default_str();
    app->add_option("--unit", unit, "expected granularity: word | subword");
    app->add_flag("--skip-nonconverged", skip_nonconverged,
                  "report and skip pairs whose solve does not converge");
    app->add_option("--threads", threads, "worker threads")->capture_default_str();
    sinkhorn.attach(app);
  }

  void validate() const {
    sinkhorn.build();
    if (weights != "uniform" && weights != "tfidf") {
      throw InputError("--weights must be uniform or tfidf");
    }
    if (!unit.empty()) parse_granularity(unit);
  }
};

struct PairOutcome {
  std::optional<DivergenceResult> result;  // empty when skipped
};

EmbeddingFile load_checked(const std::string& path, const std::string& unit) {
  EmbeddingFile f = load_embeddings(path);
  if (!unit.empty() && parse_granularity(unit) != f.granularity) {
    throw InputError(path + " holds " + std::string(to_string(f.granularity)) +
                     " units but --unit " + unit + " was given");
  }
  return f;
}

std::vector<Weights> side_weights(const EmbeddingFile& f, bool tfidf) {
  CorpusStats stats;
  if (tfidf) {
    for (const EmbeddedSentence& s : f.sentences) stats.add_sentence(s.units);
  }
  std::vector<Weights> out;
  for (const EmbeddedSentence& s : f.sentences) {
    out.push_back(tfidf ? tfidf_weights(stats, s.units)
                        : uniform_weights(s.units.size()));
  }
  return out;
}

std::vector<PairOutcome> solve_pairs(const PairJob& job) {
  const SinkhornConfig cfg = job.sinkhorn.build();
  const EmbeddingFile src = load_checked(job.src_path, job.unit);
  const EmbeddingFile tgt = load_checked(job.tgt_path, job.unit);
  if (src.sentences.size() != tgt.sentences.size()) {
    throw InputError("sentence count mismatch: " +
                     std::to_string(src.sentences.size()) + " source vs " +
                     std::to_string(tgt.sentences.size()) + " target");
  }
  if (src.dim != tgt.dim) {
    throw InputError("embedding dimension mismatch: " + std::to_string(src.dim) +
                     " vs " + std::to_string(tgt.dim));
  }
  const bool tfidf = job.weights == "tfidf";
  const std::vector<Weights> a = side_weights(src, tfidf);
  const std::vector<Weights> b = side_weights(tgt, tfidf);

  std::vector<PairOutcome> outcomes(src.sentences.size());
  const auto errors = parallel_for(outcomes.size(), job.threads, [&](std::size_t i) {
    outcomes[i].result = sinkhorn_divergence(src.sentences[i].cloud(),
                                             tgt.sentences[i].cloud(), a[i], b[i], cfg);
  });
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    if (errors[i]) std::rethrow_exception(errors[i]);
    if (!outcomes[i].result->converged) {
      if (!job.skip_nonconverged) {
        throw ConvergenceError("pair " + std::to_string(i) +
                               ": sinkhorn did not converge within " +
                               std::to_string(cfg.max_iters) + " iterations");
      }
      outcomes[i].result.reset();
    }
  }
  return outcomes;
}

void print_summary(std::ostream& out, const std::vector<PairOutcome>& outcomes) {
  double total = 0.0;
  std::size_t used = 0;
  for (const PairOutcome& o : outcomes) {
    if (!o.result) continue;
    total += o.result->s_eps;
    ++used;
  }
  out << "pairs=" << outcomes.size() << " skipped=" << outcomes.size() - used
      << " mean_s_eps=" << (used ? num(total / static_cast<double>(used)) : "nan")
      << '\n';
}

int run_align(const PairJob& job, const std::string& output,
              const std::string& format, const std::string& hard,
              double threshold, std::ostream& out) {
  job.validate();
  if (format != "pharaoh" && format != "jsonl") {
    throw InputError("--format must be pharaoh or jsonl");
  }
  const HardMode mode = parse_hard_mode(hard);
  if (!(threshold >= 0.0 && threshold < 1.0)) {
    throw InputError("--threshold must lie in [0, 1)");
  }
  const std::vector<PairOutcome> outcomes = solve_pairs(job);

  std::ofstream file = open_output(output);
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    const PairOutcome& o = outcomes[i];
    if (format == "pharaoh") {
      if (o.result) file << to_pharaoh(extract_hard(o.result->transport_xy.plan, mode));
      file << '\n';
      continue;
    }
    nlohmann::json record = {{"pair", i}, {"converged", o.result.has_value()}};
    if (o.result) {
      record["s_eps"] = o.result->s_eps;
      nlohmann::json links = nlohmann::json::array();
      for (const Link& l :
           extract_soft(o.result->transport_xy.plan, threshold).links()) {
        links.push_back({l.source, l.target, l.weight});
      }
      record["links"] = std::move(links);
    }
    file << record.dump() << '\n';
  }
  if (!file) throw FormatError("failed writing " + output);
  print_summary(out, outcomes);
  return 0;
}

int run_divergence(const PairJob& job, const std::string& output,
                   std::ostream& out) {
  job.validate();
  const std::vector<PairOutcome> outcomes = solve_pairs(job);
  std::ofstream file;
  if (!output.empty()) file = open_output(output);
  std::ostream& sink = output.empty() ? out : file;
  sink << "pair,s_eps,ot_xy,ot_xx,ot_yy\n";
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    sink << i;
    if (const auto& r = outcomes[i].result) {
      sink << ',' << num(r->s_eps) << ',' << num(r->ot_xy) << ',' << num(r->ot_xx)
           << ',' << num(r->ot_yy);
    } else {
      sink << ",nan,nan,nan,nan";
    }
    sink << '\n';
  }
  print_summary(out, outcomes);
  return 0;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

LinkPairs jsonl_pairs(const std::string& line, const std::string& origin) {
  LinkPairs pairs;
  try {
    const nlohmann::json record = nlohmann::json::parse(line);
    if (!record.contains("links")) return pairs;
    for (const auto& l : record.at("links")) {
      pairs.emplace(l.at(0).get<int>(), l.at(1).get<int>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(origin + ": " + e.what());
  }
  return pairs;
}

int run_eval_aer(const std::string& pred_path, const std::string& gold_path,
                 const std::string& pred_format, std::ostream& out) {
  if (pred_format != "pharaoh" && pred_format != "jsonl") {
    throw InputError("--pred-format must be pharaoh or jsonl");
  }
  const std::vector<std::string> pred = read_lines(pred_path);
  const std::vector<std::string> gold = read_lines(gold_path);
  if (pred.size() != gold.size()) {
    throw InputError("line count mismatch: " + std::to_string(pred.size()) +
                     " predicted vs " + std::to_string(gold.size()) + " gold");
  }
  AerCounts total;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const std::string where = pred_path + ":" + std::to_string(i + 1);
    LinkPairs links;
    try {
      links = pred_format == "jsonl" ? jsonl_pairs(pred[i], where)
                                     : parse_pharaoh(pred[i]).pairs();
    } catch (const FormatError& e) {
      throw FormatError(where + ": " + e.what());
    }
    const GoldAlignment g = parse_gold(gold[i]);
    const AerCounts c = aer_counts(links, g);
    total += c;
    out << i << '\t';
    try {
      out << num(aer(c));
    } catch (const InputError&) {
      out << "undefined";
    }
    out << '\n';
  }
  out << "corpus\t" << num(aer(total)) << '\n';
  return 0;
}

struct TrainFlags {
  std::vector<std::string> corpora;
  std::string output;
  std::string stats;
  std::string init;
  std::string heldout;
  int dim = 16;
  int window = 1;
  bool mixer = false;
  double init_scale = 0.1;
  std::size_t upsample_to = 0;
  bool no_shuffle = false;
  std::size_t threads = 1;
  bool skip_nonconverged = false;
  FinetuneConfig cfg;
  SinkhornFlags sinkhorn;

  void attach(CLI::App* app) {
    app->add_option("--corpus", corpora, "parallel corpus (repeatable)")->required();
    app->add_option("--output", output, "checkpoint path")->required();
    app->add_option("--stats", stats, "CSV training log")->required();
    app->add_option("--init", init, "start from this checkpoint");
    app->add_option("--heldout", heldout,
                    "corpus scored before and after training");
    app->add_option("--dim", dim, "embedding dimension")->capture_default_str();
    app->add_option("--window", window, "context window radius")->capture_default_str();
    app->add_flag("--mixer", mixer, "enable the trainable context mixer");
    app->add_option("--init-scale", init_scale, "std of random table entries")
        ->capture_default_str();
    app->add_option("--lambda", cfg.lambda, "drift penalty weight")->capture_default_str();
    app->add_option("--lr", cfg.learning_rate, "Adam learning rate")->capture_default_str();
    app->add_option("--batch-size", cfg.batch_size, "pairs per batch")->capture_default_str();
    app->add_option("--grad-accum", cfg.grad_accum_steps, "batches per update")
        ->capture_default_str();
    app->add_option("--epochs", cfg.epochs, "passes over the data")->capture_default_str();
    app->add_flag("--mix-languages", cfg.mix_languages,
                  "one OT problem across language pairs per batch slot");
    app->add_option("--seed", cfg.seed, "random seed")->capture_default_str();
    app->add_option("--upsample-to", upsample_to, "pairs per corpus per epoch");
    app->add_flag("--no-shuffle", no_shuffle, "keep corpus order");
    app->add_option("--threads", threads, "worker threads")->capture_default_str();
    app->add_flag("--skip-nonconverged", skip_nonconverged,
                  "skip pairs whose solve does not converge");
    sinkhorn.attach(app);
  }
};

int run_train(TrainFlags flags, std::ostream& out) {
  flags.cfg.sinkhorn = flags.sinkhorn.build();
  flags.cfg.validate();
  if (flags.init.empty() && flags.dim < 1) throw InputError("--dim must be >= 1");
  if (flags.window < 0) throw InputError("--window must be >= 0");

  std::vector<ParallelCorpus> corpora;
  for (const std::string& p : flags.corpora) corpora.push_back(load_parallel(p));
  std::optional<ParallelCorpus> heldout;
  if (!flags.heldout.empty()) heldout = load_parallel(flags.heldout);

  std::optional<EmbeddingModel> initial;
  std::optional<AdamOptimizer> optimizer;
  if (!flags.init.empty()) {
    Checkpoint ckpt = load_checkpoint(flags.init);
    initial = std::move(ckpt.model);
    optimizer = std::move(ckpt.optimizer);
  } else {
    initial = EmbeddingModel::random(collect_vocabulary(corpora), flags.dim,
                                     flags.init_scale, flags.mixer, flags.window,
                                     flags.cfg.seed);
    optimizer.emplace(*initial);
  }
  EmbeddingModel model = *initial;

  if (heldout) {
    out << "heldout_mean_s_eps_initial="
        << num(mean_divergence(model, heldout->pairs(), flags.cfg.sinkhorn,
                               flags.threads))
        << '\n';
  }

  TrainStats all;
  for (const ParallelCorpus& c : corpora) all.language_pairs.push_back(c.language_pair());
  TrainOptions opts;
  opts.upsample_to = flags.upsample_to;
  opts.shuffle = !flags.no_shuffle;
  opts.threads = flags.threads;
  opts.skip_nonconverged = flags.skip_nonconverged;
  for (std::size_t e = 0; e < flags.cfg.epochs; ++e) {
    opts.epoch = e;
    TrainStats epoch = train_epoch(model, *initial, *optimizer, corpora, flags.cfg, opts);
    const std::size_t offset = all.steps.size();
    all.steps.insert(all.steps.end(), epoch.steps.begin(), epoch.steps.end());
    for (std::size_t i = offset; i < all.steps.size(); ++i) all.steps[i].batch = i;
  }

  std::filesystem::path stats_tmp = flags.stats;
  stats_tmp += ".tmp";
  {
    std::ofstream csv = open_output(stats_tmp);
    all.write_csv(csv);
    if (!csv) throw FormatError("failed writing " + flags.stats);
  }
  save_checkpoint(flags.output, model, *optimizer);
  fs::rename(stats_tmp, flags.stats);

  out << "epochs=" << flags.cfg.epochs << " batches=" << all.steps.size()
      << " optimizer_steps=" << optimizer->steps() << '\n';
  if (heldout) {
    out << "heldout_mean_s_eps_final="
        << num(mean_divergence(model, heldout->pairs(), flags.cfg.sinkhorn,
                               flags.threads))
        << '\n';
  }
  return 0;
}

int run_embed(const std::string& checkpoint, const std::string& corpus_path,
              const std::string& side, const std::string& unit,
              const std::string& output, std::ostream& out) {
  if (side != "src" && side != "tgt") throw InputError("--side must be src or tgt");
  const Granularity granularity = parse_granularity(unit);
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  const ParallelCorpus corpus = load_parallel(corpus_path);
  EmbeddingFile file;
  file.granularity = granularity;
  file.dim = static_cast<std::uint32_t>(ckpt.model.dim());
  for (const SentencePair& p : corpus.pairs()) {
    const Units& units = side == "src" ? p.source : p.target;
    file.sentences.push_back(
        {units, ckpt.model.forward(units).cast<float>()});
  }
  fs::path tmp = output;
  tmp += ".tmp";
  write_embeddings(tmp, file);
  fs::rename(tmp, output);
  out << "sentences=" << file.sentences.size() << " dim=" << file.dim << '\n';
  return 0;
}

int run_synth(const std::string& dir, const std::string& kind,
              SyntheticConfig cfg, std::ostream& out) {
  if (kind != "bijection" && kind != "split") {
    throw InputError("--kind must be bijection or split");
  }
  const SyntheticTask task =
      kind == "bijection" ? rotated_bijection(cfg) : split_morphology_pair(cfg);
  fs::create_directories(dir);
  for (std::size_t k = 0; k < task.train.size(); ++k) {
    const std::string suffix = task.train.size() == 1 ? "" : "." + task.train[k].language_pair();
    write_parallel(fs::path(dir) / ("train" + suffix + ".jsonl"), task.train[k]);
    write_parallel(fs::path(dir) / ("heldout" + suffix + ".jsonl"),
                   ParallelCorpus(task.train[k].language_pair(), task.heldout[k]));
  }
  save_checkpoint(fs::path(dir) / "init.ckpt", task.initial,
                  AdamOptimizer(task.initial));
  std::ofstream dict = open_output(fs::path(dir) / "dictionary.tsv");
  for (const auto& [s, t] : task.dictionary) dict << s << '\t' << t << '\n';
  out << "wrote " << dir << '\n';
  return 0;
}

std::string one_line(std::string text) {
  for (char& c : text) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return text;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err) {
  CLI::App app{"Optimal transport alignment of embedded parallel sentences."};
  app.name("otalign");
  app.require_subcommand(1);

  PairJob align_job;
  std::string align_output, format = "pharaoh", hard = "argmax";
  double threshold = 0.1;
  CLI::App* align = app.add_subcommand("align", "align embedded sentence pairs");
  align_job.attach(align);
  align->add_option("--output", align_output, "alignment output path")->required();
  align->add_option("--format", format, "pharaoh | jsonl")->capture_default_str();
  align->add_option("--hard", hard, "argmax | intersect")->capture_default_str();
  align->add_option("--threshold", threshold, "soft link threshold")
      ->capture_default_str();

  PairJob div_job;
  std::string div_output;
  CLI::App* divergence =
      app.add_subcommand("divergence", "per-pair Sinkhorn divergence report");
  div_job.attach(divergence);
  divergence->add_option("--output", div_output, "CSV path (default stdout)");

  TrainFlags train_flags;
  CLI::App* train = app.add_subcommand("train", "fine-tune a toy embedding model");
  train_flags.attach(train);

  std::string pred, gold, pred_format = "pharaoh";
  CLI::App* eval = app.add_subcommand("eval-aer", "alignment error rate");
  eval->add_option("--pred", pred, "predicted alignments")->required();
  eval->add_option("--gold", gold, "gold alignments (i-j sure, i?j possible)")
      ->required();
  eval->add_option("--pred-format", pred_format, "pharaoh | jsonl")
      ->capture_default_str();

  std::string ckpt_path, corpus_path, side = "src", unit = "word", embed_output;
  CLI::App* embed = app.add_subcommand("embed", "write model embeddings of a corpus");
  embed->add_option("--checkpoint", ckpt_path, "model checkpoint")->required();
  embed->add_option("--corpus", corpus_path, "parallel corpus")->required();
  embed->add_option("--side", side, "src | tgt")->capture_default_str();
  embed->add_option("--unit", unit, "granularity tag for the header")
      ->capture_default_str();
  embed->add_option("--output", embed_output, "embedding file")->required();

  SyntheticConfig synth_cfg;
  std::string synth_dir, kind = "bijection";
  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic task");
  synth->add_option("--out-dir", synth_dir, "output directory")->required();
  synth->add_option("--kind", kind, "bijection | split")->capture_default_str();
  synth->add_option("--pairs", synth_cfg.train_pairs, "training pairs")
      ->capture_default_str();
  synth->add_option("--heldout", synth_cfg.heldout_pairs, "held-out pairs")
      ->capture_default_str();
  synth->add_option("--vocab", synth_cfg.vocab, "source vocabulary size")
      ->capture_default_str();
  synth->add_option("--dim", synth_cfg.dim, "embedding dimension")
      ->capture_default_str();
  synth->add_option("--seed", synth_cfg.seed, "random seed")->capture_default_str();

  std::vector<std::string> argv_storage{"otalign"};
  argv_storage.insert(argv_storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (std::string& a : argv_storage) argv.push_back(a.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << one_line(e.what()) << '\n';
    return 2;
  }

  try {
    if (*align) return run_align(align_job, align_output, format, hard, threshold, out);
    if (*divergence) return run_divergence(div_job, div_output, out);
    if (*train) return run_train(train_flags, out);
    if (*eval) return run_eval_aer(pred, gold, pred_format, out);
    if (*embed) return run_embed(ckpt_path, corpus_path, side, unit, embed_output, out);
    if (*synth) return run_synth(synth_dir, kind, synth_cfg, out);
  } catch (const std::exception& e) {
    err << "error: " << one_line(e.what()) << '\n';
    return 1;
  }
  return 1;
}

}  // namespace otalign::cli
