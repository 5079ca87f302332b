#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "ckl/config.hpp"
#include "ckl/corpus.hpp"
#include "ckl/errors.hpp"
#include "ckl/metrics.hpp"
#include "ckl/model.hpp"
#include "ckl/ops.hpp"
#include "ckl/synthetic.hpp"
#include "ckl/training.hpp"
#include "ckl/weak_supervision.hpp"
#include "json.hpp"

namespace ckl::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

struct CommonOptions {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--config", opts.config, "key=value config file");
  cmd->add_option("--set", opts.overrides, "override a config key (key=value), repeatable");
  cmd->add_option("--seed", opts.seed, "random seed");
  cmd->add_option("--out", opts.out, "output directory");
}

RunConfig resolve_config(const CommonOptions& opts) {
  RunConfig rc;
  if (!opts.config.empty()) rc.merge_file(opts.config);
  rc.apply_overrides(opts.overrides);
  if (opts.seed) rc.set("seed", std::to_string(*opts.seed));
  if (!opts.out.empty()) rc.set("out", opts.out);
  return rc;
}

void set_if(RunConfig& rc, const std::string& key, const std::string& value) {
  if (!value.empty()) rc.set(key, value);
}

const std::string& require(const std::string& value, const char* key) {
  if (value.empty()) throw InputError(std::string("missing --") + key + " (or " + key + "= in the config file)");
  return value;
}

fs::path output_dir(const RunConfig& rc) {
  fs::path dir(rc.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw InputError("cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  return out;
}

void echo_config(const RunConfig& rc, const fs::path& dir, std::size_t vocab_size = 0) {
  auto out = open_output(dir / "config.txt");
  rc.write(out);
  if (vocab_size) out << "# vocab_size=" << vocab_size << '\n';
}

std::string format(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

std::vector<double> to_vector(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

// ---------------------------------------------------------------------------
// prep

int cmd_prep(RunConfig& rc, std::ostream& out) {
  const auto samples = load_jsonl(require(rc.data, "data"));
  if (samples.empty()) throw InputError("dataset " + rc.data + " has no samples");
  const auto dir = output_dir(rc);
  const auto vocab = Vocabulary::build(samples, rc.min_freq, rc.max_vocab);
  const auto enc = rc.model.encode_config();

  std::vector<TokenizedSample> tokenized;
  std::size_t warnings = 0;
  double total_m = 0.0, total_l = 0.0;
  for (const auto& s : samples) {
    std::vector<std::string> w;
    tokenized.push_back(truncate_sample(s, enc, &w));
    warnings += w.size();
    total_m += static_cast<double>(tokenized.back().context.size());
    total_l += static_cast<double>(tokenized.back().knowledge.size());
  }
  const auto index = TfIdfIndex::from_samples(tokenized);
  std::vector<PseudoGroundTruth> labels;
  for (const auto& t : tokenized) labels.push_back(build_pseudo_gt(t, index, rc.model.top_n));

  vocab.save(dir / "vocab.txt");
  save_label_cache(dir / "labels.jsonl", labels);
  {
    auto stats = open_output(dir / "tfidf.tsv");
    index.write_stats(stats);
  }
  echo_config(rc, dir, vocab.size());

  const double n = static_cast<double>(samples.size());
  out << "samples " << samples.size() << '\n'
      << "mean_context " << std::setprecision(4) << total_m / n << '\n'
      << "mean_knowledge " << total_l / n << '\n'
      << "vocab_size " << vocab.size() << '\n'
      << "truncation_warnings " << warnings << '\n'
      << "wrote " << (dir / "vocab.txt").string() << ", " << (dir / "labels.jsonl").string() << ", "
      << (dir / "tfidf.tsv").string() << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------
// train

int cmd_train(RunConfig& rc, std::ostream& out) {
  const auto samples = load_jsonl(require(rc.data, "data"));
  if (samples.empty()) throw InputError("dataset " + rc.data + " has no samples");
  const auto vocab = Vocabulary::load(require(rc.vocab, "vocab"));
  const auto dir = output_dir(rc);

  ModelConfig mc = rc.model;
  mc.vocab_size = vocab.size();
  try {
    mc.validate();
    rc.training.validate();
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  }
  const auto examples = prepare_examples(samples, vocab, mc);
  CklModel model(mc, rc.training.seed);
  AwlParams awl = AwlParams::zeros();

  const fs::path checkpoint = rc.checkpoint.empty() ? dir / "model.ckl" : fs::path(rc.checkpoint);
  auto trace = open_output(dir / "trace.csv");
  const auto result = train(model, awl, examples, rc.training, &trace);
  trace.flush();
  save_checkpoint(checkpoint, model, &awl);
  echo_config(rc, dir, vocab.size());

  out << "effective_samples " << result.effective_samples << '\n' << "steps " << result.steps << '\n';
  if (!result.trace.empty()) {
    const auto& last = result.trace.back();
    out << "final l_clwr " << last.losses[kLossClwr] << " l_clwk " << last.losses[kLossClwk] << " l_klw "
        << last.losses[kLossKlw] << " l_nll " << last.losses[kLossNll] << " awl " << last.total << '\n';
  }
  out << "wrote " << checkpoint.string() << ", " << (dir / "trace.csv").string() << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------
// generate

struct GenerateOptions {
  bool greedy = false;
  std::optional<std::size_t> beam;
  bool force = false;
};

ModelConfig checkpoint_config(const RunConfig& rc, const Checkpoint& ck, bool force, std::ostream& err) {
  ModelConfig mc = ck.config;
  const auto stored = ck.config.to_map();
  std::vector<std::string> flags, sizes;
  for (const auto& key : rc.assigned) {
    auto it = stored.find(key);
    if (it == stored.end() || it->second == rc.get(key)) continue;
    const auto entry = key + "=" + rc.get(key) + " (checkpoint has " + it->second + ")";
    (key.rfind("use_", 0) == 0 ? flags : sizes).push_back(entry);
  }
  auto join = [](const std::vector<std::string>& v) {
    std::string s;
    for (const auto& e : v) s += (s.empty() ? "" : ", ") + e;
    return s;
  };
  if (!sizes.empty()) throw CheckpointError("config does not match checkpoint: " + join(sizes));
  if (!flags.empty()) {
    if (!force) throw CheckpointError("config flags do not match checkpoint: " + join(flags) + "; use --force to override");
    err << "warning: overriding checkpoint flags: " << join(flags) << '\n';
    auto values = mc.to_map();
    for (const auto& key : rc.assigned) {
      if (key.rfind("use_", 0) == 0) values[key] = rc.get(key);
    }
    mc = ModelConfig::from_map(values);
  }
  return mc;
}

int cmd_generate(RunConfig& rc, const GenerateOptions& opts, std::ostream& out, std::ostream& err) {
  const auto samples = load_jsonl(require(rc.data, "data"));
  const auto vocab = Vocabulary::load(require(rc.vocab, "vocab"));
  const auto ck = read_checkpoint(require(rc.checkpoint, "checkpoint"));
  const ModelConfig mc = checkpoint_config(rc, ck, opts.force, err);
  if (mc.vocab_size != vocab.size()) {
    throw CheckpointError("checkpoint vocab_size " + std::to_string(mc.vocab_size) + " does not match vocabulary of " +
                          std::to_string(vocab.size()));
  }
  CklModel model(mc, 0);
  load_checkpoint(rc.checkpoint, model, nullptr, ConfigMatch::kArchitecture);
  const auto dir = output_dir(rc);

  DecodeOptions decode;
  decode.mode = rc.decode == "beam" ? DecodeOptions::Mode::kBeam : DecodeOptions::Mode::kGreedy;
  decode.beam_size = rc.beam_size;
  if (opts.beam) {
    decode.mode = DecodeOptions::Mode::kBeam;
    decode.beam_size = *opts.beam;
  }
  if (opts.greedy) decode.mode = DecodeOptions::Mode::kGreedy;
  if (decode.mode == DecodeOptions::Mode::kBeam && decode.beam_size < 1) throw InputError("--beam must be at least 1");
  decode.max_len = rc.max_decode_len;

  const fs::path path = rc.generations.empty() ? dir / "generations.jsonl" : fs::path(rc.generations);
  auto file = open_output(path);
  NoGradScope no_grad;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto enc = encode_sample(samples[i], vocab, mc.encode_config());
    const auto weights = model.latent_weights(enc);
    const auto ids = model.generate(enc, decode);
    const auto tokens = vocab.decode(ids);
    json rec;
    rec["index"] = i;
    rec["ids"] = ids;
    rec["tokens"] = tokens;
    rec["text"] = detokenize(tokens);
    rec["clwr"] = to_vector(weights.clwr);
    rec["clwk"] = to_vector(weights.clwk);
    rec["klw"] = to_vector(weights.klw);
    file << rec.dump() << '\n';
  }
  echo_config(rc, dir, vocab.size());
  out << "generated " << samples.size() << " responses -> " << path.string() << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------
// evaluate / analyze

struct GenerationRecord {
  TokenList tokens;
  std::vector<double> clwr, clwk, klw;
  bool has_weights = false;
};

std::vector<GenerationRecord> load_generations(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open generations file " + path);
  std::vector<GenerationRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto rec = nlohmann::json::parse(line);
      GenerationRecord g;
      g.tokens = rec.at("tokens").get<TokenList>();
      g.has_weights = rec.contains("clwr") && rec.contains("clwk") && rec.contains("klw");
      if (g.has_weights) {
        g.clwr = rec.at("clwr").get<std::vector<double>>();
        g.clwk = rec.at("clwk").get<std::vector<double>>();
        g.klw = rec.at("klw").get<std::vector<double>>();
      }
      out.push_back(std::move(g));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(line_no, std::string("bad generation record: ") + e.what());
    }
  }
  return out;
}

std::vector<DialogueSample> aligned_samples(const RunConfig& rc, std::size_t expected) {
  auto samples = load_jsonl(require(rc.data, "data"));
  if (samples.size() != expected) {
    throw InputError("generations have " + std::to_string(expected) + " records but " + rc.data + " has " +
                     std::to_string(samples.size()) + " samples");
  }
  return samples;
}

int cmd_evaluate(RunConfig& rc, std::ostream& out) {
  const auto gens = load_generations(require(rc.generations, "generations"));
  if (gens.empty()) throw InputError("generations file is empty");
  const auto samples = aligned_samples(rc, gens.size());
  Corpus candidates, references;
  for (std::size_t i = 0; i < gens.size(); ++i) {
    candidates.push_back(gens[i].tokens);
    references.push_back(tokenize(samples[i].response));
  }
  const auto n = candidates.size();
  std::vector<MetricRow> rows;
  try {
    for (std::size_t k = 1; k <= 4; ++k) rows.push_back({"bleu_" + std::to_string(k), bleu(candidates, references, k), n, 0});
    rows.push_back({"rouge_l", rouge_l(candidates, references), n, 0});
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  }
  for (std::size_t k = 1; k <= 2; ++k) {
    std::size_t grams = 0;
    for (const auto& c : candidates) grams += c.size() >= k ? c.size() - k + 1 : 0;
    // Undefined when the generations contain no k-grams at all.
    if (grams == 0) {
      rows.push_back({"distinct_" + std::to_string(k), std::numeric_limits<double>::quiet_NaN(), 0, n});
    } else {
      rows.push_back({"distinct_" + std::to_string(k), distinct_n(candidates, k), n, 0});
    }
  }
  if (!rc.embeddings.empty()) {
    const auto table = WordVectorTable::load(rc.embeddings);
    const auto s = embedding_metrics(candidates, references, table);
    rows.push_back({"emb_average", s.average, s.n_pairs, s.n_excluded});
    rows.push_back({"emb_extrema", s.extrema, s.n_pairs, s.n_excluded});
    rows.push_back({"emb_greedy", s.greedy, s.n_pairs, s.n_excluded});
  }
  const auto dir = output_dir(rc);
  {
    auto file = open_output(dir / "metrics.csv");
    write_metric_csv(file, rows);
  }
  echo_config(rc, dir);
  write_metric_csv(out, rows);
  return kOk;
}

int cmd_analyze(RunConfig& rc, std::ostream& out) {
  const auto gens = load_generations(require(rc.generations, "generations"));
  if (gens.empty()) throw InputError("generations file is empty");
  const auto samples = aligned_samples(rc, gens.size());
  const auto enc = rc.model.encode_config();
  std::vector<TokenizedSample> tokenized;
  for (const auto& s : samples) tokenized.push_back(truncate_sample(s, enc, nullptr));
  const auto index = TfIdfIndex::from_samples(tokenized);

  std::vector<std::vector<double>> klw, clwr, clwk, gt_klw, gt_clwr, gt_clwk;
  std::vector<std::vector<std::size_t>> original, reranked;
  std::vector<std::size_t> targets;
  for (std::size_t i = 0; i < gens.size(); ++i) {
    const auto& g = gens[i];
    if (!g.has_weights) {
      throw InputError("generation record " + std::to_string(i) + " has no latent weights");
    }
    const auto gt = build_pseudo_gt(tokenized[i], index, rc.model.top_n);
    if (g.klw.size() != gt.gt_klw.size() || g.clwr.size() != gt.gt_clwr.size() ||
        g.clwk.size() != gt.gt_clwk.size()) {
      throw InputError("generation record " + std::to_string(i) +
                       " latent weight lengths do not match the sample's kept segments");
    }
    klw.push_back(g.klw);
    clwr.push_back(g.clwr);
    clwk.push_back(g.clwk);
    gt_klw.emplace_back(gt.gt_klw.begin(), gt.gt_klw.end());
    gt_clwr.emplace_back(gt.gt_clwr.begin(), gt.gt_clwr.end());
    gt_clwk.emplace_back(gt.gt_clwk.begin(), gt.gt_clwk.end());

    std::vector<std::size_t> order(g.klw.size());
    std::iota(order.begin(), order.end(), 0);
    original.push_back(order);
    const auto& w = g.klw;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return w[a] > w[b]; });
    reranked.push_back(order);
    targets.push_back(gt.top1_rk);
  }

  std::ostringstream csv;
  csv << "quantity,series,n,value,n_defined,n_undefined\n";
  for (const auto& [series, rankings] : {std::pair{"original", &original}, std::pair{"reranked", &reranked}}) {
    for (std::size_t n = 1; n <= 10; ++n) {
      csv << "p_at_n," << series << ',' << n << ',' << format(p_at_n(*rankings, targets, n)) << ','
          << gens.size() << ",0\n";
    }
  }
  auto spearman_rows = [&](const char* name, const auto& xs, const auto& ys) {
    const auto mean = mean_spearman(xs, ys);
    const auto pooled = pooled_spearman(xs, ys);
    csv << "spearman_mean," << name << ",," << (mean.value ? format(*mean.value) : "nan") << ',' << mean.n_defined
        << ',' << mean.n_undefined << '\n';
    csv << "spearman_pooled," << name << ",," << (pooled.value ? format(*pooled.value) : "nan") << ','
        << pooled.n_defined << ',' << pooled.n_undefined << '\n';
  };
  spearman_rows("klw", klw, gt_klw);
  spearman_rows("clwr", clwr, gt_clwr);
  spearman_rows("clwk", clwk, gt_clwk);

  const auto dir = output_dir(rc);
  {
    auto file = open_output(dir / "analysis.csv");
    file << csv.str();
  }
  echo_config(rc, dir);
  out << csv.str();
  return kOk;
}

// ---------------------------------------------------------------------------
// synth

struct SynthOptions {
  SyntheticOptions synthetic;
  std::string output;
};

int cmd_synth(RunConfig& rc, SynthOptions& opts, std::ostream& out) {
  opts.synthetic.seed = rc.training.seed;
  const auto corpus = make_synthetic_corpus(opts.synthetic);
  fs::path path = opts.output.empty() ? output_dir(rc) / "data.jsonl" : fs::path(opts.output);
  auto file = open_output(path);
  for (const auto& s : corpus.samples) {
    json rec;
    rec["context"] = s.context;
    rec["knowledge"] = s.knowledge;
    rec["response"] = s.response;
    file << rec.dump() << '\n';
  }
  out << "wrote " << corpus.samples.size() << " samples -> " << path.string() << '\n';
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"CKL: latent-weight knowledge-grounded dialogue generation", "ckl"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for all subcommands");

  CommonOptions common;
  std::string data, vocab, checkpoint, generations, embeddings;
  bool no_loss_klw = false, no_loss_clwr = false, no_loss_clwk = false, no_ck_dep = false;
  std::optional<double> data_fraction;
  std::optional<std::size_t> top_n;
  GenerateOptions gen_opts;
  SynthOptions synth_opts;

  auto* prep = app.add_subcommand("prep", "Build vocabulary, TF-IDF stats and pseudo-label cache");
  add_common(prep, common);
  prep->add_option("--data", data, "dataset JSON Lines file");
  prep->add_option("--top-n", top_n, "number of knowledge sentences labeled 1");

  auto* train_cmd = app.add_subcommand("train", "Train a model and write a checkpoint and loss trace");
  add_common(train_cmd, common);
  train_cmd->add_option("--data", data, "dataset JSON Lines file");
  train_cmd->add_option("--vocab", vocab, "vocabulary file from prep");
  train_cmd->add_option("--checkpoint", checkpoint, "checkpoint path (default <out>/model.ckl)");
  train_cmd->add_flag("--no-loss-klw", no_loss_klw, "drop the KLW loss term");
  train_cmd->add_flag("--no-loss-clwr", no_loss_clwr, "drop the CLWR loss term");
  train_cmd->add_flag("--no-loss-clwk", no_loss_clwk, "drop the CLWK loss term");
  train_cmd->add_flag("--no-ck-dep", no_ck_dep, "disable context conditioning of the KLW generator");
  train_cmd->add_option("--data-fraction", data_fraction, "train on the first ceil(f*n) shuffled samples");
  train_cmd->add_option("--top-n", top_n, "number of knowledge sentences labeled 1");

  auto* generate_cmd = app.add_subcommand("generate", "Decode responses and record latent weights");
  add_common(generate_cmd, common);
  generate_cmd->add_option("--data", data, "dataset JSON Lines file");
  generate_cmd->add_option("--vocab", vocab, "vocabulary file from prep");
  generate_cmd->add_option("--checkpoint", checkpoint, "trained checkpoint");
  generate_cmd->add_option("--generations", generations, "output path (default <out>/generations.jsonl)");
  generate_cmd->add_flag("--greedy", gen_opts.greedy, "greedy decoding");
  generate_cmd->add_option("--beam", gen_opts.beam, "beam search with this width");
  generate_cmd->add_flag("--no-ck-dep", no_ck_dep, "expect a model trained without CK-Dep");
  generate_cmd->add_flag("--force", gen_opts.force, "override mismatched checkpoint flags");

  auto* evaluate_cmd = app.add_subcommand("evaluate", "Score generations against reference responses");
  add_common(evaluate_cmd, common);
  evaluate_cmd->add_option("--generations", generations, "generations JSON Lines file");
  evaluate_cmd->add_option("--data", data, "dataset JSON Lines file");
  evaluate_cmd->add_option("--embeddings", embeddings, "word vector text file");

  auto* analyze_cmd = app.add_subcommand("analyze", "P@N knowledge re-ranking and latent-weight correlations");
  add_common(analyze_cmd, common);
  analyze_cmd->add_option("--generations", generations, "generations JSON Lines file with latent weights");
  analyze_cmd->add_option("--data", data, "dataset JSON Lines file");
  analyze_cmd->add_option("--top-n", top_n, "number of knowledge sentences labeled 1");

  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic copy-from-knowledge corpus");
  add_common(synth_cmd, common);
  synth_cmd->add_option("--samples", synth_opts.synthetic.samples, "number of samples");
  synth_cmd->add_option("--context", synth_opts.synthetic.context_turns, "context utterances per sample");
  synth_cmd->add_option("--knowledge", synth_opts.synthetic.knowledge_sentences, "knowledge sentences per sample");
  synth_cmd->add_option("--topics", synth_opts.synthetic.topics, "size of the topic pool (max 24)");
  synth_cmd->add_option("--output", synth_opts.output, "output file (default <out>/data.jsonl)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kInputError;
  }

  try {
    RunConfig rc = resolve_config(common);
    set_if(rc, "data", data);
    set_if(rc, "vocab", vocab);
    set_if(rc, "checkpoint", checkpoint);
    set_if(rc, "generations", generations);
    set_if(rc, "embeddings", embeddings);
    if (no_loss_klw) rc.set("use_loss_klw", "false");
    if (no_loss_clwr) rc.set("use_loss_clwr", "false");
    if (no_loss_clwk) rc.set("use_loss_clwk", "false");
    if (no_ck_dep) rc.set("use_ck_dep", "false");
    if (data_fraction) rc.set("data_fraction", format(*data_fraction));
    if (top_n) rc.set("top_n", std::to_string(*top_n));

    if (prep->parsed()) return cmd_prep(rc, out);
    if (train_cmd->parsed()) return cmd_train(rc, out);
    if (generate_cmd->parsed()) return cmd_generate(rc, gen_opts, out, err);
    if (evaluate_cmd->parsed()) return cmd_evaluate(rc, out);
    if (analyze_cmd->parsed()) return cmd_analyze(rc, out);
    if (synth_cmd->parsed()) return cmd_synth(rc, synth_opts, out);
    return kInputError;
  } catch (const TrainingAborted& e) {
    err << "error: " << e.what() << '\n';
    return kTrainingAborted;
  } catch (const CheckpointError& e) {
    err << "error: " << e.what() << '\n';
    return kCheckpointMismatch;
  } catch (const InputError& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const std::out_of_range& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  }
}

}  // namespace ckl::cli
