#include "defembed/cli.hpp"

#include <csignal>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include "CLI11.hpp"
#include "defembed/checkpoint.hpp"
#include "defembed/config.hpp"
#include "defembed/corpus.hpp"
#include "defembed/error.hpp"
#include "defembed/evaluation.hpp"
#include "defembed/query_engine.hpp"
#include "defembed/service.hpp"
#include "defembed/toy_world.hpp"
#include "defembed/training.hpp"

namespace defembed {
namespace {

constexpr std::size_t kMaxWarnings = 10;

void report_warnings(std::ostream& err, const std::vector<std::string>& warnings) {
  for (std::size_t i = 0; i < warnings.size() && i < kMaxWarnings; ++i) err << "warning: " << warnings[i] << '\n';
  if (warnings.size() > kMaxWarnings) err << "warning: ... " << warnings.size() - kMaxWarnings << " more\n";
}

std::vector<DefinitionRecord> read_records(const std::vector<std::string>& paths, Source source, std::ostream& err) {
  std::vector<DefinitionRecord> records;
  for (const auto& path : paths) {
    auto result = source == Source::encyclopedia ? ingest_encyclopedia(path)
                  : source == Source::eval       ? ingest_eval(path)
                                                 : ingest_dictionary(path);
    report_warnings(err, result.warnings);
    records.insert(records.end(), std::make_move_iterator(result.records.begin()),
                   std::make_move_iterator(result.records.end()));
  }
  return records;
}

void write_records_file(const std::string& path, std::span<const DefinitionRecord> records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  write_records(out, records);
}

std::shared_ptr<const EmbeddingStore> load_store(const std::string& path) {
  return std::make_shared<const EmbeddingStore>(load_embeddings(std::filesystem::path(path)));
}

// ---- ingest ----------------------------------------------------------------

struct IngestOptions {
  std::vector<std::string> dictionaries;
  std::vector<std::string> encyclopedias;
  std::string holdout_file;
  std::size_t holdout_count = 0;
  std::uint64_t seed = 1;
  std::string train_out;
  std::string unseen_out;
};

int run_ingest(const IngestOptions& o, std::ostream& out, std::ostream& err) {
  auto records = read_records(o.dictionaries, Source::dictionary, err);
  auto encyclopedia = read_records(o.encyclopedias, Source::encyclopedia, err);
  records.insert(records.end(), encyclopedia.begin(), encyclopedia.end());

  SplitSpec spec;
  spec.seed = o.seed;
  if (!o.holdout_file.empty()) {
    std::ifstream in(o.holdout_file);
    if (!in) throw Error("cannot open " + o.holdout_file);
    std::string line;
    while (std::getline(in, line)) {
      for (auto& token : tokenize(line)) spec.heldout_words.insert(std::move(token));
    }
  }
  if (o.holdout_count > 0) {
    const auto drawn = random_holdout(records, o.holdout_count, o.seed);
    spec.heldout_words.insert(drawn.heldout_words.begin(), drawn.heldout_words.end());
  }
  const auto split = split_seen_unseen(records, spec);
  report_warnings(err, split.warnings);
  if (!o.train_out.empty()) write_records_file(o.train_out, split.train);
  if (!o.unseen_out.empty()) write_records_file(o.unseen_out, split.unseen);
  out << "records\t" << records.size() << "\ntrain\t" << split.train.size() << "\nunseen\t" << split.unseen.size()
      << "\nheldout_words\t" << spec.heldout_words.size() << '\n';
  return 0;
}

// ---- train -----------------------------------------------------------------

struct TrainOptions {
  std::vector<std::string> train_files;
  std::string target;
  std::string input;
  std::string architecture = "bow";
  std::string input_mode = "learned";
  std::size_t input_dim = 0;  // 0: 256 learned, input store dim when pretrained
  std::size_t hidden_dim = 512;
  std::string output = "tanh";
  std::uint64_t seed = 1;
  std::size_t min_count = 1;
  std::string loss = "cosine";
  double margin = 0.1;
  std::uint64_t negative_seed = 1;
  std::size_t batch_size = 16;
  std::size_t epochs = 10;
  std::uint64_t shuffle_seed = 1;
  std::size_t eval_every = 0;
  std::vector<std::string> eval_files;
  std::string out;
  std::string log;
};

int run_train(const TrainOptions& o, std::ostream& out, std::ostream& err) {
  const auto records = read_records(o.train_files, Source::dictionary, err);
  const auto target = load_store(o.target);

  EncoderConfig config;
  config.architecture = parse_architecture(o.architecture);
  config.input_mode = parse_input_mode(o.input_mode);
  config.hidden_dim = o.hidden_dim;
  config.target_dim = target->dim();
  config.output = parse_output_nonlinearity(o.output);
  config.seed = o.seed;
  std::shared_ptr<const EmbeddingStore> input;
  if (config.input_mode == InputMode::pretrained_fixed) {
    if (o.input.empty()) throw Error("--input-mode pretrained_fixed needs --input");
    input = o.input == o.target ? target : load_store(o.input);
    config.input_dim = o.input_dim ? o.input_dim : input->dim();
  } else {
    config.input_dim = o.input_dim ? o.input_dim : 256;
  }
  if (records.empty()) throw Error("no training records");
  auto encoder = init_parameters(config, build_vocabulary(records, o.min_count), input);

  const auto eval_items = read_records(o.eval_files, Source::eval, err);
  TrainConfig train_config{o.batch_size, o.epochs, o.shuffle_seed, o.eval_every};
  LossConfig loss_config{parse_loss_kind(o.loss), o.margin, o.negative_seed};

  std::ofstream log_file;
  if (!o.log.empty()) {
    log_file.open(o.log);
    if (!log_file) throw Error("cannot open " + o.log);
  }
  std::ostream& log_out = o.log.empty() ? out : log_file;
  const auto callback = [&](const EpochLog& entry) {
    std::string line = to_json_line(entry);
    if (!eval_items.empty() && o.eval_every > 0) {
      const auto report = evaluate(encoder_queries(encoder), eval_items, *target, CandidateSet::all);
      line.pop_back();
      line += ",\"eval\":" + to_json_line("eval", report) + "}";
    }
    log_out << line << '\n';
  };
  const auto log = train(encoder, records, train_config, loss_config, *target, callback);
  report_warnings(err, log.warnings);
  if (!o.out.empty()) save_checkpoint(std::filesystem::path(o.out), encoder);
  err << "trained " << log.epochs.size() << " epochs, skipped " << log.skipped_pairs << " pairs, checkpoint "
      << checkpoint_hash(encoder) << '\n';
  return 0;
}

// ---- evaluate --------------------------------------------------------------

struct EvaluateOptions {
  std::string checkpoint;
  std::string target;
  std::string input;
  std::vector<std::string> eval_files;
  std::string mode = "revdict";
  bool json = false;
};

int run_evaluate(const EvaluateOptions& o, std::ostream& out, std::ostream& err) {
  const auto target = load_store(o.target);
  std::shared_ptr<const EmbeddingStore> input;
  if (!o.input.empty()) input = o.input == o.target ? target : load_store(o.input);

  const bool baseline = o.mode == "add" || o.mode == "mult";
  if (o.mode != "revdict" && o.mode != "crossword" && !baseline) {
    throw Error("unknown evaluation mode '" + o.mode + "' (expected revdict|crossword|add|mult)");
  }
  std::unique_ptr<Encoder> encoder;
  if (!baseline) {
    if (o.checkpoint.empty()) throw Error("--checkpoint is required for mode " + o.mode);
    encoder = std::make_unique<Encoder>(load_checkpoint(std::filesystem::path(o.checkpoint), input));
  } else if (!input) {
    input = target;
  }
  const auto candidates = o.mode == "crossword" ? CandidateSet::length_matched : CandidateSet::all;

  std::vector<std::pair<std::string, EvalReport>> rows;
  for (const auto& path : o.eval_files) {
    const auto items = read_records({path}, Source::eval, err);
    const auto queries = baseline ? baseline_queries(*input, o.mode == "add" ? Composition::add : Composition::mult)
                                  : encoder_queries(*encoder);
    rows.emplace_back(std::filesystem::path(path).stem().string(), evaluate(queries, items, *target, candidates));
  }
  if (o.json) {
    for (const auto& [name, report] : rows) out << to_json_line(name, report) << '\n';
  } else {
    print_report_table(out, rows);
  }
  return 0;
}

// ---- query / serve shared config --------------------------------------------

struct ServiceFlags {
  std::string config_file;
  std::string checkpoint;
  std::string target;
  std::string input;
  std::vector<std::string> bilingual;  // lang=path
  std::string host;
  int port = -1;
  std::size_t default_k = 0;
  std::size_t max_request_tokens = 0;
};

void add_service_flags(CLI::App* app, ServiceFlags& f) {
  app->add_option("--config", f.config_file, "key=value config file");
  app->add_option("--checkpoint", f.checkpoint, "model checkpoint");
  app->add_option("--target", f.target, "target embeddings");
  app->add_option("--input", f.input, "pre-trained input embeddings (pretrained_fixed checkpoints)");
  app->add_option("--bilingual", f.bilingual, "target-language store as lang=path (repeatable)");
}

ServiceConfig service_config(const ServiceFlags& f, const char* const* envp) {
  ConfigValues flags;
  if (!f.checkpoint.empty()) flags["checkpoint"] = f.checkpoint;
  if (!f.target.empty()) flags["target_embeddings"] = f.target;
  if (!f.input.empty()) flags["input_embeddings"] = f.input;
  if (!f.bilingual.empty()) {
    std::string joined;
    for (const auto& b : f.bilingual) joined += (joined.empty() ? "" : ",") + b;
    flags["bilingual_embeddings"] = joined;
  }
  if (!f.host.empty()) flags["host"] = f.host;
  if (f.port >= 0) flags["port"] = std::to_string(f.port);
  if (f.default_k) flags["default_k"] = std::to_string(f.default_k);
  if (f.max_request_tokens) flags["max_request_tokens"] = std::to_string(f.max_request_tokens);
  std::optional<std::filesystem::path> file;
  if (!f.config_file.empty()) file = f.config_file;
  return resolve_service_config(file, flags, environment_overrides(envp));
}

struct QueryOptions {
  std::string mode = "revdict";
  std::size_t k = 0;  // 0: the configured default_k
  std::size_t length = 0;
  std::string target_lang;
  std::string text;
};

int run_query_command(const ServiceFlags& flags, const QueryOptions& o, const char* const* envp, std::ostream& out,
                      std::ostream& err) {
  const auto config = service_config(flags, envp);
  const auto snapshot = load_snapshot(config);
  Query query;
  query.text = o.text;
  query.mode = parse_query_mode(o.mode);
  query.k = o.k ? o.k : config.default_k;
  if (o.length) query.answer_length = o.length;
  if (!o.target_lang.empty()) query.target_language = o.target_lang;
  const auto result = run_query(snapshot->context, query);
  if (!result.skipped_tokens.empty()) {
    err << "unknown words ignored:";
    for (const auto& t : result.skipped_tokens) err << ' ' << t;
    err << '\n';
  }
  char score[32];
  for (std::size_t i = 0; i < result.candidates.size(); ++i) {
    std::snprintf(score, sizeof(score), "%.6f", result.candidates[i].score);
    out << i + 1 << '\t' << result.candidates[i].token << '\t' << score << '\n';
  }
  return 0;
}

QueryService* g_running_service = nullptr;

extern "C" void handle_stop_signal(int) {
  // Only flags the server; the listener thread exits and wait() returns.
  if (g_running_service) g_running_service->interrupt();
}

int run_serve(const ServiceFlags& flags, const char* const* envp, std::ostream& out) {
  QueryService service(service_config(flags, envp));
  const int port = service.start();
  out << "listening on " << service.config().host << ':' << port << " model " << service.snapshot()->checkpoint_hash
      << std::endl;
  g_running_service = &service;
  std::signal(SIGINT, handle_stop_signal);
  std::signal(SIGTERM, handle_stop_signal);
  service.wait();
  g_running_service = nullptr;
  return 0;
}

// ---- gradcheck --------------------------------------------------------------

struct GradCheckOptions {
  std::string architecture = "bow";
  std::string loss = "cosine";
  std::string input_mode = "learned";
  std::uint64_t seed = 1;
  double epsilon = 1e-4;
  double margin = 0.1;
  std::string negative;
};

int run_gradcheck(const GradCheckOptions& o, std::ostream& out) {
  auto fixture = toy::make_gradcheck_fixture(parse_architecture(o.architecture), o.seed, parse_input_mode(o.input_mode));
  LossConfig loss{parse_loss_kind(o.loss), o.margin, o.seed};
  std::optional<std::string> negative;
  if (!o.negative.empty()) {
    negative = o.negative;
  } else if (loss.kind == LossKind::rank) {
    negative = toy::hardest_negative(fixture);
  }
  const auto result = gradient_check(fixture.encoder, fixture.pair, loss, fixture.target, negative, o.epsilon);
  out << "architecture\t" << o.architecture << "\nloss\t" << o.loss << "\nchecked\t" << result.checked
      << "\nloss_value\t" << result.loss << "\nmax_relative_error\t" << result.max_relative_error << "\nworst\t"
      << result.worst_parameter << '[' << result.worst_index << "]\n";
  if (loss.kind == LossKind::rank) out << "negative\t" << result.negative << (result.perturbed ? " (re-drawn)" : "") << '\n';
  const bool ok = result.max_relative_error < kGradCheckThreshold;
  out << (ok ? "PASS" : "FAIL") << '\n';
  return ok ? 0 : 1;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const char* const* envp) {
  CLI::App app{"defembed: definition-to-embedding models, reverse dictionary and crossword queries"};
  app.name(args.empty() ? "defembed" : args.front());
  app.require_subcommand(1);

  IngestOptions ingest;
  auto* ingest_cmd = app.add_subcommand("ingest", "read definition files and write seen/unseen splits");
  ingest_cmd->add_option("--dictionary", ingest.dictionaries, "headword<TAB>definition file (repeatable)");
  ingest_cmd->add_option("--encyclopedia", ingest.encyclopedias, "title<TAB>sentence file (repeatable)");
  ingest_cmd->add_option("--holdout-words", ingest.holdout_file, "file of headwords to hold out");
  ingest_cmd->add_option("--holdout-count", ingest.holdout_count, "hold out this many random headwords");
  ingest_cmd->add_option("--seed", ingest.seed, "holdout seed");
  ingest_cmd->add_option("--train-out", ingest.train_out, "write training records here");
  ingest_cmd->add_option("--unseen-out", ingest.unseen_out, "write held-out records here");

  TrainOptions tr;
  auto* train_cmd = app.add_subcommand("train", "train an encoder");
  train_cmd->add_option("--train", tr.train_files, "training TSV (repeatable)")->required();
  train_cmd->add_option("--target", tr.target, "target embeddings")->required();
  train_cmd->add_option("--input", tr.input, "pre-trained input embeddings");
  train_cmd->add_option("--arch", tr.architecture, "bow|lstm");
  train_cmd->add_option("--input-mode", tr.input_mode, "learned|pretrained_fixed");
  train_cmd->add_option("--input-dim", tr.input_dim, "input embedding length");
  train_cmd->add_option("--hidden-dim", tr.hidden_dim, "LSTM layer size");
  train_cmd->add_option("--output", tr.output, "LSTM output nonlinearity tanh|identity");
  train_cmd->add_option("--seed", tr.seed, "parameter init seed");
  train_cmd->add_option("--min-count", tr.min_count, "vocabulary min count");
  train_cmd->add_option("--loss", tr.loss, "cosine|rank");
  train_cmd->add_option("--margin", tr.margin, "rank loss margin");
  train_cmd->add_option("--negative-seed", tr.negative_seed, "negative sampling seed");
  train_cmd->add_option("--batch-size", tr.batch_size, "minibatch size");
  train_cmd->add_option("--epochs", tr.epochs, "number of epochs");
  train_cmd->add_option("--shuffle-seed", tr.shuffle_seed, "shuffle seed");
  train_cmd->add_option("--eval-every", tr.eval_every, "evaluate --eval sets every N epochs");
  train_cmd->add_option("--eval", tr.eval_files, "evaluation TSV for --eval-every");
  train_cmd->add_option("--out", tr.out, "checkpoint path");
  train_cmd->add_option("--log", tr.log, "training log (JSON lines); default stdout");

  EvaluateOptions ev;
  auto* eval_cmd = app.add_subcommand("evaluate", "rank-based evaluation on labelled sets");
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "model checkpoint");
  eval_cmd->add_option("--target", ev.target, "target embeddings")->required();
  eval_cmd->add_option("--input", ev.input, "input embeddings (pretrained checkpoints, baselines)");
  eval_cmd->add_option("--eval", ev.eval_files, "evaluation TSV (repeatable)")->required();
  eval_cmd->add_option("--mode", ev.mode, "revdict|crossword|add|mult");
  eval_cmd->add_flag("--json", ev.json, "line-delimited JSON instead of a table");

  ServiceFlags query_flags;
  QueryOptions q;
  auto* query_cmd = app.add_subcommand("query", "answer one query; prints rank<TAB>word<TAB>score");
  add_service_flags(query_cmd, query_flags);
  query_cmd->add_option("--mode", q.mode, "revdict|crossword|bilingual");
  query_cmd->add_option("--k", q.k, "number of candidates (default: default_k)");
  query_cmd->add_option("--length", q.length, "crossword answer length");
  query_cmd->add_option("--target-lang", q.target_lang, "bilingual target language");
  query_cmd->add_option("text", q.text, "query text")->required();

  ServiceFlags serve_flags;
  auto* serve_cmd = app.add_subcommand("serve", "run the HTTP query API");
  add_service_flags(serve_cmd, serve_flags);
  serve_cmd->add_option("--host", serve_flags.host, "bind address");
  serve_cmd->add_option("--port", serve_flags.port, "bind port (0 picks a free port)");
  serve_cmd->add_option("--default-k", serve_flags.default_k, "k when a request omits it");
  serve_cmd->add_option("--max-request-tokens", serve_flags.max_request_tokens, "per-request token limit");

  GradCheckOptions gc;
  auto* grad_cmd = app.add_subcommand("gradcheck", "compare analytic gradients with central differences");
  grad_cmd->add_option("--arch", gc.architecture, "bow|lstm");
  grad_cmd->add_option("--loss", gc.loss, "cosine|rank");
  grad_cmd->add_option("--input-mode", gc.input_mode, "learned|pretrained_fixed");
  grad_cmd->add_option("--seed", gc.seed, "fixture seed");
  grad_cmd->add_option("--epsilon", gc.epsilon, "finite-difference step");
  grad_cmd->add_option("--margin", gc.margin, "rank loss margin");
  grad_cmd->add_option("--negative", gc.negative, "negative word for the rank loss");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  if (!reversed.empty()) reversed.pop_back();
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (*ingest_cmd) return run_ingest(ingest, out, err);
    if (*train_cmd) return run_train(tr, out, err);
    if (*eval_cmd) return run_evaluate(ev, out, err);
    if (*query_cmd) return run_query_command(query_flags, q, envp, out, err);
    if (*serve_cmd) return run_serve(serve_flags, envp, out);
    if (*grad_cmd) return run_gradcheck(gc, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace defembed
