#include "condel/cli.hpp"

#include <charconv>
#include <csignal>
#include <fstream>
#include <iostream>
#include <pthread.h>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "condel/corpus.hpp"
#include "condel/error.hpp"
#include "condel/index.hpp"
#include "condel/metrics.hpp"
#include "condel/model.hpp"
#include "condel/rules.hpp"
#include "condel/server.hpp"

namespace condel {

namespace {

struct CorpusArgs {
  std::string path;
  std::string name;
  bool lenient = false;

  Strictness strictness() const { return lenient ? Strictness::lenient : Strictness::strict; }
  Corpus load() const {
    LoadOptions options;
    if (!name.empty()) options.name = name;
    return load_corpus(path, options);
  }
};

void add_corpus(CLI::App* cmd, CorpusArgs& args, const char* label = "corpus") {
  cmd->add_option(label, args.path, "Corpus JSONL file")->required();
  cmd->add_option("--name", args.name, "Distribution tag (defaults to the file stem)");
}

// Writes to `path`, or to `out` when the path is empty or "-".
void emit(const std::string& path, const std::string& content, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << content;
    return;
  }
  std::ofstream file(path, std::ios::binary);
  if (!file) throw Error(ErrorKind::not_found, "cannot write " + path, "output");
  file << content;
}

// --rules accepts a file path or the ruleset JSON itself.
RuleSet read_rules(const std::string& source, const std::string& mode_override) {
  auto first = source.find_first_not_of(" \t\r\n");
  RuleSet rules = first != std::string::npos && source[first] == '{' ? parse_ruleset(source) : load_ruleset(source);
  if (!mode_override.empty()) {
    auto mode = parse_rule_mode(mode_override);
    if (!mode) throw Error(ErrorKind::invalid, "unknown mode " + mode_override, "mode");
    rules = rules.with_mode(*mode);
  }
  return rules;
}

// Shortest text that reads back as the same double.
std::string format_double(double value) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, end);
}

int serve(const std::string& config_path, int port_override, std::ostream& out) {
  auto config = load_server_config(config_path);
  if (port_override >= 0) config.port = port_override;
  Server server(config, load_server_corpora(config));

  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  int port = server.bind(config.host, config.port);
  out << "listening on http://" << config.host << ":" << port << std::endl;
  std::thread waiter([&] {
    int received = 0;
    sigwait(&signals, &received);
    server.stop();
  });
  server.listen();
  // listen() can also return on its own; wake the waiter so it can exit
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Conditional-delegation rule workbench"};
  app.name("condel");
  app.require_subcommand(1);

  CorpusArgs corpus;
  std::string output;
  std::string rules_arg;
  std::string mode;

  auto* validate = app.add_subcommand("validate", "Check a corpus file and print its summary");
  add_corpus(validate, corpus);

  TrainConfig train_config;
  double rho = 0.0;
  auto* train = app.add_subcommand("train", "Fit the linear rationale model");
  add_corpus(train, corpus);
  train->add_option("-o,--output", output, "Model JSON")->required();
  train->add_option("--l1", train_config.l1_penalty, "L1 penalty")->check(CLI::NonNegativeNumber);
  train->add_option("--epochs", train_config.epochs, "Gradient steps")->check(CLI::PositiveNumber);
  train->add_option("--lr", train_config.learning_rate, "Learning rate")->check(CLI::PositiveNumber);
  train->add_option("--seed", train_config.seed, "Initialization seed");
  train->add_option("--threshold", train_config.threshold, "Decision threshold")->check(CLI::Range(0.0, 1.0));
  train->add_option("--sparsity-cap", train_config.sparsity_cap, "Rationale fraction cap for rho selection");
  auto* rho_opt = train->add_option("--rho", rho, "Fixed rationale weight cutoff")->check(CLI::PositiveNumber);

  std::string model_path;
  auto* annotate_cmd = app.add_subcommand("annotate", "Attach model predictions to a corpus");
  add_corpus(annotate_cmd, corpus);
  annotate_cmd->add_option("--model", model_path, "Model JSON")->required();
  annotate_cmd->add_option("-o,--output", output, "Output JSONL");

  std::string preds_path;
  auto* import_cmd = app.add_subcommand("import-preds", "Merge external predictions into a corpus");
  add_corpus(import_cmd, corpus);
  import_cmd->add_option("predictions", preds_path, "Prediction JSONL")->required();
  import_cmd->add_option("-o,--output", output, "Output JSONL");

  auto* evaluate_cmd = app.add_subcommand("evaluate", "Evaluate a ruleset on a labeled corpus");
  add_corpus(evaluate_cmd, corpus);
  evaluate_cmd->add_option("--rules", rules_arg, "Ruleset file or inline JSON")->required();
  evaluate_cmd->add_option("--mode", mode, "delegation or report_all (overrides the file)");
  evaluate_cmd->add_option("-o,--output", output, "Report JSON");
  evaluate_cmd->add_flag("--lenient", corpus.lenient, "Skip unlabeled comments instead of failing");

  std::size_t min_support = kDefaultMinSupport;
  std::string sort_by = "word";
  bool descending = false;
  auto* words = app.add_subcommand("word-table", "Per-word delegation vs report-all metrics");
  add_corpus(words, corpus);
  words->add_option("--min-support", min_support, "Minimum comments containing the word");
  words->add_option("--sort-by", sort_by, "Column to sort on");
  words->add_flag("--descending", descending, "Sort descending");
  words->add_option("-o,--output", output, "Output CSV");
  words->add_flag("--lenient", corpus.lenient, "Skip unlabeled comments instead of failing");

  std::size_t top_k = 15;
  auto* global = app.add_subcommand("global-expl", "Most frequent rationale tokens");
  add_corpus(global, corpus);
  global->add_option("-k", top_k, "Number of tokens");

  std::vector<double> thresholds;
  auto* pr = app.add_subcommand("pr-curve", "Precision/recall over probability thresholds");
  add_corpus(pr, corpus);
  pr->add_option("--thresholds", thresholds, "Ascending thresholds in [0,1] (default 0, 0.05, ..., 1)");
  pr->add_option("-o,--output", output, "Output CSV");
  pr->add_flag("--lenient", corpus.lenient, "Skip unlabeled comments instead of failing");

  auto* sparsity = app.add_subcommand("sparsity", "Mean rationale fraction per predicted class");
  add_corpus(sparsity, corpus);

  CorpusArgs corpus_b;
  auto* compare = app.add_subcommand("compare", "Metric deltas between two corpora (b - a)");
  compare->add_option("corpus_a", corpus.path, "First corpus")->required();
  compare->add_option("corpus_b", corpus_b.path, "Second corpus")->required();
  compare->add_option("--rules", rules_arg, "Ruleset file or inline JSON")->required();
  compare->add_option("--mode", mode, "delegation or report_all (overrides the file)");
  compare->add_option("-o,--output", output, "Output JSON");

  std::string config_path;
  int port_override = -1;
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP API");
  serve_cmd->add_option("--config", config_path, "Server config JSON")->required();
  serve_cmd->add_option("--port", port_override, "Override the configured port");

  std::vector<std::string> argv_storage{"condel"};
  argv_storage.insert(argv_storage.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_storage) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (validate->parsed()) {
      auto c = corpus.load();
      std::size_t gold_toxic = 0, pred_toxic = 0, labeled = 0, predicted = 0;
      for (const auto& comment : c.comments) {
        labeled += comment.gold ? 1 : 0;
        gold_toxic += comment.gold == Label::toxic ? 1 : 0;
        predicted += comment.pred ? 1 : 0;
        pred_toxic += comment.predicted_toxic() ? 1 : 0;
      }
      out << c.name << ": " << c.size() << " comments, " << labeled << " labeled (" << gold_toxic
          << " toxic), " << predicted << " predicted (" << pred_toxic << " toxic)\n";
    } else if (train->parsed()) {
      if (rho_opt->count() > 0) train_config.rho = rho;
      save_model(train_linear(corpus.load(), train_config), output);
    } else if (annotate_cmd->parsed()) {
      emit(output, serialize_corpus(annotate(load_model(model_path), corpus.load())), out);
    } else if (import_cmd->parsed()) {
      emit(output, serialize_corpus(import_predictions(corpus.load(), std::filesystem::path(preds_path))), out);
    } else if (evaluate_cmd->parsed()) {
      auto rules = read_rules(rules_arg, mode);
      auto index = InvertedIndex::build(corpus.load());
      emit(output, to_json(evaluate(index, rules, corpus.strictness())).dump(2) + "\n", out);
    } else if (words->parsed()) {
      auto column = parse_word_column(sort_by);
      if (!column) throw Error(ErrorKind::invalid, "unknown column " + sort_by, "sort-by");
      auto index = InvertedIndex::build(corpus.load());
      auto rows = word_table(index, min_support, corpus.strictness());
      sort_word_table(rows, *column, descending);
      emit(output, word_table_csv(rows), out);
    } else if (global->parsed()) {
      std::ostringstream text;
      for (const auto& entry : global_explanations(corpus.load(), top_k)) {
        text << entry.token << ' ' << entry.frequency << '\n';
      }
      out << text.str();
    } else if (pr->parsed()) {
      if (thresholds.empty()) {
        for (int i = 0; i <= 20; ++i) thresholds.push_back(i / 20.0);
      }
      std::ostringstream csv;
      csv << "threshold,precision,recall\n";
      for (const auto& point : pr_curve(corpus.load(), thresholds, corpus.strictness())) {
        csv << format_double(point.threshold) << ','
            << (point.precision ? format_double(*point.precision) : "") << ','
            << format_double(point.recall) << '\n';
      }
      emit(output, csv.str(), out);
    } else if (sparsity->parsed()) {
      auto report = rationale_sparsity(corpus.load());
      auto cell = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string("absent"); };
      out << "predicted_toxic " << cell(report.predicted_toxic) << '\n'
          << "predicted_nontoxic " << cell(report.predicted_nontoxic) << '\n';
    } else if (compare->parsed()) {
      auto rules = read_rules(rules_arg, mode);
      auto a = evaluate(InvertedIndex::build(corpus.load()), rules);
      auto b = evaluate(InvertedIndex::build(corpus_b.load()), rules);
      emit(output, to_json(compare_distributions(a, b)).dump(2) + "\n", out);
    } else if (serve_cmd->parsed()) {
      return serve(config_path, port_override, out);
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  }
  return kExitOk;
}

}  // namespace condel
