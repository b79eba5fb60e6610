// revdict: command-line entry point for index building, training,
// evaluation, querying and serving.

#include <algorithm>
#include <chrono>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "revdict/corpus.hpp"
#include "revdict/evaluation.hpp"
#include "revdict/grad_check.hpp"
#include "revdict/lexicon.hpp"
#include "revdict/pipeline.hpp"
#include "revdict/service.hpp"
#include "revdict/synth.hpp"
#include "revdict/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace revdict;

namespace {

constexpr int kUsageError = 2;

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path, "io_error");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(path + ": " + e.what(), "malformed_json");
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string(), "io_error");
  out << text;
}

// Turns a JSON config object into "--key value" arguments. They are placed
// before the real arguments so explicit flags win (last value is kept).
std::vector<std::string> config_args(const json& cfg) {
  if (!cfg.is_object()) throw Error("config file must hold a JSON object", "invalid_config");
  std::vector<std::string> out;
  for (const auto& [key, value] : cfg.items()) {
    std::string flag = "--" + key;
    std::replace(flag.begin() + 2, flag.end(), '_', '-');
    auto scalar = [](const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
    if (value.is_boolean()) {
      if (value.get<bool>()) out.push_back(flag);
    } else if (value.is_array()) {
      for (const auto& v : value) {
        out.push_back(flag);
        out.push_back(scalar(v));
      }
    } else if (value.is_object()) {
      // key=value pairs, e.g. "words": {"en": "en.txt"}
      for (const auto& [k, v] : value.items()) {
        out.push_back(flag);
        out.push_back(k + "=" + scalar(v));
      }
    } else if (!value.is_null()) {
      out.push_back(flag);
      out.push_back(scalar(value));
    }
  }
  return out;
}

// Splits "lang=path" pairs.
std::map<std::string, std::string> parse_pairs(const std::vector<std::string>& items,
                                               const std::string& what) {
  std::map<std::string, std::string> out;
  for (const auto& s : items) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == s.size()) {
      throw Error(what + " expects LANG=PATH, got \"" + s + "\"", "invalid_argument");
    }
    out[s.substr(0, eq)] = s.substr(eq + 1);
  }
  return out;
}

// --checkpoint may name the model directory or the model.ckpt inside it.
std::string model_dir_from(const std::string& checkpoint) {
  const std::string dir = resolve_model_dir(checkpoint);
  if (fs::is_regular_file(dir)) return fs::path(dir).parent_path().string();
  return dir;
}

SplitTag split_or_throw(const std::string& s) {
  auto tag = split_from_string(s);
  if (!tag) throw Error("unknown split \"" + s + "\"", "invalid_argument");
  return *tag;
}

struct ModelFlags {
  int layers = 2;
  int d_model = 32;
  int heads = 2;
  int ffn_dim = 64;
  int max_seq_len = 128;
  double dropout = 0.1;
  double init_std = 0.02;

  void add(CLI::App* app) {
    app->add_option("--layers", layers, "Transformer layers")->capture_default_str();
    app->add_option("--d-model", d_model, "Hidden width")->capture_default_str();
    app->add_option("--heads", heads, "Attention heads")->capture_default_str();
    app->add_option("--ffn-dim", ffn_dim, "Feed-forward width")->capture_default_str();
    app->add_option("--max-seq-len", max_seq_len, "Maximum input length")->capture_default_str();
    app->add_option("--dropout", dropout, "Dropout rate during training")->capture_default_str();
    app->add_option("--init-std", init_std, "Weight init standard deviation")->capture_default_str();
  }

  ModelConfig config() const {
    ModelConfig c;
    c.num_layers = layers;
    c.d_model = d_model;
    c.num_heads = heads;
    c.ffn_dim = ffn_dim;
    c.max_seq_len = max_seq_len;
    c.dropout = dropout;
    c.init_std = init_std;
    return c;
  }
};

void print_ranking(const RankingList& r, bool as_json) {
  if (as_json) {
    json items = json::array();
    for (const auto& it : r.items) {
      items.push_back({{"rank", it.rank}, {"surface", it.surface}, {"score", it.score}});
    }
    std::cout << json{{"language", r.language}, {"candidates", items}}.dump(2) << '\n';
    return;
  }
  for (const auto& it : r.items) {
    std::cout << it.rank << '\t' << it.surface << '\t' << std::setprecision(6) << it.score << '\n';
  }
}

// ---------------------------------------------------------------- synth
struct SynthCmd {
  std::string spec_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool no_splits = false;
  SplitConfig splits;

  void add(CLI::App* app) {
    app->add_option("--spec", spec_path, "Generator spec (JSON)");
    app->add_option("--out", out_dir, "Output directory")->required();
    app->add_option("--seed", seed, "Random seed")->capture_default_str();
    app->add_flag("--no-splits", no_splits, "Leave every entry in the train split");
    app->add_option("--unseen-fraction", splits.unseen_word_fraction)->capture_default_str();
    app->add_option("--seen-count", splits.seen_per_language)->capture_default_str();
    app->add_option("--dev-fraction", splits.dev_word_fraction)->capture_default_str();
    app->add_option("--bilingual-test-fraction", splits.bilingual_test_fraction)->capture_default_str();
  }

  int run() const {
    const SynthSpec spec = spec_path.empty() ? SynthSpec{} : synth_spec_from_json(read_json_file(spec_path));
    auto out = synth_generate(spec, seed);
    const TrainingCorpus corpus = no_splits ? out.corpus : make_splits(out.corpus, seed, splits);
    fs::create_directories(out_dir);
    const fs::path dir(out_dir);
    save_corpus(corpus, (dir / "corpus.jsonl").string());
    save_vocab(out.vocab(), (dir / "vocab.txt").string());
    json words = json::object();
    for (const auto& [lang, list] : out.words) {
      std::string text;
      for (const auto& w : list) text += w + '\n';
      const auto name = "words_" + lang + ".txt";
      write_text(dir / name, text);
      words[lang] = name;
    }
    for (const auto& [pair, lex] : out.lexicons) {
      save_lexicon(lex, (dir / ("lexicon_" + pair.first + "_" + pair.second + ".tsv")).string());
    }
    write_text(dir / "spec.json", to_json(spec).dump(2) + '\n');
    std::cerr << "wrote " << corpus.size() << " entries, " << out.vocab_tokens.size()
              << " tokens to " << out_dir << '\n';
    return 0;
  }
};

// ---------------------------------------------------------- build-index
struct BuildIndexCmd {
  std::string vocab_path;
  std::vector<std::string> words;
  int k = 0;
  double coverage = 0.99;
  std::string out_path;

  void add(CLI::App* app) {
    app->add_option("--vocab", vocab_path, "Vocabulary file")->required();
    app->add_option("--words", words, "LANG=PATH word list (repeatable)")
        ->required()
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
    app->add_option("--k", k, "Mask-block length; 0 chooses it from --coverage");
    app->add_option("--coverage", coverage, "Target-word coverage for choosing k")->capture_default_str();
    app->add_option("--out", out_path, "Index JSON to write")->required();
  }

  int run() const {
    const auto vocab = load_vocab(vocab_path);
    std::map<LanguageTag, std::vector<std::string>> lists;
    for (const auto& [lang, path] : parse_pairs(words, "--words")) lists[lang] = load_word_list(path);
    int chosen = k;
    if (chosen <= 0) {
      std::vector<std::string> all;
      for (const auto& [_, l] : lists) all.insert(all.end(), l.begin(), l.end());
      chosen = choose_k(vocab, all, coverage);
    }
    const auto index = build_index(vocab, lists, chosen);
    save_index(index, out_path);
    std::cerr << "k=" << chosen;
    for (const auto& lang : index.languages()) std::cerr << ' ' << lang << '=' << index.size(lang);
    std::cerr << " excluded=" << index.excluded().size() << '\n';
    for (const auto& e : index.excluded()) {
      std::cerr << "  excluded " << e.language << ' ' << e.surface << " (" << e.reason << ")\n";
    }
    return 0;
  }
};

// ---------------------------------------------------------------- train
struct TrainCmd {
  std::string corpus_path, vocab_path, index_path, out_dir, model_id, mode = "monolingual", head_mode;
  std::uint64_t seed = 0;
  TrainConfig tc;
  ModelFlags model;
  bool quiet = false;

  void add(CLI::App* app) {
    app->add_option("--corpus", corpus_path, "Corpus (JSON lines)")->required();
    app->add_option("--vocab", vocab_path, "Vocabulary file")->required();
    app->add_option("--index", index_path, "Word index JSON")->required();
    app->add_option("--out", out_dir, "Model directory (default: $REVDICT_MODEL_DIR)");
    app->add_option("--model-id", model_id, "Identifier reported by the service");
    app->add_option("--mode", mode, "monolingual | bilingual_aligned | unaligned_multilingual")
        ->capture_default_str();
    app->add_option("--head-mode", head_mode, "mlm_head | embedding_dot (default depends on mode)");
    app->add_option("--seed", seed, "Random seed")->capture_default_str();
    app->add_option("--epochs", tc.epochs)->capture_default_str();
    app->add_option("--batch-size", tc.batch_size)->capture_default_str();
    app->add_option("--learning-rate,--lr", tc.learning_rate)->capture_default_str();
    app->add_option("--warmup-fraction", tc.warmup_fraction)->capture_default_str();
    app->add_option("--clip-norm", tc.clip_norm)->capture_default_str();
    app->add_flag("--normalize-positions", tc.loss.normalize_positions,
                  "Per-position log-softmax before summing");
    app->add_flag("--mean-reduction", tc.loss.mean_reduction, "Average the loss over the batch");
    app->add_flag("--quiet", quiet, "Do not echo the epoch log");
    model.add(app);
  }

  int run() {
    const std::string dir = resolve_model_dir(out_dir);
    tc.mode = training_mode_from_string(mode);
    if (!head_mode.empty()) tc.head_mode = head_mode_from_string(head_mode);
    auto vocab = load_vocab(vocab_path);
    auto index = load_index(index_path, vocab);
    const auto corpus = load_corpus(corpus_path);
    fs::create_directories(dir);
    std::ofstream log((ModelPaths{dir}.train_log()).string());
    const auto result = train(corpus, index, vocab, tc, model.config(), seed, [&](const EpochLog& e) {
      log << to_json(e).dump() << '\n';
      log.flush();
      if (!quiet) std::cerr << to_json(e).dump() << '\n';
    });
    Model m{std::move(vocab), std::move(index), result.best, tc.mode,
            model_id.empty() ? fs::path(dir).filename().string() : model_id};
    save_model(m, dir);
    std::cerr << "best epoch " << result.best_epoch << ", saved to " << dir;
    if (result.skipped_examples) std::cerr << " (" << result.skipped_examples << " unindexed targets skipped)";
    std::cerr << '\n';
    return 0;
  }
};

// ----------------------------------------------------------------- eval
struct EvalCmd {
  std::string checkpoint, corpus_path, split = "test", pair, annotations, lexicon_path;
  bool group_by_subwords = false;
  std::size_t pivot_m = 10;

  void add(CLI::App* app) {
    app->add_option("--checkpoint", checkpoint, "Model directory (default: $REVDICT_MODEL_DIR)");
    app->add_option("--corpus", corpus_path, "Corpus (JSON lines)")->required();
    app->add_option("--split", split, "Split tag to evaluate")->capture_default_str();
    app->add_option("--pair", pair, "Restrict to DEF_LANG->WORD_LANG");
    app->add_flag("--group-by-subwords", group_by_subwords, "Add per-piece-count groups");
    app->add_option("--annotations", annotations, "Per-sample group keys (JSON array or object)");
    app->add_option("--pivot-lexicon", lexicon_path,
                    "Evaluate the pivot baseline through this source<TAB>target lexicon");
    app->add_option("--pivot-m", pivot_m, "Source words translated by the pivot baseline")
        ->capture_default_str();
  }

  int run() const {
    const Model model = load_model(model_dir_from(checkpoint));
    const auto corpus = load_corpus(corpus_path);
    const SplitTag tag = split_or_throw(split);
    std::string def_lang, word_lang;
    if (!pair.empty()) {
      const auto arrow = pair.find("->");
      if (arrow == std::string::npos) throw Error("--pair expects DEF->WORD", "invalid_argument");
      def_lang = pair.substr(0, arrow);
      word_lang = pair.substr(arrow + 2);
    }
    const auto view = pair.empty() ? corpus.view(tag) : corpus.pair_view(tag, def_lang, word_lang);
    for (const auto& e : view) {
      if (!model.supports(e.definition_language, e.word_language)) {
        throw Error("model does not support " + e.definition_language + " -> " + e.word_language,
                    "unsupported_pair");
      }
    }
    MetricsReport report;
    if (!lexicon_path.empty()) {
      report = pivot_report(model, view, load_lexicon(lexicon_path));
    } else {
      report = evaluate(model.params, model.vocab, model.index, view, split, group_by_subwords);
    }
    if (!annotations.empty()) {
      auto run = rank_entries(model.params, model.vocab, model.index, view);
      report.groups = grouped_metrics(run.ranks, annotations_from_json(read_json_file(annotations), view.size()));
    }
    std::cout << to_json(report).dump(2) << '\n';
    return 0;
  }

  MetricsReport pivot_report(const Model& model, const CorpusView& view, const BilingualLexicon& lex) const {
    if (view.empty()) throw Error("no entries in split " + split, "empty_split");
    std::vector<std::size_t> ranks;
    std::vector<std::string> excluded;
    for (const auto& e : view) {
      const auto mono = model.query(e.definition, e.definition_language, e.definition_language,
                                    pivot_m);
      const auto piv = pivot_baseline(mono, lex, pivot_m, &model.index, e.word_language);
      const std::size_t worst = model.index.size(e.word_language);
      if (model.index.find(e.word_language, model.vocab.normalize(e.word)) < 0) excluded.push_back(e.word);
      ranks.push_back(surface_rank(piv, model.vocab.normalize(e.word), worst));
    }
    MetricsReport r;
    r.split = split;
    r.language_pair = pair_label(view);
    r.metrics = compute_metrics(ranks, excluded.size());
    r.excluded = excluded;
    return r;
  }
};

// ---------------------------------------------------------------- query
struct QueryCmd {
  std::string checkpoint, definition, def_lang, target_lang, scores_file, vocab_path, index_path;
  std::size_t top_n = 10;
  bool as_json = false;

  void add(CLI::App* app) {
    app->add_option("--checkpoint", checkpoint, "Model directory (default: $REVDICT_MODEL_DIR)");
    app->add_option("--def", definition, "Definition text");
    app->add_option("--def-lang", def_lang, "Definition language");
    app->add_option("--target-lang", target_lang, "Target word language")->required();
    app->add_option("--top-n", top_n, "Candidates to print")->capture_default_str();
    app->add_option("--scores-file", scores_file,
                    "Rank from an externally produced k x |V| score matrix instead of a model");
    app->add_option("--vocab", vocab_path, "Vocabulary (with --scores-file)");
    app->add_option("--index", index_path, "Word index (with --scores-file)");
    app->add_flag("--json", as_json, "Print JSON");
  }

  int run() const {
    if (top_n == 0) throw Error("--top-n must be >= 1", "invalid_argument");
    if (!scores_file.empty()) {
      if (vocab_path.empty() || index_path.empty()) {
        throw Error("--scores-file needs --vocab and --index", "invalid_argument");
      }
      const auto vocab = load_vocab(vocab_path);
      const auto index = load_index(index_path, vocab);
      const auto s = read_score_matrix(scores_file);
      if (s.cols() != static_cast<Eigen::Index>(vocab.size())) {
        throw Error("score matrix width differs from the vocabulary size", "shape_mismatch");
      }
      print_ranking(rank(aggregate(s, index, target_lang), &index, top_n), as_json);
      return 0;
    }
    if (definition.empty() && def_lang.empty()) throw Error("--def and --def-lang are required", "invalid_argument");
    const Model model = load_model(model_dir_from(checkpoint));
    print_ranking(model.query(definition, def_lang.empty() ? target_lang : def_lang, target_lang, top_n),
                  as_json);
    return 0;
  }
};

// -------------------------------------------------------- export-scores
struct ExportScoresCmd {
  std::string checkpoint, definition, target_lang, out_path;

  void add(CLI::App* app) {
    app->add_option("--checkpoint", checkpoint, "Model directory (default: $REVDICT_MODEL_DIR)");
    app->add_option("--def", definition, "Definition text")->required();
    app->add_option("--target-lang", target_lang, "Target word language")->required();
    app->add_option("--out", out_path, "Score matrix file to write")->required();
  }

  int run() const {
    const Model model = load_model(model_dir_from(checkpoint));
    if (!model.index.has_language(target_lang)) {
      throw Error("unknown language \"" + target_lang + "\"", "unknown_language");
    }
    write_score_matrix(out_path, model.subword_matrix(definition, target_lang));
    return 0;
  }
};

// ---------------------------------------------------------------- serve
ReverseDictionaryService* g_service = nullptr;

extern "C" void on_signal(int) {
  if (g_service) g_service->stop();
}

struct ServeCmd {
  std::string checkpoint, host = "127.0.0.1", cors_origin;
  int port = 8080;

  void add(CLI::App* app) {
    app->add_option("--checkpoint", checkpoint, "Model directory (default: $REVDICT_MODEL_DIR)");
    app->add_option("--host", host, "Bind address")->capture_default_str();
    app->add_option("--port", port, "Port (0 picks a free one)")->capture_default_str();
    app->add_option("--cors-origin", cors_origin, "Allowed cross-origin caller, e.g. http://localhost:5173");
  }

  int run() const {
    const std::string dir = model_dir_from(checkpoint);
    auto model = std::make_shared<const Model>(load_model(dir));
    ServiceOptions opts;
    opts.cors_origin = cors_origin;
    opts.loader = [dir](const std::string& requested) {
      return std::make_shared<const Model>(load_model(requested.empty() ? dir : requested));
    };
    ReverseDictionaryService service(model, opts);
    g_service = &service;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    int bound = port;
    if (port == 0) {
      bound = service.bind_any(host);
    } else if (!service.server().bind_to_port(host, port)) {
      bound = -1;
    }
    if (bound < 0) throw Error("cannot bind " + host + ":" + std::to_string(port), "bind_failed");
    std::cout << "listening on http://" << host << ':' << bound << std::endl;
    service.listen_after_bind();
    g_service = nullptr;
    return 0;
  }
};

// ----------------------------------------------------------- grad-check
struct GradCheckCmd {
  std::string config = "tiny";
  std::uint64_t seed = 0;
  double tolerance = 1e-4;
  std::size_t samples = 24;
  bool two_point = false;
  bool as_json = false;

  void add(CLI::App* app) {
    app->add_option("--config", config, "\"tiny\" or a JSON model config")->capture_default_str();
    app->add_option("--seed", seed)->capture_default_str();
    app->add_option("--tolerance", tolerance, "Max relative error per tensor")->capture_default_str();
    app->add_option("--samples", samples, "Coordinates per tensor (0 = all)")->capture_default_str();
    app->add_flag("--two-point", two_point, "Use the two-point central difference");
    app->add_flag("--json", as_json, "Print JSON");
  }

  int run() const {
    ModelConfig cfg;
    std::size_t vocab_size = 64;
    int k = 3;
    int n_languages = 2;
    if (config == "tiny") {
      cfg.num_layers = 2;
      cfg.d_model = 16;
      cfg.num_heads = 2;
      cfg.ffn_dim = 32;
      cfg.max_seq_len = 16;
      cfg.init_std = 0.3;
    } else {
      const json j = read_json_file(config);
      cfg = j.get<ModelConfig>();
      vocab_size = j.value("vocab_size", vocab_size);
      k = j.value("k", k);
      n_languages = j.value("num_languages", n_languages);
      if (j.contains("head_mode")) cfg.head_mode = head_mode_from_string(j.at("head_mode").get<std::string>());
    }
    bool all_pass = true;
    json out = json::array();
    const auto t0 = std::chrono::steady_clock::now();
    for (HeadMode head : {HeadMode::kMlmHead, HeadMode::kEmbeddingDot}) {
      if (config != "tiny" && head != cfg.head_mode) continue;
      auto problem = grad_check_problem(cfg, head, vocab_size, k, n_languages, seed);
      GradCheckOptions opts;
      opts.tolerance = tolerance;
      opts.samples_per_tensor = samples;
      opts.five_point = !two_point;
      opts.seed = seed;
      const auto report = grad_check(problem.params, problem.index,
                                     std::span<const TrainingExample>(problem.batch), opts);
      all_pass = all_pass && report.all_pass();
      for (const auto& t : report.tensors) {
        out.push_back({{"head_mode", to_string(head)},
                       {"tensor", t.name},
                       {"coordinates", t.coordinates_checked},
                       {"max_relative_error", t.max_relative_error},
                       {"pass", t.pass}});
        if (!as_json) {
          std::cout << std::left << std::setw(14) << to_string(head) << std::setw(40) << t.name
                    << std::setw(12) << std::scientific << std::setprecision(3) << t.max_relative_error
                    << (t.pass ? "PASS" : "FAIL") << '\n';
        }
      }
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (as_json) {
      std::cout << json{{"tensors", out}, {"all_pass", all_pass}, {"seconds", secs}}.dump(2) << '\n';
    } else {
      std::cout << (all_pass ? "all tensors pass" : "FAILURES present") << " (" << std::fixed
                << std::setprecision(1) << secs << " s)\n";
    }
    return all_pass ? 0 : 1;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reverse dictionary: rank words of a target language for a description."};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  SynthCmd synth;
  BuildIndexCmd build_index_cmd;
  TrainCmd train_cmd;
  EvalCmd eval;
  QueryCmd query;
  ExportScoresCmd export_scores;
  ServeCmd serve;
  GradCheckCmd grad_check_cmd;

  std::map<CLI::App*, std::function<int()>> runners;
  auto add = [&](const char* name, const char* help, auto& cmd, bool config_file) {
    CLI::App* sub = app.add_subcommand(name, help);
    cmd.add(sub);
    if (config_file) sub->add_option("--config", "JSON file of option values; flags override it");
    runners[sub] = [&cmd] { return cmd.run(); };
    return sub;
  };
  add("synth", "Generate a synthetic multilingual corpus", synth, true);
  add("build-index", "Build the per-language word index", build_index_cmd, true);
  add("train", "Train a model", train_cmd, true);
  add("eval", "Evaluate a split and print metrics JSON", eval, true);
  add("query", "Rank candidate words for a definition", query, true);
  add("export-scores", "Write the k x |V| subword score matrix for a definition", export_scores, true);
  add("serve", "Run the HTTP query service", serve, true);
  add("grad-check", "Compare analytic and finite-difference gradients", grad_check_cmd, false);

  // Expand "<cmd> --config FILE" into the options it holds, ahead of the
  // explicit ones.
  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    if (!args.empty() && args[0] != "grad-check") {
      for (std::size_t i = 1; i + 1 < args.size(); ++i) {
        if (args[i] != "--config") continue;
        auto extra = config_args(read_json_file(args[i + 1]));
        args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i + 2));
        args.insert(args.begin() + 1, extra.begin(), extra.end());
        break;
      }
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsageError;
  }
  std::reverse(args.begin(), args.end());

  try {
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n";
    CLI::App* failing = &app;
    for (auto* sub : app.get_subcommands()) failing = sub;
    std::cerr << failing->help();
    return kUsageError;
  }

  for (auto* sub : app.get_subcommands()) {
    try {
      return runners.at(sub)();
    } catch (const Error& e) {
      std::cerr << "error [" << e.code() << "]: " << e.what() << '\n';
      return 1;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << '\n';
      return 1;
    }
  }
  return kUsageError;
}
