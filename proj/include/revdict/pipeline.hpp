#pragma once

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "revdict/checkpoint.hpp"
#include "revdict/corpus.hpp"
#include "revdict/encoder.hpp"
#include "revdict/error.hpp"
#include "revdict/evaluation.hpp"
#include "revdict/scoring.hpp"
#include "revdict/vocab.hpp"
#include "revdict/word_index.hpp"

namespace revdict {

enum class TrainingMode { kMonolingual, kBilingualAligned, kUnalignedMultilingual };

inline std::string to_string(TrainingMode m) {
  switch (m) {
    case TrainingMode::kMonolingual: return "monolingual";
    case TrainingMode::kBilingualAligned: return "bilingual_aligned";
    case TrainingMode::kUnalignedMultilingual: return "unaligned_multilingual";
  }
  return "monolingual";
}

inline TrainingMode training_mode_from_string(const std::string& s) {
  if (s == "monolingual") return TrainingMode::kMonolingual;
  if (s == "bilingual_aligned") return TrainingMode::kBilingualAligned;
  if (s == "unaligned_multilingual") return TrainingMode::kUnalignedMultilingual;
  throw Error("unknown training mode \"" + s + "\"", "invalid_config");
}

// Language embeddings are indexed by position in the index's sorted language
// list; -1 when the model has none.
inline int language_id(const ModelConfig& cfg, const WordIndex& index, const LanguageTag& lang) {
  if (cfg.num_languages == 0) return -1;
  const auto& langs = index.languages();
  auto it = std::find(langs.begin(), langs.end(), lang);
  if (it == langs.end()) throw Error("language absent from index: " + lang, "unknown_language");
  const auto id = static_cast<int>(it - langs.begin());
  if (id >= cfg.num_languages) throw Error("language id exceeds the model's table", "invalid_config");
  return id;
}

inline constexpr const char* kModelDirEnv = "REVDICT_MODEL_DIR";

// Everything a query needs, loaded once and never mutated afterwards.
struct Model {
  SubwordVocab vocab;
  WordIndex index;
  EncoderParams<float> params;
  TrainingMode mode = TrainingMode::kMonolingual;
  std::string model_id;

  bool supports(const LanguageTag& definition_language, const LanguageTag& target_language) const {
    if (!index.has_language(target_language)) return false;
    if (mode == TrainingMode::kMonolingual) return definition_language == target_language;
    return true;
  }

  EncodedInput encode(const std::string& definition, const LanguageTag& target_language) const {
    const auto ids = vocab.tokenize_text(definition);
    return build_input(vocab, index.k(), ids, params.config.definition_budget(index.k()),
                       language_id(params.config, index, target_language));
  }

  SubwordScoreMatrix<float> subword_matrix(const std::string& definition,
                                           const LanguageTag& target_language) const {
    const auto tr = encode_input(params, encode(definition, target_language));
    return subword_scores(params, tr.masked_hidden);
  }

  WordScores<float> word_scores(const std::string& definition,
                                const LanguageTag& target_language) const {
    return aggregate(subword_matrix(definition, target_language), index, target_language);
  }

  RankingList query(const std::string& definition, const LanguageTag& definition_language,
                    const LanguageTag& target_language,
                    std::optional<std::size_t> top_n = std::nullopt) const {
    for (const auto* l : {&definition_language, &target_language}) {
      if (!index.has_language(*l)) throw Error("unknown language \"" + *l + "\"", "unknown_language");
    }
    if (!supports(definition_language, target_language)) {
      throw Error("model does not support " + definition_language + " -> " + target_language,
                  "unsupported_pair");
    }
    return rank(word_scores(definition, target_language), &index, top_n);
  }

  std::vector<LanguageTag> languages() const { return index.languages(); }
};

inline nlohmann::json model_meta(TrainingMode mode, const std::string& model_id) {
  return {{"mode", to_string(mode)}, {"model_id", model_id}};
}

struct ModelPaths {
  std::filesystem::path dir;
  std::filesystem::path checkpoint() const { return dir / "model.ckpt"; }
  std::filesystem::path vocab() const { return dir / "vocab.txt"; }
  std::filesystem::path index() const { return dir / "index.json"; }
  std::filesystem::path train_log() const { return dir / "train_log.jsonl"; }
};

inline std::string resolve_model_dir(const std::string& explicit_dir) {
  if (!explicit_dir.empty()) return explicit_dir;
  if (const char* env = std::getenv(kModelDirEnv); env && *env) return env;
  throw Error(std::string("no model directory given and ") + kModelDirEnv + " is unset",
              "invalid_argument");
}

inline void save_model(const Model& m, const std::string& dir) {
  ModelPaths p{dir};
  std::filesystem::create_directories(p.dir);
  save_vocab(m.vocab, p.vocab().string());
  save_index(m.index, p.index().string());
  save_checkpoint(p.checkpoint().string(), m.params, model_meta(m.mode, m.model_id));
}

inline Model load_model(const std::string& dir) {
  ModelPaths p{dir};
  auto vocab = load_vocab(p.vocab().string());
  auto index = load_index(p.index().string(), vocab);
  auto ck = load_checkpoint<float>(p.checkpoint().string());
  if (ck.params.config.vocab_size != static_cast<int>(vocab.size())) {
    throw Error("checkpoint vocab_size differs from vocab.txt", "invalid_checkpoint");
  }
  if (ck.params.config.num_languages > 0 &&
      ck.params.config.num_languages != static_cast<int>(index.languages().size())) {
    throw Error("checkpoint language count differs from the index", "invalid_checkpoint");
  }
  ck.params.config.validate_for_k(index.k());
  Model m{std::move(vocab), std::move(index), std::move(ck.params), TrainingMode::kMonolingual, {}};
  m.mode = training_mode_from_string(ck.meta.value("mode", std::string("monolingual")));
  m.model_id = ck.meta.value("model_id", std::filesystem::path(dir).filename().string());
  return m;
}

// Ranks of every entry's gold word, scored against the word's own language
// list. Targets missing from the index take the worst rank (list size).
struct RankRun {
  std::vector<std::size_t> ranks;
  std::vector<std::optional<WordId>> targets;
  std::vector<std::string> excluded;
};

template <typename Scalar>
RankRun rank_entries(const EncoderParams<Scalar>& params, const SubwordVocab& vocab,
                     const WordIndex& index, const CorpusView& entries) {
  RankRun run;
  for (const auto& e : entries) {
    const auto ids = vocab.tokenize_text(e.definition);
    const auto in = build_input(vocab, index.k(), ids, params.config.definition_budget(index.k()),
                                language_id(params.config, index, e.word_language));
    const WordId t = index.find(e.word_language, vocab.normalize(e.word));
    if (t < 0) {
      run.ranks.push_back(index.size(e.word_language));
      run.targets.emplace_back(std::nullopt);
      run.excluded.push_back(e.word);
      continue;
    }
    const auto tr = encode_input(params, in);
    const auto ws = aggregate(subword_scores(params, tr.masked_hidden), index, e.word_language);
    run.ranks.push_back(rank_of(ws, t));
    run.targets.emplace_back(t);
  }
  return run;
}

inline std::string pair_label(const CorpusView& entries) {
  std::set<std::string> labels;
  for (const auto& e : entries) labels.insert(e.definition_language + "->" + e.word_language);
  if (labels.size() == 1) return *labels.begin();
  std::string out;
  for (const auto& l : labels) out += (out.empty() ? "" : ",") + l;
  return out;
}

template <typename Scalar>
MetricsReport evaluate(const EncoderParams<Scalar>& params, const SubwordVocab& vocab,
                       const WordIndex& index, const CorpusView& entries, const std::string& split,
                       bool group_by_subwords = false) {
  if (entries.empty()) throw Error("evaluate: no entries in split " + split, "empty_split");
  auto run = rank_entries(params, vocab, index, entries);
  MetricsReport r;
  r.split = split;
  r.language_pair = pair_label(entries);
  r.metrics = compute_metrics(run.ranks, run.excluded.size());
  r.excluded = run.excluded;
  if (group_by_subwords) {
    std::vector<std::optional<std::string>> groups;
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const auto& t = run.targets[i];
      if (t) {
        groups.push_back(std::to_string(
            index.entries(entries[i].word_language)[static_cast<std::size_t>(*t)].pieces.size()));
      } else {
        groups.emplace_back(std::nullopt);
      }
    }
    r.groups = grouped_metrics(run.ranks, groups);
  }
  return r;
}

}  // namespace revdict
