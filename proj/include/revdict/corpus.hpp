#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "revdict/error.hpp"
#include "revdict/random.hpp"
#include "revdict/word_index.hpp"

namespace revdict {

// `train` and `dev` mark the training partitions; `test` is the generic
// held-out tag used for cross-lingual pairs. The remaining tags are the
// monolingual test splits.
enum class SplitTag { kTrain, kDev, kSeen, kUnseen, kDescription, kQuestion, kTest };

inline std::string to_string(SplitTag s) {
  switch (s) {
    case SplitTag::kTrain: return "train";
    case SplitTag::kDev: return "dev";
    case SplitTag::kSeen: return "seen";
    case SplitTag::kUnseen: return "unseen";
    case SplitTag::kDescription: return "description";
    case SplitTag::kQuestion: return "question";
    case SplitTag::kTest: return "test";
  }
  return "train";
}

inline std::optional<SplitTag> split_from_string(const std::string& s) {
  static const std::map<std::string, SplitTag> table = {
      {"train", SplitTag::kTrain},   {"dev", SplitTag::kDev},
      {"seen", SplitTag::kSeen},     {"unseen", SplitTag::kUnseen},
      {"description", SplitTag::kDescription}, {"question", SplitTag::kQuestion},
      {"test", SplitTag::kTest}};
  auto it = table.find(s);
  if (it == table.end()) return std::nullopt;
  return it->second;
}

struct DictionaryEntry {
  std::string word;
  LanguageTag word_language;
  std::string definition;
  LanguageTag definition_language;
  SplitTag split = SplitTag::kTrain;

  bool monolingual() const { return word_language == definition_language; }

  friend bool operator==(const DictionaryEntry&, const DictionaryEntry&) = default;
};

inline nlohmann::json to_json(const DictionaryEntry& e) {
  return {{"word", e.word},
          {"word_language", e.word_language},
          {"definition", e.definition},
          {"definition_language", e.definition_language},
          {"split", to_string(e.split)}};
}

// Read-only selection of corpus entries. Training code receives views, never
// the corpus itself, so what a training mode can see is fixed at the call
// site.
class CorpusView {
 public:
  CorpusView() = default;
  explicit CorpusView(std::vector<const DictionaryEntry*> entries) : entries_(std::move(entries)) {}

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const DictionaryEntry& operator[](std::size_t i) const { return *entries_[i]; }

  class iterator {
   public:
    using base = std::vector<const DictionaryEntry*>::const_iterator;
    explicit iterator(base it) : it_(it) {}
    const DictionaryEntry& operator*() const { return **it_; }
    const DictionaryEntry* operator->() const { return *it_; }
    iterator& operator++() {
      ++it_;
      return *this;
    }
    bool operator==(const iterator&) const = default;

   private:
    base it_;
  };

  iterator begin() const { return iterator(entries_.begin()); }
  iterator end() const { return iterator(entries_.end()); }

 private:
  std::vector<const DictionaryEntry*> entries_;
};

class TrainingCorpus {
 public:
  TrainingCorpus() = default;
  explicit TrainingCorpus(std::vector<DictionaryEntry> entries) : entries_(std::move(entries)) {}

  const std::vector<DictionaryEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  void add(DictionaryEntry e) { entries_.push_back(std::move(e)); }

  // Sorted inventory of every language that appears on either side.
  std::vector<LanguageTag> languages() const {
    std::set<LanguageTag> s;
    for (const auto& e : entries_) {
      s.insert(e.word_language);
      s.insert(e.definition_language);
    }
    return {s.begin(), s.end()};
  }

  // (definition_language, word_language) -> entry count.
  std::map<std::pair<LanguageTag, LanguageTag>, std::size_t> pair_counts() const {
    std::map<std::pair<LanguageTag, LanguageTag>, std::size_t> out;
    for (const auto& e : entries_) ++out[{e.definition_language, e.word_language}];
    return out;
  }

  // N_j: monolingual training samples per language.
  std::map<LanguageTag, std::size_t> monolingual_train_counts() const {
    std::map<LanguageTag, std::size_t> out;
    for (const auto& e : entries_) {
      if (e.monolingual() && e.split == SplitTag::kTrain) ++out[e.word_language];
    }
    return out;
  }

  CorpusView view(SplitTag split) const {
    return select([&](const DictionaryEntry& e) { return e.split == split; });
  }

  // Monolingual entries only; the only access path of the unaligned mode.
  CorpusView monolingual_view(SplitTag split) const {
    return select([&](const DictionaryEntry& e) { return e.split == split && e.monolingual(); });
  }

  CorpusView pair_view(SplitTag split, const LanguageTag& definition_language,
                       const LanguageTag& word_language) const {
    return select([&](const DictionaryEntry& e) {
      return e.split == split && e.definition_language == definition_language &&
             e.word_language == word_language;
    });
  }

  template <typename Pred>
  CorpusView select(Pred&& pred) const {
    std::vector<const DictionaryEntry*> out;
    for (const auto& e : entries_) {
      if (pred(e)) out.push_back(&e);
    }
    return CorpusView(std::move(out));
  }

  // Distinct target words per language over all entries.
  std::map<LanguageTag, std::vector<std::string>> word_lists() const {
    std::map<LanguageTag, std::vector<std::string>> out;
    std::map<LanguageTag, std::set<std::string>> seen;
    for (const auto& e : entries_) {
      if (seen[e.word_language].insert(e.word).second) out[e.word_language].push_back(e.word);
    }
    return out;
  }

 private:
  std::vector<DictionaryEntry> entries_;
};

struct LoadIssue {
  std::size_t line = 0;
  std::string reason;
};

struct CorpusLoadReport {
  std::size_t accepted = 0;
  std::vector<LoadIssue> rejected;
};

inline bool valid_language_tag(const std::string& tag) {
  if (tag.empty() || tag.size() > 16) return false;
  return std::all_of(tag.begin(), tag.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_';
  });
}

// Parses a JSON-lines stream. Malformed lines are skipped and reported;
// an unknown language (when `known_languages` is given) aborts the load.
inline TrainingCorpus parse_corpus(std::istream& in, CorpusLoadReport* report = nullptr,
                                   const std::optional<std::set<LanguageTag>>& known_languages =
                                       std::nullopt) {
  CorpusLoadReport local;
  CorpusLoadReport& rep = report ? *report : local;
  TrainingCorpus corpus;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error&) {
      rep.rejected.push_back({lineno, "invalid JSON"});
      continue;
    }
    if (!j.is_object()) {
      rep.rejected.push_back({lineno, "not a JSON object"});
      continue;
    }
    DictionaryEntry e;
    std::string missing;
    auto get = [&](const char* key, std::string& dst) {
      auto it = j.find(key);
      if (it == j.end() || !it->is_string() || it->get<std::string>().empty()) {
        if (missing.empty()) missing = key;
        return;
      }
      dst = it->get<std::string>();
    };
    get("word", e.word);
    get("word_language", e.word_language);
    get("definition", e.definition);
    get("definition_language", e.definition_language);
    if (!missing.empty()) {
      rep.rejected.push_back({lineno, "missing or empty \"" + missing + "\""});
      continue;
    }
    std::string split = "train";
    if (auto it = j.find("split"); it != j.end()) {
      if (!it->is_string()) {
        rep.rejected.push_back({lineno, "\"split\" is not a string"});
        continue;
      }
      split = it->get<std::string>();
    }
    auto tag = split_from_string(split);
    if (!tag) {
      rep.rejected.push_back({lineno, "unknown split \"" + split + "\""});
      continue;
    }
    e.split = *tag;
    if (std::any_of(e.word.begin(), e.word.end(), detail::is_space)) {
      rep.rejected.push_back({lineno, "word contains whitespace"});
      continue;
    }
    for (const auto* lang : {&e.word_language, &e.definition_language}) {
      if (!valid_language_tag(*lang) ||
          (known_languages && known_languages->count(*lang) == 0)) {
        throw Error("unknown language tag \"" + *lang + "\" at line " + std::to_string(lineno),
                    "unknown_language");
      }
    }
    corpus.add(std::move(e));
    ++rep.accepted;
  }
  if (corpus.size() == 0) throw Error("corpus has zero valid entries", "empty_corpus");
  return corpus;
}

inline TrainingCorpus load_corpus(const std::string& path, CorpusLoadReport* report = nullptr,
                                  const std::optional<std::set<LanguageTag>>& known_languages =
                                      std::nullopt) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open corpus: " + path, "io_error");
  return parse_corpus(in, report, known_languages);
}

inline void write_corpus(const TrainingCorpus& corpus, std::ostream& out) {
  for (const auto& e : corpus.entries()) out << to_json(e).dump() << '\n';
}

inline void save_corpus(const TrainingCorpus& corpus, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write corpus: " + path, "io_error");
  write_corpus(corpus, out);
}

struct SplitConfig {
  double unseen_word_fraction = 0.1;   // monolingual words held out entirely
  std::size_t seen_per_language = 100; // copies of training entries
  double dev_word_fraction = 0.05;     // words giving one definition to dev
  double bilingual_test_fraction = 0.2;  // cross-lingual target words held out
  double bilingual_dev_fraction = 0.0;
};

namespace detail {

inline std::size_t fraction_count(std::size_t n, double f) {
  return static_cast<std::size_t>(std::llround(static_cast<double>(n) * std::clamp(f, 0.0, 1.0)));
}

}  // namespace detail

// Assigns dev/test partitions to the entries currently tagged `train`.
// Entries already carrying another tag are left alone.
//  - unseen: every definition of the chosen words leaves train
//  - seen: verbatim copies of surviving training entries
//  - dev: one definition of each chosen multi-definition word
//  - test: cross-lingual entries of the chosen target words, per pair
inline TrainingCorpus make_splits(const TrainingCorpus& corpus, std::uint64_t seed,
                                  const SplitConfig& cfg = {}) {
  std::vector<DictionaryEntry> entries = corpus.entries();
  Rng rng(seed);

  // Monolingual: group train entry indices by (language, word).
  std::map<LanguageTag, std::map<std::string, std::vector<std::size_t>>> mono;
  std::map<std::pair<LanguageTag, LanguageTag>, std::map<std::string, std::vector<std::size_t>>> cross;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    if (e.split != SplitTag::kTrain) continue;
    if (e.monolingual()) {
      mono[e.word_language][e.word].push_back(i);
    } else {
      cross[{e.definition_language, e.word_language}][e.word].push_back(i);
    }
  }

  std::vector<DictionaryEntry> seen_copies;
  for (auto& [lang, words] : mono) {
    std::vector<std::string> order;
    for (const auto& [w, _] : words) order.push_back(w);
    rng.shuffle(order);
    const std::size_t n_unseen = detail::fraction_count(order.size(), cfg.unseen_word_fraction);
    if (n_unseen >= order.size() && !order.empty() && cfg.unseen_word_fraction < 1.0) {
      throw Error("make_splits: unseen fraction leaves no training words for " + lang,
                  "insufficient_data");
    }
    for (std::size_t i = 0; i < n_unseen; ++i) {
      for (auto idx : words[order[i]]) entries[idx].split = SplitTag::kUnseen;
    }
    // Dev words: need at least two definitions so one stays in train.
    std::vector<std::string> multi;
    for (std::size_t i = n_unseen; i < order.size(); ++i) {
      if (words[order[i]].size() >= 2) multi.push_back(order[i]);
    }
    const std::size_t n_dev =
        detail::fraction_count(order.size() - n_unseen, cfg.dev_word_fraction);
    if (n_dev > multi.size()) {
      throw Error("make_splits: not enough multi-definition words for dev in " + lang,
                  "insufficient_data");
    }
    for (std::size_t i = 0; i < n_dev; ++i) {
      const auto& idxs = words[multi[i]];
      entries[idxs[rng.below(idxs.size())]].split = SplitTag::kDev;
    }
    // Seen: sample surviving training entries.
    std::vector<std::size_t> pool;
    for (std::size_t i = n_unseen; i < order.size(); ++i) {
      for (auto idx : words[order[i]]) {
        if (entries[idx].split == SplitTag::kTrain) pool.push_back(idx);
      }
    }
    std::sort(pool.begin(), pool.end());
    if (cfg.seen_per_language > pool.size()) {
      throw Error("make_splits: requested " + std::to_string(cfg.seen_per_language) +
                      " seen entries but only " + std::to_string(pool.size()) +
                      " training entries remain for " + lang,
                  "insufficient_data");
    }
    rng.shuffle(pool);
    pool.resize(cfg.seen_per_language);
    std::sort(pool.begin(), pool.end());
    for (auto idx : pool) {
      DictionaryEntry copy = entries[idx];
      copy.split = SplitTag::kSeen;
      seen_copies.push_back(std::move(copy));
    }
  }

  for (auto& [pair, words] : cross) {
    std::vector<std::string> order;
    for (const auto& [w, _] : words) order.push_back(w);
    rng.shuffle(order);
    const std::size_t n_test = detail::fraction_count(order.size(), cfg.bilingual_test_fraction);
    const std::size_t n_dev = detail::fraction_count(order.size(), cfg.bilingual_dev_fraction);
    if (n_test + n_dev > order.size()) {
      throw Error("make_splits: bilingual test+dev exceed available words", "insufficient_data");
    }
    for (std::size_t i = 0; i < n_test; ++i) {
      for (auto idx : words[order[i]]) entries[idx].split = SplitTag::kTest;
    }
    for (std::size_t i = n_test; i < n_test + n_dev; ++i) {
      for (auto idx : words[order[i]]) entries[idx].split = SplitTag::kDev;
    }
  }

  entries.insert(entries.end(), seen_copies.begin(), seen_copies.end());
  return TrainingCorpus(std::move(entries));
}

}  // namespace revdict
