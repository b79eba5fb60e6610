#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "revdict/error.hpp"
#include "revdict/vocab.hpp"

namespace revdict {

using WordId = std::int32_t;
using LanguageTag = std::string;

struct WordIndexEntry {
  WordId word_id = 0;
  std::string surface;
  LanguageTag language;
  std::vector<TokenId> pieces;  // b_1..b_m, m <= k
  std::vector<TokenId> padded;  // length k, tail filled with mask_id
};

struct ExcludedWord {
  std::string surface;
  LanguageTag language;
  std::string reason;  // "exceeds k" | "unknown piece" | "empty"
};

// Candidate words of every language, each fixed to a length-k piece sequence.
class WordIndex {
 public:
  WordIndex() = default;
  explicit WordIndex(int k) : k_(k) {}

  int k() const noexcept { return k_; }

  const std::vector<LanguageTag>& languages() const noexcept { return languages_; }

  bool has_language(const LanguageTag& lang) const { return by_language_.count(lang) != 0; }

  const std::vector<WordIndexEntry>& entries(const LanguageTag& lang) const {
    auto it = by_language_.find(lang);
    if (it == by_language_.end()) {
      throw Error("language absent from index: " + lang, "unknown_language");
    }
    return it->second;
  }

  std::size_t size(const LanguageTag& lang) const { return entries(lang).size(); }

  // -1 when the surface is not an indexed word of `lang`.
  WordId find(const LanguageTag& lang, const std::string& surface) const {
    auto it = lookup_.find(lang);
    if (it == lookup_.end()) return -1;
    auto jt = it->second.find(surface);
    return jt == it->second.end() ? WordId{-1} : jt->second;
  }

  const std::vector<ExcludedWord>& excluded() const noexcept { return excluded_; }

  // Appends an entry; the caller guarantees the entry invariants. Used by
  // build_index and the JSON loader.
  void add_language(const LanguageTag& lang) {
    if (by_language_.count(lang) == 0) {
      languages_.push_back(lang);
      by_language_[lang];
      lookup_[lang];
      position_table_[lang].resize(static_cast<std::size_t>(k_));
    }
  }

  void add_entry(const LanguageTag& lang, std::string surface, std::vector<TokenId> pieces,
                 TokenId mask_id) {
    add_language(lang);
    auto& list = by_language_[lang];
    WordIndexEntry e;
    e.word_id = static_cast<WordId>(list.size());
    e.surface = std::move(surface);
    e.language = lang;
    e.pieces = std::move(pieces);
    e.padded = e.pieces;
    e.padded.resize(static_cast<std::size_t>(k_), mask_id);
    lookup_[lang].emplace(e.surface, e.word_id);
    auto& table = position_table_[lang];
    table.resize(static_cast<std::size_t>(k_));
    for (int i = 0; i < k_; ++i) table[static_cast<std::size_t>(i)].push_back(e.padded[static_cast<std::size_t>(i)]);
    list.push_back(std::move(e));
  }

  // table[i][w] = padded piece of word w at position i. Column layout of the
  // padded sequences, used by the gather in aggregate().
  const std::vector<std::vector<TokenId>>& position_table(const LanguageTag& lang) const {
    entries(lang);
    return position_table_.at(lang);
  }

  void add_excluded(ExcludedWord w) { excluded_.push_back(std::move(w)); }

 private:
  int k_ = 1;
  std::vector<LanguageTag> languages_;
  std::map<LanguageTag, std::vector<WordIndexEntry>> by_language_;
  std::map<LanguageTag, std::unordered_map<std::string, WordId>> lookup_;
  std::map<LanguageTag, std::vector<std::vector<TokenId>>> position_table_;
  std::vector<ExcludedWord> excluded_;
};

// Smallest k such that at least `coverage` of the words have <= k pieces.
inline int choose_k(std::span<const std::size_t> piece_counts, double coverage) {
  if (piece_counts.empty()) throw Error("choose_k: empty word list", "empty_input");
  if (!(coverage > 0.0 && coverage <= 1.0)) {
    throw Error("choose_k: coverage must lie in (0, 1]", "invalid_argument");
  }
  std::vector<std::size_t> sorted(piece_counts.begin(), piece_counts.end());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  // Walk distinct counts upward; the first one whose cumulative share reaches
  // the coverage is the answer.
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (i + 1 < sorted.size() && sorted[i + 1] == sorted[i]) continue;
    if (static_cast<double>(i + 1) / n >= coverage) {
      return static_cast<int>(std::max<std::size_t>(sorted[i], 1));
    }
  }
  return static_cast<int>(std::max<std::size_t>(sorted.back(), 1));
}

// Convenience overload over surfaces; unsegmentable words are skipped.
inline int choose_k(const SubwordVocab& vocab, std::span<const std::string> words,
                    double coverage) {
  std::vector<std::size_t> counts;
  counts.reserve(words.size());
  for (const auto& w : words) {
    auto pieces = vocab.tokenize_word(w);
    if (pieces.empty() || (pieces.size() == 1 && pieces[0] == vocab.unk_id())) continue;
    counts.push_back(pieces.size());
  }
  return choose_k(counts, coverage);
}

// Word lists per language; repeated surfaces within a language collapse to
// their first occurrence.
inline WordIndex build_index(const SubwordVocab& vocab,
                             const std::map<LanguageTag, std::vector<std::string>>& words, int k) {
  if (k < 1) throw Error("build_index: k must be >= 1", "invalid_argument");
  WordIndex index(k);
  for (const auto& [lang, list] : words) {
    index.add_language(lang);
    std::set<std::string> seen;
    for (const auto& raw : list) {
      const std::string surface = vocab.normalize(raw);
      if (surface.empty() || std::any_of(surface.begin(), surface.end(), detail::is_space)) {
        index.add_excluded({raw, lang, "empty"});
        continue;
      }
      if (!seen.insert(surface).second) {
        index.add_excluded({raw, lang, "duplicate"});
        continue;
      }
      auto pieces = vocab.tokenize_word(surface);
      if (std::find(pieces.begin(), pieces.end(), vocab.unk_id()) != pieces.end()) {
        index.add_excluded({raw, lang, "unknown piece"});
        continue;
      }
      if (static_cast<int>(pieces.size()) > k) {
        index.add_excluded({raw, lang, "exceeds k"});
        continue;
      }
      index.add_entry(lang, surface, std::move(pieces), vocab.mask_id());
    }
    if (index.size(lang) == 0) {
      throw Error("build_index: no indexable words for language " + lang, "empty_index");
    }
  }
  return index;
}

inline std::vector<std::string> load_word_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open word list: " + path, "io_error");
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

inline nlohmann::json index_to_json(const WordIndex& index) {
  nlohmann::json langs = nlohmann::json::object();
  for (const auto& lang : index.languages()) {
    auto arr = nlohmann::json::array();
    for (const auto& e : index.entries(lang)) {
      arr.push_back({{"word", e.surface}, {"pieces", e.pieces}});
    }
    langs[lang] = std::move(arr);
  }
  return {{"k", index.k()}, {"languages", std::move(langs)}};
}

// Validates pieces against the vocabulary and the index invariants.
inline WordIndex index_from_json(const nlohmann::json& j, const SubwordVocab& vocab) {
  WordIndex index(j.at("k").get<int>());
  if (index.k() < 1) throw Error("index: k must be >= 1", "invalid_index");
  const auto v = static_cast<TokenId>(vocab.size());
  for (const auto& [lang, arr] : j.at("languages").items()) {
    index.add_language(lang);
    for (const auto& item : arr) {
      auto pieces = item.at("pieces").get<std::vector<TokenId>>();
      if (pieces.empty() || static_cast<int>(pieces.size()) > index.k()) {
        throw Error("index: bad piece count for " + item.at("word").get<std::string>(),
                    "invalid_index");
      }
      for (auto p : pieces) {
        if (p < 0 || p >= v || p == vocab.unk_id()) {
          throw Error("index: bad piece id for " + item.at("word").get<std::string>(),
                      "invalid_index");
        }
      }
      index.add_entry(lang, item.at("word").get<std::string>(), std::move(pieces),
                      vocab.mask_id());
    }
  }
  return index;
}

inline void save_index(const WordIndex& index, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write index: " + path, "io_error");
  out << index_to_json(index).dump(1) << '\n';
}

inline WordIndex load_index(const std::string& path, const SubwordVocab& vocab) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open index: " + path, "io_error");
  return index_from_json(nlohmann::json::parse(in), vocab);
}

}  // namespace revdict
