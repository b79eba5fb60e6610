#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "revdict/corpus.hpp"
#include "revdict/error.hpp"
#include "revdict/lexicon.hpp"
#include "revdict/random.hpp"
#include "revdict/scoring.hpp"
#include "revdict/word_index.hpp"

namespace revdict {

struct EvalResult {
  double median_rank = 0.0;
  std::map<int, double> acc_at;  // cutoff -> fraction with rank < cutoff
  double rank_variance = 0.0;
  double mrr = 0.0;
  std::size_t n_samples = 0;
  std::size_t n_excluded_targets = 0;

  double acc(int n) const {
    auto it = acc_at.find(n);
    if (it == acc_at.end()) throw Error("no Acc@" + std::to_string(n) + " recorded", "invalid_argument");
    return it->second;
  }

  friend bool operator==(const EvalResult&, const EvalResult&) = default;
};

inline constexpr int kAccCutoffs[] = {1, 10, 100};

inline nlohmann::json to_json(const EvalResult& r) {
  nlohmann::json acc = nlohmann::json::object();
  for (const auto& [n, v] : r.acc_at) acc[std::to_string(n)] = v;
  return {{"median_rank", r.median_rank},
          {"acc_at", acc},
          {"rank_variance", r.rank_variance},
          {"mrr", r.mrr},
          {"n_samples", r.n_samples},
          {"n_excluded_targets", r.n_excluded_targets}};
}

// Lower median, Acc@{1,10,100}, population variance and mean 1/(rank+1) of
// 0-based ranks.
inline EvalResult compute_metrics(std::span<const std::size_t> ranks,
                                  std::size_t n_excluded_targets = 0) {
  if (ranks.empty()) throw Error("compute_metrics: no ranks", "empty_input");
  EvalResult r;
  r.n_samples = ranks.size();
  r.n_excluded_targets = n_excluded_targets;
  std::vector<std::size_t> sorted(ranks.begin(), ranks.end());
  std::sort(sorted.begin(), sorted.end());
  r.median_rank = static_cast<double>(sorted[(sorted.size() - 1) / 2]);
  const auto n = static_cast<double>(ranks.size());
  for (int cutoff : kAccCutoffs) {
    const auto hits = std::count_if(sorted.begin(), sorted.end(),
                                    [&](std::size_t x) { return x < static_cast<std::size_t>(cutoff); });
    r.acc_at[cutoff] = static_cast<double>(hits) / n;
  }
  // Sorted order fixes the summation order, so the result is independent of
  // the input permutation.
  double sum = 0.0, rr = 0.0;
  for (auto x : sorted) {
    sum += static_cast<double>(x);
    rr += 1.0 / (static_cast<double>(x) + 1.0);
  }
  const double mean = sum / n;
  double var = 0.0;
  for (auto x : sorted) var += (static_cast<double>(x) - mean) * (static_cast<double>(x) - mean);
  r.rank_variance = var / n;
  r.mrr = rr / n;
  return r;
}

inline EvalResult compute_metrics(const std::vector<std::size_t>& ranks,
                                  std::size_t n_excluded_targets = 0) {
  return compute_metrics(std::span<const std::size_t>(ranks), n_excluded_targets);
}

// Position of `target` in a full ranking. An excluded target (not in the
// list) ranks last, at the list size, and bumps `excluded`.
inline std::size_t target_rank(const RankingList& ranking, std::optional<WordId> target,
                               std::size_t* excluded = nullptr) {
  if (target) {
    for (const auto& item : ranking.items) {
      if (item.word_id == *target) return item.rank;
    }
  }
  if (excluded) ++*excluded;
  return ranking.items.size();
}

// Per-group metrics. Samples without a group key land in "unannotated".
inline std::map<std::string, EvalResult> grouped_metrics(
    std::span<const std::size_t> ranks, std::span<const std::optional<std::string>> groups) {
  if (groups.size() != ranks.size()) {
    throw Error("grouped_metrics: annotation count differs from rank count", "shape_mismatch");
  }
  std::map<std::string, std::vector<std::size_t>> by_group;
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    by_group[groups[i].value_or("unannotated")].push_back(ranks[i]);
  }
  std::map<std::string, EvalResult> out;
  for (const auto& [g, rs] : by_group) out.emplace(g, compute_metrics(rs));
  return out;
}

// Group key = piece count of the target word in the index.
inline std::vector<std::optional<std::string>> subword_count_groups(
    const WordIndex& index, const LanguageTag& language, std::span<const std::optional<WordId>> targets) {
  const auto& entries = index.entries(language);
  std::vector<std::optional<std::string>> out;
  out.reserve(targets.size());
  for (const auto& t : targets) {
    if (t && *t >= 0 && static_cast<std::size_t>(*t) < entries.size()) {
      out.push_back(std::to_string(entries[static_cast<std::size_t>(*t)].pieces.size()));
    } else {
      out.emplace_back(std::nullopt);
    }
  }
  return out;
}

// Sample -> group key annotation file: JSON object {"<sample index>": "<group>"}
// or a JSON array of group keys / nulls.
inline std::vector<std::optional<std::string>> annotations_from_json(const nlohmann::json& j,
                                                                     std::size_t n_samples) {
  std::vector<std::optional<std::string>> out(n_samples);
  if (j.is_array()) {
    for (std::size_t i = 0; i < j.size() && i < n_samples; ++i) {
      if (j[i].is_string()) out[i] = j[i].get<std::string>();
      else if (j[i].is_number_integer()) out[i] = std::to_string(j[i].get<long long>());
    }
  } else if (j.is_object()) {
    for (const auto& [key, v] : j.items()) {
      const auto i = static_cast<std::size_t>(std::stoull(key));
      if (i >= n_samples) continue;
      if (v.is_string()) out[i] = v.get<std::string>();
      else if (v.is_number_integer()) out[i] = std::to_string(v.get<long long>());
    }
  } else {
    throw Error("annotation must be a JSON array or object", "invalid_annotation");
  }
  return out;
}

// Monolingual retrieval followed by lexicon translation: the top `m` source
// words, each mapped to its first translation, unmapped dropped, duplicates
// collapsed, re-ranked from 0. Scores are carried over from the source list.
inline RankingList pivot_baseline(const RankingList& mono, const BilingualLexicon& lexicon,
                                  std::size_t m, const WordIndex* target_index = nullptr,
                                  const LanguageTag& target_language = {}) {
  if (lexicon.empty()) throw Error("pivot_baseline: empty lexicon", "empty_lexicon");
  if (m == 0) throw Error("pivot_baseline: m must be >= 1", "invalid_argument");
  RankingList out;
  out.language = target_language;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < mono.items.size() && i < m; ++i) {
    auto t = lexicon.translate(mono.items[i].surface);
    if (!t || !seen.insert(*t).second) continue;
    RankedWord w;
    w.surface = *t;
    w.score = mono.items[i].score;
    w.rank = out.items.size();
    w.word_id = target_index ? target_index->find(target_language, *t) : -1;
    out.items.push_back(std::move(w));
  }
  return out;
}

// Rank of `target_surface` in a (possibly truncated) candidate list; absent
// targets rank at `worst`.
inline std::size_t surface_rank(const RankingList& ranking, const std::string& target_surface,
                                std::size_t worst) {
  for (const auto& item : ranking.items) {
    if (item.surface == target_surface) return item.rank;
  }
  return worst;
}

struct AblationResult {
  TrainingCorpus corpus;
  std::vector<DictionaryEntry> removed;
  std::vector<std::pair<LanguageTag, std::string>> removed_words;
};

// Deletes every monolingual training definition of a seeded round(p * n)
// sample of `targets` ((language, word) pairs). Other entries are untouched.
inline AblationResult ablation_filter(const TrainingCorpus& corpus,
                                      const std::vector<std::pair<LanguageTag, std::string>>& targets,
                                      double p, std::uint64_t seed) {
  if (!(p >= 0.0 && p <= 1.0)) throw Error("ablation_filter: p outside [0, 1]", "invalid_argument");
  std::vector<std::pair<LanguageTag, std::string>> pool(targets.begin(), targets.end());
  std::sort(pool.begin(), pool.end());
  pool.erase(std::unique(pool.begin(), pool.end()), pool.end());
  Rng rng(seed);
  rng.shuffle(pool);
  const auto n = static_cast<std::size_t>(std::llround(p * static_cast<double>(pool.size())));
  pool.resize(n);
  std::sort(pool.begin(), pool.end());
  const std::set<std::pair<LanguageTag, std::string>> chosen(pool.begin(), pool.end());

  AblationResult out;
  out.removed_words = pool;
  for (const auto& e : corpus.entries()) {
    if (e.split == SplitTag::kTrain && e.monolingual() && chosen.count({e.word_language, e.word})) {
      out.removed.push_back(e);
    } else {
      out.corpus.add(e);
    }
  }
  return out;
}

struct MetricsReport {
  std::string split;
  std::string language_pair;  // "<def_lang>-><word_lang>"
  EvalResult metrics;
  std::optional<std::map<std::string, EvalResult>> groups;
  std::vector<std::string> excluded;  // surfaces of excluded targets

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

inline nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json j = {{"split", r.split},
                      {"language_pair", r.language_pair},
                      {"metrics", to_json(r.metrics)},
                      {"excluded", r.excluded}};
  if (r.groups) {
    nlohmann::json g = nlohmann::json::object();
    for (const auto& [k, v] : *r.groups) g[k] = to_json(v);
    j["groups"] = g;
  }
  return j;
}

}  // namespace revdict
