#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "revdict/corpus.hpp"
#include "revdict/error.hpp"
#include "revdict/lexicon.hpp"
#include "revdict/random.hpp"
#include "revdict/vocab.hpp"

namespace revdict {

// Toy languages for desk-scale runs. Every target word is built from a
// category root, optionally an attribute suffix and a modifier suffix (so a
// word has 1-3 pieces). Definitions name each atom through one of its
// synonyms, so they describe the word compositionally and unambiguously.
// Each word additionally carries an idiosyncratic gloss word ("cue") that is
// only learnable by seeing that word's definitions.
struct SynthSpec {
  std::vector<LanguageTag> languages{"l1", "l2"};
  std::size_t word_count = 300;
  std::size_t definitions_per_word = 3;
  double sharing_ratio = 0.5;  // fraction of each atom class shared across languages
  std::size_t categories = 12;
  std::size_t attributes = 10;
  std::size_t modifiers = 4;
  std::size_t synonyms_per_atom = 2;
  std::size_t fillers = 4;
  bool cues = true;
  // Probability that a definition leaves out an attribute or modifier (the
  // cue still identifies the word).
  double atom_drop = 0.5;
  std::size_t bilingual_definitions_per_word = 1;  // per ordered language pair
  std::size_t description_count = 50;              // per language
  std::size_t vocab_size = 0;                      // 0: whatever is generated

  void validate() const {
    auto bad = [](const std::string& m) { throw Error("synth spec: " + m, "inconsistent_spec"); };
    if (languages.empty()) bad("no languages");
    std::set<LanguageTag> uniq(languages.begin(), languages.end());
    if (uniq.size() != languages.size()) bad("duplicate language tag");
    for (const auto& l : languages) {
      if (!valid_language_tag(l)) bad("invalid language tag \"" + l + "\"");
    }
    if (!(sharing_ratio >= 0.0 && sharing_ratio <= 1.0)) bad("sharing_ratio outside [0, 1]");
    if (!(atom_drop >= 0.0 && atom_drop < 1.0)) bad("atom_drop outside [0, 1)");
    if (atom_drop > 0.0 && !cues) bad("atom_drop requires cues, or definitions become ambiguous");
    if (word_count == 0) bad("word_count must be positive");
    if (categories == 0) bad("need at least one category");
    if (synonyms_per_atom == 0) bad("synonyms_per_atom must be positive");
    if (fillers == 0) bad("fillers must be positive");
    if (definitions_per_word == 0) bad("definitions_per_word must be positive");
    if (word_count > max_words()) {
      bad("word_count " + std::to_string(word_count) + " exceeds the " +
          std::to_string(max_words()) + " distinct words the atoms allow");
    }
  }

  std::size_t max_words() const {
    return categories * (1 + attributes * (1 + modifiers));
  }
};

inline nlohmann::json to_json(const SynthSpec& s) {
  return {{"languages", s.languages},
          {"word_count", s.word_count},
          {"definitions_per_word", s.definitions_per_word},
          {"sharing_ratio", s.sharing_ratio},
          {"categories", s.categories},
          {"attributes", s.attributes},
          {"modifiers", s.modifiers},
          {"synonyms_per_atom", s.synonyms_per_atom},
          {"fillers", s.fillers},
          {"cues", s.cues},
          {"atom_drop", s.atom_drop},
          {"bilingual_definitions_per_word", s.bilingual_definitions_per_word},
          {"description_count", s.description_count},
          {"vocab_size", s.vocab_size}};
}

inline SynthSpec synth_spec_from_json(const nlohmann::json& j) {
  SynthSpec s;
  auto opt = [&](const char* key, auto& dst) {
    if (auto it = j.find(key); it != j.end()) dst = it->template get<std::decay_t<decltype(dst)>>();
  };
  opt("languages", s.languages);
  opt("word_count", s.word_count);
  opt("definitions_per_word", s.definitions_per_word);
  opt("sharing_ratio", s.sharing_ratio);
  opt("categories", s.categories);
  opt("attributes", s.attributes);
  opt("modifiers", s.modifiers);
  opt("synonyms_per_atom", s.synonyms_per_atom);
  opt("fillers", s.fillers);
  opt("cues", s.cues);
  opt("atom_drop", s.atom_drop);
  opt("bilingual_definitions_per_word", s.bilingual_definitions_per_word);
  opt("description_count", s.description_count);
  opt("vocab_size", s.vocab_size);
  return s;
}

struct SynthWord {
  std::size_t category = 0;
  int attribute = -1;  // -1: absent
  int modifier = -1;
};

struct SynthOutput {
  TrainingCorpus corpus;
  std::vector<std::string> vocab_tokens;  // specials first
  std::map<LanguageTag, std::vector<std::string>> words;  // aligned by position
  std::vector<SynthWord> structure;                        // shared across languages
  // (source, target) -> word translations; a bijection for every pair.
  std::map<std::pair<LanguageTag, LanguageTag>, BilingualLexicon> lexicons;
  // Per language, every token string its words and definitions use.
  std::map<LanguageTag, std::set<std::string>> language_tokens;

  SubwordVocab vocab() const { return SubwordVocab(vocab_tokens); }
};

namespace detail {

class StringForge {
 public:
  explicit StringForge(Rng& rng) : rng_(rng) {}

  // Word-initial pieces: consonant-vowel-consonant-vowel with a stop onset.
  std::string root() {
    return fresh([&] { return pick(kStops) + pick(kVowels) + pick(kConsonants) + pick(kVowels); });
  }
  std::string attribute() {
    return fresh([&] { return pick(kConsonants) + pick(kVowels) + pick(kConsonants); });
  }
  std::string modifier() {
    return fresh([&] { return pick(kConsonants) + pick(kVowels); }, 2);
  }
  // Definition-side words never start with a stop, so they can never be a
  // prefix of (or share a prefix piece with) a target word.
  std::string gloss() {
    return fresh([&] {
      return pick(kSonorants) + pick(kVowels) + pick(kConsonants) + pick(kVowels) +
             pick(kConsonants);
    });
  }
  std::string filler() {
    return fresh([&] { return pick(kSonorants) + pick(kVowels); });
  }

 private:
  static constexpr const char* kStops = "bdgkpt";
  static constexpr const char* kSonorants = "fhlmnrsvwz";
  static constexpr const char* kConsonants = "bdfgklmnprstvz";
  static constexpr const char* kVowels = "aeiou";

  std::string pick(const char* set) {
    const std::string s(set);
    return std::string(1, s[static_cast<std::size_t>(rng_.below(s.size()))]);
  }

  template <typename Make>
  std::string fresh(Make&& make, int attempts_per_char = 4) {
    for (int attempt = 0; attempt < 4096 * attempts_per_char; ++attempt) {
      std::string s = make();
      if (used_.insert(s).second) return s;
    }
    throw Error("synth: string space exhausted", "inconsistent_spec");
  }

  Rng& rng_;
  std::set<std::string> used_;
};

// Chooses round(ratio * n) of n atoms to be shared.
inline std::vector<bool> shared_mask(std::size_t n, double ratio, Rng& rng) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order);
  const auto n_shared = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
  std::vector<bool> mask(n, false);
  for (std::size_t i = 0; i < n_shared && i < n; ++i) mask[order[i]] = true;
  return mask;
}

// One atom's surface forms in every language: a piece (target side) and its
// definition synonyms.
struct AtomForms {
  std::vector<std::string> piece;                  // per language
  std::vector<std::vector<std::string>> synonyms;  // per language
};

}  // namespace detail

inline SynthOutput synth_generate(const SynthSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  detail::StringForge forge(rng);
  const std::size_t n_lang = spec.languages.size();

  // Atom inventory: categories, attributes, modifiers.
  auto make_atoms = [&](std::size_t n, auto make_piece) {
    const auto shared = detail::shared_mask(n, spec.sharing_ratio, rng);
    std::vector<detail::AtomForms> atoms(n);
    for (std::size_t a = 0; a < n; ++a) {
      auto& f = atoms[a];
      f.piece.resize(n_lang);
      f.synonyms.resize(n_lang);
      for (std::size_t l = 0; l < n_lang; ++l) {
        if (l > 0 && shared[a]) {
          f.piece[l] = f.piece[0];
          f.synonyms[l] = f.synonyms[0];
          continue;
        }
        f.piece[l] = make_piece();
        for (std::size_t s = 0; s < spec.synonyms_per_atom; ++s) f.synonyms[l].push_back(forge.gloss());
      }
    }
    return atoms;
  };
  const auto cats = make_atoms(spec.categories, [&] { return forge.root(); });
  const auto attrs = make_atoms(spec.attributes, [&] { return forge.attribute(); });
  const auto mods = make_atoms(spec.modifiers, [&] { return forge.modifier(); });

  std::vector<std::vector<std::string>> fillers(n_lang);
  {
    const auto shared = detail::shared_mask(spec.fillers, spec.sharing_ratio, rng);
    for (std::size_t f = 0; f < spec.fillers; ++f) {
      const std::string s0 = forge.filler();
      for (std::size_t l = 0; l < n_lang; ++l) {
        fillers[l].push_back(l == 0 || shared[f] ? s0 : forge.filler());
      }
    }
  }

  // Word structures: every bare category first, the rest sampled.
  SynthOutput out;
  {
    std::vector<SynthWord> compounds;
    for (std::size_t c = 0; c < spec.categories; ++c) {
      for (std::size_t a = 0; a < spec.attributes; ++a) {
        compounds.push_back({c, static_cast<int>(a), -1});
        for (std::size_t m = 0; m < spec.modifiers; ++m) {
          compounds.push_back({c, static_cast<int>(a), static_cast<int>(m)});
        }
      }
    }
    rng.shuffle(compounds);
    const std::size_t bare = std::min(spec.categories, spec.word_count);
    for (std::size_t c = 0; c < bare; ++c) out.structure.push_back({c, -1, -1});
    for (std::size_t i = 0; out.structure.size() < spec.word_count; ++i) {
      out.structure.push_back(compounds[i]);
    }
  }
  const std::size_t n_words = out.structure.size();

  std::vector<std::vector<std::string>> cue(n_lang, std::vector<std::string>(n_words));
  if (spec.cues) {
    const auto shared = detail::shared_mask(n_words, spec.sharing_ratio, rng);
    for (std::size_t w = 0; w < n_words; ++w) {
      for (std::size_t l = 0; l < n_lang; ++l) {
        cue[l][w] = (l > 0 && shared[w]) ? cue[0][w] : forge.gloss();
      }
    }
  }

  for (std::size_t l = 0; l < n_lang; ++l) {
    const auto& lang = spec.languages[l];
    auto& list = out.words[lang];
    auto& toks = out.language_tokens[lang];
    for (const auto& sw : out.structure) {
      std::string surface = cats[sw.category].piece[l];
      toks.insert(cats[sw.category].piece[l]);
      if (sw.attribute >= 0) {
        const auto& p = attrs[static_cast<std::size_t>(sw.attribute)].piece[l];
        surface += p;
        toks.insert("##" + p);
      }
      if (sw.modifier >= 0) {
        const auto& p = mods[static_cast<std::size_t>(sw.modifier)].piece[l];
        surface += p;
        toks.insert("##" + p);
      }
      list.push_back(std::move(surface));
    }
    for (const auto* atoms : {&cats, &attrs, &mods}) {
      for (const auto& a : *atoms) toks.insert(a.synonyms[l].begin(), a.synonyms[l].end());
    }
    toks.insert(fillers[l].begin(), fillers[l].end());
    for (const auto& c : cue[l]) {
      if (!c.empty()) toks.insert(c);
    }
  }

  // Vocabulary: specials, then every language's tokens in first-seen order.
  out.vocab_tokens = {std::string(kPadToken), std::string(kUnkToken), std::string(kClsToken),
                      std::string(kSepToken), std::string(kMaskToken)};
  {
    std::set<std::string> added;
    for (const auto& lang : spec.languages) {
      for (const auto& t : out.language_tokens[lang]) {
        if (added.insert(t).second) out.vocab_tokens.push_back(t);
      }
    }
  }
  if (spec.vocab_size > 0) {
    if (out.vocab_tokens.size() > spec.vocab_size) {
      throw Error("synth spec: generated vocabulary has " + std::to_string(out.vocab_tokens.size()) +
                      " tokens, more than vocab_size " + std::to_string(spec.vocab_size),
                  "inconsistent_spec");
    }
    for (std::size_t i = 0; out.vocab_tokens.size() < spec.vocab_size; ++i) {
      out.vocab_tokens.push_back("[unused" + std::to_string(i) + "]");
    }
  }
  const SubwordVocab vocab(out.vocab_tokens);

  // Segmentation must reproduce the construction exactly.
  for (std::size_t l = 0; l < n_lang; ++l) {
    for (std::size_t w = 0; w < n_words; ++w) {
      const auto& sw = out.structure[w];
      std::vector<TokenId> expect{vocab.find(cats[sw.category].piece[l])};
      if (sw.attribute >= 0) expect.push_back(vocab.find("##" + attrs[static_cast<std::size_t>(sw.attribute)].piece[l]));
      if (sw.modifier >= 0) expect.push_back(vocab.find("##" + mods[static_cast<std::size_t>(sw.modifier)].piece[l]));
      if (vocab.tokenize_word(out.words[spec.languages[l]][w]) != expect) {
        throw Error("synth: segmentation of \"" + out.words[spec.languages[l]][w] +
                        "\" does not match its construction",
                    "internal");
      }
    }
  }

  // A definition in language `l` of word `w`. `alt` swaps every synonym for
  // a different one and drops the cue (paraphrase style).
  auto describe = [&](std::size_t l, std::size_t w, bool alt, const std::vector<std::size_t>* base_syn,
                      std::vector<std::size_t>* used_syn) {
    const auto& sw = out.structure[w];
    std::vector<const detail::AtomForms*> atoms;
    if (sw.modifier >= 0) atoms.push_back(&mods[static_cast<std::size_t>(sw.modifier)]);
    if (sw.attribute >= 0) atoms.push_back(&attrs[static_cast<std::size_t>(sw.attribute)]);
    atoms.push_back(&cats[sw.category]);
    std::vector<std::string> parts;
    const auto& fl = fillers[l];
    if (rng.bernoulli(0.5)) parts.push_back(fl[static_cast<std::size_t>(rng.below(fl.size()))]);
    for (std::size_t a = 0; a < atoms.size(); ++a) {
      const auto& syn = atoms[a]->synonyms[l];
      std::size_t pick = static_cast<std::size_t>(rng.below(syn.size()));
      if (alt && base_syn && syn.size() > 1) {
        pick = ((*base_syn)[a] + 1 + static_cast<std::size_t>(rng.below(syn.size() - 1))) % syn.size();
      }
      if (used_syn) used_syn->push_back(pick);
      const bool root = a + 1 == atoms.size();
      if (!alt && !root && spec.atom_drop > 0.0 && rng.bernoulli(spec.atom_drop)) continue;
      parts.push_back(syn[pick]);
    }
    if (rng.bernoulli(0.5)) parts.push_back(fl[static_cast<std::size_t>(rng.below(fl.size()))]);
    if (!alt && spec.cues) parts.push_back(cue[l][w]);
    if (alt) parts.push_back(fl[static_cast<std::size_t>(rng.below(fl.size()))]);
    std::string text;
    for (const auto& p : parts) {
      if (!text.empty()) text += ' ';
      text += p;
    }
    return text;
  };

  for (std::size_t l = 0; l < n_lang; ++l) {
    const auto& lang = spec.languages[l];
    for (std::size_t w = 0; w < n_words; ++w) {
      std::set<std::string> distinct;
      for (int attempt = 0; distinct.size() < spec.definitions_per_word && attempt < 200; ++attempt) {
        std::string d = describe(l, w, false, nullptr, nullptr);
        if (distinct.insert(d).second) {
          out.corpus.add({out.words[lang][w], lang, std::move(d), lang, SplitTag::kTrain});
        }
      }
      if (distinct.size() < spec.definitions_per_word) {
        throw Error("synth spec: cannot produce " + std::to_string(spec.definitions_per_word) +
                        " distinct definitions per word",
                    "inconsistent_spec");
      }
    }
  }

  for (std::size_t a = 0; a < n_lang; ++a) {
    for (std::size_t b = 0; b < n_lang; ++b) {
      if (a == b) continue;
      for (std::size_t w = 0; w < n_words; ++w) {
        for (std::size_t i = 0; i < spec.bilingual_definitions_per_word; ++i) {
          out.corpus.add({out.words[spec.languages[b]][w], spec.languages[b],
                          describe(a, w, false, nullptr, nullptr), spec.languages[a],
                          SplitTag::kTrain});
        }
      }
      auto& lex = out.lexicons[{spec.languages[a], spec.languages[b]}];
      for (std::size_t w = 0; w < n_words; ++w) {
        lex.add(out.words[spec.languages[a]][w], out.words[spec.languages[b]][w]);
      }
    }
  }

  for (std::size_t l = 0; l < n_lang; ++l) {
    const auto& lang = spec.languages[l];
    for (std::size_t i = 0; i < spec.description_count; ++i) {
      const auto w = static_cast<std::size_t>(rng.below(n_words));
      std::vector<std::size_t> syn;
      describe(l, w, false, nullptr, &syn);
      out.corpus.add({out.words[lang][w], lang, describe(l, w, true, &syn, nullptr), lang,
                      SplitTag::kDescription});
    }
  }
  return out;
}

}  // namespace revdict
