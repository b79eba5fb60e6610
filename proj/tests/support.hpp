#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "revdict/random.hpp"
#include "revdict/vocab.hpp"
#include "revdict/word_index.hpp"

namespace revdict::testing {

// [PAD] [UNK] [CLS] [SEP] [MASK] play ##ing ##er
inline SubwordVocab toy_vocab() {
  return SubwordVocab({"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "play", "##ing", "##er"});
}

// Specials followed by "t5", "t6", ... up to `size` tokens.
inline SubwordVocab numbered_vocab(std::size_t size) {
  std::vector<std::string> toks = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"};
  for (std::size_t i = toks.size(); i < size; ++i) toks.push_back("t" + std::to_string(i));
  return SubwordVocab(toks);
}

inline constexpr TokenId kFirstPlain = 5;

// `n_words` random words of 1..k plain pieces each, in language `lang`.
inline void add_random_words(WordIndex& index, const SubwordVocab& vocab, const LanguageTag& lang,
                             std::size_t n_words, Rng& rng) {
  const auto n_plain = vocab.size() - static_cast<std::size_t>(kFirstPlain);
  for (std::size_t w = 0; w < n_words; ++w) {
    const auto m = 1 + rng.below(static_cast<std::uint64_t>(index.k()));
    std::vector<TokenId> pieces;
    for (std::uint64_t i = 0; i < m; ++i) {
      pieces.push_back(static_cast<TokenId>(kFirstPlain + static_cast<TokenId>(rng.below(n_plain))));
    }
    index.add_entry(lang, lang + "_w" + std::to_string(w), pieces, vocab.mask_id());
  }
}

inline std::vector<TokenId> random_tokens(const SubwordVocab& vocab, std::size_t n, Rng& rng) {
  const auto n_plain = vocab.size() - static_cast<std::size_t>(kFirstPlain);
  std::vector<TokenId> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(static_cast<TokenId>(kFirstPlain + static_cast<TokenId>(rng.below(n_plain))));
  }
  return out;
}

// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    Rng rng(std::random_device{}());
    path_ = std::filesystem::temp_directory_path() /
            ("revdict_" + tag + "_" + std::to_string(rng.next() % 1000000000ULL));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

  std::string write(const std::string& name, const std::string& text) const {
    std::ofstream(file(name), std::ios::binary) << text;
    return file(name);
  }

 private:
  std::filesystem::path path_;
};

}  // namespace revdict::testing
