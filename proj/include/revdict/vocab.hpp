#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "revdict/error.hpp"

namespace revdict {

using TokenId = std::int32_t;

inline constexpr std::string_view kPadToken = "[PAD]";
inline constexpr std::string_view kUnkToken = "[UNK]";
inline constexpr std::string_view kClsToken = "[CLS]";
inline constexpr std::string_view kSepToken = "[SEP]";
inline constexpr std::string_view kMaskToken = "[MASK]";

namespace detail {

inline bool is_utf8_continuation(unsigned char c) { return (c & 0xC0) == 0x80; }

// Byte offsets of every code point boundary in `s`, including s.size().
inline std::vector<std::size_t> codepoint_boundaries(std::string_view s) {
  std::vector<std::size_t> out;
  out.reserve(s.size() + 1);
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!is_utf8_continuation(static_cast<unsigned char>(s[i]))) out.push_back(i);
  }
  out.push_back(s.size());
  return out;
}

inline bool is_ascii_punct(char c) {
  return static_cast<unsigned char>(c) < 0x80 && std::ispunct(static_cast<unsigned char>(c));
}

inline bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

}  // namespace detail

// Token-string <-> id table. Ids are zero-based line numbers of the vocabulary
// file. Non-initial word pieces carry `continuation_marker` as a prefix.
class SubwordVocab {
 public:
  SubwordVocab() = default;

  // Validates the invariants; throws revdict::Error on any violation.
  explicit SubwordVocab(std::vector<std::string> tokens, bool lowercase = true,
                        std::string continuation_marker = "##")
      : tokens_(std::move(tokens)),
        lowercase_(lowercase),
        marker_(std::move(continuation_marker)) {
    if (tokens_.empty()) throw Error("vocabulary is empty", "empty_vocab");
    id_of_.reserve(tokens_.size());
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      const auto& tok = tokens_[i];
      if (tok.empty()) {
        throw Error("empty token at line " + std::to_string(i + 1), "empty_token");
      }
      auto [it, inserted] = id_of_.emplace(tok, static_cast<TokenId>(i));
      if (!inserted) {
        throw Error("duplicate token \"" + tok + "\" at line " + std::to_string(i + 1) +
                        " (first seen at line " + std::to_string(it->second + 1) + ")",
                    "duplicate_token");
      }
    }
    pad_id_ = require_special(kPadToken);
    unk_id_ = require_special(kUnkToken);
    cls_id_ = require_special(kClsToken);
    sep_id_ = require_special(kSepToken);
    mask_id_ = require_special(kMaskToken);
    for (const auto& tok : tokens_) {
      if (tok.size() > max_token_bytes_) max_token_bytes_ = tok.size();
    }
  }

  std::size_t size() const noexcept { return tokens_.size(); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }
  const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }

  // Returns -1 when absent.
  TokenId find(std::string_view tok) const {
    auto it = id_of_.find(std::string(tok));
    return it == id_of_.end() ? TokenId{-1} : it->second;
  }

  TokenId pad_id() const noexcept { return pad_id_; }
  TokenId unk_id() const noexcept { return unk_id_; }
  TokenId cls_id() const noexcept { return cls_id_; }
  TokenId sep_id() const noexcept { return sep_id_; }
  TokenId mask_id() const noexcept { return mask_id_; }
  const std::string& continuation_marker() const noexcept { return marker_; }
  bool lowercase() const noexcept { return lowercase_; }

  bool is_special(TokenId id) const noexcept {
    return id == pad_id_ || id == unk_id_ || id == cls_id_ || id == sep_id_ || id == mask_id_;
  }

  std::string normalize(std::string_view surface) const {
    std::string out(surface);
    if (lowercase_) {
      for (auto& c : out) {
        if (static_cast<unsigned char>(c) < 0x80) c = static_cast<char>(std::tolower(c));
      }
    }
    return out;
  }

  // Greedy longest-match-first segmentation. A word with no covering pieces
  // yields {unk_id}.
  std::vector<TokenId> tokenize_word(std::string_view surface) const {
    const std::string word = normalize(surface);
    if (word.empty()) return {};
    const auto bounds = detail::codepoint_boundaries(word);
    std::vector<TokenId> pieces;
    std::size_t start_idx = 0;
    std::string candidate;
    while (bounds[start_idx] < word.size()) {
      const std::size_t start = bounds[start_idx];
      TokenId found = -1;
      std::size_t end_idx = bounds.size() - 1;
      for (; end_idx > start_idx; --end_idx) {
        const std::size_t len = bounds[end_idx] - start;
        if (len > max_token_bytes_) continue;
        candidate.clear();
        if (start > 0) candidate += marker_;
        candidate.append(word, start, len);
        if (auto it = id_of_.find(candidate); it != id_of_.end() && !is_special(it->second)) {
          found = it->second;
          break;
        }
      }
      if (found < 0) return {unk_id_};
      pieces.push_back(found);
      start_idx = end_idx;
    }
    return pieces;
  }

  // Splits on whitespace and ASCII punctuation (punctuation marks become
  // words of their own), then segments each word.
  std::vector<TokenId> tokenize_text(std::string_view text) const {
    std::vector<TokenId> ids;
    std::size_t i = 0;
    auto flush_word = [&](std::size_t b, std::size_t e) {
      if (e > b) {
        auto pieces = tokenize_word(text.substr(b, e - b));
        ids.insert(ids.end(), pieces.begin(), pieces.end());
      }
    };
    std::size_t word_start = 0;
    for (; i < text.size(); ++i) {
      const char c = text[i];
      if (detail::is_space(c)) {
        flush_word(word_start, i);
        word_start = i + 1;
      } else if (detail::is_ascii_punct(c)) {
        flush_word(word_start, i);
        flush_word(i, i + 1);
        word_start = i + 1;
      }
    }
    flush_word(word_start, text.size());
    return ids;
  }

  // Concatenates pieces with the continuation marker stripped.
  std::string detokenize_word(std::span<const TokenId> pieces) const {
    std::string out;
    for (std::size_t i = 0; i < pieces.size(); ++i) {
      std::string_view tok = token(pieces[i]);
      if (i > 0 && tok.starts_with(marker_)) tok.remove_prefix(marker_.size());
      out += tok;
    }
    return out;
  }

 private:
  TokenId require_special(std::string_view name) {
    auto it = id_of_.find(std::string(name));
    if (it == id_of_.end()) {
      throw Error("special token absent: " + std::string(name), "missing_special_token");
    }
    return it->second;
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> id_of_;
  bool lowercase_ = true;
  std::string marker_ = "##";
  std::size_t max_token_bytes_ = 0;
  TokenId pad_id_ = -1, unk_id_ = -1, cls_id_ = -1, sep_id_ = -1, mask_id_ = -1;
};

// One token per line; the zero-based line index is the token id. A trailing
// '\r' is stripped so files written on Windows load identically.
inline SubwordVocab load_vocab(const std::string& path, bool lowercase = true) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open vocabulary file: " + path, "io_error");
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  // A single trailing empty line is an artifact of the final newline.
  while (!tokens.empty() && tokens.back().empty()) tokens.pop_back();
  if (tokens.empty()) throw Error("vocabulary file is empty: " + path, "empty_vocab");
  return SubwordVocab(std::move(tokens), lowercase);
}

inline void save_vocab(const SubwordVocab& vocab, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write vocabulary file: " + path, "io_error");
  for (const auto& tok : vocab.tokens()) out << tok << '\n';
}

}  // namespace revdict
