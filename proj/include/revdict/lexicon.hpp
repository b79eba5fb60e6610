#pragma once

#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "revdict/error.hpp"

namespace revdict {

// Source -> target word translations. Duplicate sources keep the first
// target seen.
class BilingualLexicon {
 public:
  bool add(const std::string& source, const std::string& target) {
    auto [it, inserted] = map_.emplace(source, target);
    if (inserted) pairs_.emplace_back(source, target);
    return inserted;
  }

  std::optional<std::string> translate(const std::string& source) const {
    auto it = map_.find(source);
    if (it == map_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t size() const { return pairs_.size(); }
  bool empty() const { return pairs_.empty(); }
  const std::vector<std::pair<std::string, std::string>>& pairs() const { return pairs_; }

  // Target -> source view; later duplicates on the target side are dropped.
  BilingualLexicon inverted() const {
    BilingualLexicon out;
    for (const auto& [s, t] : pairs_) out.add(t, s);
    return out;
  }

 private:
  std::map<std::string, std::string> map_;
  std::vector<std::pair<std::string, std::string>> pairs_;
};

// Tab-separated "source<TAB>target" lines; blank lines are skipped.
inline BilingualLexicon load_lexicon(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open lexicon: " + path, "io_error");
  BilingualLexicon lex;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || tab + 1 == line.size()) {
      throw Error("lexicon line " + std::to_string(lineno) + ": expected source<TAB>target",
                  "invalid_lexicon");
    }
    lex.add(line.substr(0, tab), line.substr(tab + 1));
  }
  return lex;
}

inline void save_lexicon(const BilingualLexicon& lex, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write lexicon: " + path, "io_error");
  for (const auto& [s, t] : lex.pairs()) out << s << '\t' << t << '\n';
}

}  // namespace revdict
