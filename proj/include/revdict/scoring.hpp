#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "revdict/error.hpp"
#include "revdict/model.hpp"
#include "revdict/word_index.hpp"

namespace revdict {

// k x |V| scores at the masked positions.
template <typename Scalar>
using SubwordScoreMatrix = Mat<Scalar>;

template <typename Scalar>
struct WordScores {
  LanguageTag language;
  std::vector<Scalar> scores;  // indexed by word_id
};

struct RankedWord {
  WordId word_id = 0;
  std::string surface;
  double score = 0.0;
  std::size_t rank = 0;
};

struct RankingList {
  LanguageTag language;
  std::vector<RankedWord> items;
};

// Row-wise log-softmax; the optional per-position normalization applied
// before gathering.
template <typename Scalar>
Mat<Scalar> log_softmax_rows(const Mat<Scalar>& s) {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> m = s.rowwise().maxCoeff();
  Mat<Scalar> shifted = s.colwise() - m;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> lse = shifted.array().exp().rowwise().sum().log();
  return shifted.colwise() - lse;
}

// score(w) = sum_i S[i][padded_i(w)] over the words of `language` only.
template <typename Scalar>
WordScores<Scalar> aggregate(const SubwordScoreMatrix<Scalar>& s, const WordIndex& index,
                             const LanguageTag& language, bool normalize_positions = false) {
  if (s.rows() != index.k()) {
    throw Error("aggregate: score matrix has " + std::to_string(s.rows()) + " rows, index k=" +
                    std::to_string(index.k()),
                "shape_mismatch");
  }
  const auto& table = index.position_table(language);
  const Mat<Scalar> normalized = normalize_positions ? log_softmax_rows(s) : Mat<Scalar>();
  const Mat<Scalar>& src = normalize_positions ? normalized : s;
  const auto n = static_cast<Eigen::Index>(table.front().size());
  Eigen::Array<Scalar, Eigen::Dynamic, 1> acc = Eigen::Array<Scalar, Eigen::Dynamic, 1>::Zero(n);
  for (Eigen::Index i = 0; i < src.rows(); ++i) {
    const auto& ids = table[static_cast<std::size_t>(i)];
    acc += src.row(i)(ids).transpose().array();
  }
  WordScores<Scalar> out;
  out.language = language;
  out.scores.assign(acc.data(), acc.data() + n);
  return out;
}

// Back-propagates d loss / d word_score into d loss / d S.
template <typename Scalar>
Mat<Scalar> aggregate_backward(const SubwordScoreMatrix<Scalar>& s, const WordIndex& index,
                               const LanguageTag& language, std::span<const Scalar> d_scores,
                               bool normalize_positions = false) {
  const auto& table = index.position_table(language);
  Mat<Scalar> ds = Mat<Scalar>::Zero(s.rows(), s.cols());
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    const auto& ids = table[static_cast<std::size_t>(i)];
    for (std::size_t w = 0; w < ids.size(); ++w) ds(i, ids[w]) += d_scores[w];
  }
  if (normalize_positions) {
    const Mat<Scalar> probs = log_softmax_rows(s).array().exp();
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> row_sum = ds.rowwise().sum();
    ds -= (probs.array().colwise() * row_sum.array()).matrix();
  }
  return ds;
}

// Descending score, ties broken by ascending word_id. Surfaces are filled in
// from `index` when given.
template <typename Scalar>
RankingList rank(const WordScores<Scalar>& scores, const WordIndex* index = nullptr,
                 std::optional<std::size_t> top_n = std::nullopt) {
  if (scores.scores.empty()) throw Error("rank: empty score list", "empty_input");
  const auto& sc = scores.scores;
  std::vector<WordId> order(sc.size());
  std::iota(order.begin(), order.end(), 0);
  auto before = [&](WordId a, WordId b) {
    const auto sa = sc[static_cast<std::size_t>(a)];
    const auto sb = sc[static_cast<std::size_t>(b)];
    return sa > sb || (sa == sb && a < b);
  };
  const std::size_t n = top_n ? std::min(*top_n, order.size()) : order.size();
  if (n < order.size()) {
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n), order.end(), before);
    order.resize(n);
  } else {
    std::sort(order.begin(), order.end(), before);
  }
  RankingList out;
  out.language = scores.language;
  out.items.reserve(order.size());
  const std::vector<WordIndexEntry>* entries =
      index ? &index->entries(scores.language) : nullptr;
  for (std::size_t r = 0; r < order.size(); ++r) {
    RankedWord w;
    w.word_id = order[r];
    w.score = static_cast<double>(sc[static_cast<std::size_t>(order[r])]);
    w.rank = r;
    if (entries) w.surface = (*entries)[static_cast<std::size_t>(order[r])].surface;
    out.items.push_back(std::move(w));
  }
  return out;
}

// 0-based rank of `target` under the ranking order, without sorting.
template <typename Scalar>
std::size_t rank_of(const WordScores<Scalar>& scores, WordId target) {
  const auto& sc = scores.scores;
  if (target < 0 || static_cast<std::size_t>(target) >= sc.size()) {
    throw Error("rank_of: target out of range", "invalid_argument");
  }
  const Scalar t = sc[static_cast<std::size_t>(target)];
  std::size_t r = 0;
  for (std::size_t w = 0; w < sc.size(); ++w) {
    if (sc[w] > t || (sc[w] == t && static_cast<WordId>(w) < target)) ++r;
  }
  return r;
}

template <typename Scalar>
struct LossAndGrad {
  Scalar loss = 0;
  std::vector<Scalar> d_scores;
};

// -log_softmax(scores)[target], with the gradient w.r.t. the scores scaled
// by `weight`.
template <typename Scalar>
LossAndGrad<Scalar> word_loss_with_grad(const WordScores<Scalar>& scores, WordId target,
                                        Scalar weight = Scalar(1)) {
  const auto& sc = scores.scores;
  if (target < 0 || static_cast<std::size_t>(target) >= sc.size()) {
    throw Error("word_loss: target outside the language word list (excluded?)",
                "excluded_target");
  }
  const Scalar m = *std::max_element(sc.begin(), sc.end());
  // Accumulate the partition function in double for both scalar types.
  double z = 0.0;
  for (auto v : sc) z += std::exp(static_cast<double>(v - m));
  const double lse = static_cast<double>(m) + std::log(z);
  LossAndGrad<Scalar> out;
  out.loss = static_cast<Scalar>(lse - static_cast<double>(sc[static_cast<std::size_t>(target)]));
  out.d_scores.resize(sc.size());
  for (std::size_t w = 0; w < sc.size(); ++w) {
    out.d_scores[w] = static_cast<Scalar>(std::exp(static_cast<double>(sc[w]) - lse)) * weight;
  }
  out.d_scores[static_cast<std::size_t>(target)] -= weight;
  return out;
}

template <typename Scalar>
Scalar word_loss(const WordScores<Scalar>& scores, WordId target) {
  const auto& sc = scores.scores;
  if (target < 0 || static_cast<std::size_t>(target) >= sc.size()) {
    throw Error("word_loss: target outside the language word list (excluded?)",
                "excluded_target");
  }
  const Scalar m = *std::max_element(sc.begin(), sc.end());
  double z = 0.0;
  for (auto v : sc) z += std::exp(static_cast<double>(v - m));
  const double loss = static_cast<double>(m) + std::log(z) -
                      static_cast<double>(sc[static_cast<std::size_t>(target)]);
  return static_cast<Scalar>(std::max(loss, 0.0));
}

template <typename Scalar>
struct LabeledScores {
  WordScores<Scalar> scores;
  WordId target = 0;
};

// Sum over languages of the per-language summed word losses; each softmax is
// normalized over that sample's own language word list.
template <typename Scalar>
Scalar multilingual_loss(std::span<const LabeledScores<Scalar>> samples) {
  std::map<LanguageTag, double> per_language;
  for (const auto& s : samples) {
    per_language[s.scores.language] += static_cast<double>(word_loss(s.scores, s.target));
  }
  double total = 0.0;
  for (const auto& [lang, v] : per_language) total += v;
  return static_cast<Scalar>(total);
}

// Interchange file for externally produced score matrices:
//   uint32 k, uint32 |V| (little-endian), then k*|V| float32 row-major LE.
namespace detail {

inline bool host_is_little_endian() {
  const std::uint16_t probe = 1;
  unsigned char b;
  std::memcpy(&b, &probe, 1);
  return b == 1;
}

template <typename T>
void write_le(std::ostream& out, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if (!host_is_little_endian()) std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  in.read(reinterpret_cast<char*>(bytes), sizeof(T));
  if (!in) throw Error("unexpected end of binary file", "io_error");
  if (!host_is_little_endian()) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

}  // namespace detail

template <typename Scalar>
void write_score_matrix(const std::string& path, const SubwordScoreMatrix<Scalar>& s) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write score matrix: " + path, "io_error");
  detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.rows()));
  detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.cols()));
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    for (Eigen::Index j = 0; j < s.cols(); ++j) detail::write_le<float>(out, static_cast<float>(s(i, j)));
  }
}

inline SubwordScoreMatrix<float> read_score_matrix(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open score matrix: " + path, "io_error");
  const auto k = detail::read_le<std::uint32_t>(in);
  const auto v = detail::read_le<std::uint32_t>(in);
  if (k == 0 || v == 0) throw Error("score matrix header has a zero dimension", "invalid_format");
  SubwordScoreMatrix<float> s(k, v);
  for (std::uint32_t i = 0; i < k; ++i) {
    for (std::uint32_t j = 0; j < v; ++j) s(i, j) = detail::read_le<float>(in);
  }
  if (!s.allFinite()) throw Error("score matrix contains non-finite values", "invalid_format");
  return s;
}

}  // namespace revdict
