#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "revdict/scoring.hpp"
#include "support.hpp"

namespace revdict {
namespace {

using testing::numbered_vocab;
using testing::TempDir;

WordIndex one_language_index(int k, std::size_t n_words, std::size_t vocab_size, Rng& rng,
                             const LanguageTag& lang = "xx") {
  const auto v = numbered_vocab(vocab_size);
  WordIndex index(k);
  testing::add_random_words(index, v, lang, n_words, rng);
  return index;
}

Mat<double> random_scores(int k, std::size_t vocab_size, Rng& rng, double scale = 3.0) {
  Mat<double> s(k, static_cast<Eigen::Index>(vocab_size));
  for (Eigen::Index i = 0; i < s.size(); ++i) s.data()[i] = rng.normal(0.0, scale);
  return s;
}

WordScores<double> scores_of(std::vector<double> v, LanguageTag lang = "xx") {
  WordScores<double> w;
  w.language = std::move(lang);
  w.scores = std::move(v);
  return w;
}

// Per-word scalar loop over the padded sequences.
std::vector<double> aggregate_oracle(const Mat<double>& s, const WordIndex& index, const LanguageTag& lang) {
  std::vector<double> out;
  for (const auto& e : index.entries(lang)) {
    double total = 0.0;
    for (std::size_t i = 0; i < e.padded.size(); ++i) total += s(static_cast<Eigen::Index>(i), e.padded[i]);
    out.push_back(total);
  }
  return out;
}

TEST(Aggregate, WorkedExample) {
  WordIndex index(3);
  index.add_entry("xx", "w", {7, 9}, 4);
  Mat<double> s = Mat<double>::Zero(3, 10);
  s(0, 7) = 2.0;
  s(1, 9) = -1.0;
  s(2, 4) = 0.5;
  EXPECT_DOUBLE_EQ(aggregate(s, index, "xx").scores[0], 1.5);
}

TEST(Aggregate, ZeroAndConstantShift) {
  Rng rng(1);
  const auto index = one_language_index(3, 50, 40, rng);
  const Mat<double> zero = Mat<double>::Zero(3, 40);
  for (double x : aggregate(zero, index, "xx").scores) EXPECT_EQ(x, 0.0);
  const auto s = random_scores(3, 40, rng);
  const auto base = aggregate(s, index, "xx").scores;
  const Mat<double> shifted = s.array() + 1.0;
  const auto moved = aggregate(shifted, index, "xx").scores;
  for (std::size_t w = 0; w < base.size(); ++w) EXPECT_NEAR(moved[w] - base[w], 3.0, 1e-12);
}

TEST(Aggregate, MatchesScalarOracle) {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const int k = 1 + static_cast<int>(rng.below(5));
    const std::size_t vs = 8 + rng.below(60);
    const auto index = one_language_index(k, 1 + rng.below(80), vs, rng);
    const auto s = random_scores(k, vs, rng);
    const auto got = aggregate(s, index, "xx").scores;
    const auto want = aggregate_oracle(s, index, "xx");
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t w = 0; w < got.size(); ++w) ASSERT_NEAR(got[w], want[w], 1e-12);
  }
}

TEST(Aggregate, OnlyTargetLanguageIsScored) {
  Rng rng(3);
  const auto v = numbered_vocab(30);
  WordIndex index(2);
  testing::add_random_words(index, v, "aa", 10, rng);
  testing::add_random_words(index, v, "bb", 25, rng);
  const auto s = random_scores(2, 30, rng);
  EXPECT_EQ(aggregate(s, index, "aa").scores.size(), 10u);
  EXPECT_EQ(aggregate(s, index, "bb").scores.size(), 25u);
  EXPECT_THROW(aggregate(s, index, "cc"), Error);
}

TEST(Aggregate, RejectsWrongRowCount) {
  Rng rng(4);
  const auto index = one_language_index(3, 5, 20, rng);
  EXPECT_THROW(aggregate(random_scores(2, 20, rng), index, "xx"), Error);
}

TEST(Rank, OrderAndTieBreak) {
  const auto r = rank(scores_of({1.0, 3.0, 1.0}));
  ASSERT_EQ(r.items.size(), 3u);
  EXPECT_EQ(r.items[0].word_id, 1);
  EXPECT_EQ(r.items[1].word_id, 0);
  EXPECT_EQ(r.items[2].word_id, 2);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(r.items[i].rank, i);
  const auto one = rank(scores_of({-2.0}));
  EXPECT_EQ(one.items[0].rank, 0u);
  const auto top = rank(scores_of({1.0, 3.0, 1.0}), nullptr, 1);
  ASSERT_EQ(top.items.size(), 1u);
  EXPECT_EQ(top.items[0].word_id, 1);
  EXPECT_EQ(top.items[0].score, 3.0);
}

TEST(Rank, FullOrderIsAPermutationAndMonotone) {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> sc(1 + rng.below(200));
    // Coarse values force ties.
    for (auto& x : sc) x = static_cast<double>(rng.below(10));
    const auto r = rank(scores_of(sc));
    std::vector<bool> seen(sc.size(), false);
    for (std::size_t i = 0; i < r.items.size(); ++i) {
      const auto& it = r.items[i];
      ASSERT_FALSE(seen[static_cast<std::size_t>(it.word_id)]);
      seen[static_cast<std::size_t>(it.word_id)] = true;
      EXPECT_EQ(rank_of(scores_of(sc), it.word_id), i);
      if (i > 0) {
        const auto& prev = r.items[i - 1];
        EXPECT_TRUE(prev.score > it.score || (prev.score == it.score && prev.word_id < it.word_id));
      }
    }
  }
}

TEST(Rank, TruncationIsPrefixOfFullRanking) {
  Rng rng(6);
  std::vector<double> sc(300);
  for (auto& x : sc) x = static_cast<double>(rng.below(40));
  const auto full = rank(scores_of(sc));
  for (std::size_t n : {1u, 10u, 299u, 300u, 1000u}) {
    const auto part = rank(scores_of(sc), nullptr, n);
    ASSERT_EQ(part.items.size(), std::min<std::size_t>(n, 300));
    for (std::size_t i = 0; i < part.items.size(); ++i) EXPECT_EQ(part.items[i].word_id, full.items[i].word_id);
  }
}

TEST(Rank, RaisingTargetScoreNeverWorsensItsRank) {
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> sc(2 + rng.below(50));
    for (auto& x : sc) x = rng.normal(0.0, 1.0);
    const auto t = static_cast<WordId>(rng.below(sc.size()));
    const auto before = rank_of(scores_of(sc), t);
    sc[static_cast<std::size_t>(t)] += rng.uniform() * 2.0;
    EXPECT_LE(rank_of(scores_of(sc), t), before);
  }
}

TEST(Rank, FillsSurfacesFromIndex) {
  WordIndex index(1);
  index.add_entry("xx", "alpha", {5}, 4);
  index.add_entry("xx", "beta", {6}, 4);
  const auto r = rank(scores_of({0.1, 0.9}), &index);
  EXPECT_EQ(r.items[0].surface, "beta");
  EXPECT_EQ(r.items[1].surface, "alpha");
}

TEST(WordLoss, UniformAndSaturated) {
  EXPECT_NEAR(word_loss(scores_of({0.0, 0.0}), 0), std::log(2.0), 1e-12);
  EXPECT_NEAR(word_loss(scores_of({0.0, 0.0}), 1), std::log(2.0), 1e-12);
  EXPECT_NEAR(word_loss(scores_of({10.0, -10.0}), 0), 2.06e-9, 1e-11);
  EXPECT_GE(word_loss(scores_of({1e6, -1e6}), 0), 0.0);
  EXPECT_TRUE(std::isfinite(word_loss(scores_of({1e300, -1e300}), 1)));
}

TEST(WordLoss, ExcludedTargetIsAnError) {
  try {
    word_loss(scores_of({1.0, 2.0}), 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "excluded_target");
  }
}

TEST(WordLoss, GradientIsSoftmaxMinusOneHot) {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> sc(2 + rng.below(30));
    for (auto& x : sc) x = rng.normal(0.0, 2.0);
    const auto t = static_cast<WordId>(rng.below(sc.size()));
    const auto lg = word_loss_with_grad(scores_of(sc), t);
    EXPECT_NEAR(lg.loss, word_loss(scores_of(sc), t), 1e-12);
    double sum = 0.0;
    for (double g : lg.d_scores) sum += g;
    EXPECT_NEAR(sum, 0.0, 1e-12);
    for (std::size_t w = 0; w < sc.size(); ++w) {
      auto up = sc, down = sc;
      up[w] += 1e-6;
      down[w] -= 1e-6;
      const double numeric = (word_loss(scores_of(up), t) - word_loss(scores_of(down), t)) / 2e-6;
      EXPECT_NEAR(lg.d_scores[w], numeric, 1e-6);
    }
  }
}

TEST(MultilingualLoss, ReducesToWordLossAndAdds) {
  const LabeledScores<double> a{scores_of({0.3, 1.2, -0.4}, "aa"), 1};
  const LabeledScores<double> b{scores_of({2.0, 0.5}, "bb"), 0};
  const std::vector<LabeledScores<double>> just_a = {a};
  EXPECT_NEAR(multilingual_loss<double>(just_a), word_loss(a.scores, a.target), 1e-12);
  const std::vector<LabeledScores<double>> both = {a, b};
  EXPECT_NEAR(multilingual_loss<double>(both), word_loss(a.scores, 1) + word_loss(b.scores, 0), 1e-12);
}

TEST(ShiftInvariance, RankingAndLossesUnchanged) {
  Rng rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    const int k = 1 + static_cast<int>(rng.below(4));
    const std::size_t vs = 10 + rng.below(40);
    const auto index = one_language_index(k, 5 + rng.below(60), vs, rng);
    const auto s = random_scores(k, vs, rng);
    const double c = rng.normal(0.0, 50.0);
    const Mat<double> shifted = s.array() + c;
    const auto a = aggregate(s, index, "xx");
    const auto b = aggregate(shifted, index, "xx");
    const auto ra = rank(a);
    const auto rb = rank(b);
    for (std::size_t i = 0; i < ra.items.size(); ++i) ASSERT_EQ(ra.items[i].word_id, rb.items[i].word_id);
    const auto t = static_cast<WordId>(rng.below(a.scores.size()));
    EXPECT_NEAR(word_loss(a, t), word_loss(b, t), 1e-6);
  }
}

TEST(NormalizedPositions, GatherFromLogSoftmax) {
  Rng rng(10);
  const auto index = one_language_index(3, 20, 25, rng);
  const auto s = random_scores(3, 25, rng);
  const Mat<double> ls = log_softmax_rows(s);
  for (Eigen::Index i = 0; i < ls.rows(); ++i) EXPECT_NEAR(ls.row(i).array().exp().sum(), 1.0, 1e-12);
  const auto got = aggregate(s, index, "xx", true).scores;
  const auto want = aggregate_oracle(ls, index, "xx");
  for (std::size_t w = 0; w < got.size(); ++w) EXPECT_NEAR(got[w], want[w], 1e-12);
}

TEST(AggregateBackward, MatchesFiniteDifferences) {
  Rng rng(11);
  for (bool normalize : {false, true}) {
    const auto index = one_language_index(3, 15, 12, rng);
    const auto s = random_scores(3, 12, rng, 1.0);
    const WordId t = 4;
    auto loss_of = [&](const Mat<double>& m) { return word_loss(aggregate(m, index, "xx", normalize), t); };
    const auto lg = word_loss_with_grad(aggregate(s, index, "xx", normalize), t);
    const auto ds = aggregate_backward(s, index, "xx", std::span<const double>(lg.d_scores), normalize);
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      Mat<double> up = s, down = s;
      up.data()[i] += 1e-6;
      down.data()[i] -= 1e-6;
      EXPECT_NEAR(ds.data()[i], (loss_of(up) - loss_of(down)) / 2e-6, 1e-6);
    }
  }
}

TEST(ScoreMatrixFile, RoundTripAndValidation) {
  TempDir dir("scores");
  Rng rng(12);
  const Mat<float> s = random_scores(3, 17, rng).cast<float>();
  write_score_matrix(dir.file("s.bin"), s);
  EXPECT_EQ(read_score_matrix(dir.file("s.bin")), s);
  dir.write("bad.bin", std::string(3, '\0'));
  EXPECT_THROW(read_score_matrix(dir.file("bad.bin")), Error);
  EXPECT_THROW(read_score_matrix(dir.file("missing.bin")), Error);
}

}  // namespace
}  // namespace revdict
