#include <cstdlib>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "model_fixture.hpp"
#include "revdict/checkpoint.hpp"
#include "revdict/evaluation.hpp"
#include "revdict/pipeline.hpp"
#include "support.hpp"

namespace revdict {
namespace {

using testing::small_models;
using testing::TempDir;

TEST(Checkpoint, RoundTripIsExactForFloatParameters) {
  const auto& m = *small_models().multilingual;
  std::stringstream buf;
  write_checkpoint(buf, m.params, {{"model_id", "x"}});
  const auto back = read_checkpoint<float>(buf);
  EXPECT_EQ(back.meta.at("model_id"), "x");
  EXPECT_EQ(nlohmann::json(back.params.config), nlohmann::json(m.params.config));
  zip_tensors(m.params, back.params, [](const std::string& n, const Mat<float>& a, const Mat<float>& b) {
    EXPECT_EQ(a, b) << n;
  });
}

TEST(Checkpoint, RejectsCorruptInput) {
  const auto& m = *small_models().monolingual;
  std::stringstream good;
  write_checkpoint(good, m.params);
  const std::string bytes = good.str();

  std::stringstream bad_magic("XXXXXXXX" + bytes.substr(8));
  EXPECT_THROW(read_checkpoint<float>(bad_magic), Error);
  std::stringstream truncated(bytes.substr(0, bytes.size() / 2));
  EXPECT_THROW(read_checkpoint<float>(truncated), Error);

  // Poison the last float with a NaN.
  std::string nan_bytes = bytes;
  const std::uint32_t nan_bits = 0x7fc00000u;
  for (int i = 0; i < 4; ++i) nan_bytes[nan_bytes.size() - 4 + i] = static_cast<char>((nan_bits >> (8 * i)) & 0xff);
  std::stringstream poisoned(nan_bytes);
  try {
    read_checkpoint<float>(poisoned);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "non_finite");
  }
}

TEST(ModelDir, SaveLoadPreservesQueries) {
  TempDir dir("model");
  const auto& m = *small_models().multilingual;
  save_model(m, dir.path().string());
  const auto back = load_model(dir.path().string());
  EXPECT_EQ(back.model_id, "multi-test");
  EXPECT_EQ(back.mode, TrainingMode::kUnalignedMultilingual);
  const auto& word = small_models().synth.words.at("l2")[3];
  const auto a = m.query("some text " + word, "l1", "l2", 5);
  const auto b = back.query("some text " + word, "l1", "l2", 5);
  ASSERT_EQ(a.items.size(), b.items.size());
  for (std::size_t i = 0; i < a.items.size(); ++i) {
    EXPECT_EQ(a.items[i].surface, b.items[i].surface);
    EXPECT_EQ(a.items[i].score, b.items[i].score);
  }
}

TEST(ModelDir, EnvironmentDefault) {
  TempDir dir("env");
  ::setenv(kModelDirEnv, dir.path().c_str(), 1);
  EXPECT_EQ(resolve_model_dir(""), dir.path().string());
  EXPECT_EQ(resolve_model_dir("/elsewhere"), "/elsewhere");
  ::unsetenv(kModelDirEnv);
  EXPECT_THROW(resolve_model_dir(""), Error);
}

TEST(ModelDir, MismatchedVocabIsRejected) {
  TempDir dir("mismatch");
  const auto& m = *small_models().monolingual;
  save_model(m, dir.path().string());
  std::ofstream(ModelPaths{dir.path()}.vocab(), std::ios::app) << "extra_token\n";
  EXPECT_THROW(load_model(dir.path().string()), Error);
}

TEST(Query, EqualsRankOfAggregatedScores) {
  const auto& m = *small_models().multilingual;
  const std::string def = "a definition with unknown words";
  const auto direct = rank(aggregate(m.subword_matrix(def, "l2"), m.index, "l2"), &m.index, 7);
  const auto q = m.query(def, "l1", "l2", 7);
  ASSERT_EQ(q.items.size(), 7u);
  for (std::size_t i = 0; i < 7; ++i) {
    EXPECT_EQ(q.items[i].word_id, direct.items[i].word_id);
    EXPECT_EQ(q.items[i].score, direct.items[i].score);
    EXPECT_EQ(q.items[i].rank, i);
  }
}

TEST(Query, CapabilityAndLanguageChecks) {
  const auto& mono = *small_models().monolingual;
  EXPECT_TRUE(mono.supports("l1", "l1"));
  EXPECT_FALSE(mono.supports("l1", "l2"));
  try {
    mono.query("x", "l1", "l2");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "unsupported_pair");
  }
  try {
    mono.query("x", "zz", "l1");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "unknown_language");
  }
  EXPECT_TRUE(small_models().multilingual->supports("l1", "l2"));
}

TEST(Evaluate, ReportMatchesManualRanks) {
  const auto& m = *small_models().monolingual;
  const auto view = small_models().corpus.view(SplitTag::kSeen);
  const auto report = evaluate(m.params, m.vocab, m.index, view, "seen", true);
  std::vector<std::size_t> ranks;
  for (const auto& e : view) {
    const auto full = m.query(e.definition, e.definition_language, e.word_language);
    ranks.push_back(target_rank(full, m.index.find(e.word_language, e.word)));
  }
  EXPECT_EQ(report.metrics, compute_metrics(ranks));
  EXPECT_EQ(report.split, "seen");
  EXPECT_EQ(report.language_pair, "l1->l1,l2->l2");
  ASSERT_TRUE(report.groups.has_value());
  std::size_t n = 0;
  for (const auto& [g, r] : *report.groups) n += r.n_samples;
  EXPECT_EQ(n, ranks.size());
}

TEST(Evaluate, ExcludedTargetsRankLast) {
  const auto& m = *small_models().monolingual;
  TrainingCorpus c;
  c.add({"notaword", "l1", "anything", "l1", SplitTag::kTest});
  const auto report = evaluate(m.params, m.vocab, m.index, c.view(SplitTag::kTest), "test");
  EXPECT_EQ(report.metrics.n_excluded_targets, 1u);
  EXPECT_EQ(report.metrics.median_rank, static_cast<double>(m.index.size("l1")));
  EXPECT_EQ(report.excluded, (std::vector<std::string>{"notaword"}));
  EXPECT_THROW(evaluate(m.params, m.vocab, m.index, c.view(SplitTag::kDev), "dev"), Error);
}

}  // namespace
}  // namespace revdict
