#include <algorithm>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "revdict/corpus.hpp"
#include "revdict/lexicon.hpp"
#include "revdict/synth.hpp"
#include "support.hpp"

namespace revdict {
namespace {

using testing::TempDir;

std::string corpus_text(const TrainingCorpus& c) {
  std::ostringstream out;
  write_corpus(c, out);
  return out.str();
}

TEST(ParseCorpus, AcceptsValidLines) {
  std::istringstream in(
      R"({"word":"oven","word_language":"en","definition":"a hot box","definition_language":"en"})"
      "\n\n"
      R"({"word":"four","word_language":"fr","definition":"a hot box","definition_language":"en","split":"test"})"
      "\n"
      R"({"word":"hob","word_language":"en","definition":"flat top","definition_language":"en","split":"dev"})"
      "\n");
  CorpusLoadReport rep;
  const auto c = parse_corpus(in, &rep);
  EXPECT_EQ(c.size(), 3u);
  EXPECT_EQ(rep.accepted, 3u);
  EXPECT_TRUE(rep.rejected.empty());
  EXPECT_EQ(c.entries()[1].split, SplitTag::kTest);
  const auto pairs = c.pair_counts();
  EXPECT_EQ(pairs.at({"en", "fr"}), 1u);
  EXPECT_EQ(pairs.at({"en", "en"}), 2u);
  EXPECT_EQ(c.languages(), (std::vector<LanguageTag>{"en", "fr"}));
}

TEST(ParseCorpus, RejectsMalformedLinesAndCountsThem) {
  std::istringstream in(
      R"({"word_language":"en","definition":"x","definition_language":"en"})"
      "\n"
      "not json\n"
      R"({"word":"a b","word_language":"en","definition":"x","definition_language":"en"})"
      "\n"
      R"({"word":"ok","word_language":"en","definition":"x","definition_language":"en","split":"weird"})"
      "\n"
      R"({"word":"ok","word_language":"en","definition":"x","definition_language":"en"})"
      "\n");
  CorpusLoadReport rep;
  const auto c = parse_corpus(in, &rep);
  EXPECT_EQ(c.size(), 1u);
  ASSERT_EQ(rep.rejected.size(), 4u);
  EXPECT_EQ(rep.rejected[0].line, 1u);
  EXPECT_NE(rep.rejected[0].reason.find("word"), std::string::npos);
}

TEST(ParseCorpus, UnknownLanguageAndEmptyCorpusAreErrors) {
  std::istringstream a(R"({"word":"x","word_language":"de","definition":"y","definition_language":"en"})");
  try {
    parse_corpus(a, nullptr, std::set<LanguageTag>{"en"});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "unknown_language");
  }
  std::istringstream b("garbage\n");
  try {
    parse_corpus(b);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "empty_corpus");
  }
}

TEST(ParseCorpus, FileRoundTrip) {
  TempDir dir("corpus");
  TrainingCorpus c;
  c.add({"w1", "en", "first definition", "en", SplitTag::kTrain});
  c.add({"w2", "de", "zweite \"quoted\" definition", "en", SplitTag::kUnseen});
  save_corpus(c, dir.file("c.jsonl"));
  const auto back = load_corpus(dir.file("c.jsonl"));
  EXPECT_EQ(back.entries(), c.entries());
}

TEST(Views, FilterBySplitAndPair) {
  TrainingCorpus c;
  c.add({"a", "en", "d", "en", SplitTag::kTrain});
  c.add({"b", "fr", "d", "en", SplitTag::kTrain});
  c.add({"c", "fr", "d", "en", SplitTag::kTest});
  EXPECT_EQ(c.view(SplitTag::kTrain).size(), 2u);
  EXPECT_EQ(c.monolingual_view(SplitTag::kTrain).size(), 1u);
  EXPECT_EQ(c.pair_view(SplitTag::kTest, "en", "fr").size(), 1u);
  EXPECT_EQ(c.pair_view(SplitTag::kTest, "fr", "en").size(), 0u);
  std::size_t n = 0;
  for (const auto& e : c.view(SplitTag::kTrain)) n += e.word.size();
  EXPECT_EQ(n, 2u);
}

SynthOutput default_synth(std::uint64_t seed = 1) { return synth_generate(SynthSpec{}, seed); }

TEST(Splits, UnseenWordsHaveNoTrainingDefinitions) {
  const auto syn = default_synth();
  const auto c = make_splits(syn.corpus, 4, {});
  std::set<std::pair<LanguageTag, std::string>> unseen, trained;
  for (const auto& e : c.view(SplitTag::kUnseen)) unseen.insert({e.word_language, e.word});
  for (const auto& e : c.monolingual_view(SplitTag::kTrain)) trained.insert({e.word_language, e.word});
  ASSERT_FALSE(unseen.empty());
  for (const auto& w : unseen) EXPECT_EQ(trained.count(w), 0u) << w.second;
}

TEST(Splits, SeenEntriesAreCopiesOfTrainingEntries) {
  const auto syn = default_synth();
  const auto c = make_splits(syn.corpus, 4, {});
  std::set<std::tuple<LanguageTag, std::string, std::string>> train;
  for (const auto& e : c.monolingual_view(SplitTag::kTrain)) train.insert({e.word_language, e.word, e.definition});
  std::size_t n = 0;
  for (const auto& e : c.view(SplitTag::kSeen)) {
    EXPECT_EQ(train.count({e.word_language, e.word, e.definition}), 1u);
    ++n;
  }
  EXPECT_EQ(n, 200u);
}

TEST(Splits, DevKeepsAnotherDefinitionInTrainAndTestIsCrossLingual) {
  const auto syn = default_synth();
  const auto c = make_splits(syn.corpus, 4, {});
  std::set<std::pair<LanguageTag, std::string>> trained;
  for (const auto& e : c.monolingual_view(SplitTag::kTrain)) trained.insert({e.word_language, e.word});
  for (const auto& e : c.view(SplitTag::kDev)) EXPECT_EQ(trained.count({e.word_language, e.word}), 1u);
  ASSERT_FALSE(c.view(SplitTag::kTest).empty());
  for (const auto& e : c.view(SplitTag::kTest)) EXPECT_FALSE(e.monolingual());
}

TEST(Splits, SameSeedSameSplits) {
  const auto syn = default_synth();
  EXPECT_EQ(corpus_text(make_splits(syn.corpus, 9, {})), corpus_text(make_splits(syn.corpus, 9, {})));
  EXPECT_NE(corpus_text(make_splits(syn.corpus, 9, {})), corpus_text(make_splits(syn.corpus, 10, {})));
}

TEST(Splits, TooFewEntriesIsAnError) {
  TrainingCorpus c;
  c.add({"a", "en", "d1", "en", SplitTag::kTrain});
  c.add({"b", "en", "d2", "en", SplitTag::kTrain});
  SplitConfig cfg;
  cfg.seen_per_language = 5;
  cfg.unseen_word_fraction = 0.0;
  cfg.dev_word_fraction = 0.0;
  try {
    make_splits(c, 1, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "insufficient_data");
  }
}

TEST(Synth, SizeAndLexicon) {
  const auto syn = default_synth();
  EXPECT_GE(syn.corpus.size(), 600u);
  EXPECT_EQ(syn.words.at("l1").size(), 300u);
  EXPECT_EQ(syn.words.at("l2").size(), 300u);
  const auto& lex = syn.lexicons.at({"l1", "l2"});
  EXPECT_EQ(lex.size(), 300u);
  std::set<std::string> targets;
  for (const auto& [s, t] : lex.pairs()) targets.insert(t);
  EXPECT_EQ(targets.size(), 300u);
  for (std::size_t i = 0; i < 300; ++i) {
    EXPECT_EQ(lex.translate(syn.words.at("l1")[i]), syn.words.at("l2")[i]);
  }
}

TEST(Synth, EveryWordIsIndexableWithKThree) {
  const auto syn = default_synth();
  const auto vocab = syn.vocab();
  const auto index = build_index(vocab, syn.words, 3);
  EXPECT_TRUE(index.excluded().empty());
  for (const auto& e : syn.corpus.entries()) {
    for (TokenId id : vocab.tokenize_text(e.definition)) ASSERT_NE(id, vocab.unk_id()) << e.definition;
  }
}

TEST(Synth, NoSharingGivesDisjointVocabularies) {
  SynthSpec spec;
  spec.sharing_ratio = 0.0;
  const auto syn = synth_generate(spec, 2);
  const auto& a = syn.language_tokens.at("l1");
  const auto& b = syn.language_tokens.at("l2");
  for (const auto& t : a) EXPECT_EQ(b.count(t), 0u) << t;
  spec.sharing_ratio = 1.0;
  const auto all = synth_generate(spec, 2);
  EXPECT_EQ(all.language_tokens.at("l1"), all.language_tokens.at("l2"));
}

TEST(Synth, SameSeedByteIdentical) {
  EXPECT_EQ(corpus_text(default_synth(5).corpus), corpus_text(default_synth(5).corpus));
  EXPECT_EQ(default_synth(5).vocab_tokens, default_synth(5).vocab_tokens);
  EXPECT_NE(corpus_text(default_synth(5).corpus), corpus_text(default_synth(6).corpus));
}

TEST(Synth, InconsistentSpecIsRejected) {
  SynthSpec spec;
  spec.word_count = spec.max_words() + 1;
  EXPECT_THROW(synth_generate(spec, 1), Error);
  SynthSpec dup;
  dup.languages = {"l1", "l1"};
  EXPECT_THROW(synth_generate(dup, 1), Error);
  SynthSpec small;
  small.vocab_size = 10;
  try {
    synth_generate(small, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "inconsistent_spec");
  }
}

TEST(Synth, VocabPaddingAndSpecJson) {
  SynthSpec spec;
  spec.vocab_size = 1000;
  const auto syn = synth_generate(spec, 1);
  EXPECT_EQ(syn.vocab().size(), 1000u);
  EXPECT_EQ(to_json(synth_spec_from_json(to_json(spec))), to_json(spec));
}

TEST(Lexicon, LoadSaveAndFirstTranslationWins) {
  TempDir dir("lex");
  const auto path = dir.write("l.tsv", "chien\tdog\nchat\tcat\n\nchien\thound\n");
  const auto lex = load_lexicon(path);
  EXPECT_EQ(lex.translate("chien"), "dog");
  EXPECT_EQ(lex.translate("oiseau"), std::nullopt);
  save_lexicon(lex, dir.file("o.tsv"));
  EXPECT_EQ(load_lexicon(dir.file("o.tsv")).pairs(), lex.pairs());
  dir.write("bad.tsv", "no tab here\n");
  EXPECT_THROW(load_lexicon(dir.file("bad.tsv")), Error);
}

}  // namespace
}  // namespace revdict
