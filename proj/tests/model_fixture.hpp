#pragma once

#include <memory>
#include <string>

#include "revdict/pipeline.hpp"
#include "revdict/synth.hpp"
#include "revdict/trainer.hpp"

namespace revdict::testing {

struct SmallModels {
  SynthOutput synth;
  TrainingCorpus corpus;
  std::shared_ptr<const Model> monolingual;   // languages l1 and l2, l1->l1 / l2->l2 only
  std::shared_ptr<const Model> multilingual;  // unaligned, any pair
};

inline Model train_small(const TrainingCorpus& corpus, const SubwordVocab& vocab,
                         const WordIndex& index, TrainingMode mode, const std::string& id) {
  TrainConfig tc;
  tc.epochs = 2;
  tc.mode = mode;
  ModelConfig mc;
  mc.d_model = 16;
  mc.ffn_dim = 32;
  mc.max_seq_len = 32;
  auto r = train(corpus, index, vocab, tc, mc, 1);
  return Model{vocab, index, std::move(r.best), mode, id};
}

// Built once per test binary; training takes well under a second.
inline const SmallModels& small_models() {
  static const SmallModels models = [] {
    SmallModels m;
    SynthSpec spec;
    spec.word_count = 60;
    spec.description_count = 5;
    m.synth = synth_generate(spec, 2);
    SplitConfig sc;
    sc.seen_per_language = 20;
    m.corpus = make_splits(m.synth.corpus, 2, sc);
    const auto vocab = m.synth.vocab();
    const auto index = build_index(vocab, m.synth.words, 3);
    m.monolingual = std::make_shared<const Model>(
        train_small(m.corpus, vocab, index, TrainingMode::kMonolingual, "mono-test"));
    m.multilingual = std::make_shared<const Model>(
        train_small(m.corpus, vocab, index, TrainingMode::kUnalignedMultilingual, "multi-test"));
    return m;
  }();
  return models;
}

}  // namespace revdict::testing
