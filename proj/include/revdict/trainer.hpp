#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "revdict/backprop.hpp"
#include "revdict/corpus.hpp"
#include "revdict/error.hpp"
#include "revdict/optimizer.hpp"
#include "revdict/pipeline.hpp"

namespace revdict {

struct TrainConfig {
  int batch_size = 32;
  int epochs = 30;
  double learning_rate = 1e-3;
  double warmup_fraction = 0.1;
  double clip_norm = 1.0;
  TrainingMode mode = TrainingMode::kMonolingual;
  // Unset: mlm_head, except embedding_dot for the unaligned mode.
  std::optional<HeadMode> head_mode;
  LossOptions loss;

  HeadMode effective_head_mode() const {
    if (head_mode) return *head_mode;
    return mode == TrainingMode::kUnalignedMultilingual ? HeadMode::kEmbeddingDot
                                                        : HeadMode::kMlmHead;
  }

  void validate() const {
    if (batch_size <= 0) throw Error("batch_size must be positive", "invalid_config");
    if (epochs < 0) throw Error("epochs must be >= 0", "invalid_config");
    if (!(warmup_fraction >= 0.0 && warmup_fraction <= 1.0)) {
      throw Error("warmup_fraction must lie in [0, 1]", "invalid_config");
    }
    if (!(learning_rate > 0.0)) throw Error("learning_rate must be positive", "invalid_config");
  }
};

inline nlohmann::json to_json(const TrainConfig& c) {
  nlohmann::json j = {{"batch_size", c.batch_size},
                      {"epochs", c.epochs},
                      {"learning_rate", c.learning_rate},
                      {"warmup_fraction", c.warmup_fraction},
                      {"clip_norm", c.clip_norm},
                      {"mode", to_string(c.mode)},
                      {"normalize_positions", c.loss.normalize_positions},
                      {"mean_reduction", c.loss.mean_reduction}};
  if (c.head_mode) j["head_mode"] = to_string(*c.head_mode);
  return j;
}

inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c = {}) {
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.warmup_fraction = j.value("warmup_fraction", c.warmup_fraction);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  if (j.contains("mode")) c.mode = training_mode_from_string(j.at("mode").get<std::string>());
  if (j.contains("head_mode")) c.head_mode = head_mode_from_string(j.at("head_mode").get<std::string>());
  c.loss.normalize_positions = j.value("normalize_positions", c.loss.normalize_positions);
  c.loss.mean_reduction = j.value("mean_reduction", c.loss.mean_reduction);
  return c;
}

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;  // mean per-sample loss over the epoch
  std::optional<double> dev_acc10;
  double lr = 0.0;          // learning rate of the epoch's last update

  friend bool operator==(const EpochLog&, const EpochLog&) = default;
};

inline nlohmann::json to_json(const EpochLog& e) {
  return {{"epoch", e.epoch},
          {"train_loss", e.train_loss},
          {"dev_acc10", e.dev_acc10 ? nlohmann::json(*e.dev_acc10) : nlohmann::json(nullptr)},
          {"lr", e.lr}};
}

struct TrainResult {
  EncoderParams<float> best;   // highest dev Acc@10; ties go to the later epoch
  int best_epoch = 0;          // 0: the initial parameters
  std::optional<double> best_dev_acc10;
  std::vector<EpochLog> history;
  TrainState<float> final_state;
  std::size_t skipped_examples = 0;  // training targets missing from the index
};

// Corpus slices a mode may read. The unaligned mode only ever receives the
// monolingual views.
struct ModeViews {
  CorpusView train;
  CorpusView dev;
};

inline ModeViews mode_views(const TrainingCorpus& corpus, TrainingMode mode) {
  if (mode == TrainingMode::kBilingualAligned) {
    return {corpus.view(SplitTag::kTrain), corpus.view(SplitTag::kDev)};
  }
  return {corpus.monolingual_view(SplitTag::kTrain), corpus.monolingual_view(SplitTag::kDev)};
}

inline ModelConfig model_config_for(ModelConfig base, const TrainConfig& tc, const SubwordVocab& vocab,
                                    const WordIndex& index) {
  base.vocab_size = static_cast<int>(vocab.size());
  base.head_mode = tc.effective_head_mode();
  base.num_languages =
      tc.mode == TrainingMode::kMonolingual ? 0 : static_cast<int>(index.languages().size());
  base.validate();
  base.validate_for_k(index.k());
  return base;
}

// Encodes a view into training examples; entries whose word is not indexed
// are dropped and counted.
inline std::vector<TrainingExample> make_examples(const CorpusView& view, const SubwordVocab& vocab,
                                                  const WordIndex& index, const ModelConfig& cfg,
                                                  std::size_t* skipped = nullptr) {
  std::vector<TrainingExample> out;
  out.reserve(view.size());
  for (const auto& e : view) {
    const WordId t = index.has_language(e.word_language)
                         ? index.find(e.word_language, vocab.normalize(e.word))
                         : -1;
    if (t < 0) {
      if (skipped) ++*skipped;
      continue;
    }
    TrainingExample ex;
    ex.input = build_input(vocab, index.k(), vocab.tokenize_text(e.definition),
                           cfg.definition_budget(index.k()),
                           language_id(cfg, index, e.word_language));
    ex.language = e.word_language;
    ex.target = t;
    out.push_back(std::move(ex));
  }
  return out;
}

using EpochCallback = std::function<void(const EpochLog&)>;

// Seeded mini-batch training with per-epoch dev selection on Acc@10. The
// sample order, initialization and dropout masks all derive from `seed`, and
// gradients are reduced in sample order, so equal seeds give equal results.
inline TrainResult train(const TrainingCorpus& corpus, const WordIndex& index,
                         const SubwordVocab& vocab, const TrainConfig& tc,
                         const ModelConfig& base_model, std::uint64_t seed,
                         const EpochCallback& on_epoch = {}) {
  tc.validate();
  const ModelConfig cfg = model_config_for(base_model, tc, vocab, index);
  const ModeViews views = mode_views(corpus, tc.mode);
  TrainResult result;
  auto examples = make_examples(views.train, vocab, index, cfg, &result.skipped_examples);
  if (examples.empty()) throw Error("training split is empty", "empty_split");

  const auto n = examples.size();
  const auto bs = static_cast<std::size_t>(tc.batch_size);
  const std::size_t batches_per_epoch = (n + bs - 1) / bs;
  AdamConfig adam;
  adam.peak_lr = tc.learning_rate;
  adam.clip_norm = tc.clip_norm;
  adam.total_steps = static_cast<std::int64_t>(batches_per_epoch) * tc.epochs;
  adam.warmup_steps =
      static_cast<std::int64_t>(std::llround(tc.warmup_fraction * static_cast<double>(adam.total_steps)));

  auto state = TrainState<float>::fresh(init_params<float>(cfg, Rng::derive(seed, 1)), adam, seed);

  auto dev_acc10 = [&](const EncoderParams<float>& p) -> std::optional<double> {
    if (views.dev.empty()) return std::nullopt;
    return evaluate(p, vocab, index, views.dev, "dev").metrics.acc(10);
  };

  result.best = state.params;
  result.best_dev_acc10 = dev_acc10(state.params);

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::vector<TrainingExample> batch;
  for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
    Rng shuffler(Rng::derive(seed, 2, static_cast<std::uint64_t>(epoch)));
    shuffler.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < batches_per_epoch; ++b) {
      batch.clear();
      for (std::size_t i = b * bs; i < std::min(n, (b + 1) * bs); ++i) batch.push_back(examples[order[i]]);
      auto grads = zeros_like(state.params);
      ForwardOptions fwd;
      fwd.training = true;
      fwd.dropout_seed = Rng::derive(seed, 3, static_cast<std::uint64_t>(state.step));
      const float loss = loss_and_gradients(state.params, index, std::span<const TrainingExample>(batch),
                                            grads, fwd, tc.loss);
      if (!std::isfinite(loss)) {
        throw Error("training diverged: non-finite loss at epoch " + std::to_string(epoch), "non_finite");
      }
      bool finite = true;
      std::string bad;
      for_each_tensor(grads, [&](const std::string& name, const Mat<float>& g) {
        if (finite && !g.allFinite()) {
          finite = false;
          bad = name;
        }
      });
      if (!finite) throw Error("non-finite gradient in " + bad, "non_finite");
      // Undo mean reduction so the logged loss is always per sample.
      epoch_loss += static_cast<double>(loss) *
                    (tc.loss.mean_reduction ? static_cast<double>(batch.size()) : 1.0);
      adam_step(state, std::move(grads));
    }
    EpochLog log;
    log.epoch = epoch;
    log.train_loss = epoch_loss / static_cast<double>(n);
    log.lr = state.last_lr;
    log.dev_acc10 = dev_acc10(state.params);
    if (!log.dev_acc10 || !result.best_dev_acc10 || *log.dev_acc10 >= *result.best_dev_acc10) {
      result.best = state.params;
      result.best_epoch = epoch;
      result.best_dev_acc10 = log.dev_acc10;
    }
    result.history.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  result.final_state = std::move(state);
  return result;
}

}  // namespace revdict
