#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "revdict/backprop.hpp"
#include "revdict/random.hpp"

namespace revdict {

struct GradCheckOptions {
  double step = 1e-3;             // central-difference step
  // Five-point central stencil (O(h^4) truncation) unless false, in which
  // case the plain two-point central difference is used.
  bool five_point = true;
  double tolerance = 1e-4;        // max relative error per tensor
  double abs_floor = 1e-6;        // denominator floor for near-zero gradients
  std::size_t samples_per_tensor = 24;  // 0: every coordinate
  std::uint64_t seed = 0;
  LossOptions loss;
  // Applied to the analytic gradients before comparison (fault injection).
  std::function<void(Gradients<double>&)> tamper;
};

struct TensorCheck {
  std::string name;
  std::size_t coordinates_checked = 0;
  double max_relative_error = 0.0;
  double max_abs_error = 0.0;
  bool pass = true;
};

struct GradCheckReport {
  std::vector<TensorCheck> tensors;
  double loss = 0.0;
  bool all_pass() const {
    return std::all_of(tensors.begin(), tensors.end(), [](const auto& t) { return t.pass; });
  }
};

// |analytic - numeric| / max(|analytic|, |numeric|, abs_floor)
inline double relative_error(double analytic, double numeric, double abs_floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), abs_floor});
  return std::abs(analytic - numeric) / denom;
}

// Compares analytic gradients of the summed word loss with central
// differences, on a seeded random sample of coordinates per tensor. Dropout
// is off. Failures are reported, never thrown.
inline GradCheckReport grad_check(const EncoderParams<double>& params, const WordIndex& index,
                                  std::span<const TrainingExample> batch,
                                  const GradCheckOptions& opts = {}) {
  GradCheckReport report;
  auto analytic = zeros_like(params);
  report.loss = loss_and_gradients(params, index, batch, analytic, {}, opts.loss);
  if (opts.tamper) opts.tamper(analytic);

  std::vector<std::pair<std::string, const Mat<double>*>> grads;
  for_each_tensor(analytic, [&](const std::string& name, const Mat<double>& g) {
    grads.emplace_back(name, &g);
  });

  auto probe = params;
  Rng rng(opts.seed);
  std::size_t ti = 0;
  for_each_tensor(probe, [&](const std::string& name, Mat<double>& w) {
    const Mat<double>& g = *grads[ti++].second;
    TensorCheck tc;
    tc.name = name;
    std::vector<Eigen::Index> coords(static_cast<std::size_t>(w.size()));
    std::iota(coords.begin(), coords.end(), Eigen::Index{0});
    if (opts.samples_per_tensor > 0 && coords.size() > opts.samples_per_tensor) {
      rng.shuffle(coords);
      coords.resize(opts.samples_per_tensor);
      std::sort(coords.begin(), coords.end());
    }
    for (auto idx : coords) {
      double& x = w.data()[idx];
      const double saved = x;
      auto loss_at = [&](double offset) {
        x = saved + offset;
        return static_cast<double>(batch_loss(probe, index, batch, opts.loss));
      };
      const double h = opts.step;
      double numeric = 0.0;
      if (opts.five_point) {
        numeric = (loss_at(-2 * h) - 8 * loss_at(-h) + 8 * loss_at(h) - loss_at(2 * h)) / (12 * h);
      } else {
        numeric = (loss_at(h) - loss_at(-h)) / (2 * h);
      }
      x = saved;
      const double a = g.data()[idx];
      tc.max_relative_error = std::max(tc.max_relative_error, relative_error(a, numeric, opts.abs_floor));
      tc.max_abs_error = std::max(tc.max_abs_error, std::abs(a - numeric));
      ++tc.coordinates_checked;
    }
    tc.pass = tc.max_relative_error < opts.tolerance;
    report.tensors.push_back(std::move(tc));
  });
  return report;
}

// A small self-contained problem: synthetic vocabulary of `vocab_size`
// tokens, 20 indexed words of 1..k pieces in one language, and a batch of
// three examples that alternate the language id.
struct GradCheckProblem {
  SubwordVocab vocab;
  WordIndex index;
  EncoderParams<double> params;
  std::vector<TrainingExample> batch;
};

inline GradCheckProblem grad_check_problem(ModelConfig cfg, HeadMode head, std::size_t vocab_size,
                                           int k, int num_languages, std::uint64_t seed) {
  constexpr std::size_t kSpecials = 5;
  if (vocab_size <= kSpecials) throw Error("grad-check vocabulary too small", "invalid_config");
  std::vector<std::string> toks = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"};
  for (std::size_t i = kSpecials; i < vocab_size; ++i) toks.push_back("t" + std::to_string(i));
  GradCheckProblem p{SubwordVocab(toks), WordIndex(k), {}, {}};
  cfg.vocab_size = static_cast<int>(vocab_size);
  cfg.head_mode = head;
  cfg.num_languages = num_languages;
  cfg.validate();
  cfg.validate_for_k(k);
  Rng rng(Rng::derive(seed, 11));
  const auto n_plain = vocab_size - kSpecials;
  auto piece = [&] { return static_cast<TokenId>(kSpecials + rng.below(n_plain)); };
  for (int w = 0; w < 20; ++w) {
    std::vector<TokenId> pieces;
    for (int i = 0; i <= w % k; ++i) pieces.push_back(piece());
    p.index.add_entry("xx", "w" + std::to_string(w), pieces, p.vocab.mask_id());
  }
  p.params = init_params<double>(cfg, Rng::derive(seed, 12));
  const int def_len = std::min(5, cfg.definition_budget(k));
  for (int b = 0; b < 3; ++b) {
    std::vector<TokenId> def;
    for (int i = 0; i < def_len; ++i) def.push_back(piece());
    TrainingExample ex;
    ex.input = build_input(p.vocab, k, def, cfg.definition_budget(k),
                           num_languages > 0 ? b % num_languages : -1);
    ex.language = "xx";
    ex.target = b * 3 % 20;
    p.batch.push_back(std::move(ex));
  }
  return p;
}

}  // namespace revdict
