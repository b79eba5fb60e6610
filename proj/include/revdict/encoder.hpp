#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "revdict/error.hpp"
#include "revdict/model.hpp"
#include "revdict/vocab.hpp"

namespace revdict {

// One input sequence:
//   [CLS] [MASK]*k [SEP] definition [SEP]
// segment 0 up to and including the first [SEP], segment 1 afterwards.
struct EncodedInput {
  std::vector<TokenId> tokens;
  std::vector<int> segments;
  std::vector<int> mask_positions;  // 1..k
  int language = -1;                // -1: no language embedding
  std::size_t truncated_tokens = 0;
};

inline EncodedInput build_input(const SubwordVocab& vocab, int k,
                                std::span<const TokenId> definition, int definition_budget,
                                int language = -1) {
  if (k < 1) throw Error("build_input: k must be >= 1", "invalid_argument");
  EncodedInput in;
  in.language = language;
  std::size_t def_len = definition.size();
  const auto budget = static_cast<std::size_t>(std::max(definition_budget, 0));
  if (def_len > budget) {
    in.truncated_tokens = def_len - budget;
    def_len = budget;
  }
  const std::size_t total = 3 + static_cast<std::size_t>(k) + def_len;
  in.tokens.reserve(total);
  in.segments.reserve(total);
  in.tokens.push_back(vocab.cls_id());
  for (int i = 0; i < k; ++i) {
    in.tokens.push_back(vocab.mask_id());
    in.mask_positions.push_back(i + 1);
  }
  in.tokens.push_back(vocab.sep_id());
  in.segments.assign(in.tokens.size(), 0);
  in.tokens.insert(in.tokens.end(), definition.begin(), definition.begin() + static_cast<std::ptrdiff_t>(def_len));
  in.tokens.push_back(vocab.sep_id());
  in.segments.resize(in.tokens.size(), 1);
  return in;
}

// Padded batch. Row-major B x T arrays; padding carries pad_id and mask 0.
struct InputBatch {
  int batch_size = 0;
  int seq_len = 0;
  int k = 0;
  std::vector<TokenId> tokens;
  std::vector<int> segments;
  std::vector<int> positions;
  std::vector<int> languages;
  std::vector<std::uint8_t> attention_mask;
  std::vector<int> mask_positions;  // B x k

  std::span<const TokenId> row_tokens(int b) const {
    return {tokens.data() + static_cast<std::size_t>(b) * seq_len, static_cast<std::size_t>(seq_len)};
  }
};

inline InputBatch make_batch(std::span<const EncodedInput> inputs, TokenId pad_id,
                             int min_seq_len = 0) {
  if (inputs.empty()) throw Error("make_batch: empty batch", "invalid_argument");
  InputBatch b;
  b.batch_size = static_cast<int>(inputs.size());
  b.k = static_cast<int>(inputs.front().mask_positions.size());
  std::size_t t = static_cast<std::size_t>(std::max(min_seq_len, 0));
  for (const auto& in : inputs) {
    t = std::max(t, in.tokens.size());
    if (static_cast<int>(in.mask_positions.size()) != b.k) {
      throw Error("make_batch: inconsistent k across inputs", "invalid_argument");
    }
  }
  b.seq_len = static_cast<int>(t);
  const std::size_t n = inputs.size() * t;
  b.tokens.assign(n, pad_id);
  b.segments.assign(n, 0);
  b.positions.resize(n);
  b.attention_mask.assign(n, 0);
  for (std::size_t r = 0; r < inputs.size(); ++r) {
    const auto& in = inputs[r];
    for (std::size_t i = 0; i < t; ++i) b.positions[r * t + i] = static_cast<int>(i);
    for (std::size_t i = 0; i < in.tokens.size(); ++i) {
      b.tokens[r * t + i] = in.tokens[i];
      b.segments[r * t + i] = in.segments[i];
      b.attention_mask[r * t + i] = 1;
    }
    b.languages.push_back(in.language);
    b.mask_positions.insert(b.mask_positions.end(), in.mask_positions.begin(),
                            in.mask_positions.end());
  }
  return b;
}

struct ForwardOptions {
  bool training = false;  // enables dropout
  std::uint64_t dropout_seed = 0;
};

namespace detail {

template <typename Scalar>
using ColVec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
struct LayerNormCache {
  Mat<Scalar> xhat;
  ColVec<Scalar> inv_std;
};

template <typename Scalar>
Mat<Scalar> layer_norm(const Mat<Scalar>& x, const Mat<Scalar>& gain, const Mat<Scalar>& bias,
                       double eps, LayerNormCache<Scalar>* cache) {
  const ColVec<Scalar> mean = x.rowwise().mean();
  Mat<Scalar> centered = x.colwise() - mean;
  const ColVec<Scalar> var = centered.array().square().rowwise().mean();
  const ColVec<Scalar> inv = (var.array() + static_cast<Scalar>(eps)).rsqrt();
  Mat<Scalar> xhat = centered.array().colwise() * inv.array();
  Mat<Scalar> y = (xhat.array().rowwise() * gain.row(0).array()).rowwise() + bias.row(0).array();
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = inv;
  }
  return y;
}

template <typename Scalar>
Scalar gelu(Scalar x) {
  return static_cast<Scalar>(0.5) * x *
         (static_cast<Scalar>(1) + std::erf(x / std::sqrt(static_cast<Scalar>(2))));
}

template <typename Scalar>
Scalar gelu_grad(Scalar x) {
  const Scalar cdf = static_cast<Scalar>(0.5) *
                     (static_cast<Scalar>(1) + std::erf(x / std::sqrt(static_cast<Scalar>(2))));
  const Scalar pdf = std::exp(static_cast<Scalar>(-0.5) * x * x) /
                     std::sqrt(static_cast<Scalar>(2.0 * 3.14159265358979323846));
  return cdf + x * pdf;
}

template <typename Scalar>
Mat<Scalar> gelu(const Mat<Scalar>& x) {
  return x.unaryExpr([](Scalar v) { return gelu(v); });
}

// Inverted-dropout mask (entries 0 or 1/(1-p)); empty when p == 0.
template <typename Scalar>
Mat<Scalar> dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, Rng& rng) {
  if (p <= 0.0) return {};
  Mat<Scalar> m(rows, cols);
  const auto scale = static_cast<Scalar>(1.0 / (1.0 - p));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.bernoulli(p) ? Scalar(0) : scale;
  return m;
}

template <typename Scalar>
void apply_mask(Mat<Scalar>& x, const Mat<Scalar>& mask) {
  if (mask.size() != 0) x.array() *= mask.array();
}

}  // namespace detail

// Activations retained for the backward pass of one sequence.
template <typename Scalar>
struct LayerCache {
  Mat<Scalar> input;
  Mat<Scalar> q, k, v;
  std::vector<Mat<Scalar>> probs;  // one T x T matrix per head
  Mat<Scalar> context;
  Mat<Scalar> attn_dropout;
  detail::LayerNormCache<Scalar> attn_ln;
  Mat<Scalar> attn_normed;  // h-hat
  Mat<Scalar> ffn_pre;
  Mat<Scalar> ffn_act;
  Mat<Scalar> ffn_dropout;
  detail::LayerNormCache<Scalar> ffn_ln;
};

template <typename Scalar>
struct SequenceTrace {
  std::vector<TokenId> tokens;
  std::vector<int> segments;
  std::vector<int> mask_positions;
  std::vector<std::uint8_t> key_mask;
  int language = -1;
  Mat<Scalar> embedding_dropout;
  std::vector<LayerCache<Scalar>> layers;
  std::vector<Mat<Scalar>> hidden;  // h^0..h^L, each T x d
  Mat<Scalar> masked_hidden;        // H^L_k, k x d
};

// Runs the encoder over one sequence. `key_mask` (may be empty: all valid)
// marks which positions can be attended to.
template <typename Scalar>
SequenceTrace<Scalar> encode_sequence(const EncoderParams<Scalar>& p,
                                      std::span<const TokenId> tokens,
                                      std::span<const int> segments,
                                      std::span<const int> mask_positions, int language,
                                      std::span<const std::uint8_t> key_mask,
                                      const ForwardOptions& opts = {}) {
  const auto& c = p.config;
  const auto t_len = static_cast<Eigen::Index>(tokens.size());
  const Eigen::Index d = c.d_model;
  if (t_len > c.max_seq_len) throw Error("sequence longer than max_seq_len", "invalid_input");
  if (segments.size() != tokens.size()) throw Error("segment/token length mismatch", "invalid_input");

  SequenceTrace<Scalar> tr;
  tr.tokens.assign(tokens.begin(), tokens.end());
  tr.segments.assign(segments.begin(), segments.end());
  tr.mask_positions.assign(mask_positions.begin(), mask_positions.end());
  tr.key_mask.assign(key_mask.begin(), key_mask.end());
  if (tr.key_mask.empty()) tr.key_mask.assign(tokens.size(), 1);
  tr.language = language;

  Rng rng(opts.dropout_seed);
  const double drop = opts.training ? c.dropout : 0.0;

  Mat<Scalar> h(t_len, d);
  for (Eigen::Index t = 0; t < t_len; ++t) {
    const auto tok = tokens[static_cast<std::size_t>(t)];
    const auto seg = segments[static_cast<std::size_t>(t)];
    if (tok < 0 || tok >= c.vocab_size) throw Error("token id out of range", "invalid_input");
    if (seg < 0 || seg >= c.num_segments) throw Error("segment id out of range", "invalid_input");
    h.row(t) = p.token_emb.row(tok) + p.position_emb.row(t) + p.segment_emb.row(seg);
    if (c.num_languages > 0 && language >= 0) {
      if (language >= c.num_languages) throw Error("language id out of range", "invalid_input");
      h.row(t) += p.language_emb.row(language);
    }
  }
  tr.embedding_dropout = detail::dropout_mask<Scalar>(t_len, d, drop, rng);
  detail::apply_mask(h, tr.embedding_dropout);
  tr.hidden.push_back(h);

  const int heads = c.num_heads;
  const Eigen::Index hd = c.head_dim();
  const auto scale = static_cast<Scalar>(1.0 / std::sqrt(static_cast<double>(hd)));
  const Scalar neg_inf = -std::numeric_limits<Scalar>::infinity();

  tr.layers.resize(p.layers.size());
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const auto& L = p.layers[l];
    auto& lc = tr.layers[l];
    lc.input = h;
    lc.q = (h * L.query_w).rowwise() + L.query_b.row(0);
    lc.k = (h * L.key_w).rowwise() + L.key_b.row(0);
    lc.v = (h * L.value_w).rowwise() + L.value_b.row(0);
    lc.context.resize(t_len, d);
    lc.probs.resize(static_cast<std::size_t>(heads));
    for (int hh = 0; hh < heads; ++hh) {
      const Eigen::Index off = hh * hd;
      Mat<Scalar> scores = lc.q.middleCols(off, hd) * lc.k.middleCols(off, hd).transpose();
      scores *= scale;
      for (Eigen::Index j = 0; j < t_len; ++j) {
        if (!tr.key_mask[static_cast<std::size_t>(j)]) scores.col(j).setConstant(neg_inf);
      }
      const detail::ColVec<Scalar> row_max = scores.rowwise().maxCoeff();
      Mat<Scalar> e = (scores.colwise() - row_max).array().exp();
      const detail::ColVec<Scalar> denom = e.rowwise().sum();
      e.array().colwise() /= denom.array();
      lc.context.middleCols(off, hd) = e * lc.v.middleCols(off, hd);
      lc.probs[static_cast<std::size_t>(hh)] = std::move(e);
    }
    Mat<Scalar> attn = (lc.context * L.attn_out_w).rowwise() + L.attn_out_b.row(0);
    lc.attn_dropout = detail::dropout_mask<Scalar>(t_len, d, drop, rng);
    detail::apply_mask(attn, lc.attn_dropout);
    lc.attn_normed = detail::layer_norm<Scalar>(h + attn, L.attn_ln_gain, L.attn_ln_bias,
                                                c.layer_norm_eps, &lc.attn_ln);
    lc.ffn_pre = (lc.attn_normed * L.ffn_in_w).rowwise() + L.ffn_in_b.row(0);
    lc.ffn_act = detail::gelu<Scalar>(lc.ffn_pre);
    Mat<Scalar> ffn = (lc.ffn_act * L.ffn_out_w).rowwise() + L.ffn_out_b.row(0);
    lc.ffn_dropout = detail::dropout_mask<Scalar>(t_len, d, drop, rng);
    detail::apply_mask(ffn, lc.ffn_dropout);
    h = detail::layer_norm<Scalar>(lc.attn_normed + ffn, L.ffn_ln_gain, L.ffn_ln_bias,
                                   c.layer_norm_eps, &lc.ffn_ln);
    if (!h.allFinite()) {
      throw Error("non-finite activation at layer " + std::to_string(l), "non_finite");
    }
    tr.hidden.push_back(h);
  }

  tr.masked_hidden.resize(static_cast<Eigen::Index>(mask_positions.size()), d);
  for (std::size_t i = 0; i < mask_positions.size(); ++i) {
    const int pos = mask_positions[i];
    if (pos < 0 || pos >= t_len) throw Error("mask position out of range", "invalid_input");
    tr.masked_hidden.row(static_cast<Eigen::Index>(i)) = h.row(pos);
  }
  return tr;
}

template <typename Scalar>
SequenceTrace<Scalar> encode_input(const EncoderParams<Scalar>& p, const EncodedInput& in,
                                   const ForwardOptions& opts = {}) {
  return encode_sequence(p, std::span<const TokenId>(in.tokens), std::span<const int>(in.segments),
                         std::span<const int>(in.mask_positions), in.language, {}, opts);
}

template <typename Scalar>
struct HiddenStates {
  int batch_size = 0;
  int seq_len = 0;
  // layers[l][b] is h^l for sequence b (T x d); layers.back() is H^L.
  std::vector<std::vector<Mat<Scalar>>> layers;
  // masked[b] is H^L_k for sequence b (k x d).
  std::vector<Mat<Scalar>> masked;

  const Mat<Scalar>& last(int b) const { return layers.back()[static_cast<std::size_t>(b)]; }
};

// Batched forward pass; dropout is off unless opts.training.
template <typename Scalar>
HiddenStates<Scalar> forward(const EncoderParams<Scalar>& p, const InputBatch& batch,
                             const ForwardOptions& opts = {}) {
  HiddenStates<Scalar> out;
  out.batch_size = batch.batch_size;
  out.seq_len = batch.seq_len;
  out.layers.resize(p.layers.size() + 1);
  const auto t = static_cast<std::size_t>(batch.seq_len);
  const auto k = static_cast<std::size_t>(batch.k);
  for (int b = 0; b < batch.batch_size; ++b) {
    const auto off = static_cast<std::size_t>(b) * t;
    ForwardOptions row_opts = opts;
    row_opts.dropout_seed = Rng::derive(opts.dropout_seed, static_cast<std::uint64_t>(b));
    auto tr = encode_sequence(
        p, std::span<const TokenId>(batch.tokens.data() + off, t),
        std::span<const int>(batch.segments.data() + off, t),
        std::span<const int>(batch.mask_positions.data() + static_cast<std::size_t>(b) * k, k),
        batch.languages[static_cast<std::size_t>(b)],
        std::span<const std::uint8_t>(batch.attention_mask.data() + off, t), row_opts);
    for (std::size_t l = 0; l < tr.hidden.size(); ++l) out.layers[l].push_back(std::move(tr.hidden[l]));
    out.masked.push_back(std::move(tr.masked_hidden));
  }
  return out;
}

// Activations of the scoring head, retained for backward.
template <typename Scalar>
struct HeadTrace {
  Mat<Scalar> pre;   // H_k W + b
  Mat<Scalar> act;   // gelu(pre)
  detail::LayerNormCache<Scalar> ln;
  Mat<Scalar> out;   // layer-normed transform, k x d
};

// k x |V| subword scores at the masked positions. mlm_head: transform ->
// GELU -> LN -> tied decoder + bias. embedding_dot: H_k * token_emb^T.
template <typename Scalar>
Mat<Scalar> subword_scores(const EncoderParams<Scalar>& p, const Mat<Scalar>& masked_hidden,
                           HeadTrace<Scalar>* trace = nullptr) {
  if (masked_hidden.cols() != p.config.d_model) {
    throw Error("subword_scores: hidden width mismatch", "invalid_input");
  }
  if (p.config.head_mode == HeadMode::kEmbeddingDot) {
    return masked_hidden * p.token_emb.transpose();
  }
  HeadTrace<Scalar> local;
  HeadTrace<Scalar>& ht = trace ? *trace : local;
  ht.pre = (masked_hidden * p.head_transform_w).rowwise() + p.head_transform_b.row(0);
  ht.act = detail::gelu<Scalar>(ht.pre);
  ht.out = detail::layer_norm<Scalar>(ht.act, p.head_ln_gain, p.head_ln_bias,
                                      p.config.layer_norm_eps, &ht.ln);
  Mat<Scalar> s = ht.out * p.token_emb.transpose();
  s.rowwise() += p.head_output_bias.row(0);
  return s;
}

}  // namespace revdict
