#pragma once

#include <span>
#include <string>
#include <vector>

#include "revdict/encoder.hpp"
#include "revdict/model.hpp"
#include "revdict/scoring.hpp"

namespace revdict {

// Gradients share the parameter layout.
template <typename Scalar>
using Gradients = EncoderParams<Scalar>;

namespace detail {

// dy -> dx for y = LN(x) * gain + bias; accumulates d gain / d bias.
template <typename Scalar>
Mat<Scalar> layer_norm_backward(const Mat<Scalar>& dy, const LayerNormCache<Scalar>& cache,
                                const Mat<Scalar>& gain, Mat<Scalar>& d_gain, Mat<Scalar>& d_bias) {
  d_gain.row(0) += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
  d_bias.row(0) += dy.colwise().sum();
  const Mat<Scalar> dxhat = dy.array().rowwise() * gain.row(0).array();
  const ColVec<Scalar> mean_dxhat = dxhat.rowwise().mean();
  const ColVec<Scalar> mean_dxhat_xhat = (dxhat.array() * cache.xhat.array()).rowwise().mean();
  Mat<Scalar> dx = dxhat.colwise() - mean_dxhat;
  dx.array() -= cache.xhat.array().colwise() * mean_dxhat_xhat.array();
  dx.array().colwise() *= cache.inv_std.array();
  return dx;
}

template <typename Scalar>
Mat<Scalar> gelu_backward(const Mat<Scalar>& dy, const Mat<Scalar>& pre) {
  return dy.array() * pre.unaryExpr([](Scalar v) { return gelu_grad(v); }).array();
}

}  // namespace detail

// Back-propagates d loss / d S (k x |V|) through the scoring head and the
// encoder of one sequence, accumulating into `grads`.
template <typename Scalar>
void backward_sequence(const EncoderParams<Scalar>& p, const SequenceTrace<Scalar>& tr,
                       const HeadTrace<Scalar>& head, const Mat<Scalar>& d_scores,
                       Gradients<Scalar>& grads) {
  const auto& c = p.config;
  const Mat<Scalar>& hk = tr.masked_hidden;

  Mat<Scalar> d_hk;
  if (c.head_mode == HeadMode::kEmbeddingDot) {
    // S = H_k E^T
    d_hk = d_scores * p.token_emb;
    grads.token_emb.noalias() += d_scores.transpose() * hk;
  } else {
    // S = LN(gelu(H_k W + b)) E^T + bias_out
    grads.token_emb.noalias() += d_scores.transpose() * head.out;
    grads.head_output_bias.row(0) += d_scores.colwise().sum();
    const Mat<Scalar> d_out = d_scores * p.token_emb;
    const Mat<Scalar> d_act = detail::layer_norm_backward<Scalar>(
        d_out, head.ln, p.head_ln_gain, grads.head_ln_gain, grads.head_ln_bias);
    const Mat<Scalar> d_pre = detail::gelu_backward<Scalar>(d_act, head.pre);
    grads.head_transform_w.noalias() += hk.transpose() * d_pre;
    grads.head_transform_b.row(0) += d_pre.colwise().sum();
    d_hk = d_pre * p.head_transform_w.transpose();
  }

  const auto t_len = static_cast<Eigen::Index>(tr.tokens.size());
  Mat<Scalar> dh = Mat<Scalar>::Zero(t_len, c.d_model);
  for (std::size_t i = 0; i < tr.mask_positions.size(); ++i) {
    dh.row(tr.mask_positions[i]) += d_hk.row(static_cast<Eigen::Index>(i));
  }

  const int heads = c.num_heads;
  const Eigen::Index hd = c.head_dim();
  const auto scale = static_cast<Scalar>(1.0 / std::sqrt(static_cast<double>(hd)));

  for (std::size_t li = p.layers.size(); li-- > 0;) {
    const auto& L = p.layers[li];
    auto& G = grads.layers[li];
    const auto& lc = tr.layers[li];

    // h = LN2(h_hat + drop(FFN(h_hat)))
    Mat<Scalar> d_sum2 =
        detail::layer_norm_backward<Scalar>(dh, lc.ffn_ln, L.ffn_ln_gain, G.ffn_ln_gain, G.ffn_ln_bias);
    Mat<Scalar> d_ffn = d_sum2;
    detail::apply_mask(d_ffn, lc.ffn_dropout);
    G.ffn_out_w.noalias() += lc.ffn_act.transpose() * d_ffn;
    G.ffn_out_b.row(0) += d_ffn.colwise().sum();
    const Mat<Scalar> d_act = d_ffn * L.ffn_out_w.transpose();
    const Mat<Scalar> d_pre = detail::gelu_backward<Scalar>(d_act, lc.ffn_pre);
    G.ffn_in_w.noalias() += lc.attn_normed.transpose() * d_pre;
    G.ffn_in_b.row(0) += d_pre.colwise().sum();
    Mat<Scalar> d_hhat = d_sum2;
    d_hhat.noalias() += d_pre * L.ffn_in_w.transpose();

    // h_hat = LN1(x + drop(MHAtt(x)))
    Mat<Scalar> d_sum1 = detail::layer_norm_backward<Scalar>(d_hhat, lc.attn_ln, L.attn_ln_gain,
                                                            G.attn_ln_gain, G.attn_ln_bias);
    Mat<Scalar> d_attn = d_sum1;
    detail::apply_mask(d_attn, lc.attn_dropout);
    G.attn_out_w.noalias() += lc.context.transpose() * d_attn;
    G.attn_out_b.row(0) += d_attn.colwise().sum();
    const Mat<Scalar> d_context = d_attn * L.attn_out_w.transpose();

    Mat<Scalar> dq(t_len, c.d_model), dk(t_len, c.d_model), dv(t_len, c.d_model);
    for (int hh = 0; hh < heads; ++hh) {
      const Eigen::Index off = hh * hd;
      const auto& prob = lc.probs[static_cast<std::size_t>(hh)];
      const Mat<Scalar> d_ctx_h = d_context.middleCols(off, hd);
      const Mat<Scalar> d_prob = d_ctx_h * lc.v.middleCols(off, hd).transpose();
      dv.middleCols(off, hd) = prob.transpose() * d_ctx_h;
      const detail::ColVec<Scalar> row_dot = (d_prob.array() * prob.array()).rowwise().sum();
      Mat<Scalar> d_logits = prob.array() * (d_prob.colwise() - row_dot).array();
      d_logits *= scale;
      dq.middleCols(off, hd) = d_logits * lc.k.middleCols(off, hd);
      dk.middleCols(off, hd) = d_logits.transpose() * lc.q.middleCols(off, hd);
    }
    G.query_w.noalias() += lc.input.transpose() * dq;
    G.query_b.row(0) += dq.colwise().sum();
    G.key_w.noalias() += lc.input.transpose() * dk;
    G.key_b.row(0) += dk.colwise().sum();
    G.value_w.noalias() += lc.input.transpose() * dv;
    G.value_b.row(0) += dv.colwise().sum();

    dh = d_sum1;
    dh.noalias() += dq * L.query_w.transpose();
    dh.noalias() += dk * L.key_w.transpose();
    dh.noalias() += dv * L.value_w.transpose();
  }

  detail::apply_mask(dh, tr.embedding_dropout);
  for (Eigen::Index t = 0; t < t_len; ++t) {
    if (!tr.key_mask[static_cast<std::size_t>(t)]) continue;
    grads.token_emb.row(tr.tokens[static_cast<std::size_t>(t)]) += dh.row(t);
    grads.position_emb.row(t) += dh.row(t);
    grads.segment_emb.row(tr.segments[static_cast<std::size_t>(t)]) += dh.row(t);
    if (c.num_languages > 0 && tr.language >= 0) grads.language_emb.row(tr.language) += dh.row(t);
  }
}

// A training sample: encoded input plus the gold word in `language`'s list.
struct TrainingExample {
  EncodedInput input;
  LanguageTag language;  // word list the target indexes into
  WordId target = 0;
};

struct LossOptions {
  bool normalize_positions = false;  // per-position log-softmax before the gather
  bool mean_reduction = false;       // default: sum over samples
};

// Forward + backward of the word-level cross-entropy over a batch. Each
// sample's softmax runs over its own language's word list, so a mixed batch
// yields the multilingual objective and a single-language batch the
// monolingual one. Gradients are accumulated in sample order.
template <typename Scalar>
Scalar loss_and_gradients(const EncoderParams<Scalar>& p, const WordIndex& index,
                          std::span<const TrainingExample> batch, Gradients<Scalar>& grads,
                          const ForwardOptions& fwd = {}, const LossOptions& loss_opts = {}) {
  const Scalar weight = loss_opts.mean_reduction && !batch.empty()
                            ? static_cast<Scalar>(1.0 / static_cast<double>(batch.size()))
                            : Scalar(1);
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& ex = batch[i];
    ForwardOptions opts = fwd;
    opts.dropout_seed = Rng::derive(fwd.dropout_seed, i);
    auto tr = encode_input(p, ex.input, opts);
    HeadTrace<Scalar> head;
    const Mat<Scalar> s = subword_scores(p, tr.masked_hidden, &head);
    const auto ws = aggregate(s, index, ex.language, loss_opts.normalize_positions);
    auto lg = word_loss_with_grad(ws, ex.target, weight);
    total += static_cast<double>(lg.loss) * static_cast<double>(weight);
    const Mat<Scalar> ds = aggregate_backward(s, index, ex.language,
                                              std::span<const Scalar>(lg.d_scores),
                                              loss_opts.normalize_positions);
    backward_sequence(p, tr, head, ds, grads);
  }
  return static_cast<Scalar>(total);
}

// Loss only (no gradient bookkeeping); used by finite differences.
template <typename Scalar>
Scalar batch_loss(const EncoderParams<Scalar>& p, const WordIndex& index,
                  std::span<const TrainingExample> batch, const LossOptions& loss_opts = {}) {
  const double weight = loss_opts.mean_reduction && !batch.empty()
                            ? 1.0 / static_cast<double>(batch.size())
                            : 1.0;
  double total = 0.0;
  for (const auto& ex : batch) {
    auto tr = encode_input(p, ex.input);
    const Mat<Scalar> s = subword_scores(p, tr.masked_hidden);
    const auto ws = aggregate(s, index, ex.language, loss_opts.normalize_positions);
    total += static_cast<double>(word_loss(ws, ex.target)) * weight;
  }
  return static_cast<Scalar>(total);
}

}  // namespace revdict
