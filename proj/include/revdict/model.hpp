#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "revdict/error.hpp"
#include "revdict/random.hpp"

namespace revdict {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using RowVec = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

enum class HeadMode { kMlmHead, kEmbeddingDot };

inline std::string to_string(HeadMode m) {
  return m == HeadMode::kMlmHead ? "mlm_head" : "embedding_dot";
}

inline HeadMode head_mode_from_string(const std::string& s) {
  if (s == "mlm_head") return HeadMode::kMlmHead;
  if (s == "embedding_dot") return HeadMode::kEmbeddingDot;
  throw Error("unknown head mode: " + s, "invalid_config");
}

struct ModelConfig {
  int num_layers = 2;
  int d_model = 32;
  int num_heads = 2;
  int ffn_dim = 64;
  int vocab_size = 0;
  int max_seq_len = 128;
  int num_segments = 2;
  int num_languages = 0;  // 0 disables the language embedding
  double dropout = 0.1;
  HeadMode head_mode = HeadMode::kMlmHead;
  double init_std = 0.02;
  double layer_norm_eps = 1e-12;

  int head_dim() const { return d_model / num_heads; }

  // Longest definition that fits next to a k-block and the three specials.
  int definition_budget(int k) const { return max_seq_len - k - 3; }

  void validate() const {
    if (num_layers < 0 || d_model <= 0 || num_heads <= 0 || ffn_dim <= 0 || vocab_size <= 0 ||
        max_seq_len <= 3 || num_segments != 2 || num_languages < 0) {
      throw Error("invalid model config", "invalid_config");
    }
    if (d_model % num_heads != 0) {
      throw Error("d_model must be divisible by num_heads", "invalid_config");
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) {
      throw Error("dropout must lie in [0, 1)", "invalid_config");
    }
  }

  void validate_for_k(int k) const {
    if (definition_budget(k) < 0) {
      throw Error("max_seq_len too small for k=" + std::to_string(k), "invalid_config");
    }
  }
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"num_layers", c.num_layers},   {"d_model", c.d_model},
       {"num_heads", c.num_heads},     {"ffn_dim", c.ffn_dim},
       {"vocab_size", c.vocab_size},   {"max_seq_len", c.max_seq_len},
       {"num_segments", c.num_segments}, {"num_languages", c.num_languages},
       {"dropout", c.dropout},         {"head_mode", to_string(c.head_mode)},
       {"init_std", c.init_std},       {"layer_norm_eps", c.layer_norm_eps}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  ModelConfig d;
  c.num_layers = j.value("num_layers", d.num_layers);
  c.d_model = j.value("d_model", d.d_model);
  c.num_heads = j.value("num_heads", d.num_heads);
  c.ffn_dim = j.value("ffn_dim", d.ffn_dim);
  c.vocab_size = j.value("vocab_size", d.vocab_size);
  c.max_seq_len = j.value("max_seq_len", d.max_seq_len);
  c.num_segments = j.value("num_segments", d.num_segments);
  c.num_languages = j.value("num_languages", d.num_languages);
  c.dropout = j.value("dropout", d.dropout);
  c.head_mode = head_mode_from_string(j.value("head_mode", to_string(d.head_mode)));
  c.init_std = j.value("init_std", d.init_std);
  c.layer_norm_eps = j.value("layer_norm_eps", d.layer_norm_eps);
}

template <typename Scalar>
struct LayerParams {
  Mat<Scalar> query_w, query_b, key_w, key_b, value_w, value_b, attn_out_w, attn_out_b;
  Mat<Scalar> attn_ln_gain, attn_ln_bias;
  Mat<Scalar> ffn_in_w, ffn_in_b, ffn_out_w, ffn_out_b;
  Mat<Scalar> ffn_ln_gain, ffn_ln_bias;
};

// All learnable tensors. Biases and gains are stored as 1xN matrices so every
// tensor has the same type. The MLM decoder weight is tied to token_emb.
template <typename Scalar>
struct EncoderParams {
  ModelConfig config;
  Mat<Scalar> token_emb, position_emb, segment_emb, language_emb;
  std::vector<LayerParams<Scalar>> layers;
  // MLM head; empty in embedding_dot mode.
  Mat<Scalar> head_transform_w, head_transform_b, head_ln_gain, head_ln_bias, head_output_bias;

  bool has_mlm_head() const { return config.head_mode == HeadMode::kMlmHead; }
};

// Visits every tensor in a fixed canonical order with a stable name. The
// order is what the optimizer, the checkpoint writer and the gradient check
// rely on.
template <typename Params, typename Fn>
void for_each_tensor(Params& p, Fn&& fn) {
  fn("embeddings.token", p.token_emb);
  fn("embeddings.position", p.position_emb);
  fn("embeddings.segment", p.segment_emb);
  if (p.config.num_languages > 0) fn("embeddings.language", p.language_emb);
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    auto& L = p.layers[l];
    const std::string pre = "layer" + std::to_string(l) + ".";
    fn(pre + "attention.query.weight", L.query_w);
    fn(pre + "attention.query.bias", L.query_b);
    fn(pre + "attention.key.weight", L.key_w);
    fn(pre + "attention.key.bias", L.key_b);
    fn(pre + "attention.value.weight", L.value_w);
    fn(pre + "attention.value.bias", L.value_b);
    fn(pre + "attention.output.weight", L.attn_out_w);
    fn(pre + "attention.output.bias", L.attn_out_b);
    fn(pre + "attention.layer_norm.gain", L.attn_ln_gain);
    fn(pre + "attention.layer_norm.bias", L.attn_ln_bias);
    fn(pre + "ffn.input.weight", L.ffn_in_w);
    fn(pre + "ffn.input.bias", L.ffn_in_b);
    fn(pre + "ffn.output.weight", L.ffn_out_w);
    fn(pre + "ffn.output.bias", L.ffn_out_b);
    fn(pre + "ffn.layer_norm.gain", L.ffn_ln_gain);
    fn(pre + "ffn.layer_norm.bias", L.ffn_ln_bias);
  }
  if (p.has_mlm_head()) {
    fn("mlm_head.transform.weight", p.head_transform_w);
    fn("mlm_head.transform.bias", p.head_transform_b);
    fn("mlm_head.layer_norm.gain", p.head_ln_gain);
    fn("mlm_head.layer_norm.bias", p.head_ln_bias);
    fn("mlm_head.output_bias", p.head_output_bias);
  }
}

// Two-parameter-set walk (params and a same-shaped gradient/moment set).
template <typename A, typename B, typename Fn>
void zip_tensors(A& a, B& b, Fn&& fn) {
  std::vector<std::pair<std::string, decltype(&a.token_emb)>> lhs;
  for_each_tensor(a, [&](const std::string& name, auto& t) { lhs.emplace_back(name, &t); });
  std::size_t i = 0;
  for_each_tensor(b, [&](const std::string&, auto& t) {
    fn(lhs[i].first, *lhs[i].second, t);
    ++i;
  });
}

template <typename Scalar>
EncoderParams<Scalar> zeros_like_config(const ModelConfig& c) {
  c.validate();
  const int d = c.d_model;
  EncoderParams<Scalar> p;
  p.config = c;
  auto z = [](int r, int col) { return Mat<Scalar>::Zero(r, col); };
  p.token_emb = z(c.vocab_size, d);
  p.position_emb = z(c.max_seq_len, d);
  p.segment_emb = z(c.num_segments, d);
  p.language_emb = z(c.num_languages, d);
  p.layers.resize(static_cast<std::size_t>(c.num_layers));
  for (auto& L : p.layers) {
    L.query_w = z(d, d);
    L.query_b = z(1, d);
    L.key_w = z(d, d);
    L.key_b = z(1, d);
    L.value_w = z(d, d);
    L.value_b = z(1, d);
    L.attn_out_w = z(d, d);
    L.attn_out_b = z(1, d);
    L.attn_ln_gain = z(1, d);
    L.attn_ln_bias = z(1, d);
    L.ffn_in_w = z(d, c.ffn_dim);
    L.ffn_in_b = z(1, c.ffn_dim);
    L.ffn_out_w = z(c.ffn_dim, d);
    L.ffn_out_b = z(1, d);
    L.ffn_ln_gain = z(1, d);
    L.ffn_ln_bias = z(1, d);
  }
  if (c.head_mode == HeadMode::kMlmHead) {
    p.head_transform_w = z(d, d);
    p.head_transform_b = z(1, d);
    p.head_ln_gain = z(1, d);
    p.head_ln_bias = z(1, d);
    p.head_output_bias = z(1, c.vocab_size);
  }
  return p;
}

template <typename Scalar>
EncoderParams<Scalar> zeros_like(const EncoderParams<Scalar>& p) {
  return zeros_like_config<Scalar>(p.config);
}

// normal(0, init_std) for embeddings and projection weights, zero biases,
// unit layer-norm gains.
template <typename Scalar>
EncoderParams<Scalar> init_params(const ModelConfig& c, std::uint64_t seed) {
  auto p = zeros_like_config<Scalar>(c);
  Rng rng(seed);
  for_each_tensor(p, [&](const std::string& name, Mat<Scalar>& t) {
    const bool is_gain = name.ends_with(".gain");
    const bool is_bias = name.ends_with(".bias") || name.ends_with("output_bias");
    if (is_gain) {
      t.setOnes();
    } else if (!is_bias) {
      for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = static_cast<Scalar>(rng.normal(0.0, c.init_std));
    }
  });
  return p;
}

template <typename To, typename From>
EncoderParams<To> cast_params(const EncoderParams<From>& src) {
  auto dst = zeros_like_config<To>(src.config);
  zip_tensors(src, dst, [](const std::string&, const Mat<From>& a, Mat<To>& b) {
    b = a.template cast<To>();
  });
  return dst;
}

template <typename Scalar>
std::size_t parameter_count(const EncoderParams<Scalar>& p) {
  std::size_t n = 0;
  for_each_tensor(p, [&](const std::string&, const Mat<Scalar>& t) {
    n += static_cast<std::size_t>(t.size());
  });
  return n;
}

}  // namespace revdict
