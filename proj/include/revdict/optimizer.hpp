#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>

#include "revdict/backprop.hpp"
#include "revdict/model.hpp"

namespace revdict {

struct AdamConfig {
  double peak_lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 1.0;  // <= 0 disables clipping
  std::int64_t warmup_steps = 0;
  std::int64_t total_steps = 0;  // 0: constant after warmup
};

// Linear warmup to peak_lr, then linear decay to zero at total_steps.
// `step` is the 1-based index of the update being applied.
inline double scheduled_lr(const AdamConfig& c, std::int64_t step) {
  if (c.warmup_steps > 0 && step <= c.warmup_steps) {
    return c.peak_lr * static_cast<double>(step) / static_cast<double>(c.warmup_steps);
  }
  if (c.total_steps <= 0 || c.total_steps <= c.warmup_steps) return c.peak_lr;
  const double remaining = static_cast<double>(c.total_steps - step) /
                           static_cast<double>(c.total_steps - c.warmup_steps);
  return c.peak_lr * std::clamp(remaining, 0.0, 1.0);
}

template <typename Scalar>
struct TrainState {
  EncoderParams<Scalar> params;
  EncoderParams<Scalar> first_moment;
  EncoderParams<Scalar> second_moment;
  std::int64_t step = 0;
  std::uint64_t seed = 0;
  AdamConfig adam;
  double last_lr = 0.0;
  double last_grad_norm = 0.0;

  static TrainState fresh(EncoderParams<Scalar> p, const AdamConfig& adam, std::uint64_t seed) {
    TrainState s;
    s.first_moment = zeros_like(p);
    s.second_moment = zeros_like(p);
    s.params = std::move(p);
    s.adam = adam;
    s.seed = seed;
    return s;
  }
};

template <typename Scalar>
double global_norm(const Gradients<Scalar>& g) {
  double sq = 0.0;
  for_each_tensor(g, [&](const std::string&, const Mat<Scalar>& t) {
    sq += t.template cast<double>().squaredNorm();
  });
  return std::sqrt(sq);
}

// Adaptive-moment update with bias correction. Gradients are clipped to
// adam.clip_norm (global L2 norm) before the moments are touched.
template <typename Scalar>
void adam_step(TrainState<Scalar>& state, Gradients<Scalar> grads) {
  const auto& c = state.adam;
  const double norm = global_norm(grads);
  state.last_grad_norm = norm;
  if (c.clip_norm > 0.0 && norm > c.clip_norm) {
    const auto factor = static_cast<Scalar>(c.clip_norm / norm);
    for_each_tensor(grads, [&](const std::string&, Mat<Scalar>& t) { t *= factor; });
  }
  state.step += 1;
  const double lr = scheduled_lr(c, state.step);
  state.last_lr = lr;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  const auto b1 = static_cast<Scalar>(c.beta1);
  const auto b2 = static_cast<Scalar>(c.beta2);
  const auto step_size = static_cast<Scalar>(lr / bc1);
  const auto inv_bc2 = static_cast<Scalar>(1.0 / bc2);
  const auto eps = static_cast<Scalar>(c.epsilon);

  std::vector<Mat<Scalar>*> g_list, m_list, v_list;
  for_each_tensor(grads, [&](const std::string&, Mat<Scalar>& t) { g_list.push_back(&t); });
  for_each_tensor(state.first_moment, [&](const std::string&, Mat<Scalar>& t) { m_list.push_back(&t); });
  for_each_tensor(state.second_moment, [&](const std::string&, Mat<Scalar>& t) { v_list.push_back(&t); });
  std::size_t i = 0;
  for_each_tensor(state.params, [&](const std::string&, Mat<Scalar>& w) {
    auto& g = *g_list[i];
    auto& m = *m_list[i];
    auto& v = *v_list[i];
    m = b1 * m + (Scalar(1) - b1) * g;
    v = b2 * v + (Scalar(1) - b2) * g.cwiseProduct(g);
    w.array() -= step_size * m.array() / ((v.array() * inv_bc2).sqrt() + eps);
    ++i;
  });
}

}  // namespace revdict
