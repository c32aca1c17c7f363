#pragma once

// Adam with coupled L2 weight decay (the decay term is added to the gradient
// before the moment updates) and a step-decay learning-rate schedule.

#include <cmath>
#include <cstdint>
#include <span>

#include "bshape/error.hpp"
#include "bshape/nn/network.hpp"

namespace bshape::nn {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.005;
};

/// One Adam update of a flat array. `step` is the 1-based step count after
/// this update (used for bias correction).
template <typename T>
void adam_update(std::span<T> theta, std::span<const T> grad, std::span<T> m, std::span<T> v, std::int64_t step,
                 double lr, const AdamConfig& cfg) {
  if (grad.size() != theta.size() || m.size() != theta.size() || v.size() != theta.size())
    fail(ErrorCode::ShapeMismatch, "Adam state does not match parameter size");
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  const T wd = static_cast<T>(cfg.weight_decay);
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const T g = grad[i] + wd * theta[i];
    m[i] = b1 * m[i] + (T(1) - b1) * g;
    v[i] = b2 * v[i] + (T(1) - b2) * g * g;
    const double m_hat = static_cast<double>(m[i]) / c1;
    const double v_hat = static_cast<double>(v[i]) / c2;
    theta[i] = static_cast<T>(static_cast<double>(theta[i]) - lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon));
  }
}

template <typename T>
class Adam {
 public:
  Adam(Variant variant, AdamConfig cfg)
      : cfg_(cfg), m_(NetworkParams<T>::zeros(variant)), v_(NetworkParams<T>::zeros(variant)) {}

  void step(NetworkParams<T>& params, const NetworkParams<T>& grads, double lr) {
    ++t_;
    auto p = params.arrays();
    auto g = grads.arrays();
    auto m = m_.arrays();
    auto v = v_.arrays();
    if (p.size() != g.size() || p.size() != m.size())
      fail(ErrorCode::ShapeMismatch, "parameter, gradient and moment layouts differ");
    for (std::size_t i = 0; i < p.size(); ++i)
      adam_update<T>(p[i].span(), g[i].span(), m[i].span(), v[i].span(), t_, lr, cfg_);
  }

  std::int64_t steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  NetworkParams<T> m_, v_;
  std::int64_t t_ = 0;
};

/// lr0 * gamma^floor(step / period)
struct StepDecay {
  double lr0 = 1e-3;
  std::int64_t period = 200;
  double gamma = 0.1;

  double at(std::int64_t step) const {
    if (step < 0) fail(ErrorCode::OutOfRange, "schedule step must be >= 0");
    return lr0 * std::pow(gamma, static_cast<double>(step / period));
  }
};

}  // namespace bshape::nn
