#pragma once

#include <cstdint>
#include <unordered_map>
#include <vector>

#include "byolim/autograd.hpp"

namespace byolim {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

/// Adam with bias correction:
///   m <- b1 m + (1 - b1) g,  v <- b2 v + (1 - b2) g^2,
///   theta <- theta - lr * m_hat / (sqrt(v_hat) + eps).
/// Moments are keyed by parameter identity and created on first use.
template <class T>
class Adam {
 public:
  explicit Adam(AdamConfig cfg);

  /// Updates every trainable parameter in params; each must have a gradient.
  void step(const std::vector<Parameter<T>*>& params, const GradMap<T>& grads);

  std::uint64_t timestep() const noexcept { return t_; }
  const AdamConfig& config() const noexcept { return cfg_; }

 private:
  struct Moments {
    BasicTensor<T> m;
    BasicTensor<T> v;
  };

  AdamConfig cfg_;
  std::uint64_t t_ = 0;
  std::unordered_map<std::uint64_t, Moments> moments_;
};

}  // namespace byolim
