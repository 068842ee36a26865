#include "byolim/adam.hpp"

#include <cmath>

namespace byolim {

void AdamConfig::validate() const {
  if (!(learning_rate > 0)) throw Error(ErrorCode::config_invalid, "adam learning rate must be positive");
  if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1) {
    throw Error(ErrorCode::config_invalid, "adam betas must lie in [0, 1)");
  }
  if (!(epsilon > 0)) throw Error(ErrorCode::config_invalid, "adam epsilon must be positive");
}

template <class T>
Adam<T>::Adam(AdamConfig cfg) : cfg_(cfg) {
  cfg_.validate();
}

template <class T>
void Adam<T>::step(const std::vector<Parameter<T>*>& params, const GradMap<T>& grads) {
  for (const Parameter<T>* p : params) {
    if (p->trainable && grads.find(p->id()) == grads.end()) {
      throw Error(ErrorCode::missing_gradient, "no gradient for " + p->name());
    }
  }
  ++t_;
  const T b1 = static_cast<T>(cfg_.beta1);
  const T b2 = static_cast<T>(cfg_.beta2);
  const T lr = static_cast<T>(cfg_.learning_rate);
  const T eps = static_cast<T>(cfg_.epsilon);
  const T c1 = static_cast<T>(1.0 - std::pow(cfg_.beta1, static_cast<double>(t_)));
  const T c2 = static_cast<T>(1.0 - std::pow(cfg_.beta2, static_cast<double>(t_)));
  for (Parameter<T>* p : params) {
    if (!p->trainable) continue;
    const BasicTensor<T>& g = grads.at(p->id());
    auto [it, fresh] = moments_.try_emplace(p->id());
    Moments& mo = it->second;
    if (fresh) {
      mo.m = BasicTensor<T>(p->value.shape());
      mo.v = BasicTensor<T>(p->value.shape());
    }
    T* w = p->value.raw();
    for (std::size_t i = 0; i < g.size(); ++i) {
      mo.m[i] = b1 * mo.m[i] + (T(1) - b1) * g[i];
      mo.v[i] = b2 * mo.v[i] + (T(1) - b2) * g[i] * g[i];
      const T m_hat = mo.m[i] / c1;
      const T v_hat = mo.v[i] / c2;
      w[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

template class Adam<float>;
template class Adam<double>;

}  // namespace byolim
