#pragma once

#include <functional>
#include <vector>

#include "byolim/autograd.hpp"

namespace byolim {

/// Tensor construction with an explicit fill value or data list.
template <class T>
BasicTensor<T> tensor_new(Shape shape, T fill) {
  return BasicTensor<T>(std::move(shape), fill);
}
template <class T>
BasicTensor<T> tensor_new(Shape shape, std::vector<T> data) {
  return BasicTensor<T>(std::move(shape), std::move(data));
}

// Differentiable tensor operations. No broadcasting: binary operands must have
// identical shapes unless one side is a plain scalar.

template <class T>
Var<T> matmul(Var<T> a, Var<T> b);

template <class T>
Var<T> add(Var<T> a, Var<T> b);
template <class T>
Var<T> sub(Var<T> a, Var<T> b);
template <class T>
Var<T> mul(Var<T> a, Var<T> b);
template <class T>
Var<T> scalar_mul(Var<T> a, T s);
template <class T>
Var<T> add_scalar(Var<T> a, T s);

/// Reductions. An empty axis list reduces over every axis to a rank-0 result.
template <class T>
Var<T> sum(Var<T> a, const std::vector<std::size_t>& axes = {});
template <class T>
Var<T> mean(Var<T> a, const std::vector<std::size_t>& axes = {});

template <class T>
Var<T> reshape(Var<T> a, Shape shape);

/// v / ||v||_2 for a rank-1 tensor.
template <class T>
Var<T> l2_normalize(Var<T> v);

/// Row-wise l2 normalization of a [N, P] tensor.
template <class T>
Var<T> l2_normalize_rows(Var<T> v);

constexpr double kNormTolerance = 1e-12;

// Plain (non-recorded) forward kernels, shared by the recorded ops above.
template <class T>
BasicTensor<T> reduce_sum(const BasicTensor<T>& a, const std::vector<std::size_t>& axes);
template <class T>
BasicTensor<T> reduce_mean(const BasicTensor<T>& a, const std::vector<std::size_t>& axes);

/// Central-difference gradient estimate of a scalar function. Independent of
/// the tape; used as the oracle for every gradient check.
template <class T>
BasicTensor<T> finite_difference_grad(const std::function<T(const BasicTensor<T>&)>& f,
                                      const BasicTensor<T>& x, T eps) {
  BasicTensor<T> grad(x.shape());
  BasicTensor<T> probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T saved = probe[i];
    probe[i] = saved + eps;
    const T up = f(probe);
    probe[i] = saved - eps;
    const T down = f(probe);
    probe[i] = saved;
    grad[i] = (up - down) / (T(2) * eps);
  }
  return grad;
}

}  // namespace byolim
