#pragma once

#include <cstddef>
#include <span>

#include "byolim/autograd.hpp"

namespace byolim {

enum class Mode { train, eval };

template <class T>
struct Conv2dParams {
  Parameter<T> weight;  // [out_ch, in_ch, kh, kw]
  Parameter<T> bias;    // [out_ch]
  std::size_t stride = 1;
  std::size_t padding = 0;
};

template <class T>
struct BatchNormParams {
  Parameter<T> gamma;         // [ch]
  Parameter<T> beta;          // [ch]
  Parameter<T> running_mean;  // [ch], never trainable
  Parameter<T> running_var;   // [ch], never trainable
  T momentum = T(0.1);
  T epsilon = T(1e-5);
};

template <class T>
struct DenseParams {
  Parameter<T> weight;  // [in, out]
  Parameter<T> bias;    // [out]
};

// Shape inference; every layer's forward agrees with these exactly.
Shape conv2d_output_shape(const Shape& input, const Shape& weight, std::size_t stride,
                          std::size_t padding);
Shape maxpool2d_output_shape(const Shape& input, std::size_t k, std::size_t stride);
Shape dense_output_shape(const Shape& input, const Shape& weight);
Shape global_avg_pool_output_shape(const Shape& input);

/// Cross-correlation with zero padding plus a per-channel bias.
template <class T>
Var<T> conv2d(Var<T> input, Var<T> weight, Var<T> bias, std::size_t stride, std::size_t padding);

/// Window maximum. Backward routes the gradient to the first maximal element
/// of each window in row-major order.
template <class T>
Var<T> maxpool2d(Var<T> input, std::size_t k = 2, std::size_t stride = 2);

/// Per-channel batch normalization over (N, H, W).
///
/// In train mode batch statistics normalize the input; when update_running is
/// set, running_mean/running_var are blended in with
/// new = (1 - momentum) * old + momentum * batch (variance unbiased).
/// Eval mode is the fixed affine map given by the running statistics.
template <class T>
Var<T> batchnorm2d(Var<T> input, Var<T> gamma, Var<T> beta, BasicTensor<T>& running_mean,
                   BasicTensor<T>& running_var, Mode mode, T momentum, T epsilon,
                   bool update_running);

template <class T>
Var<T> relu(Var<T> input);

/// input[N, in] * W[in, out] + b[out].
template <class T>
Var<T> dense(Var<T> input, Var<T> weight, Var<T> bias);

/// [N, C, H, W] -> [N, C], the spatial mean of each feature map.
template <class T>
Var<T> global_avg_pool(Var<T> input);

/// Row-wise softmax of a [N, K] tensor, stabilized by max subtraction.
template <class T>
BasicTensor<T> softmax(const BasicTensor<T>& logits);

template <class T>
Var<T> softmax(Var<T> logits);

/// Mean over the batch of -log softmax(logits)[label].
template <class T>
Var<T> sparse_cross_entropy(Var<T> logits, std::span<const int> labels);

// Layer-level wrappers binding parameter structs to a tape. With detach set,
// parameters enter the tape as constants (stop-gradient).

template <class T>
Var<T> bind(Tape<T>& tape, const Parameter<T>& p, bool detach) {
  return detach ? tape.detached(p) : tape.parameter(p);
}

template <class T>
Var<T> conv2d(Var<T> input, const Conv2dParams<T>& p, bool detach = false) {
  auto& tape = input.tape();
  return conv2d(input, bind(tape, p.weight, detach), bind(tape, p.bias, detach), p.stride, p.padding);
}

template <class T>
Var<T> batchnorm2d(Var<T> input, BatchNormParams<T>& p, Mode mode, bool update_running,
                   bool detach = false) {
  auto& tape = input.tape();
  return batchnorm2d(input, bind(tape, p.gamma, detach), bind(tape, p.beta, detach),
                     p.running_mean.value, p.running_var.value, mode, p.momentum, p.epsilon,
                     update_running);
}

template <class T>
Var<T> dense(Var<T> input, const DenseParams<T>& p, bool detach = false) {
  auto& tape = input.tape();
  return dense(input, bind(tape, p.weight, detach), bind(tape, p.bias, detach));
}

}  // namespace byolim
