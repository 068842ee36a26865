#pragma once

#include <string>
#include <vector>

#include "byolim/nn.hpp"
#include "byolim/rng.hpp"

namespace byolim {

struct EncoderConfig {
  std::size_t input_height = 224;
  std::size_t input_width = 224;
  std::size_t input_channels = 3;
  // Final width tuned so encoder + default classifier lands on ~0.526M parameters.
  std::vector<std::size_t> block_channels{32, 64, 128, 336};
  std::size_t kernel = 3;

  void validate() const;
};

struct MLPHeadConfig {
  std::size_t hidden_dim = 512;
  std::size_t output_dim = 256;

  void validate() const;
};

struct ClassifierConfig {
  std::size_t num_classes = 11;
  std::vector<std::size_t> hidden_dims{128};

  void validate() const;
};

template <class T>
struct ConvBlock {
  Conv2dParams<T> conv;
  BatchNormParams<T> bn;
};

/// Stack of (conv 3x3 pad 1 -> relu -> maxpool 2x2 -> batchnorm) blocks
/// followed by global average pooling.
template <class T>
class Encoder {
 public:
  static Encoder build(const EncoderConfig& cfg, Rng& rng, const std::string& prefix = "encoder");

  /// [N, C, H, W] -> [N, feature_dim]. update_stats refreshes batchnorm
  /// running statistics (train mode only). detach binds every parameter as a
  /// constant.
  Var<T> forward(Var<T> batch, Mode mode, bool update_stats, bool detach = false);

  std::size_t feature_dim() const { return blocks.back().conv.weight.value.dim(0); }
  Shape output_shape(const Shape& input) const;

  std::vector<Parameter<T>*> parameters();
  std::vector<const Parameter<T>*> parameters() const;

  EncoderConfig config;
  std::vector<ConvBlock<T>> blocks;
};

/// dense(in -> hidden) -> relu -> dense(hidden -> out).
template <class T>
class MLPHead {
 public:
  static MLPHead build(const MLPHeadConfig& cfg, std::size_t in_dim, Rng& rng, const std::string& prefix);

  Var<T> forward(Var<T> x, bool detach = false) const;

  std::vector<Parameter<T>*> parameters();
  std::vector<const Parameter<T>*> parameters() const;

  DenseParams<T> hidden;
  DenseParams<T> output;
};

/// Dense hidden layers with relu, then a linear layer producing logits.
template <class T>
class ClassifierHead {
 public:
  static ClassifierHead build(const ClassifierConfig& cfg, std::size_t in_dim, Rng& rng,
                              const std::string& prefix = "classifier");

  Var<T> forward(Var<T> features, bool detach = false) const;
  std::size_t num_classes() const { return output.weight.value.dim(1); }

  std::vector<Parameter<T>*> parameters();
  std::vector<const Parameter<T>*> parameters() const;

  std::vector<DenseParams<T>> hidden;
  DenseParams<T> output;
};

/// Encoder plus classification head; softmax is applied by the loss or at
/// prediction time, never stored in the model.
template <class T>
class ClassifierModel {
 public:
  static ClassifierModel build(const EncoderConfig& enc, const ClassifierConfig& cls, Rng& rng);

  Var<T> logits(Var<T> batch, Mode mode, bool update_stats);

  std::vector<Parameter<T>*> parameters();
  std::vector<const Parameter<T>*> parameters() const;

  Encoder<T> encoder;
  ClassifierHead<T> head;
};

template <class T>
DenseParams<T> make_dense(std::size_t in, std::size_t out, Rng& rng, const std::string& prefix);

template <class T>
std::size_t count_parameters(const std::vector<const Parameter<T>*>& params) {
  std::size_t n = 0;
  for (const auto* p : params)
    if (p->trainable) n += p->value.size();
  return n;
}

template <class M>
std::size_t count_parameters(const M& model) {
  return count_parameters(model.parameters());
}

/// Stacks [C, H, W] images into one [N, C, H, W] batch.
template <class T>
BasicTensor<T> stack_images(const std::vector<const BasicTensor<T>*>& images);

}  // namespace byolim
