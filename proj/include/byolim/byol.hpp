#pragma once

#include <functional>
#include <vector>

#include "byolim/adam.hpp"
#include "byolim/augment.hpp"
#include "byolim/models.hpp"

namespace byolim {

struct BYOLConfig {
  double tau = 0.99;
  bool symmetrize_loss = false;
  bool use_target_network = true;
  bool use_momentum = true;
  bool use_predictor = true;
  std::size_t projection_dim = 256;
  std::size_t epochs = 20;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;

  void validate() const;
};

template <class T>
struct OnlineNetwork {
  Encoder<T> encoder;
  MLPHead<T> projector;
  MLPHead<T> predictor;

  /// Parameters that receive gradients for the given configuration.
  std::vector<Parameter<T>*> trainable_parameters(bool use_predictor);
};

/// Momentum image of the online encoder and projector. Never trainable.
template <class T>
struct TargetNetwork {
  Encoder<T> encoder;
  MLPHead<T> projector;

  std::vector<Parameter<T>*> parameters();
};

template <class T>
struct BYOLState {
  OnlineNetwork<T> online;
  TargetNetwork<T> target;
  BYOLConfig config;
  std::size_t step_count = 0;
};

/// Random online networks; the target starts as an exact copy of the online
/// encoder and projector. The projector/predictor output width is
/// cfg.projection_dim (overriding mlp.output_dim).
template <class T>
BYOLState<T> init_byol(const EncoderConfig& enc, const MLPHeadConfig& mlp, const BYOLConfig& cfg, Rng& rng);

/// Mean over rows of 2 - 2 cos(z_online, z_target). z_target is a constant.
template <class T>
Var<T> byol_loss(Var<T> z_online, const BasicTensor<T>& z_target);

/// BYOL loss for one pair of augmented views. The online branch runs in train
/// mode and refreshes its batchnorm statistics; the target branch normalizes
/// with batch statistics but never updates its running statistics.
template <class T>
Var<T> forward_pair(BYOLState<T>& state, Tape<T>& tape, const BasicTensor<T>& v, const BasicTensor<T>& v_prime);

/// xi <- tau * xi + (1 - tau) * theta over every target tensor, including
/// batchnorm running statistics. Without momentum the target is a plain copy.
template <class T>
void ema_update(BYOLState<T>& state);

struct PretrainResult {
  std::vector<double> epoch_loss;
  std::size_t steps = 0;
};

using EpochCallback = std::function<void(std::size_t epoch, double mean_loss)>;

/// Self-supervised pretraining over unlabeled [C, H, W] images. Randomness
/// (shuffling and view sampling) derives from seed only.
PretrainResult pretrain(BYOLState<float>& state, const std::vector<const Tensor*>& images,
                        const AugmentationSpec& spec, AdamConfig adam, std::uint64_t seed,
                        const EpochCallback& on_epoch = {});

}  // namespace byolim
