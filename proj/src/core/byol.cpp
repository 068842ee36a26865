#include "byolim/byol.hpp"

#include "byolim/ops.hpp"

#include <algorithm>
#include <numeric>

namespace byolim {

void BYOLConfig::validate() const {
  if (!(tau >= 0.0 && tau <= 1.0)) throw Error(ErrorCode::config_invalid, "byol tau must lie in [0, 1]");
  if (projection_dim == 0) throw Error(ErrorCode::config_invalid, "projection dim must be positive");
  if (batch_size == 0) throw Error(ErrorCode::config_invalid, "byol batch size must be positive");
  if (!(learning_rate > 0)) throw Error(ErrorCode::config_invalid, "byol learning rate must be positive");
}

template <class T>
std::vector<Parameter<T>*> OnlineNetwork<T>::trainable_parameters(bool use_predictor) {
  std::vector<Parameter<T>*> out;
  for (auto* p : encoder.parameters())
    if (p->trainable) out.push_back(p);
  for (auto* p : projector.parameters()) out.push_back(p);
  if (use_predictor)
    for (auto* p : predictor.parameters()) out.push_back(p);
  return out;
}

template <class T>
std::vector<Parameter<T>*> TargetNetwork<T>::parameters() {
  auto out = encoder.parameters();
  for (auto* p : projector.parameters()) out.push_back(p);
  return out;
}

namespace {

template <class T>
std::vector<Parameter<T>*> ema_source(OnlineNetwork<T>& online) {
  auto out = online.encoder.parameters();
  for (auto* p : online.projector.parameters()) out.push_back(p);
  return out;
}

}  // namespace

template <class T>
BYOLState<T> init_byol(const EncoderConfig& enc, const MLPHeadConfig& mlp, const BYOLConfig& cfg, Rng& rng) {
  cfg.validate();
  MLPHeadConfig head = mlp;
  head.output_dim = cfg.projection_dim;
  BYOLState<T> s;
  s.config = cfg;
  s.online.encoder = Encoder<T>::build(enc, rng, "online.encoder");
  s.online.projector = MLPHead<T>::build(head, s.online.encoder.feature_dim(), rng, "online.projector");
  s.online.predictor = MLPHead<T>::build(head, cfg.projection_dim, rng, "online.predictor");
  s.target.encoder = s.online.encoder;
  s.target.projector = s.online.projector;
  for (auto* p : s.target.parameters()) {
    p->trainable = false;
    p->rename("target" + p->name().substr(p->name().find('.')));
  }
  return s;
}

template <class T>
Var<T> byol_loss(Var<T> z_online, const BasicTensor<T>& z_target) {
  if (z_online.shape() != z_target.shape() || z_target.rank() != 2) {
    throw Error(ErrorCode::shape_mismatch, "byol_loss " + shape_string(z_online.shape()) + " vs " +
                                               shape_string(z_target.shape()));
  }
  auto& tape = z_online.tape();
  Var<T> target_unit = l2_normalize_rows(tape.constant(z_target));
  Var<T> online_unit = l2_normalize_rows(z_online);
  Var<T> cosine = sum(mul(online_unit, target_unit), {1});
  return add_scalar(scalar_mul(mean(cosine), T(-2)), T(2));
}

namespace {

template <class T>
Var<T> online_prediction(BYOLState<T>& s, Var<T> view) {
  Var<T> z = s.online.projector.forward(s.online.encoder.forward(view, Mode::train, true));
  return s.config.use_predictor ? s.online.predictor.forward(z) : z;
}

template <class T>
BasicTensor<T> target_projection(BYOLState<T>& s, Var<T> view) {
  if (s.config.use_target_network) {
    return s.target.projector.forward(s.target.encoder.forward(view, Mode::train, false, true), true).value();
  }
  return s.online.projector.forward(s.online.encoder.forward(view, Mode::train, false, true), true).value();
}

}  // namespace

template <class T>
Var<T> forward_pair(BYOLState<T>& state, Tape<T>& tape, const BasicTensor<T>& v, const BasicTensor<T>& v_prime) {
  if (v.shape() != v_prime.shape()) {
    throw Error(ErrorCode::shape_mismatch, "views " + shape_string(v.shape()) + " and " +
                                               shape_string(v_prime.shape()));
  }
  Var<T> view = tape.constant(v);
  Var<T> view_prime = tape.constant(v_prime);
  const BasicTensor<T> z_prime = target_projection(state, view_prime);
  Var<T> loss = byol_loss(online_prediction(state, view), z_prime);
  if (!state.config.symmetrize_loss) return loss;
  const BasicTensor<T> z = target_projection(state, view);
  Var<T> swapped = byol_loss(online_prediction(state, view_prime), z);
  return scalar_mul(add(loss, swapped), T(0.5));
}

template <class T>
void ema_update(BYOLState<T>& state) {
  auto src = ema_source(state.online);
  auto dst = state.target.parameters();
  const T tau = static_cast<T>(state.config.tau);
  const T keep = state.config.use_momentum ? tau : T(0);
  const T mix = T(1) - keep;
  for (std::size_t i = 0; i < dst.size(); ++i) {
    BasicTensor<T>& xi = dst[i]->value;
    const BasicTensor<T>& theta = src[i]->value;
    if (!state.config.use_momentum) {
      xi = theta;
      continue;
    }
    for (std::size_t j = 0; j < xi.size(); ++j) xi[j] = keep * xi[j] + mix * theta[j];
  }
}

PretrainResult pretrain(BYOLState<float>& state, const std::vector<const Tensor*>& images,
                        const AugmentationSpec& spec, AdamConfig adam, std::uint64_t seed,
                        const EpochCallback& on_epoch) {
  if (images.empty()) throw Error(ErrorCode::empty_dataset, "no images to pretrain on");
  spec.validate();
  const BYOLConfig& cfg = state.config;
  cfg.validate();
  adam.learning_rate = cfg.learning_rate;
  Adam<float> optimizer(adam);
  const auto params = state.online.trainable_parameters(cfg.use_predictor);

  PretrainResult result;
  std::vector<std::size_t> order(images.size());
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng = make_rng(seed, "pretrain.shuffle", epoch);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      Rng aug_rng = make_rng(seed, "pretrain.augment", state.step_count);
      std::vector<Tensor> first, second;
      for (std::size_t i = start; i < end; ++i) {
        auto [v, vp] = augment_pair(*images[order[i]], spec, aug_rng);
        first.push_back(std::move(v));
        second.push_back(std::move(vp));
      }
      std::vector<const Tensor*> fp, sp;
      for (std::size_t i = 0; i < first.size(); ++i) {
        fp.push_back(&first[i]);
        sp.push_back(&second[i]);
      }
      Tape<float> tape;
      Var<float> loss = forward_pair(state, tape, stack_images(fp), stack_images(sp));
      loss_sum += loss.value().item();
      const GradMap<float> grads = tape.backward(loss);
      optimizer.step(params, grads);
      ema_update(state);
      ++state.step_count;
      ++batches;
    }
    const double mean_loss = loss_sum / static_cast<double>(batches);
    result.epoch_loss.push_back(mean_loss);
    if (on_epoch) on_epoch(epoch + 1, mean_loss);
  }
  result.steps = state.step_count;
  return result;
}

template struct OnlineNetwork<float>;
template struct OnlineNetwork<double>;
template struct TargetNetwork<float>;
template struct TargetNetwork<double>;
template BYOLState<float> init_byol(const EncoderConfig&, const MLPHeadConfig&, const BYOLConfig&, Rng&);
template BYOLState<double> init_byol(const EncoderConfig&, const MLPHeadConfig&, const BYOLConfig&, Rng&);
template Var<float> byol_loss(Var<float>, const BasicTensor<float>&);
template Var<double> byol_loss(Var<double>, const BasicTensor<double>&);
template Var<float> forward_pair(BYOLState<float>&, Tape<float>&, const BasicTensor<float>&, const BasicTensor<float>&);
template Var<double> forward_pair(BYOLState<double>&, Tape<double>&, const BasicTensor<double>&, const BasicTensor<double>&);
template void ema_update(BYOLState<float>&);
template void ema_update(BYOLState<double>&);

}  // namespace byolim
