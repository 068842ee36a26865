#include "byolim/models.hpp"

#include <cmath>
#include <random>

namespace byolim {

void EncoderConfig::validate() const {
  if (block_channels.empty()) throw Error(ErrorCode::config_invalid, "encoder needs at least one block");
  for (std::size_t c : block_channels)
    if (c == 0) throw Error(ErrorCode::config_invalid, "encoder block channels must be positive");
  if (kernel == 0 || kernel % 2 == 0) throw Error(ErrorCode::config_invalid, "encoder kernel must be odd");
  if (input_channels == 0) throw Error(ErrorCode::config_invalid, "encoder input channels must be positive");
  const std::size_t min_side = std::size_t{1} << block_channels.size();
  if (input_height < min_side || input_width < min_side) {
    throw Error(ErrorCode::config_invalid, "input " + std::to_string(input_height) + "x" +
                                               std::to_string(input_width) + " too small for " +
                                               std::to_string(block_channels.size()) + " blocks");
  }
}

void MLPHeadConfig::validate() const {
  if (hidden_dim == 0 || output_dim == 0) throw Error(ErrorCode::config_invalid, "MLP head dims must be positive");
}

void ClassifierConfig::validate() const {
  if (num_classes < 2) throw Error(ErrorCode::config_invalid, "classifier needs at least 2 classes");
  for (std::size_t h : hidden_dims)
    if (h == 0) throw Error(ErrorCode::config_invalid, "classifier hidden dims must be positive");
}

namespace {

// Fan-in scaled normal (Kaiming) initialization.
template <class T>
BasicTensor<T> kaiming(Shape shape, std::size_t fan_in, Rng& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  BasicTensor<T> t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(dist(rng));
  return t;
}

template <class T>
void append(std::vector<Parameter<T>*>& out, DenseParams<T>& d) {
  out.push_back(&d.weight);
  out.push_back(&d.bias);
}

template <class T>
void append(std::vector<const Parameter<T>*>& out, const DenseParams<T>& d) {
  out.push_back(&d.weight);
  out.push_back(&d.bias);
}

template <class P, class Blocks>
void append_blocks(std::vector<P*>& out, Blocks& blocks) {
  for (auto& b : blocks) {
    out.push_back(&b.conv.weight);
    out.push_back(&b.conv.bias);
    out.push_back(&b.bn.gamma);
    out.push_back(&b.bn.beta);
    out.push_back(&b.bn.running_mean);
    out.push_back(&b.bn.running_var);
  }
}

}  // namespace

template <class T>
DenseParams<T> make_dense(std::size_t in, std::size_t out, Rng& rng, const std::string& prefix) {
  DenseParams<T> d;
  d.weight = Parameter<T>(prefix + ".weight", kaiming<T>({in, out}, in, rng));
  d.bias = Parameter<T>(prefix + ".bias", BasicTensor<T>({out}));
  return d;
}

template <class T>
Encoder<T> Encoder<T>::build(const EncoderConfig& cfg, Rng& rng, const std::string& prefix) {
  cfg.validate();
  Encoder enc;
  enc.config = cfg;
  std::size_t in_ch = cfg.input_channels;
  for (std::size_t i = 0; i < cfg.block_channels.size(); ++i) {
    const std::size_t out_ch = cfg.block_channels[i];
    const std::string name = prefix + ".block" + std::to_string(i);
    ConvBlock<T> block;
    block.conv.weight = Parameter<T>(name + ".conv.weight",
                                     kaiming<T>({out_ch, in_ch, cfg.kernel, cfg.kernel},
                                                in_ch * cfg.kernel * cfg.kernel, rng));
    block.conv.bias = Parameter<T>(name + ".conv.bias", BasicTensor<T>({out_ch}));
    block.conv.stride = 1;
    block.conv.padding = cfg.kernel / 2;
    block.bn.gamma = Parameter<T>(name + ".bn.gamma", BasicTensor<T>({out_ch}, T(1)));
    block.bn.beta = Parameter<T>(name + ".bn.beta", BasicTensor<T>({out_ch}));
    block.bn.running_mean = Parameter<T>(name + ".bn.running_mean", BasicTensor<T>({out_ch}), false);
    block.bn.running_var = Parameter<T>(name + ".bn.running_var", BasicTensor<T>({out_ch}, T(1)), false);
    enc.blocks.push_back(std::move(block));
    in_ch = out_ch;
  }
  return enc;
}

template <class T>
Var<T> Encoder<T>::forward(Var<T> batch, Mode mode, bool update_stats, bool detach) {
  const Shape& s = batch.shape();
  if (s.size() != 4 || s[1] != blocks.front().conv.weight.value.dim(1)) {
    throw Error(ErrorCode::shape_mismatch, "encoder input " + shape_string(s));
  }
  Var<T> x = batch;
  for (auto& b : blocks) {
    x = conv2d(x, b.conv, detach);
    x = relu(x);
    x = maxpool2d(x, 2, 2);
    x = batchnorm2d(x, b.bn, mode, update_stats && mode == Mode::train, detach);
  }
  return global_avg_pool(x);
}

template <class T>
Shape Encoder<T>::output_shape(const Shape& input) const {
  Shape s = input;
  for (const auto& b : blocks) {
    s = conv2d_output_shape(s, b.conv.weight.value.shape(), b.conv.stride, b.conv.padding);
    s = maxpool2d_output_shape(s, 2, 2);
  }
  return global_avg_pool_output_shape(s);
}

template <class T>
std::vector<Parameter<T>*> Encoder<T>::parameters() {
  std::vector<Parameter<T>*> out;
  append_blocks(out, blocks);
  return out;
}

template <class T>
std::vector<const Parameter<T>*> Encoder<T>::parameters() const {
  std::vector<const Parameter<T>*> out;
  append_blocks(out, blocks);
  return out;
}

template <class T>
MLPHead<T> MLPHead<T>::build(const MLPHeadConfig& cfg, std::size_t in_dim, Rng& rng,
                             const std::string& prefix) {
  cfg.validate();
  if (in_dim == 0) throw Error(ErrorCode::config_invalid, "MLP head input dim must be positive");
  MLPHead h;
  h.hidden = make_dense<T>(in_dim, cfg.hidden_dim, rng, prefix + ".hidden");
  h.output = make_dense<T>(cfg.hidden_dim, cfg.output_dim, rng, prefix + ".out");
  return h;
}

template <class T>
Var<T> MLPHead<T>::forward(Var<T> x, bool detach) const {
  return dense(relu(dense(x, hidden, detach)), output, detach);
}

template <class T>
std::vector<Parameter<T>*> MLPHead<T>::parameters() {
  std::vector<Parameter<T>*> out;
  append(out, hidden);
  append(out, output);
  return out;
}

template <class T>
std::vector<const Parameter<T>*> MLPHead<T>::parameters() const {
  std::vector<const Parameter<T>*> out;
  append(out, hidden);
  append(out, output);
  return out;
}

template <class T>
ClassifierHead<T> ClassifierHead<T>::build(const ClassifierConfig& cfg, std::size_t in_dim, Rng& rng,
                                           const std::string& prefix) {
  cfg.validate();
  if (in_dim == 0) throw Error(ErrorCode::config_invalid, "classifier input dim must be positive");
  ClassifierHead h;
  std::size_t prev = in_dim;
  for (std::size_t i = 0; i < cfg.hidden_dims.size(); ++i) {
    h.hidden.push_back(make_dense<T>(prev, cfg.hidden_dims[i], rng, prefix + ".dense" + std::to_string(i)));
    prev = cfg.hidden_dims[i];
  }
  h.output = make_dense<T>(prev, cfg.num_classes, rng, prefix + ".out");
  return h;
}

template <class T>
Var<T> ClassifierHead<T>::forward(Var<T> features, bool detach) const {
  Var<T> x = features;
  for (const auto& d : hidden) x = relu(dense(x, d, detach));
  return dense(x, output, detach);
}

template <class T>
std::vector<Parameter<T>*> ClassifierHead<T>::parameters() {
  std::vector<Parameter<T>*> out;
  for (auto& d : hidden) append(out, d);
  append(out, output);
  return out;
}

template <class T>
std::vector<const Parameter<T>*> ClassifierHead<T>::parameters() const {
  std::vector<const Parameter<T>*> out;
  for (const auto& d : hidden) append(out, d);
  append(out, output);
  return out;
}

template <class T>
ClassifierModel<T> ClassifierModel<T>::build(const EncoderConfig& enc, const ClassifierConfig& cls, Rng& rng) {
  ClassifierModel m;
  m.encoder = Encoder<T>::build(enc, rng);
  m.head = ClassifierHead<T>::build(cls, m.encoder.feature_dim(), rng);
  return m;
}

template <class T>
Var<T> ClassifierModel<T>::logits(Var<T> batch, Mode mode, bool update_stats) {
  return head.forward(encoder.forward(batch, mode, update_stats));
}

template <class T>
std::vector<Parameter<T>*> ClassifierModel<T>::parameters() {
  auto out = encoder.parameters();
  for (auto* p : head.parameters()) out.push_back(p);
  return out;
}

template <class T>
std::vector<const Parameter<T>*> ClassifierModel<T>::parameters() const {
  auto out = encoder.parameters();
  for (const auto* p : head.parameters()) out.push_back(p);
  return out;
}

template <class T>
BasicTensor<T> stack_images(const std::vector<const BasicTensor<T>*>& images) {
  if (images.empty()) throw Error(ErrorCode::empty_dataset, "cannot stack an empty batch");
  const Shape& first = images.front()->shape();
  if (first.size() != 3) throw Error(ErrorCode::shape_mismatch, "image shape " + shape_string(first));
  Shape shape{images.size(), first[0], first[1], first[2]};
  std::vector<T> data;
  data.reserve(shape_size(shape));
  for (const auto* img : images) {
    if (img->shape() != first) {
      throw Error(ErrorCode::shape_mismatch,
                  "batch mixes " + shape_string(first) + " and " + shape_string(img->shape()));
    }
    data.insert(data.end(), img->data().begin(), img->data().end());
  }
  return BasicTensor<T>(std::move(shape), std::move(data));
}

template class Encoder<float>;
template class Encoder<double>;
template class MLPHead<float>;
template class MLPHead<double>;
template class ClassifierHead<float>;
template class ClassifierHead<double>;
template class ClassifierModel<float>;
template class ClassifierModel<double>;
template DenseParams<float> make_dense(std::size_t, std::size_t, Rng&, const std::string&);
template DenseParams<double> make_dense(std::size_t, std::size_t, Rng&, const std::string&);
template BasicTensor<float> stack_images(const std::vector<const BasicTensor<float>*>&);
template BasicTensor<double> stack_images(const std::vector<const BasicTensor<double>*>&);

}  // namespace byolim
