#include "byolim/nn.hpp"

#include <array>
#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "byolim/gemm.hpp"

namespace byolim {
namespace {

void require_rank(const Shape& s, std::size_t rank, const char* what) {
  if (s.size() != rank) {
    throw Error(ErrorCode::shape_mismatch, std::string(what) + " expects rank " +
                                               std::to_string(rank) + ", got " + shape_string(s));
  }
}

struct ConvGeometry {
  std::size_t n, c, h, w, o, kh, kw, oh, ow, stride, pad;
  std::size_t patch() const { return c * kh * kw; }
  std::size_t pixels() const { return oh * ow; }
};

template <class T>
void im2col(const T* x, const ConvGeometry& g, T* col) {
  const std::size_t hw = g.pixels();
  for (std::size_t c = 0; c < g.c; ++c) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        T* row = col + ((c * g.kh + i) * g.kw + j) * hw;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + i) - static_cast<long>(g.pad);
          T* dst = row + oy * g.ow;
          if (iy < 0 || iy >= static_cast<long>(g.h)) {
            std::fill(dst, dst + g.ow, T(0));
            continue;
          }
          const T* src = x + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + j) - static_cast<long>(g.pad);
            dst[ox] = (ix < 0 || ix >= static_cast<long>(g.w)) ? T(0) : src[ix];
          }
        }
      }
    }
  }
}

template <class T>
void col2im_add(const T* col, const ConvGeometry& g, T* x) {
  const std::size_t hw = g.pixels();
  for (std::size_t c = 0; c < g.c; ++c) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        const T* row = col + ((c * g.kh + i) * g.kw + j) * hw;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + i) - static_cast<long>(g.pad);
          if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
          T* dst = x + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
          const T* src = row + oy * g.ow;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + j) - static_cast<long>(g.pad);
            if (ix >= 0 && ix < static_cast<long>(g.w)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

Shape conv2d_output_shape(const Shape& input, const Shape& weight, std::size_t stride,
                          std::size_t padding) {
  require_rank(input, 4, "conv2d input");
  require_rank(weight, 4, "conv2d weight");
  if (input[1] != weight[1]) {
    throw Error(ErrorCode::shape_mismatch, "conv2d input channels " + std::to_string(input[1]) +
                                               " vs weight " + shape_string(weight));
  }
  if (stride == 0) throw Error(ErrorCode::shape_mismatch, "conv2d stride must be positive");
  const long h = static_cast<long>(input[2] + 2 * padding) - static_cast<long>(weight[2]);
  const long w = static_cast<long>(input[3] + 2 * padding) - static_cast<long>(weight[3]);
  if (h < 0 || w < 0) {
    throw Error(ErrorCode::empty_output, "conv2d kernel " + shape_string(weight) +
                                             " larger than padded input " + shape_string(input));
  }
  return {input[0], weight[0], static_cast<std::size_t>(h) / stride + 1,
          static_cast<std::size_t>(w) / stride + 1};
}

Shape maxpool2d_output_shape(const Shape& input, std::size_t k, std::size_t stride) {
  require_rank(input, 4, "maxpool2d input");
  if (k == 0 || stride == 0 || input[2] < k || input[3] < k) {
    throw Error(ErrorCode::shape_mismatch,
                "maxpool2d window " + std::to_string(k) + " on " + shape_string(input));
  }
  return {input[0], input[1], (input[2] - k) / stride + 1, (input[3] - k) / stride + 1};
}

Shape dense_output_shape(const Shape& input, const Shape& weight) {
  require_rank(input, 2, "dense input");
  require_rank(weight, 2, "dense weight");
  if (input[1] != weight[0]) {
    throw Error(ErrorCode::shape_mismatch,
                "dense " + shape_string(input) + " x " + shape_string(weight));
  }
  return {input[0], weight[1]};
}

Shape global_avg_pool_output_shape(const Shape& input) {
  require_rank(input, 4, "global_avg_pool input");
  return {input[0], input[1]};
}

template <class T>
Var<T> conv2d(Var<T> input, Var<T> weight, Var<T> bias, std::size_t stride, std::size_t padding) {
  const Shape out_shape = conv2d_output_shape(input.shape(), weight.shape(), stride, padding);
  const auto& x = input.value();
  const auto& w = weight.value();
  if (bias.value().rank() != 1 || bias.value().dim(0) != w.dim(0)) {
    throw Error(ErrorCode::shape_mismatch, "conv2d bias " + shape_string(bias.shape()));
  }
  const ConvGeometry g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(0), w.dim(2), w.dim(3),
                       out_shape[2], out_shape[3], stride, padding};
  BasicTensor<T> out(out_shape);
  std::vector<T> col(g.patch() * g.pixels());
  const T* b = bias.value().raw();
  for (std::size_t n = 0; n < g.n; ++n) {
    im2col(x.raw() + n * g.c * g.h * g.w, g, col.data());
    T* dst = out.raw() + n * g.o * g.pixels();
    gemm<T>(false, false, g.o, g.pixels(), g.patch(), T(1), w.raw(), g.patch(), col.data(),
            g.pixels(), T(0), dst, g.pixels());
    for (std::size_t o = 0; o < g.o; ++o)
      for (std::size_t p = 0; p < g.pixels(); ++p) dst[o * g.pixels() + p] += b[o];
  }
  return input.tape().record(
      std::move(out), {input, weight, bias},
      [input, weight, g](const BasicTensor<T>& grad, auto& sink) {
        const bool want_x = sink.wants(0), want_w = sink.wants(1), want_b = sink.wants(2);
        const auto& x = input.value();
        const auto& w = weight.value();
        BasicTensor<T> gx = want_x ? BasicTensor<T>(x.shape()) : BasicTensor<T>();
        BasicTensor<T> gw = want_w ? BasicTensor<T>(w.shape()) : BasicTensor<T>();
        BasicTensor<T> gb = want_b ? BasicTensor<T>({g.o}) : BasicTensor<T>();
        std::vector<T> col(g.patch() * g.pixels());
        for (std::size_t n = 0; n < g.n; ++n) {
          const T* gn = grad.raw() + n * g.o * g.pixels();
          if (want_w) {
            im2col(x.raw() + n * g.c * g.h * g.w, g, col.data());
            gemm<T>(false, true, g.o, g.patch(), g.pixels(), T(1), gn, g.pixels(), col.data(),
                    g.pixels(), T(1), gw.raw(), g.patch());
          }
          if (want_b) {
            for (std::size_t o = 0; o < g.o; ++o) {
              T s = 0;
              for (std::size_t p = 0; p < g.pixels(); ++p) s += gn[o * g.pixels() + p];
              gb[o] += s;
            }
          }
          if (want_x) {
            gemm<T>(true, false, g.patch(), g.pixels(), g.o, T(1), w.raw(), g.patch(), gn,
                    g.pixels(), T(0), col.data(), g.pixels());
            col2im_add(col.data(), g, gx.raw() + n * g.c * g.h * g.w);
          }
        }
        if (want_x) sink.add(0, std::move(gx));
        if (want_w) sink.add(1, std::move(gw));
        if (want_b) sink.add(2, std::move(gb));
      });
}

template <class T>
Var<T> maxpool2d(Var<T> input, std::size_t k, std::size_t stride) {
  const Shape out_shape = maxpool2d_output_shape(input.shape(), k, stride);
  const auto& x = input.value();
  const std::size_t planes = out_shape[0] * out_shape[1];
  const std::size_t h = x.dim(2), w = x.dim(3), oh = out_shape[2], ow = out_shape[3];
  BasicTensor<T> out(out_shape);
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t pl = 0; pl < planes; ++pl) {
    const T* src = x.raw() + pl * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best = (oy * stride) * w + ox * stride;
        for (std::size_t i = 0; i < k; ++i)
          for (std::size_t j = 0; j < k; ++j) {
            const std::size_t at = (oy * stride + i) * w + ox * stride + j;
            if (src[at] > src[best]) best = at;
          }
        const std::size_t o = (pl * oh + oy) * ow + ox;
        out[o] = src[best];
        argmax[o] = pl * h * w + best;
      }
    }
  }
  const Shape in_shape = x.shape();
  return input.tape().record(std::move(out), {input},
                             [in_shape, argmax = std::move(argmax)](const BasicTensor<T>& g,
                                                                    auto& sink) {
                               BasicTensor<T> gi(in_shape);
                               for (std::size_t o = 0; o < argmax.size(); ++o) gi[argmax[o]] += g[o];
                               sink.add(0, std::move(gi));
                             });
}

template <class T>
Var<T> batchnorm2d(Var<T> input, Var<T> gamma, Var<T> beta, BasicTensor<T>& running_mean,
                   BasicTensor<T>& running_var, Mode mode, T momentum, T epsilon,
                   bool update_running) {
  const auto& x = input.value();
  require_rank(x.shape(), 4, "batchnorm2d input");
  const std::size_t n = x.dim(0), ch = x.dim(1), hw = x.dim(2) * x.dim(3);
  const std::array<const BasicTensor<T>*, 4> bn_tensors{&gamma.value(), &beta.value(), &running_mean, &running_var};
  for (const BasicTensor<T>* t : bn_tensors) {
    if (t->rank() != 1 || t->dim(0) != ch) {
      throw Error(ErrorCode::shape_mismatch, "batchnorm2d parameter " + shape_string(t->shape()) +
                                                 " for input " + shape_string(x.shape()));
    }
  }
  const std::size_t count = n * hw;
  if (mode == Mode::train && count < 2) {
    throw Error(ErrorCode::insufficient_batch,
                "batchnorm2d train mode needs N*H*W >= 2, got " + std::to_string(count));
  }

  std::vector<T> mean(ch), inv_std(ch);
  if (mode == Mode::train) {
    for (std::size_t c = 0; c < ch; ++c) {
      T s = 0;
      for (std::size_t b = 0; b < n; ++b) {
        const T* p = x.raw() + (b * ch + c) * hw;
        for (std::size_t i = 0; i < hw; ++i) s += p[i];
      }
      const T m = s / static_cast<T>(count);
      T sq = 0;
      for (std::size_t b = 0; b < n; ++b) {
        const T* p = x.raw() + (b * ch + c) * hw;
        for (std::size_t i = 0; i < hw; ++i) sq += (p[i] - m) * (p[i] - m);
      }
      const T var = sq / static_cast<T>(count);
      mean[c] = m;
      inv_std[c] = T(1) / std::sqrt(var + epsilon);
      if (update_running) {
        const T unbiased = sq / static_cast<T>(count - 1);
        running_mean[c] = (T(1) - momentum) * running_mean[c] + momentum * m;
        running_var[c] = (T(1) - momentum) * running_var[c] + momentum * unbiased;
      }
    }
  } else {
    for (std::size_t c = 0; c < ch; ++c) {
      mean[c] = running_mean[c];
      inv_std[c] = T(1) / std::sqrt(running_var[c] + epsilon);
    }
  }

  BasicTensor<T> xhat(x.shape());
  BasicTensor<T> out(x.shape());
  const T* gm = gamma.value().raw();
  const T* bt = beta.value().raw();
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t c = 0; c < ch; ++c) {
      const std::size_t off = (b * ch + c) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        const T xh = (x[off + i] - mean[c]) * inv_std[c];
        xhat[off + i] = xh;
        out[off + i] = gm[c] * xh + bt[c];
      }
    }
  }

  return input.tape().record(
      std::move(out), {input, gamma, beta},
      [gamma, xhat = std::move(xhat), inv_std = std::move(inv_std), n, ch, hw, count,
       mode](const BasicTensor<T>& g, auto& sink) {
        std::vector<T> sum_g(ch, T(0)), sum_gx(ch, T(0));
        for (std::size_t b = 0; b < n; ++b)
          for (std::size_t c = 0; c < ch; ++c) {
            const std::size_t off = (b * ch + c) * hw;
            for (std::size_t i = 0; i < hw; ++i) {
              sum_g[c] += g[off + i];
              sum_gx[c] += g[off + i] * xhat[off + i];
            }
          }
        if (sink.wants(0)) {
          const T* gm = gamma.value().raw();
          BasicTensor<T> gi(xhat.shape());
          const T cnt = static_cast<T>(count);
          for (std::size_t b = 0; b < n; ++b)
            for (std::size_t c = 0; c < ch; ++c) {
              const std::size_t off = (b * ch + c) * hw;
              const T scale = gm[c] * inv_std[c];
              for (std::size_t i = 0; i < hw; ++i) {
                if (mode == Mode::train) {
                  gi[off + i] =
                      scale * (g[off + i] - sum_g[c] / cnt - xhat[off + i] * sum_gx[c] / cnt);
                } else {
                  gi[off + i] = scale * g[off + i];
                }
              }
            }
          sink.add(0, std::move(gi));
        }
        if (sink.wants(1)) sink.add(1, BasicTensor<T>({ch}, std::move(sum_gx)));
        if (sink.wants(2)) sink.add(2, BasicTensor<T>({ch}, std::move(sum_g)));
      });
}

template <class T>
Var<T> relu(Var<T> input) {
  const auto& x = input.value();
  BasicTensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
  return input.tape().record(std::move(out), {input}, [input](const BasicTensor<T>& g, auto& sink) {
    const auto& x = input.value();
    BasicTensor<T> gi(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) gi[i] = x[i] > T(0) ? g[i] : T(0);
    sink.add(0, std::move(gi));
  });
}

template <class T>
Var<T> dense(Var<T> input, Var<T> weight, Var<T> bias) {
  const Shape out_shape = dense_output_shape(input.shape(), weight.shape());
  if (bias.value().rank() != 1 || bias.value().dim(0) != out_shape[1]) {
    throw Error(ErrorCode::shape_mismatch, "dense bias " + shape_string(bias.shape()));
  }
  const std::size_t n = out_shape[0], in = weight.value().dim(0), out_dim = out_shape[1];
  BasicTensor<T> out(out_shape);
  gemm<T>(false, false, n, out_dim, in, T(1), input.value().raw(), in, weight.value().raw(),
          out_dim, T(0), out.raw(), out_dim);
  const T* b = bias.value().raw();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < out_dim; ++j) out[r * out_dim + j] += b[j];
  return input.tape().record(
      std::move(out), {input, weight, bias},
      [input, weight, n, in, out_dim](const BasicTensor<T>& g, auto& sink) {
        if (sink.wants(0)) {
          BasicTensor<T> gi({n, in});
          gemm<T>(false, true, n, in, out_dim, T(1), g.raw(), out_dim, weight.value().raw(),
                  out_dim, T(0), gi.raw(), in);
          sink.add(0, std::move(gi));
        }
        if (sink.wants(1)) {
          BasicTensor<T> gw({in, out_dim});
          gemm<T>(true, false, in, out_dim, n, T(1), input.value().raw(), in, g.raw(), out_dim,
                  T(0), gw.raw(), out_dim);
          sink.add(1, std::move(gw));
        }
        if (sink.wants(2)) {
          BasicTensor<T> gb({out_dim});
          for (std::size_t r = 0; r < n; ++r)
            for (std::size_t j = 0; j < out_dim; ++j) gb[j] += g[r * out_dim + j];
          sink.add(2, std::move(gb));
        }
      });
}

template <class T>
Var<T> global_avg_pool(Var<T> input) {
  const Shape out_shape = global_avg_pool_output_shape(input.shape());
  const auto& x = input.value();
  const std::size_t planes = out_shape[0] * out_shape[1];
  const std::size_t hw = x.dim(2) * x.dim(3);
  const T count = static_cast<T>(hw);
  BasicTensor<T> out(out_shape);
  for (std::size_t p = 0; p < planes; ++p) {
    T s = 0;
    for (std::size_t i = 0; i < hw; ++i) s += x[p * hw + i];
    out[p] = s / count;
  }
  const Shape in_shape = x.shape();
  return input.tape().record(std::move(out), {input},
                             [in_shape, planes, hw, count](const BasicTensor<T>& g, auto& sink) {
                               BasicTensor<T> gi(in_shape);
                               for (std::size_t p = 0; p < planes; ++p)
                                 for (std::size_t i = 0; i < hw; ++i) gi[p * hw + i] = g[p] / count;
                               sink.add(0, std::move(gi));
                             });
}

template <class T>
BasicTensor<T> softmax(const BasicTensor<T>& logits) {
  require_rank(logits.shape(), 2, "softmax");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  BasicTensor<T> out(logits.shape());
  for (std::size_t r = 0; r < n; ++r) {
    const T* row = logits.raw() + r * k;
    const T mx = *std::max_element(row, row + k);
    T s = 0;
    for (std::size_t j = 0; j < k; ++j) {
      out[r * k + j] = std::exp(row[j] - mx);
      s += out[r * k + j];
    }
    for (std::size_t j = 0; j < k; ++j) out[r * k + j] /= s;
  }
  return out;
}

template <class T>
Var<T> softmax(Var<T> logits) {
  BasicTensor<T> y = softmax(logits.value());
  BasicTensor<T> y_copy = y;
  const std::size_t n = y.dim(0), k = y.dim(1);
  return logits.tape().record(std::move(y), {logits},
                              [y = std::move(y_copy), n, k](const BasicTensor<T>& g, auto& sink) {
                                BasicTensor<T> gi(y.shape());
                                for (std::size_t r = 0; r < n; ++r) {
                                  T dot = 0;
                                  for (std::size_t j = 0; j < k; ++j) dot += g[r * k + j] * y[r * k + j];
                                  for (std::size_t j = 0; j < k; ++j)
                                    gi[r * k + j] = y[r * k + j] * (g[r * k + j] - dot);
                                }
                                sink.add(0, std::move(gi));
                              });
}

template <class T>
Var<T> sparse_cross_entropy(Var<T> logits, std::span<const int> labels) {
  const auto& z = logits.value();
  require_rank(z.shape(), 2, "sparse_cross_entropy");
  const std::size_t n = z.dim(0), k = z.dim(1);
  if (labels.size() != n) {
    throw Error(ErrorCode::length_mismatch, std::to_string(labels.size()) + " labels for " +
                                                std::to_string(n) + " rows");
  }
  for (int label : labels) {
    if (label < 0 || static_cast<std::size_t>(label) >= k) {
      throw Error(ErrorCode::label_out_of_range,
                  "label " + std::to_string(label) + " with " + std::to_string(k) + " classes");
    }
  }
  BasicTensor<T> probs = softmax(z);
  T total = 0;
  for (std::size_t r = 0; r < n; ++r) {
    const T* row = z.raw() + r * k;
    const T mx = *std::max_element(row, row + k);
    T s = 0;
    for (std::size_t j = 0; j < k; ++j) s += std::exp(row[j] - mx);
    total += std::log(s) + mx - row[labels[r]];
  }
  std::vector<int> lbl(labels.begin(), labels.end());
  return logits.tape().record(
      BasicTensor<T>::scalar(total / static_cast<T>(n)), {logits},
      [probs = std::move(probs), lbl = std::move(lbl), n, k](const BasicTensor<T>& g, auto& sink) {
        BasicTensor<T> gi = probs;
        const T scale = g.item() / static_cast<T>(n);
        for (std::size_t r = 0; r < n; ++r) gi[r * k + static_cast<std::size_t>(lbl[r])] -= T(1);
        for (std::size_t i = 0; i < gi.size(); ++i) gi[i] *= scale;
        sink.add(0, std::move(gi));
      });
}

#define BYOLIM_INSTANTIATE_NN(T)                                                          \
  template Var<T> conv2d(Var<T>, Var<T>, Var<T>, std::size_t, std::size_t);               \
  template Var<T> maxpool2d(Var<T>, std::size_t, std::size_t);                            \
  template Var<T> batchnorm2d(Var<T>, Var<T>, Var<T>, BasicTensor<T>&, BasicTensor<T>&, Mode, \
                              T, T, bool);                                                \
  template Var<T> relu(Var<T>);                                                           \
  template Var<T> dense(Var<T>, Var<T>, Var<T>);                                          \
  template Var<T> global_avg_pool(Var<T>);                                                \
  template BasicTensor<T> softmax(const BasicTensor<T>&);                                 \
  template Var<T> softmax(Var<T>);                                                        \
  template Var<T> sparse_cross_entropy(Var<T>, std::span<const int>);

BYOLIM_INSTANTIATE_NN(float)
BYOLIM_INSTANTIATE_NN(double)

}  // namespace byolim
