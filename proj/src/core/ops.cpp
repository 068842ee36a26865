#include "byolim/ops.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "byolim/gemm.hpp"

namespace byolim {

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

namespace {

void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) {
    throw Error(ErrorCode::shape_mismatch,
                std::string(op) + ": " + shape_string(a) + " vs " + shape_string(b));
  }
}

template <class T, class F>
BasicTensor<T> zip(const BasicTensor<T>& a, const BasicTensor<T>& b, F f) {
  BasicTensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
  return out;
}

template <class T, class F>
BasicTensor<T> map(const BasicTensor<T>& a, F f) {
  BasicTensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

// Normalized axis set: sorted, unique, each < rank. Empty means all axes.
std::vector<bool> axis_mask(const Shape& shape, const std::vector<std::size_t>& axes) {
  std::vector<bool> mask(shape.size(), axes.empty());
  for (std::size_t ax : axes) {
    if (ax >= shape.size()) {
      throw Error(ErrorCode::invalid_axis,
                  "axis " + std::to_string(ax) + " for shape " + shape_string(shape));
    }
    if (mask[ax]) throw Error(ErrorCode::invalid_axis, "repeated axis " + std::to_string(ax));
    mask[ax] = true;
  }
  return mask;
}

Shape reduced_shape(const Shape& shape, const std::vector<bool>& mask) {
  Shape out;
  for (std::size_t i = 0; i < shape.size(); ++i)
    if (!mask[i]) out.push_back(shape[i]);
  return out;
}

// Flat output index for every input element.
std::vector<std::size_t> reduction_map(const Shape& shape, const std::vector<bool>& mask) {
  const std::size_t n = shape_size(shape);
  std::vector<std::size_t> out_index(n);
  std::vector<std::size_t> idx(shape.size(), 0);
  for (std::size_t flat = 0; flat < n; ++flat) {
    std::size_t o = 0;
    for (std::size_t d = 0; d < shape.size(); ++d)
      if (!mask[d]) o = o * shape[d] + idx[d];
    out_index[flat] = o;
    for (std::size_t d = shape.size(); d-- > 0;) {
      if (++idx[d] < shape[d]) break;
      idx[d] = 0;
    }
  }
  return out_index;
}

}  // namespace

template <class T>
BasicTensor<T> reduce_sum(const BasicTensor<T>& a, const std::vector<std::size_t>& axes) {
  const auto mask = axis_mask(a.shape(), axes);
  BasicTensor<T> out(reduced_shape(a.shape(), mask), T(0));
  const auto map_to = reduction_map(a.shape(), mask);
  for (std::size_t i = 0; i < a.size(); ++i) out[map_to[i]] += a[i];
  return out;
}

template <class T>
BasicTensor<T> reduce_mean(const BasicTensor<T>& a, const std::vector<std::size_t>& axes) {
  BasicTensor<T> out = reduce_sum(a, axes);
  const T count = static_cast<T>(a.size() / out.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] /= count;
  return out;
}

template <class T>
Var<T> matmul(Var<T> a, Var<T> b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) {
    throw Error(ErrorCode::shape_mismatch,
                "matmul " + shape_string(av.shape()) + " x " + shape_string(bv.shape()));
  }
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  BasicTensor<T> out({m, n});
  gemm<T>(false, false, m, n, k, T(1), av.raw(), k, bv.raw(), n, T(0), out.raw(), n);
  return a.tape().record(std::move(out), {a, b},
                         [a, b, m, n, k](const BasicTensor<T>& g, auto& sink) {
                           if (sink.wants(0)) {
                             BasicTensor<T> ga({m, k});
                             gemm<T>(false, true, m, k, n, T(1), g.raw(), n, b.value().raw(), n,
                                     T(0), ga.raw(), k);
                             sink.add(0, std::move(ga));
                           }
                           if (sink.wants(1)) {
                             BasicTensor<T> gb({k, n});
                             gemm<T>(true, false, k, n, m, T(1), a.value().raw(), k, g.raw(), n,
                                     T(0), gb.raw(), n);
                             sink.add(1, std::move(gb));
                           }
                         });
}

template <class T>
Var<T> add(Var<T> a, Var<T> b) {
  require_same_shape(a.shape(), b.shape(), "add");
  auto out = zip(a.value(), b.value(), [](T x, T y) { return x + y; });
  return a.tape().record(std::move(out), {a, b}, [](const BasicTensor<T>& g, auto& sink) {
    sink.add(0, g);
    sink.add(1, g);
  });
}

template <class T>
Var<T> sub(Var<T> a, Var<T> b) {
  require_same_shape(a.shape(), b.shape(), "sub");
  auto out = zip(a.value(), b.value(), [](T x, T y) { return x - y; });
  return a.tape().record(std::move(out), {a, b}, [](const BasicTensor<T>& g, auto& sink) {
    sink.add(0, g);
    if (sink.wants(1)) sink.add(1, map(g, [](T x) { return -x; }));
  });
}

template <class T>
Var<T> mul(Var<T> a, Var<T> b) {
  require_same_shape(a.shape(), b.shape(), "mul");
  auto out = zip(a.value(), b.value(), [](T x, T y) { return x * y; });
  return a.tape().record(std::move(out), {a, b}, [a, b](const BasicTensor<T>& g, auto& sink) {
    if (sink.wants(0)) sink.add(0, zip(g, b.value(), [](T x, T y) { return x * y; }));
    if (sink.wants(1)) sink.add(1, zip(g, a.value(), [](T x, T y) { return x * y; }));
  });
}

template <class T>
Var<T> scalar_mul(Var<T> a, T s) {
  auto out = map(a.value(), [s](T x) { return s * x; });
  return a.tape().record(std::move(out), {a}, [s](const BasicTensor<T>& g, auto& sink) {
    sink.add(0, map(g, [s](T x) { return s * x; }));
  });
}

template <class T>
Var<T> add_scalar(Var<T> a, T s) {
  auto out = map(a.value(), [s](T x) { return x + s; });
  return a.tape().record(std::move(out), {a},
                         [](const BasicTensor<T>& g, auto& sink) { sink.add(0, g); });
}

template <class T>
Var<T> sum(Var<T> a, const std::vector<std::size_t>& axes) {
  const auto mask = axis_mask(a.shape(), axes);
  auto out = reduce_sum(a.value(), axes);
  const Shape in_shape = a.shape();
  return a.tape().record(std::move(out), {a},
                         [in_shape, mask](const BasicTensor<T>& g, auto& sink) {
                           const auto map_to = reduction_map(in_shape, mask);
                           BasicTensor<T> gi(in_shape);
                           for (std::size_t i = 0; i < gi.size(); ++i) gi[i] = g[map_to[i]];
                           sink.add(0, std::move(gi));
                         });
}

template <class T>
Var<T> mean(Var<T> a, const std::vector<std::size_t>& axes) {
  const auto mask = axis_mask(a.shape(), axes);
  auto out = reduce_mean(a.value(), axes);
  const Shape in_shape = a.shape();
  const T count = static_cast<T>(a.value().size() / out.size());
  return a.tape().record(std::move(out), {a},
                         [in_shape, mask, count](const BasicTensor<T>& g, auto& sink) {
                           const auto map_to = reduction_map(in_shape, mask);
                           BasicTensor<T> gi(in_shape);
                           for (std::size_t i = 0; i < gi.size(); ++i) gi[i] = g[map_to[i]] / count;
                           sink.add(0, std::move(gi));
                         });
}

template <class T>
Var<T> reshape(Var<T> a, Shape shape) {
  auto out = a.value().reshaped(std::move(shape));
  const Shape in_shape = a.shape();
  return a.tape().record(std::move(out), {a}, [in_shape](const BasicTensor<T>& g, auto& sink) {
    sink.add(0, g.reshaped(in_shape));
  });
}

namespace {

// y = v / |v| on rows of length p; dy -> dv = (dy - y * <dy, y>) / |v|.
template <class T>
Var<T> normalize_rows_impl(Var<T> v, std::size_t rows, std::size_t p) {
  const auto& x = v.value();
  BasicTensor<T> y(x.shape());
  std::vector<T> norms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    T sq = 0;
    for (std::size_t j = 0; j < p; ++j) sq += x[r * p + j] * x[r * p + j];
    const T norm = std::sqrt(sq);
    if (!(static_cast<double>(norm) > kNormTolerance)) {
      throw Error(ErrorCode::degenerate_vector, "row " + std::to_string(r) + " has norm " +
                                                    std::to_string(static_cast<double>(norm)));
    }
    norms[r] = norm;
    for (std::size_t j = 0; j < p; ++j) y[r * p + j] = x[r * p + j] / norm;
  }
  BasicTensor<T> y_copy = y;
  return v.tape().record(
      std::move(y), {v},
      [y = std::move(y_copy), norms = std::move(norms), rows, p](const BasicTensor<T>& g,
                                                                 auto& sink) {
        BasicTensor<T> gi(y.shape());
        for (std::size_t r = 0; r < rows; ++r) {
          T dot = 0;
          for (std::size_t j = 0; j < p; ++j) dot += g[r * p + j] * y[r * p + j];
          for (std::size_t j = 0; j < p; ++j)
            gi[r * p + j] = (g[r * p + j] - y[r * p + j] * dot) / norms[r];
        }
        sink.add(0, std::move(gi));
      });
}

}  // namespace

template <class T>
Var<T> l2_normalize(Var<T> v) {
  if (v.value().rank() != 1) {
    throw Error(ErrorCode::shape_mismatch, "l2_normalize expects rank 1, got " + shape_string(v.shape()));
  }
  return normalize_rows_impl(v, 1, v.value().size());
}

template <class T>
Var<T> l2_normalize_rows(Var<T> v) {
  if (v.value().rank() != 2) {
    throw Error(ErrorCode::shape_mismatch,
                "l2_normalize_rows expects rank 2, got " + shape_string(v.shape()));
  }
  return normalize_rows_impl(v, v.value().dim(0), v.value().dim(1));
}

#define BYOLIM_INSTANTIATE_OPS(T)                                                        \
  template BasicTensor<T> reduce_sum(const BasicTensor<T>&, const std::vector<std::size_t>&); \
  template BasicTensor<T> reduce_mean(const BasicTensor<T>&, const std::vector<std::size_t>&); \
  template Var<T> matmul(Var<T>, Var<T>);                                                \
  template Var<T> add(Var<T>, Var<T>);                                                   \
  template Var<T> sub(Var<T>, Var<T>);                                                   \
  template Var<T> mul(Var<T>, Var<T>);                                                   \
  template Var<T> scalar_mul(Var<T>, T);                                                 \
  template Var<T> add_scalar(Var<T>, T);                                                 \
  template Var<T> sum(Var<T>, const std::vector<std::size_t>&);                          \
  template Var<T> mean(Var<T>, const std::vector<std::size_t>&);                         \
  template Var<T> reshape(Var<T>, Shape);                                                \
  template Var<T> l2_normalize(Var<T>);                                                  \
  template Var<T> l2_normalize_rows(Var<T>);

BYOLIM_INSTANTIATE_OPS(float)
BYOLIM_INSTANTIATE_OPS(double)

}  // namespace byolim
