#include "deoccl/layers.hpp"

#include <cmath>

namespace deoccl {

namespace {

constexpr std::ptrdiff_t kParallelElems = 1 << 16;

template <typename T>
void add_channel_bias(Tensor<T>& y, const T* bias) {
  const std::size_t plane = y.shape().plane();
  for (int n = 0; n < y.n(); ++n)
    for (int c = 0; c < y.c(); ++c) {
      T* p = y.sample(n) + c * plane;
      const T b = bias[c];
      for (std::size_t i = 0; i < plane; ++i) p[i] += b;
    }
}

template <typename T>
void accumulate_channel_sum(const Tensor<T>& dy, T* dbias) {
  const std::size_t plane = dy.shape().plane();
  for (int n = 0; n < dy.n(); ++n)
    for (int c = 0; c < dy.c(); ++c) {
      const T* p = dy.sample(n) + c * plane;
      T s = 0;
      for (std::size_t i = 0; i < plane; ++i) s += p[i];
      dbias[c] += s;
    }
}

template <typename T, typename F>
Tensor<T> map_unary(const Tensor<T>& x, F f) {
  Tensor<T> y(x.shape());
  const auto n = static_cast<std::ptrdiff_t>(x.size());
  const T* src = x.data();
  T* dst = y.data();
#pragma omp parallel for if (n > kParallelElems)
  for (std::ptrdiff_t i = 0; i < n; ++i) dst[i] = f(src[i]);
  return y;
}

template <typename T, typename F>
Tensor<T> map_binary(const Tensor<T>& a, const Tensor<T>& b, F f) {
  require_same_shape(a.shape(), b.shape(), "pointwise backward");
  Tensor<T> y(a.shape());
  const auto n = static_cast<std::ptrdiff_t>(a.size());
  const T* pa = a.data();
  const T* pb = b.data();
  T* dst = y.data();
#pragma omp parallel for if (n > kParallelElems)
  for (std::ptrdiff_t i = 0; i < n; ++i) dst[i] = f(pa[i], pb[i]);
  return y;
}

}  // namespace

// --- Conv2d -----------------------------------------------------------------

Conv2d::Conv2d(ParameterLayout& layout, const std::string& name, Group group, int in_c,
               int out_c, int kernel, int stride, int pad, bool bias)
    : group_(group), in_c_(in_c), out_c_(out_c), kernel_(kernel), stride_(stride), pad_(pad) {
  const int fan_in = in_c * kernel * kernel;
  weight_ = layout.add({name + ".weight", group, ParamKind::weight, {out_c, in_c, kernel, kernel}, fan_in});
  if (bias) bias_ = layout.add({name + ".bias", group, ParamKind::bias, {out_c, 1, 1, 1}, fan_in});
}

ConvGeometry Conv2d::geometry(int h, int w) const {
  return {in_c_, h, w, out_c_, kernel_, stride_, pad_};
}

template <typename T>
Tensor<T> Conv2d::forward(const ParameterStore<T>& p, const Tensor<T>& x, ConvCache<T>* cache) const {
  require(x.c() == in_c_, ErrorKind::shape_mismatch,
          "conv expects " + std::to_string(in_c_) + " channels, got " + to_string(x.shape()));
  auto y = kernels::conv_forward(x, p.data(weight_), geometry(x.h(), x.w()));
  if (bias_) add_channel_bias(y, p.data(*bias_));
  if (cache) cache->input = x;
  return y;
}

template <typename T>
Tensor<T> Conv2d::backward(const ParameterStore<T>& p, const ConvCache<T>& cache,
                           const Tensor<T>& dy, Gradients<T>& grads) const {
  const auto g = geometry(cache.input.h(), cache.input.w());
  kernels::conv_backward_weight(cache.input, dy, g, grads[weight_].data());
  if (bias_) accumulate_channel_sum(dy, grads[*bias_].data());
  grads.mark(group_);
  return kernels::conv_backward_data(dy, p.data(weight_), g);
}

// --- ConvTranspose2d --------------------------------------------------------

ConvTranspose2d::ConvTranspose2d(ParameterLayout& layout, const std::string& name, Group group,
                                 int in_c, int out_c, int kernel, int stride, int pad, bool bias)
    : group_(group), in_c_(in_c), out_c_(out_c), kernel_(kernel), stride_(stride), pad_(pad) {
  // Each output pixel sees in_c * (k / stride)^2 inputs.
  const int fan_in = std::max(1, in_c * kernel * kernel / (stride * stride));
  weight_ = layout.add({name + ".weight", group, ParamKind::weight, {in_c, out_c, kernel, kernel}, fan_in});
  if (bias) bias_ = layout.add({name + ".bias", group, ParamKind::bias, {out_c, 1, 1, 1}, fan_in});
}

ConvGeometry ConvTranspose2d::adjoint_geometry(int h, int w) const {
  const int oh = (h - 1) * stride_ - 2 * pad_ + kernel_;
  const int ow = (w - 1) * stride_ - 2 * pad_ + kernel_;
  return {out_c_, oh, ow, in_c_, kernel_, stride_, pad_};
}

template <typename T>
Tensor<T> ConvTranspose2d::forward(const ParameterStore<T>& p, const Tensor<T>& x,
                                   ConvCache<T>* cache) const {
  require(x.c() == in_c_, ErrorKind::shape_mismatch,
          "deconv expects " + std::to_string(in_c_) + " channels, got " + to_string(x.shape()));
  auto y = kernels::conv_backward_data(x, p.data(weight_), adjoint_geometry(x.h(), x.w()));
  if (bias_) add_channel_bias(y, p.data(*bias_));
  if (cache) cache->input = x;
  return y;
}

template <typename T>
Tensor<T> ConvTranspose2d::backward(const ParameterStore<T>& p, const ConvCache<T>& cache,
                                    const Tensor<T>& dy, Gradients<T>& grads) const {
  const auto g = adjoint_geometry(cache.input.h(), cache.input.w());
  kernels::conv_backward_weight(dy, cache.input, g, grads[weight_].data());
  if (bias_) accumulate_channel_sum(dy, grads[*bias_].data());
  grads.mark(group_);
  return kernels::conv_forward(dy, p.data(weight_), g);
}

// --- BatchNorm2d ------------------------------------------------------------

BatchNorm2d::BatchNorm2d(ParameterLayout& layout, const std::string& name, Group group, int channels)
    : group_(group), channels_(channels) {
  const Shape4 s{channels, 1, 1, 1};
  scale_ = layout.add({name + ".scale", group, ParamKind::scale, s, 1});
  shift_ = layout.add({name + ".shift", group, ParamKind::shift, s, 1});
  mean_ = layout.add({name + ".running_mean", group, ParamKind::running_mean, s, 1});
  var_ = layout.add({name + ".running_var", group, ParamKind::running_var, s, 1});
}

template <typename T>
Tensor<T> BatchNorm2d::forward(const ParameterStore<T>& p, const Tensor<T>& x, Phase phase,
                               BatchNormCache<T>* cache) const {
  require(x.c() == channels_, ErrorKind::shape_mismatch, "batch norm channel mismatch");
  const std::size_t plane = x.shape().plane();
  const std::size_t count = plane * x.n();
  Tensor<T> y(x.shape());
  Tensor<T> normalized(x.shape());
  std::vector<T> inv_std(channels_);
  std::vector<double> mean(channels_), var(channels_);
  const T* gamma = p.data(scale_);
  const T* beta = p.data(shift_);

#pragma omp parallel for if (static_cast<std::ptrdiff_t>(x.size()) > kParallelElems)
  for (int c = 0; c < channels_; ++c) {
    double mu = 0.0;
    double v = 0.0;
    if (phase == Phase::train) {
      for (int n = 0; n < x.n(); ++n) {
        const T* src = x.sample(n) + c * plane;
        for (std::size_t i = 0; i < plane; ++i) mu += src[i];
      }
      mu /= static_cast<double>(count);
      for (int n = 0; n < x.n(); ++n) {
        const T* src = x.sample(n) + c * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          const double d = src[i] - mu;
          v += d * d;
        }
      }
      mean[c] = mu;
      var[c] = count > 1 ? v / static_cast<double>(count - 1) : 0.0;
      v /= static_cast<double>(count);
    } else {
      mu = p.data(mean_)[c];
      v = p.data(var_)[c];
    }
    const T istd = static_cast<T>(1.0 / std::sqrt(v + kEpsilon));
    const T m = static_cast<T>(mu);
    inv_std[c] = istd;
    for (int n = 0; n < x.n(); ++n) {
      const T* src = x.sample(n) + c * plane;
      T* xh = normalized.sample(n) + c * plane;
      T* dst = y.sample(n) + c * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        xh[i] = (src[i] - m) * istd;
        dst[i] = gamma[c] * xh[i] + beta[c];
      }
    }
  }
  if (cache) {
    cache->phase = phase;
    cache->normalized = std::move(normalized);
    cache->inv_std = std::move(inv_std);
    cache->batch_mean = std::move(mean);
    cache->batch_var = std::move(var);
  }
  return y;
}

template <typename T>
Tensor<T> BatchNorm2d::backward(const ParameterStore<T>& p, const BatchNormCache<T>& cache,
                                const Tensor<T>& dy, Gradients<T>& grads) const {
  const Tensor<T>& xh = cache.normalized;
  require_same_shape(dy.shape(), xh.shape(), "batch norm backward");
  const std::size_t plane = dy.shape().plane();
  const double count = static_cast<double>(plane * dy.n());
  Tensor<T> dx(dy.shape());
  T* dgamma = grads[scale_].data();
  T* dbeta = grads[shift_].data();
  const T* gamma = p.data(scale_);

  for (int c = 0; c < channels_; ++c) {
    double sum_dy = 0.0;
    double sum_dy_xh = 0.0;
    for (int n = 0; n < dy.n(); ++n) {
      const T* d = dy.sample(n) + c * plane;
      const T* h = xh.sample(n) + c * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        sum_dy += d[i];
        sum_dy_xh += static_cast<double>(d[i]) * h[i];
      }
    }
    dgamma[c] += static_cast<T>(sum_dy_xh);
    dbeta[c] += static_cast<T>(sum_dy);
    const T scale = gamma[c] * cache.inv_std[c];
    if (cache.phase == Phase::train) {
      const T mean_dy = static_cast<T>(sum_dy / count);
      const T mean_dy_xh = static_cast<T>(sum_dy_xh / count);
      for (int n = 0; n < dy.n(); ++n) {
        const T* d = dy.sample(n) + c * plane;
        const T* h = xh.sample(n) + c * plane;
        T* out = dx.sample(n) + c * plane;
        for (std::size_t i = 0; i < plane; ++i) out[i] = scale * (d[i] - mean_dy - h[i] * mean_dy_xh);
      }
    } else {
      for (int n = 0; n < dy.n(); ++n) {
        const T* d = dy.sample(n) + c * plane;
        T* out = dx.sample(n) + c * plane;
        for (std::size_t i = 0; i < plane; ++i) out[i] = scale * d[i];
      }
    }
  }
  grads.mark(group_);
  return dx;
}

template <typename T>
void BatchNorm2d::commit(ParameterStore<T>& p, const BatchNormCache<T>& cache) const {
  if (cache.phase != Phase::train || cache.batch_mean.empty()) return;
  T* rm = p.value(mean_).data();
  T* rv = p.value(var_).data();
  for (int c = 0; c < channels_; ++c) {
    rm[c] = static_cast<T>((1.0 - kMomentum) * rm[c] + kMomentum * cache.batch_mean[c]);
    rv[c] = static_cast<T>((1.0 - kMomentum) * rv[c] + kMomentum * cache.batch_var[c]);
  }
}

// --- Linear -----------------------------------------------------------------

Linear::Linear(ParameterLayout& layout, const std::string& name, Group group, int in_features,
               int out_features)
    : group_(group), in_(in_features), out_(out_features) {
  weight_ = layout.add({name + ".weight", group, ParamKind::weight, {out_features, in_features, 1, 1}, in_features});
  bias_ = layout.add({name + ".bias", group, ParamKind::bias, {out_features, 1, 1, 1}, in_features});
}

template <typename T>
Tensor<T> Linear::forward(const ParameterStore<T>& p, const Tensor<T>& x, ConvCache<T>* cache) const {
  require(static_cast<int>(x.shape().sample_size()) == in_, ErrorKind::shape_mismatch,
          "linear expects " + std::to_string(in_) + " features, got " + to_string(x.shape()));
  Tensor<T> y({x.n(), out_, 1, 1});
  kernels::gemm(false, true, x.n(), out_, in_, x.data(), p.data(weight_), y.data(), false);
  const T* b = p.data(bias_);
  for (int n = 0; n < x.n(); ++n)
    for (int o = 0; o < out_; ++o) y.sample(n)[o] += b[o];
  if (cache) cache->input = x;
  return y;
}

template <typename T>
Tensor<T> Linear::backward(const ParameterStore<T>& p, const ConvCache<T>& cache,
                           const Tensor<T>& dy, Gradients<T>& grads) const {
  const Tensor<T>& x = cache.input;
  const int batch = x.n();
  kernels::gemm(true, false, out_, in_, batch, dy.data(), x.data(), grads[weight_].data(), true);
  T* db = grads[bias_].data();
  for (int n = 0; n < batch; ++n)
    for (int o = 0; o < out_; ++o) db[o] += dy.sample(n)[o];
  Tensor<T> dx(x.shape());
  kernels::gemm(false, false, batch, in_, out_, dy.data(), p.data(weight_), dx.data(), false);
  grads.mark(group_);
  return dx;
}

// --- Pointwise and resampling -------------------------------------------------

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return map_unary(x, [](T v) { return v > T(0) ? v : T(0); });
}
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& y, const Tensor<T>& dy) {
  return map_binary(y, dy, [](T out, T d) { return out > T(0) ? d : T(0); });
}
template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope) {
  return map_unary(x, [slope](T v) { return v > T(0) ? v : slope * v; });
}
template <typename T>
Tensor<T> leaky_relu_backward(const Tensor<T>& y, const Tensor<T>& dy, T slope) {
  return map_binary(y, dy, [slope](T out, T d) { return out > T(0) ? d : slope * d; });
}
template <typename T>
Tensor<T> tanh_act(const Tensor<T>& x) {
  return map_unary(x, [](T v) { return std::tanh(v); });
}
template <typename T>
Tensor<T> tanh_backward(const Tensor<T>& y, const Tensor<T>& dy) {
  return map_binary(y, dy, [](T out, T d) { return d * (T(1) - out * out); });
}
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return map_unary(x, [](T v) {
    return v >= T(0) ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
  });
}
template <typename T>
Tensor<T> sigmoid_backward(const Tensor<T>& y, const Tensor<T>& dy) {
  return map_binary(y, dy, [](T out, T d) { return d * out * (T(1) - out); });
}

template <typename T>
Tensor<T> avg_pool2(const Tensor<T>& x) {
  Tensor<T> y({x.n(), x.c(), x.h() / 2, x.w() / 2});
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c)
      for (int i = 0; i < y.h(); ++i)
        for (int j = 0; j < y.w(); ++j)
          y.at(n, c, i, j) = T(0.25) * (x.at(n, c, 2 * i, 2 * j) + x.at(n, c, 2 * i, 2 * j + 1) +
                                        x.at(n, c, 2 * i + 1, 2 * j) + x.at(n, c, 2 * i + 1, 2 * j + 1));
  return y;
}
template <typename T>
Tensor<T> avg_pool2_backward(const Tensor<T>& dy) {
  Tensor<T> dx({dy.n(), dy.c(), dy.h() * 2, dy.w() * 2});
  for (int n = 0; n < dx.n(); ++n)
    for (int c = 0; c < dx.c(); ++c)
      for (int i = 0; i < dx.h(); ++i)
        for (int j = 0; j < dx.w(); ++j) dx.at(n, c, i, j) = T(0.25) * dy.at(n, c, i / 2, j / 2);
  return dx;
}
template <typename T>
Tensor<T> upsample2(const Tensor<T>& x) {
  Tensor<T> y({x.n(), x.c(), x.h() * 2, x.w() * 2});
  for (int n = 0; n < y.n(); ++n)
    for (int c = 0; c < y.c(); ++c)
      for (int i = 0; i < y.h(); ++i)
        for (int j = 0; j < y.w(); ++j) y.at(n, c, i, j) = x.at(n, c, i / 2, j / 2);
  return y;
}
template <typename T>
Tensor<T> upsample2_backward(const Tensor<T>& dy) {
  Tensor<T> dx({dy.n(), dy.c(), dy.h() / 2, dy.w() / 2});
  for (int n = 0; n < dx.n(); ++n)
    for (int c = 0; c < dx.c(); ++c)
      for (int i = 0; i < dx.h(); ++i)
        for (int j = 0; j < dx.w(); ++j)
          dx.at(n, c, i, j) = dy.at(n, c, 2 * i, 2 * j) + dy.at(n, c, 2 * i, 2 * j + 1) +
                              dy.at(n, c, 2 * i + 1, 2 * j) + dy.at(n, c, 2 * i + 1, 2 * j + 1);
  return dx;
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.n() == b.n() && a.h() == b.h() && a.w() == b.w(), ErrorKind::shape_mismatch,
          "concat " + to_string(a.shape()) + " with " + to_string(b.shape()));
  Tensor<T> y({a.n(), a.c() + b.c(), a.h(), a.w()});
  const std::size_t sa = a.shape().sample_size();
  const std::size_t sb = b.shape().sample_size();
  for (int n = 0; n < a.n(); ++n) {
    std::copy(a.sample(n), a.sample(n) + sa, y.sample(n));
    std::copy(b.sample(n), b.sample(n) + sb, y.sample(n) + sa);
  }
  return y;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& x, int first) {
  require(first > 0 && first < x.c(), ErrorKind::shape_mismatch, "bad channel split");
  Tensor<T> a({x.n(), first, x.h(), x.w()});
  Tensor<T> b({x.n(), x.c() - first, x.h(), x.w()});
  const std::size_t sa = a.shape().sample_size();
  const std::size_t sb = b.shape().sample_size();
  for (int n = 0; n < x.n(); ++n) {
    std::copy(x.sample(n), x.sample(n) + sa, a.sample(n));
    std::copy(x.sample(n) + sa, x.sample(n) + sa + sb, b.sample(n));
  }
  return {std::move(a), std::move(b)};
}

template <typename T>
void add_inplace(Tensor<T>& acc, const Tensor<T>& x) {
  require_same_shape(acc.shape(), x.shape(), "add");
  const auto n = static_cast<std::ptrdiff_t>(x.size());
  T* dst = acc.data();
  const T* src = x.data();
#pragma omp parallel for if (n > kParallelElems)
  for (std::ptrdiff_t i = 0; i < n; ++i) dst[i] += src[i];
}

#define DEOCCL_INSTANTIATE(T)                                                                        \
  template Tensor<T> Conv2d::forward(const ParameterStore<T>&, const Tensor<T>&, ConvCache<T>*) const; \
  template Tensor<T> Conv2d::backward(const ParameterStore<T>&, const ConvCache<T>&, const Tensor<T>&, \
                                      Gradients<T>&) const;                                          \
  template Tensor<T> ConvTranspose2d::forward(const ParameterStore<T>&, const Tensor<T>&,            \
                                              ConvCache<T>*) const;                                  \
  template Tensor<T> ConvTranspose2d::backward(const ParameterStore<T>&, const ConvCache<T>&,        \
                                               const Tensor<T>&, Gradients<T>&) const;               \
  template Tensor<T> BatchNorm2d::forward(const ParameterStore<T>&, const Tensor<T>&, Phase,         \
                                          BatchNormCache<T>*) const;                                 \
  template Tensor<T> BatchNorm2d::backward(const ParameterStore<T>&, const BatchNormCache<T>&,       \
                                           const Tensor<T>&, Gradients<T>&) const;                   \
  template void BatchNorm2d::commit(ParameterStore<T>&, const BatchNormCache<T>&) const;             \
  template Tensor<T> Linear::forward(const ParameterStore<T>&, const Tensor<T>&, ConvCache<T>*) const; \
  template Tensor<T> Linear::backward(const ParameterStore<T>&, const ConvCache<T>&, const Tensor<T>&, \
                                      Gradients<T>&) const;                                          \
  template Tensor<T> relu(const Tensor<T>&);                                                         \
  template Tensor<T> relu_backward(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> leaky_relu(const Tensor<T>&, T);                                                \
  template Tensor<T> leaky_relu_backward(const Tensor<T>&, const Tensor<T>&, T);                     \
  template Tensor<T> tanh_act(const Tensor<T>&);                                                     \
  template Tensor<T> tanh_backward(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                      \
  template Tensor<T> sigmoid_backward(const Tensor<T>&, const Tensor<T>&);                           \
  template Tensor<T> avg_pool2(const Tensor<T>&);                                                    \
  template Tensor<T> avg_pool2_backward(const Tensor<T>&);                                           \
  template Tensor<T> upsample2(const Tensor<T>&);                                                    \
  template Tensor<T> upsample2_backward(const Tensor<T>&);                                           \
  template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);                            \
  template std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>&, int);                    \
  template void add_inplace(Tensor<T>&, const Tensor<T>&);

DEOCCL_INSTANTIATE(float)
DEOCCL_INSTANTIATE(double)
#undef DEOCCL_INSTANTIATE

}  // namespace deoccl
