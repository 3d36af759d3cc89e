#include "deoccl/kernels.hpp"

namespace deoccl::reference {

template <typename T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, const T* a, const T* b, T* c,
          bool accumulate) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      T sum = accumulate ? c[static_cast<std::size_t>(i) * n + j] : T(0);
      for (int p = 0; p < k; ++p) {
        const T av = trans_a ? a[static_cast<std::size_t>(p) * m + i] : a[static_cast<std::size_t>(i) * k + p];
        const T bv = trans_b ? b[static_cast<std::size_t>(j) * k + p] : b[static_cast<std::size_t>(p) * n + j];
        sum += av * bv;
      }
      c[static_cast<std::size_t>(i) * n + j] = sum;
    }
  }
}

namespace {

template <typename T>
T weight_at(const T* w, const ConvGeometry& g, int o, int i, int ky, int kx) {
  return w[((static_cast<std::size_t>(o) * g.in_c + i) * g.kernel + ky) * g.kernel + kx];
}

}  // namespace

template <typename T>
Tensor<T> conv_forward(const Tensor<T>& x, const T* weight, const ConvGeometry& g) {
  require_same_shape(x.shape(), g.input_shape(x.n()), "conv input");
  Tensor<T> y(g.output_shape(x.n()));
  for (int n = 0; n < x.n(); ++n)
    for (int o = 0; o < g.out_c; ++o)
      for (int oy = 0; oy < g.out_h(); ++oy)
        for (int ox = 0; ox < g.out_w(); ++ox) {
          T sum = 0;
          for (int i = 0; i < g.in_c; ++i)
            for (int ky = 0; ky < g.kernel; ++ky)
              for (int kx = 0; kx < g.kernel; ++kx) {
                const int iy = oy * g.stride - g.pad + ky;
                const int ix = ox * g.stride - g.pad + kx;
                if (iy < 0 || iy >= g.in_h || ix < 0 || ix >= g.in_w) continue;
                sum += weight_at(weight, g, o, i, ky, kx) * x.at(n, i, iy, ix);
              }
          y.at(n, o, oy, ox) = sum;
        }
  return y;
}

template <typename T>
Tensor<T> conv_backward_data(const Tensor<T>& dy, const T* weight, const ConvGeometry& g) {
  require_same_shape(dy.shape(), g.output_shape(dy.n()), "conv output gradient");
  Tensor<T> dx(g.input_shape(dy.n()));
  for (int n = 0; n < dy.n(); ++n)
    for (int o = 0; o < g.out_c; ++o)
      for (int oy = 0; oy < g.out_h(); ++oy)
        for (int ox = 0; ox < g.out_w(); ++ox) {
          const T d = dy.at(n, o, oy, ox);
          for (int i = 0; i < g.in_c; ++i)
            for (int ky = 0; ky < g.kernel; ++ky)
              for (int kx = 0; kx < g.kernel; ++kx) {
                const int iy = oy * g.stride - g.pad + ky;
                const int ix = ox * g.stride - g.pad + kx;
                if (iy < 0 || iy >= g.in_h || ix < 0 || ix >= g.in_w) continue;
                dx.at(n, i, iy, ix) += weight_at(weight, g, o, i, ky, kx) * d;
              }
        }
  return dx;
}

template <typename T>
void conv_backward_weight(const Tensor<T>& x, const Tensor<T>& dy, const ConvGeometry& g,
                          T* dweight) {
  require_same_shape(x.shape(), g.input_shape(x.n()), "conv input");
  require_same_shape(dy.shape(), g.output_shape(x.n()), "conv output gradient");
  for (int n = 0; n < x.n(); ++n)
    for (int o = 0; o < g.out_c; ++o)
      for (int oy = 0; oy < g.out_h(); ++oy)
        for (int ox = 0; ox < g.out_w(); ++ox) {
          const T d = dy.at(n, o, oy, ox);
          for (int i = 0; i < g.in_c; ++i)
            for (int ky = 0; ky < g.kernel; ++ky)
              for (int kx = 0; kx < g.kernel; ++kx) {
                const int iy = oy * g.stride - g.pad + ky;
                const int ix = ox * g.stride - g.pad + kx;
                if (iy < 0 || iy >= g.in_h || ix < 0 || ix >= g.in_w) continue;
                dweight[((static_cast<std::size_t>(o) * g.in_c + i) * g.kernel + ky) * g.kernel + kx] +=
                    d * x.at(n, i, iy, ix);
              }
        }
}

#define DEOCCL_INSTANTIATE(T)                                                              \
  template void gemm<T>(bool, bool, int, int, int, const T*, const T*, T*, bool);          \
  template Tensor<T> conv_forward<T>(const Tensor<T>&, const T*, const ConvGeometry&);     \
  template Tensor<T> conv_backward_data<T>(const Tensor<T>&, const T*, const ConvGeometry&); \
  template void conv_backward_weight<T>(const Tensor<T>&, const Tensor<T>&, const ConvGeometry&, T*);

DEOCCL_INSTANTIATE(float)
DEOCCL_INSTANTIATE(double)
#undef DEOCCL_INSTANTIATE

}  // namespace deoccl::reference
