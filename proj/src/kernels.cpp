#include "deoccl/kernels.hpp"

#include <algorithm>
#include <vector>

namespace deoccl::kernels {

namespace {

// Below this many multiply-adds a GEMM runs on the calling thread.
constexpr long kParallelWork = 1L << 15;

template <typename T>
void transpose(const T* src, int rows, int cols, T* dst) {
  constexpr int kBlock = 32;
  for (int i0 = 0; i0 < rows; i0 += kBlock) {
    const int i1 = std::min(rows, i0 + kBlock);
    for (int j0 = 0; j0 < cols; j0 += kBlock) {
      const int j1 = std::min(cols, j0 + kBlock);
      for (int i = i0; i < i1; ++i)
        for (int j = j0; j < j1; ++j) dst[static_cast<std::size_t>(j) * rows + i] = src[static_cast<std::size_t>(i) * cols + j];
    }
  }
}

// C[m x n] (+)= A[m x k] * B[k x n], all row-major and contiguous.
// Four rows of C share each streamed row of B; each C element accumulates
// over k in ascending order.
template <typename T>
void gemm_nn(int m, int n, int k, const T* a, const T* b, T* c, bool accumulate) {
  constexpr int kRows = 4;
  constexpr int kCols = 256;
  const int row_blocks = (m + kRows - 1) / kRows;
  const long work = static_cast<long>(m) * n * k;

#pragma omp parallel for schedule(static) if (work > kParallelWork)
  for (int rb = 0; rb < row_blocks; ++rb) {
    const int i0 = rb * kRows;
    const int rows = std::min(kRows, m - i0);
    alignas(64) T acc[kRows][kCols];
    for (int j0 = 0; j0 < n; j0 += kCols) {
      const int cols = std::min(kCols, n - j0);
      for (int r = 0; r < rows; ++r) {
        T* crow = c + static_cast<std::size_t>(i0 + r) * n + j0;
        for (int j = 0; j < cols; ++j) acc[r][j] = accumulate ? crow[j] : T(0);
      }
      if (rows == kRows) {
        const T* a0p = a + static_cast<std::size_t>(i0) * k;
        const T* a1p = a0p + k;
        const T* a2p = a1p + k;
        const T* a3p = a2p + k;
        for (int p = 0; p < k; ++p) {
          const T a0 = a0p[p], a1 = a1p[p], a2 = a2p[p], a3 = a3p[p];
          const T* bp = b + static_cast<std::size_t>(p) * n + j0;
          for (int j = 0; j < cols; ++j) {
            const T bv = bp[j];
            acc[0][j] += a0 * bv;
            acc[1][j] += a1 * bv;
            acc[2][j] += a2 * bv;
            acc[3][j] += a3 * bv;
          }
        }
      } else {
        for (int r = 0; r < rows; ++r) {
          const T* ap = a + static_cast<std::size_t>(i0 + r) * k;
          for (int p = 0; p < k; ++p) {
            const T av = ap[p];
            const T* bp = b + static_cast<std::size_t>(p) * n + j0;
            for (int j = 0; j < cols; ++j) acc[r][j] += av * bp[j];
          }
        }
      }
      for (int r = 0; r < rows; ++r) {
        T* crow = c + static_cast<std::size_t>(i0 + r) * n + j0;
        for (int j = 0; j < cols; ++j) crow[j] = acc[r][j];
      }
    }
  }
}

}  // namespace

template <typename T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, const T* a, const T* b, T* c,
          bool accumulate) {
  std::vector<T> a_packed;
  std::vector<T> b_packed;
  if (trans_a) {
    a_packed.resize(static_cast<std::size_t>(m) * k);
    transpose(a, k, m, a_packed.data());
    a = a_packed.data();
  }
  if (trans_b) {
    b_packed.resize(static_cast<std::size_t>(k) * n);
    transpose(b, n, k, b_packed.data());
    b = b_packed.data();
  }
  gemm_nn(m, n, k, a, b, c, accumulate);
}

template <typename T>
void im2col(const T* image, const ConvGeometry& g, T* columns) {
  const int oh = g.out_h();
  const int ow = g.out_w();
  const std::size_t positions = static_cast<std::size_t>(oh) * ow;
  for (int ch = 0; ch < g.in_c; ++ch) {
    const T* plane = image + static_cast<std::size_t>(ch) * g.in_h * g.in_w;
    for (int ky = 0; ky < g.kernel; ++ky) {
      for (int kx = 0; kx < g.kernel; ++kx) {
        T* row = columns + ((static_cast<std::size_t>(ch) * g.kernel + ky) * g.kernel + kx) * positions;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          T* out = row + static_cast<std::size_t>(oy) * ow;
          if (iy < 0 || iy >= g.in_h) {
            std::fill(out, out + ow, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(iy) * g.in_w;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            out[ox] = (ix >= 0 && ix < g.in_w) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* columns, const ConvGeometry& g, T* image) {
  const int oh = g.out_h();
  const int ow = g.out_w();
  const std::size_t positions = static_cast<std::size_t>(oh) * ow;
  for (int ch = 0; ch < g.in_c; ++ch) {
    T* plane = image + static_cast<std::size_t>(ch) * g.in_h * g.in_w;
    for (int ky = 0; ky < g.kernel; ++ky) {
      for (int kx = 0; kx < g.kernel; ++kx) {
        const T* row = columns + ((static_cast<std::size_t>(ch) * g.kernel + ky) * g.kernel + kx) * positions;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.in_h) continue;
          const T* src = row + static_cast<std::size_t>(oy) * ow;
          T* dst = plane + static_cast<std::size_t>(iy) * g.in_w;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.in_w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

template <typename T>
Tensor<T> conv_forward(const Tensor<T>& x, const T* weight, const ConvGeometry& g) {
  require_same_shape(x.shape(), g.input_shape(x.n()), "conv input");
  Tensor<T> y(g.output_shape(x.n()));
  const int positions = g.out_h() * g.out_w();
  const int batch = x.n();
#pragma omp parallel if (batch > 1)
  {
    std::vector<T> columns(static_cast<std::size_t>(g.patch()) * positions);
#pragma omp for schedule(static)
    for (int i = 0; i < batch; ++i) {
      im2col(x.sample(i), g, columns.data());
      gemm_nn(g.out_c, positions, g.patch(), weight, columns.data(), y.sample(i), false);
    }
  }
  return y;
}

template <typename T>
Tensor<T> conv_backward_data(const Tensor<T>& dy, const T* weight, const ConvGeometry& g) {
  require_same_shape(dy.shape(), g.output_shape(dy.n()), "conv output gradient");
  Tensor<T> dx(g.input_shape(dy.n()));
  const int positions = g.out_h() * g.out_w();
  const int batch = dy.n();
  std::vector<T> weight_t(static_cast<std::size_t>(g.patch()) * g.out_c);
  transpose(weight, g.out_c, g.patch(), weight_t.data());
#pragma omp parallel if (batch > 1)
  {
    std::vector<T> columns(static_cast<std::size_t>(g.patch()) * positions);
#pragma omp for schedule(static)
    for (int i = 0; i < batch; ++i) {
      gemm_nn(g.patch(), positions, g.out_c, weight_t.data(), dy.sample(i), columns.data(), false);
      col2im(columns.data(), g, dx.sample(i));
    }
  }
  return dx;
}

template <typename T>
void conv_backward_weight(const Tensor<T>& x, const Tensor<T>& dy, const ConvGeometry& g,
                          T* dweight) {
  require_same_shape(x.shape(), g.input_shape(x.n()), "conv input");
  require_same_shape(dy.shape(), g.output_shape(x.n()), "conv output gradient");
  const int positions = g.out_h() * g.out_w();
  std::vector<T> columns(static_cast<std::size_t>(g.patch()) * positions);
  std::vector<T> columns_t(columns.size());
  // Samples are reduced in order; parallelism lives inside the GEMM.
  for (int i = 0; i < x.n(); ++i) {
    im2col(x.sample(i), g, columns.data());
    transpose(columns.data(), g.patch(), positions, columns_t.data());
    gemm_nn(g.out_c, g.patch(), positions, dy.sample(i), columns_t.data(), dweight, true);
  }
}

#define DEOCCL_INSTANTIATE(T)                                                              \
  template void gemm<T>(bool, bool, int, int, int, const T*, const T*, T*, bool);          \
  template void im2col<T>(const T*, const ConvGeometry&, T*);                              \
  template void col2im<T>(const T*, const ConvGeometry&, T*);                              \
  template Tensor<T> conv_forward<T>(const Tensor<T>&, const T*, const ConvGeometry&);     \
  template Tensor<T> conv_backward_data<T>(const Tensor<T>&, const T*, const ConvGeometry&); \
  template void conv_backward_weight<T>(const Tensor<T>&, const Tensor<T>&, const ConvGeometry&, T*);

DEOCCL_INSTANTIATE(float)
DEOCCL_INSTANTIATE(double)
#undef DEOCCL_INSTANTIATE

}  // namespace deoccl::kernels
