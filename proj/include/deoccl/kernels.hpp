#pragma once

#include "deoccl/tensor.hpp"

// Convolution and matrix kernels. `kernels` holds the OpenMP-parallel
// im2col/GEMM implementations used by the network; `reference` holds plain
// serial loops kept as the test oracle and benchmark baseline.
//
// Every kernel sums each output element in a fixed order, so results are
// bitwise identical for any thread count.

namespace deoccl {

// A forward convolution mapping (in_c, in_h, in_w) -> (out_c, out_h, out_w).
// Transposed convolutions are expressed through the geometry of the forward
// convolution they are the adjoint of.
struct ConvGeometry {
  int in_c = 0;
  int in_h = 0;
  int in_w = 0;
  int out_c = 0;
  int kernel = 3;
  int stride = 1;
  int pad = 1;

  int out_h() const { return (in_h + 2 * pad - kernel) / stride + 1; }
  int out_w() const { return (in_w + 2 * pad - kernel) / stride + 1; }
  int patch() const { return in_c * kernel * kernel; }
  Shape4 input_shape(int n) const { return {n, in_c, in_h, in_w}; }
  Shape4 output_shape(int n) const { return {n, out_c, out_h(), out_w()}; }
  Shape4 weight_shape() const { return {out_c, in_c, kernel, kernel}; }
};

namespace kernels {

// C[m x n] (+)= op(A) * op(B); row-major, op(A) is m x k, op(B) is k x n.
template <typename T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, const T* a, const T* b, T* c,
          bool accumulate);

template <typename T>
void im2col(const T* image, const ConvGeometry& g, T* columns);

// Scatter-adds columns back into image (image must be pre-zeroed by the caller).
template <typename T>
void col2im(const T* columns, const ConvGeometry& g, T* image);

// y = conv(x, weight); weight is out_c x in_c x k x k. No bias.
template <typename T>
Tensor<T> conv_forward(const Tensor<T>& x, const T* weight, const ConvGeometry& g);

// dx = conv^T(dy, weight)
template <typename T>
Tensor<T> conv_backward_data(const Tensor<T>& dy, const T* weight, const ConvGeometry& g);

// dweight += d/dweight <dy, conv(x, weight)>
template <typename T>
void conv_backward_weight(const Tensor<T>& x, const Tensor<T>& dy, const ConvGeometry& g,
                          T* dweight);

}  // namespace kernels

namespace reference {

template <typename T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, const T* a, const T* b, T* c,
          bool accumulate);

template <typename T>
Tensor<T> conv_forward(const Tensor<T>& x, const T* weight, const ConvGeometry& g);

template <typename T>
Tensor<T> conv_backward_data(const Tensor<T>& dy, const T* weight, const ConvGeometry& g);

template <typename T>
void conv_backward_weight(const Tensor<T>& x, const Tensor<T>& dy, const ConvGeometry& g,
                          T* dweight);

}  // namespace reference

}  // namespace deoccl
