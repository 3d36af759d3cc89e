#pragma once

#include <string>
#include <vector>

#include "deoccl/kernels.hpp"
#include "deoccl/params.hpp"

// Building blocks with explicit forward/backward. Layers only describe
// structure and hold ids into a ParameterLayout; values live in a
// ParameterStore passed at call time. Forward passes record what backward
// needs in a per-layer cache owned by the caller.

namespace deoccl {

enum class Phase { train, inference };

template <typename T>
struct ConvCache {
  Tensor<T> input;
};

template <typename T>
struct BatchNormCache {
  Phase phase = Phase::train;
  Tensor<T> normalized;
  std::vector<T> inv_std;
  std::vector<double> batch_mean;
  std::vector<double> batch_var;  // unbiased, for running statistics
};

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParameterLayout& layout, const std::string& name, Group group, int in_c, int out_c,
         int kernel, int stride, int pad, bool bias);

  template <typename T>
  Tensor<T> forward(const ParameterStore<T>& p, const Tensor<T>& x, ConvCache<T>* cache) const;
  template <typename T>
  Tensor<T> backward(const ParameterStore<T>& p, const ConvCache<T>& cache, const Tensor<T>& dy,
                     Gradients<T>& grads) const;

  ConvGeometry geometry(int h, int w) const;
  int in_channels() const { return in_c_; }
  int out_channels() const { return out_c_; }

 private:
  Group group_ = Group::encoder;
  int in_c_ = 0, out_c_ = 0, kernel_ = 3, stride_ = 1, pad_ = 1;
  ParamId weight_ = 0;
  std::optional<ParamId> bias_;
};

// Fractionally strided convolution; weight is in_c x out_c x k x k.
class ConvTranspose2d {
 public:
  ConvTranspose2d() = default;
  ConvTranspose2d(ParameterLayout& layout, const std::string& name, Group group, int in_c,
                  int out_c, int kernel, int stride, int pad, bool bias);

  template <typename T>
  Tensor<T> forward(const ParameterStore<T>& p, const Tensor<T>& x, ConvCache<T>* cache) const;
  template <typename T>
  Tensor<T> backward(const ParameterStore<T>& p, const ConvCache<T>& cache, const Tensor<T>& dy,
                     Gradients<T>& grads) const;

  // Geometry of the forward convolution this layer is the adjoint of.
  ConvGeometry adjoint_geometry(int h, int w) const;

 private:
  Group group_ = Group::decoder;
  int in_c_ = 0, out_c_ = 0, kernel_ = 4, stride_ = 2, pad_ = 1;
  ParamId weight_ = 0;
  std::optional<ParamId> bias_;
};

class BatchNorm2d {
 public:
  static constexpr double kMomentum = 0.1;
  static constexpr double kEpsilon = 1e-5;

  BatchNorm2d() = default;
  BatchNorm2d(ParameterLayout& layout, const std::string& name, Group group, int channels);

  template <typename T>
  Tensor<T> forward(const ParameterStore<T>& p, const Tensor<T>& x, Phase phase,
                    BatchNormCache<T>* cache) const;
  template <typename T>
  Tensor<T> backward(const ParameterStore<T>& p, const BatchNormCache<T>& cache,
                     const Tensor<T>& dy, Gradients<T>& grads) const;
  // Folds the batch statistics of a train-phase pass into the running estimates.
  template <typename T>
  void commit(ParameterStore<T>& p, const BatchNormCache<T>& cache) const;

 private:
  Group group_ = Group::encoder;
  int channels_ = 0;
  ParamId scale_ = 0, shift_ = 0, mean_ = 0, var_ = 0;
};

// Affine map on N x F x 1 x 1 tensors (any input extent is flattened).
class Linear {
 public:
  Linear() = default;
  Linear(ParameterLayout& layout, const std::string& name, Group group, int in_features,
         int out_features);

  template <typename T>
  Tensor<T> forward(const ParameterStore<T>& p, const Tensor<T>& x, ConvCache<T>* cache) const;
  template <typename T>
  Tensor<T> backward(const ParameterStore<T>& p, const ConvCache<T>& cache, const Tensor<T>& dy,
                     Gradients<T>& grads) const;

  int in_features() const { return in_; }
  int out_features() const { return out_; }

 private:
  Group group_ = Group::encoder;
  int in_ = 0, out_ = 0;
  ParamId weight_ = 0, bias_ = 0;
};

// Pointwise activations. Backward takes the forward output.
template <typename T> Tensor<T> relu(const Tensor<T>& x);
template <typename T> Tensor<T> relu_backward(const Tensor<T>& y, const Tensor<T>& dy);
template <typename T> Tensor<T> leaky_relu(const Tensor<T>& x, T slope);
template <typename T> Tensor<T> leaky_relu_backward(const Tensor<T>& y, const Tensor<T>& dy, T slope);
template <typename T> Tensor<T> tanh_act(const Tensor<T>& x);
template <typename T> Tensor<T> tanh_backward(const Tensor<T>& y, const Tensor<T>& dy);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& x);
template <typename T> Tensor<T> sigmoid_backward(const Tensor<T>& y, const Tensor<T>& dy);

template <typename T> Tensor<T> avg_pool2(const Tensor<T>& x);
template <typename T> Tensor<T> avg_pool2_backward(const Tensor<T>& dy);
template <typename T> Tensor<T> upsample2(const Tensor<T>& x);
template <typename T> Tensor<T> upsample2_backward(const Tensor<T>& dy);

template <typename T> Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);
// Splits channels [0, first) and [first, c).
template <typename T> std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& x, int first);

template <typename T> void add_inplace(Tensor<T>& acc, const Tensor<T>& x);

}  // namespace deoccl
