#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "deoccl/layers.hpp"

// Attention-enabled encoder-decoder generator and DCGAN-style discriminator.
//
// Generator layout for the default 256px configuration (m = base filters):
//
//   x 3x256 -> [down] m x128 -> [down] m x64 (F_enc) -> [down] 2m x32
//           -> [down] 4m x16 -> [down] 8m x8 -> [down] 8m x4 -> affine -> z (99)
//   z -> affine -> 8m x4 -> [up] 8m x8 -> [up] 4m x16 -> [up] 2m x32 -> [up] m x64 (F_dec)
//   attention([F_enc; F_dec]) -> (Attn_enc, Attn_dec)
//   F_fused = F_enc * Attn_enc + F_dec * Attn_dec
//   F_fused -> [up] m x128 -> [up] m x256 -> conv3x3 -> tanh -> x_rec
//
// [down] is a residual block whose first conv has stride 2; [up] replaces
// that conv with a 4x4 stride-2 deconvolution. In bypass mode the attention
// branch is skipped and F_fused = F_dec.

namespace deoccl {

struct NetworkConfig {
  int image_size = 256;
  int base_filters = 64;
  int bottleneck_dim = 99;
  int encoder_depth = 6;
  int attention_site_size = 64;
  bool batch_norm = true;
  // Reserved: feed the mask as a fourth input channel. Not supported yet.
  bool mask_input_channel = false;

  // Throws ErrorKind::config on an inconsistent configuration.
  void validate() const;

  // Consistent config for a smaller square image: site = size/4 and the
  // encoder goes down to 4x4.
  static NetworkConfig scaled(int image_size, int base_filters, int bottleneck_dim,
                              bool batch_norm = true);

  int deepest_size() const { return image_size >> encoder_depth; }
  // Output channels of encoder block i: m, m, 2m, 4m, 8m, 8m, ...
  int encoder_channels(int block) const;

  bool operator==(const NetworkConfig&) const = default;
};

enum class ForwardMode { bypass, attention };

std::string to_string(ForwardMode mode);

template <typename T>
struct ResidualCache {
  ConvCache<T> first;
  BatchNormCache<T> first_norm;
  Tensor<T> hidden;
  ConvCache<T> second;
  BatchNormCache<T> second_norm;
  ConvCache<T> projection;
  Tensor<T> output;
};

class ResidualBlock {
 public:
  enum class Direction { down, up };

  ResidualBlock() = default;
  ResidualBlock(ParameterLayout& layout, const std::string& name, Group group, Direction dir,
                int in_c, int out_c, bool batch_norm);

  template <typename T>
  Tensor<T> forward(const ParameterStore<T>& p, const Tensor<T>& x, Phase phase,
                    ResidualCache<T>* cache) const;
  template <typename T>
  Tensor<T> backward(const ParameterStore<T>& p, const ResidualCache<T>& cache,
                     const Tensor<T>& dy, Gradients<T>& grads) const;
  template <typename T>
  void commit(ParameterStore<T>& p, const ResidualCache<T>& cache) const;

  int out_channels() const { return out_c_; }

 private:
  Direction dir_ = Direction::down;
  int in_c_ = 0, out_c_ = 0;
  bool batch_norm_ = true;
  Conv2d down_conv_;
  ConvTranspose2d up_conv_;
  BatchNorm2d first_norm_;
  Conv2d second_conv_;
  BatchNorm2d second_norm_;
  std::optional<Conv2d> projection_;
};

template <typename T>
struct AttentionMaps {
  Tensor<T> attn_enc;
  Tensor<T> attn_dec;
};

template <typename T>
struct AttentionCache {
  Tensor<T> f_enc;
  Tensor<T> f_dec;
  ConvCache<T> convs[4];
  Tensor<T> hidden[3];
  AttentionMaps<T> maps;
};

template <typename T>
struct Encoded {
  Tensor<T> z;
  Tensor<T> f_enc;
};

template <typename T>
struct Fused {
  Tensor<T> f_fused;
  AttentionMaps<T> maps;
};

template <typename T>
struct GeneratorOutput {
  Tensor<T> x_rec;
  std::optional<AttentionMaps<T>> maps;
};

template <typename T>
struct GeneratorTape {
  Phase phase = Phase::train;
  ForwardMode mode = ForwardMode::attention;
  std::vector<ResidualCache<T>> encoder;
  ConvCache<T> bottleneck;
  ConvCache<T> expand;
  std::vector<ResidualCache<T>> decoder;
  AttentionCache<T> attention;
  ConvCache<T> head;
  Tensor<T> output;
};

// F_enc * Attn_enc + F_dec * Attn_dec, elementwise.
template <typename T>
Tensor<T> fuse_features(const Tensor<T>& f_enc, const Tensor<T>& f_dec, const Tensor<T>& attn_enc,
                        const Tensor<T>& attn_dec);

class Generator {
 public:
  Generator() = default;
  Generator(const NetworkConfig& config, ParameterLayout& layout);

  template <typename T>
  Encoded<T> encode(const ParameterStore<T>& p, const Tensor<T>& x, Phase phase = Phase::inference,
                    GeneratorTape<T>* tape = nullptr) const;
  template <typename T>
  Tensor<T> decode_to_site(const ParameterStore<T>& p, const Tensor<T>& z,
                           Phase phase = Phase::inference, GeneratorTape<T>* tape = nullptr) const;
  // `forced` replaces the computed attention maps (test hook).
  template <typename T>
  Fused<T> attention_fuse(const ParameterStore<T>& p, const Tensor<T>& f_enc, const Tensor<T>& f_dec,
                          GeneratorTape<T>* tape = nullptr,
                          const AttentionMaps<T>* forced = nullptr) const;
  template <typename T>
  Tensor<T> decode_from_site(const ParameterStore<T>& p, const Tensor<T>& f_fused,
                             Phase phase = Phase::inference, GeneratorTape<T>* tape = nullptr) const;

  template <typename T>
  GeneratorOutput<T> forward(const ParameterStore<T>& p, const Tensor<T>& x_occ, ForwardMode mode,
                             Phase phase = Phase::inference, GeneratorTape<T>* tape = nullptr) const;

  // Accumulates parameter gradients for d(loss)/d(x_rec); returns d(loss)/d(x_occ).
  template <typename T>
  Tensor<T> backward(const ParameterStore<T>& p, const GeneratorTape<T>& tape,
                     const Tensor<T>& d_xrec, Gradients<T>& grads) const;

  template <typename T>
  void commit(ParameterStore<T>& p, const GeneratorTape<T>& tape) const;

  const NetworkConfig& config() const { return config_; }
  Shape4 site_shape(int batch) const;

 private:
  template <typename T>
  void check_input(const Tensor<T>& x) const;

  NetworkConfig config_;
  std::vector<ResidualBlock> encoder_;
  Linear bottleneck_;
  Linear expand_;
  std::vector<ResidualBlock> decoder_;
  Conv2d attention_[4];
  Conv2d head_;
};

template <typename T>
struct DiscriminatorTape {
  Phase phase = Phase::train;
  std::vector<ConvCache<T>> convs;
  std::vector<BatchNormCache<T>> norms;
  std::vector<Tensor<T>> activations;
  ConvCache<T> final_conv;
  Tensor<T> probability;
};

// Strided 4x4 convs (LeakyReLU 0.2, batch norm on hidden layers, channels
// doubling from m up to 8m) down to 4x4, then a 4x4 reduction and a sigmoid.
class Discriminator {
 public:
  static constexpr double kLeakySlope = 0.2;

  Discriminator() = default;
  Discriminator(const NetworkConfig& config, ParameterLayout& layout);

  // Returns N x 1 x 1 x 1 probabilities in (0, 1).
  template <typename T>
  Tensor<T> forward(const ParameterStore<T>& p, const Tensor<T>& x, Phase phase = Phase::inference,
                    DiscriminatorTape<T>* tape = nullptr) const;
  template <typename T>
  Tensor<T> backward(const ParameterStore<T>& p, const DiscriminatorTape<T>& tape,
                     const Tensor<T>& d_prob, Gradients<T>& grads) const;
  template <typename T>
  void commit(ParameterStore<T>& p, const DiscriminatorTape<T>& tape) const;

  int strided_layers() const { return static_cast<int>(convs_.size()); }

 private:
  NetworkConfig config_;
  std::vector<Conv2d> convs_;
  std::vector<BatchNorm2d> norms_;  // norms_[l - 1] follows convs_[l]
  Conv2d final_;
};

// Architecture plus the parameter layout it declares.
class Model {
 public:
  explicit Model(const NetworkConfig& config);

  const NetworkConfig& config() const { return config_; }
  const ParameterLayout& layout() const { return layout_; }
  const Generator& generator() const { return generator_; }
  const Discriminator& discriminator() const { return discriminator_; }

  // Fan-in scaled zero-mean normal weights, zero biases, identity norms.
  template <typename T>
  ParameterStore<T> init(std::uint64_t seed) const;

  // Throws ErrorKind::shape_mismatch when the store does not match this layout.
  template <typename T>
  void check(const ParameterStore<T>& store) const;

 private:
  NetworkConfig config_;
  ParameterLayout layout_;
  Generator generator_;
  Discriminator discriminator_;
};

template <typename T>
ParameterStore<T> init_network(const NetworkConfig& config, std::uint64_t seed) {
  return Model(config).init<T>(seed);
}

}  // namespace deoccl
