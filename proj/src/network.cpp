#include "deoccl/network.hpp"

#include <bit>
#include <cmath>

#include "deoccl/random.hpp"

namespace deoccl {

// --- NetworkConfig ----------------------------------------------------------

void NetworkConfig::validate() const {
  auto check = [](bool ok, const std::string& msg) { require(ok, ErrorKind::config, msg); };
  check(base_filters >= 1, "base_filters must be >= 1");
  check(bottleneck_dim >= 1, "bottleneck_dim must be >= 1");
  check(image_size >= 8 && image_size % 4 == 0, "image_size must be >= 8 and divisible by 4");
  check(encoder_depth >= 2, "encoder_depth must be >= 2 (attention taps the second block)");
  check(encoder_depth < 30 && image_size % (1 << encoder_depth) == 0,
        "image_size must be divisible by 2^encoder_depth");
  check(deepest_size() >= 4, "encoder_depth too large: deepest feature map would be below 4x4");
  check(image_size / 4 == attention_site_size,
        "attention_site_size must equal image_size / 4 (output size of the second encoder block)");
  check(!mask_input_channel, "mask_input_channel is reserved and not supported");
}

NetworkConfig NetworkConfig::scaled(int image_size, int base_filters, int bottleneck_dim,
                                    bool batch_norm) {
  NetworkConfig c;
  c.image_size = image_size;
  c.base_filters = base_filters;
  c.bottleneck_dim = bottleneck_dim;
  c.attention_site_size = image_size / 4;
  c.batch_norm = batch_norm;
  int depth = 0;
  while ((image_size >> (depth + 1)) >= 4 && (image_size % (1 << (depth + 1))) == 0) ++depth;
  c.encoder_depth = depth;
  return c;
}

int NetworkConfig::encoder_channels(int block) const {
  if (block < 2) return base_filters;
  return base_filters * std::min(8, 1 << (block - 1));
}

std::string to_string(ForwardMode mode) {
  return mode == ForwardMode::bypass ? "bypass" : "attention";
}

// --- ResidualBlock ----------------------------------------------------------

ResidualBlock::ResidualBlock(ParameterLayout& layout, const std::string& name, Group group,
                             Direction dir, int in_c, int out_c, bool batch_norm)
    : dir_(dir), in_c_(in_c), out_c_(out_c), batch_norm_(batch_norm) {
  if (dir == Direction::down)
    down_conv_ = Conv2d(layout, name + ".conv1", group, in_c, out_c, 3, 2, 1, !batch_norm);
  else
    up_conv_ = ConvTranspose2d(layout, name + ".deconv1", group, in_c, out_c, 4, 2, 1, !batch_norm);
  if (batch_norm) first_norm_ = BatchNorm2d(layout, name + ".bn1", group, out_c);
  second_conv_ = Conv2d(layout, name + ".conv2", group, out_c, out_c, 3, 1, 1, !batch_norm);
  if (batch_norm) second_norm_ = BatchNorm2d(layout, name + ".bn2", group, out_c);
  if (in_c != out_c) projection_ = Conv2d(layout, name + ".proj", group, in_c, out_c, 1, 1, 0, false);
}

template <typename T>
Tensor<T> ResidualBlock::forward(const ParameterStore<T>& p, const Tensor<T>& x, Phase phase,
                                 ResidualCache<T>* cache) const {
  ResidualCache<T> local;
  ResidualCache<T>& c = cache ? *cache : local;
  Tensor<T> h = dir_ == Direction::down ? down_conv_.forward(p, x, &c.first) : up_conv_.forward(p, x, &c.first);
  if (batch_norm_) h = first_norm_.forward(p, h, phase, &c.first_norm);
  c.hidden = relu(h);
  Tensor<T> h2 = second_conv_.forward(p, c.hidden, &c.second);
  if (batch_norm_) h2 = second_norm_.forward(p, h2, phase, &c.second_norm);
  Tensor<T> skip = dir_ == Direction::down ? avg_pool2(x) : upsample2(x);
  if (projection_) skip = projection_->forward(p, skip, &c.projection);
  add_inplace(h2, skip);
  c.output = relu(h2);
  return c.output;
}

template <typename T>
Tensor<T> ResidualBlock::backward(const ParameterStore<T>& p, const ResidualCache<T>& c,
                                  const Tensor<T>& dy, Gradients<T>& grads) const {
  const Tensor<T> d = relu_backward(c.output, dy);
  Tensor<T> ds = projection_ ? projection_->backward(p, c.projection, d, grads) : d;
  Tensor<T> dx = dir_ == Direction::down ? avg_pool2_backward(ds) : upsample2_backward(ds);
  Tensor<T> dh2 = batch_norm_ ? second_norm_.backward(p, c.second_norm, d, grads) : d;
  Tensor<T> dh = relu_backward(c.hidden, second_conv_.backward(p, c.second, dh2, grads));
  if (batch_norm_) dh = first_norm_.backward(p, c.first_norm, dh, grads);
  add_inplace(dx, dir_ == Direction::down ? down_conv_.backward(p, c.first, dh, grads)
                                          : up_conv_.backward(p, c.first, dh, grads));
  return dx;
}

template <typename T>
void ResidualBlock::commit(ParameterStore<T>& p, const ResidualCache<T>& c) const {
  if (!batch_norm_) return;
  first_norm_.commit(p, c.first_norm);
  second_norm_.commit(p, c.second_norm);
}

// --- Attention fusion -------------------------------------------------------

template <typename T>
Tensor<T> fuse_features(const Tensor<T>& f_enc, const Tensor<T>& f_dec, const Tensor<T>& attn_enc,
                        const Tensor<T>& attn_dec) {
  require_same_shape(f_enc.shape(), f_dec.shape(), "attention fusion features");
  require_same_shape(f_enc.shape(), attn_enc.shape(), "attention map (encoder)");
  require_same_shape(f_enc.shape(), attn_dec.shape(), "attention map (decoder)");
  Tensor<T> out(f_enc.shape());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = f_enc[i] * attn_enc[i] + f_dec[i] * attn_dec[i];
  return out;
}

// --- Generator --------------------------------------------------------------

Generator::Generator(const NetworkConfig& config, ParameterLayout& layout) : config_(config) {
  config.validate();
  const int m = config.base_filters;
  const int depth = config.encoder_depth;
  const bool bn = config.batch_norm;
  using Dir = ResidualBlock::Direction;

  int channels = 3;
  for (int i = 0; i < depth; ++i) {
    const int out = config.encoder_channels(i);
    encoder_.emplace_back(layout, "encoder.block" + std::to_string(i), Group::encoder, Dir::down,
                          channels, out, bn);
    channels = out;
  }
  const int deep = config.deepest_size();
  const int flat = channels * deep * deep;
  bottleneck_ = Linear(layout, "encoder.bottleneck", Group::encoder, flat, config.bottleneck_dim);
  expand_ = Linear(layout, "decoder.expand", Group::decoder, config.bottleneck_dim, flat);
  for (int j = 0; j < depth; ++j) {
    const int out = j <= depth - 2 ? config.encoder_channels(depth - 2 - j) : m;
    decoder_.emplace_back(layout, "decoder.block" + std::to_string(j), Group::decoder, Dir::up,
                          channels, out, bn);
    channels = out;
  }
  head_ = Conv2d(layout, "decoder.head", Group::decoder, channels, 3, 3, 1, 1, true);
  const int plan[5] = {2 * m, 4 * m, 4 * m, 8 * m, 2 * m};
  for (int l = 0; l < 4; ++l)
    attention_[l] = Conv2d(layout, "attention.conv" + std::to_string(l), Group::attention, plan[l],
                           plan[l + 1], 3, 1, 1, true);
}

Shape4 Generator::site_shape(int batch) const {
  return {batch, config_.base_filters, config_.attention_site_size, config_.attention_site_size};
}

template <typename T>
void Generator::check_input(const Tensor<T>& x) const {
  require(x.c() == 3 && x.h() == config_.image_size && x.w() == config_.image_size,
          ErrorKind::shape_mismatch,
          "generator expects Nx3x" + std::to_string(config_.image_size) + "x" +
              std::to_string(config_.image_size) + ", got " + to_string(x.shape()));
}

template <typename T>
Encoded<T> Generator::encode(const ParameterStore<T>& p, const Tensor<T>& x, Phase phase,
                             GeneratorTape<T>* tape) const {
  check_input(x);
  if (tape) {
    tape->phase = phase;
    tape->encoder.assign(encoder_.size(), {});
  }
  Encoded<T> out;
  Tensor<T> h = x;
  for (std::size_t i = 0; i < encoder_.size(); ++i) {
    h = encoder_[i].forward(p, h, phase, tape ? &tape->encoder[i] : nullptr);
    if (i == 1) out.f_enc = h;
  }
  out.z = bottleneck_.forward(p, h, tape ? &tape->bottleneck : nullptr);
  return out;
}

template <typename T>
Tensor<T> Generator::decode_to_site(const ParameterStore<T>& p, const Tensor<T>& z, Phase phase,
                                    GeneratorTape<T>* tape) const {
  require(static_cast<int>(z.shape().sample_size()) == config_.bottleneck_dim,
          ErrorKind::shape_mismatch,
          "bottleneck vector must have length " + std::to_string(config_.bottleneck_dim));
  if (tape) tape->decoder.assign(decoder_.size(), {});
  const int deep = config_.deepest_size();
  Tensor<T> h = expand_.forward(p, z, tape ? &tape->expand : nullptr)
                    .reshaped({z.n(), config_.encoder_channels(config_.encoder_depth - 1), deep, deep});
  for (std::size_t j = 0; j + 2 < decoder_.size(); ++j)
    h = decoder_[j].forward(p, h, phase, tape ? &tape->decoder[j] : nullptr);
  return h;
}

template <typename T>
Fused<T> Generator::attention_fuse(const ParameterStore<T>& p, const Tensor<T>& f_enc,
                                   const Tensor<T>& f_dec, GeneratorTape<T>* tape,
                                   const AttentionMaps<T>* forced) const {
  require_same_shape(f_enc.shape(), f_dec.shape(), "attention inputs");
  require(f_enc.c() == config_.base_filters, ErrorKind::shape_mismatch,
          "attention inputs must have m channels");
  AttentionCache<T> local;
  AttentionCache<T>& c = tape ? tape->attention : local;
  Fused<T> out;
  if (forced) {
    out.maps = *forced;
  } else {
    Tensor<T> h = concat_channels(f_enc, f_dec);
    for (int l = 0; l < 4; ++l) {
      h = attention_[l].forward(p, h, &c.convs[l]);
      if (l < 3) {
        h = relu(h);
        c.hidden[l] = h;
      }
    }
    auto [a_enc, a_dec] = split_channels(h, config_.base_filters);
    out.maps = {std::move(a_enc), std::move(a_dec)};
  }
  out.f_fused = fuse_features(f_enc, f_dec, out.maps.attn_enc, out.maps.attn_dec);
  if (tape) {
    c.f_enc = f_enc;
    c.f_dec = f_dec;
    c.maps = out.maps;
  }
  return out;
}

template <typename T>
Tensor<T> Generator::decode_from_site(const ParameterStore<T>& p, const Tensor<T>& f_fused,
                                      Phase phase, GeneratorTape<T>* tape) const {
  require_same_shape(f_fused.shape(), site_shape(f_fused.n()), "fused site features");
  if (tape && tape->decoder.size() != decoder_.size()) tape->decoder.assign(decoder_.size(), {});
  Tensor<T> h = f_fused;
  for (std::size_t j = decoder_.size() - 2; j < decoder_.size(); ++j)
    h = decoder_[j].forward(p, h, phase, tape ? &tape->decoder[j] : nullptr);
  Tensor<T> out = tanh_act(head_.forward(p, h, tape ? &tape->head : nullptr));
  if (tape) tape->output = out;
  return out;
}

template <typename T>
GeneratorOutput<T> Generator::forward(const ParameterStore<T>& p, const Tensor<T>& x_occ,
                                      ForwardMode mode, Phase phase, GeneratorTape<T>* tape) const {
  if (tape) tape->mode = mode;
  Encoded<T> enc = encode(p, x_occ, phase, tape);
  Tensor<T> f_dec = decode_to_site(p, enc.z, phase, tape);
  GeneratorOutput<T> out;
  if (mode == ForwardMode::attention) {
    Fused<T> fused = attention_fuse(p, enc.f_enc, f_dec, tape);
    out.maps = std::move(fused.maps);
    out.x_rec = decode_from_site(p, fused.f_fused, phase, tape);
  } else {
    out.x_rec = decode_from_site(p, f_dec, phase, tape);
  }
  return out;
}

template <typename T>
Tensor<T> Generator::backward(const ParameterStore<T>& p, const GeneratorTape<T>& tape,
                              const Tensor<T>& d_xrec, Gradients<T>& grads) const {
  require_same_shape(d_xrec.shape(), tape.output.shape(), "generator output gradient");
  Tensor<T> d = head_.backward(p, tape.head, tanh_backward(tape.output, d_xrec), grads);
  for (std::size_t j = decoder_.size(); j-- > decoder_.size() - 2;)
    d = decoder_[j].backward(p, tape.decoder[j], d, grads);

  Tensor<T> d_f_dec;
  Tensor<T> d_f_enc;
  if (tape.mode == ForwardMode::attention) {
    const AttentionCache<T>& c = tape.attention;
    Tensor<T> d_enc(d.shape()), d_dec(d.shape()), d_a_enc(d.shape()), d_a_dec(d.shape());
    for (std::size_t i = 0; i < d.size(); ++i) {
      d_enc[i] = d[i] * c.maps.attn_enc[i];
      d_dec[i] = d[i] * c.maps.attn_dec[i];
      d_a_enc[i] = d[i] * c.f_enc[i];
      d_a_dec[i] = d[i] * c.f_dec[i];
    }
    Tensor<T> h = concat_channels(d_a_enc, d_a_dec);
    for (int l = 3; l >= 0; --l) {
      if (l < 3) h = relu_backward(c.hidden[l], h);
      h = attention_[l].backward(p, c.convs[l], h, grads);
    }
    auto [from_enc, from_dec] = split_channels(h, config_.base_filters);
    add_inplace(d_enc, from_enc);
    add_inplace(d_dec, from_dec);
    d_f_enc = std::move(d_enc);
    d_f_dec = std::move(d_dec);
  } else {
    d_f_dec = std::move(d);
  }

  d = std::move(d_f_dec);
  for (std::size_t j = decoder_.size() - 2; j-- > 0;)
    d = decoder_[j].backward(p, tape.decoder[j], d, grads);
  d = expand_.backward(p, tape.expand, d.reshaped({d.n(), static_cast<int>(d.shape().sample_size()), 1, 1}), grads);

  d = bottleneck_.backward(p, tape.bottleneck, d, grads);
  for (std::size_t i = encoder_.size(); i-- > 0;) {
    if (i == 1 && !d_f_enc.empty()) add_inplace(d, d_f_enc);
    d = encoder_[i].backward(p, tape.encoder[i], d, grads);
  }
  return d;
}

template <typename T>
void Generator::commit(ParameterStore<T>& p, const GeneratorTape<T>& tape) const {
  if (tape.phase != Phase::train) return;
  for (std::size_t i = 0; i < encoder_.size() && i < tape.encoder.size(); ++i)
    encoder_[i].commit(p, tape.encoder[i]);
  for (std::size_t j = 0; j < decoder_.size() && j < tape.decoder.size(); ++j)
    decoder_[j].commit(p, tape.decoder[j]);
}

// --- Discriminator ----------------------------------------------------------

Discriminator::Discriminator(const NetworkConfig& config, ParameterLayout& layout) : config_(config) {
  config.validate();
  const int m = config.base_filters;
  int channels = 3;
  int out = m;
  int size = config.image_size;
  for (int l = 0; size > 4; ++l, size /= 2) {
    const bool norm = l > 0 && config.batch_norm;
    convs_.emplace_back(layout, "discriminator.conv" + std::to_string(l), Group::discriminator,
                        channels, out, 4, 2, 1, !norm);
    if (l > 0 && config.batch_norm)
      norms_.emplace_back(layout, "discriminator.bn" + std::to_string(l), Group::discriminator, out);
    channels = out;
    out = std::min(2 * out, 8 * m);
  }
  final_ = Conv2d(layout, "discriminator.final", Group::discriminator, channels, 1, 4, 1, 0, true);
}

template <typename T>
Tensor<T> Discriminator::forward(const ParameterStore<T>& p, const Tensor<T>& x, Phase phase,
                                 DiscriminatorTape<T>* tape) const {
  require(x.c() == 3 && x.h() == config_.image_size && x.w() == config_.image_size,
          ErrorKind::shape_mismatch, "discriminator input " + to_string(x.shape()));
  const std::size_t layers = convs_.size();
  if (tape) {
    tape->phase = phase;
    tape->convs.assign(layers, {});
    tape->norms.assign(norms_.size(), {});
    tape->activations.assign(layers, {});
  }
  const T slope = static_cast<T>(kLeakySlope);
  Tensor<T> h = x;
  for (std::size_t l = 0; l < layers; ++l) {
    h = convs_[l].forward(p, h, tape ? &tape->convs[l] : nullptr);
    if (l > 0 && config_.batch_norm)
      h = norms_[l - 1].forward(p, h, phase, tape ? &tape->norms[l - 1] : nullptr);
    h = leaky_relu(h, slope);
    if (tape) tape->activations[l] = h;
  }
  Tensor<T> prob = sigmoid(final_.forward(p, h, tape ? &tape->final_conv : nullptr));
  if (tape) tape->probability = prob;
  return prob;
}

template <typename T>
Tensor<T> Discriminator::backward(const ParameterStore<T>& p, const DiscriminatorTape<T>& tape,
                                  const Tensor<T>& d_prob, Gradients<T>& grads) const {
  require_same_shape(d_prob.shape(), tape.probability.shape(), "discriminator output gradient");
  const T slope = static_cast<T>(kLeakySlope);
  Tensor<T> d = final_.backward(p, tape.final_conv, sigmoid_backward(tape.probability, d_prob), grads);
  for (std::size_t l = convs_.size(); l-- > 0;) {
    d = leaky_relu_backward(tape.activations[l], d, slope);
    if (l > 0 && config_.batch_norm) d = norms_[l - 1].backward(p, tape.norms[l - 1], d, grads);
    d = convs_[l].backward(p, tape.convs[l], d, grads);
  }
  return d;
}

template <typename T>
void Discriminator::commit(ParameterStore<T>& p, const DiscriminatorTape<T>& tape) const {
  if (tape.phase != Phase::train) return;
  for (std::size_t i = 0; i < norms_.size() && i < tape.norms.size(); ++i) norms_[i].commit(p, tape.norms[i]);
}

// --- Model ------------------------------------------------------------------

Model::Model(const NetworkConfig& config)
    : config_(config), generator_(config, layout_), discriminator_(config, layout_) {}

template <typename T>
ParameterStore<T> Model::init(std::uint64_t seed) const {
  ParameterStore<T> store(layout_);
  Rng rng(seed);
  for (ParamId id = 0; id < layout_.size(); ++id) {
    const ParamSpec& spec = layout_[id];
    Tensor<T>& v = store.value(id);
    switch (spec.kind) {
      case ParamKind::weight: {
        const double stddev = std::sqrt(2.0 / static_cast<double>(spec.fan_in));
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<T>(stddev * rng.normal());
        break;
      }
      case ParamKind::scale:
      case ParamKind::running_var:
        v.fill(T(1));
        break;
      default:
        v.fill(T(0));
        break;
    }
  }
  return store;
}

template <typename T>
void Model::check(const ParameterStore<T>& store) const {
  require(store.layout() == layout_, ErrorKind::shape_mismatch,
          "parameter store does not match the network configuration");
  for (ParamId id = 0; id < layout_.size(); ++id)
    require_same_shape(store.value(id).shape(), layout_[id].shape, layout_[id].name);
}

#define DEOCCL_INSTANTIATE(T)                                                                          \
  template Tensor<T> ResidualBlock::forward(const ParameterStore<T>&, const Tensor<T>&, Phase,        \
                                            ResidualCache<T>*) const;                                 \
  template Tensor<T> ResidualBlock::backward(const ParameterStore<T>&, const ResidualCache<T>&,       \
                                             const Tensor<T>&, Gradients<T>&) const;                  \
  template void ResidualBlock::commit(ParameterStore<T>&, const ResidualCache<T>&) const;             \
  template Tensor<T> fuse_features(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,             \
                                   const Tensor<T>&);                                                 \
  template Encoded<T> Generator::encode(const ParameterStore<T>&, const Tensor<T>&, Phase,           \
                                        GeneratorTape<T>*) const;                                     \
  template Tensor<T> Generator::decode_to_site(const ParameterStore<T>&, const Tensor<T>&, Phase,    \
                                               GeneratorTape<T>*) const;                              \
  template Fused<T> Generator::attention_fuse(const ParameterStore<T>&, const Tensor<T>&,            \
                                              const Tensor<T>&, GeneratorTape<T>*,                    \
                                              const AttentionMaps<T>*) const;                         \
  template Tensor<T> Generator::decode_from_site(const ParameterStore<T>&, const Tensor<T>&, Phase,  \
                                                 GeneratorTape<T>*) const;                            \
  template GeneratorOutput<T> Generator::forward(const ParameterStore<T>&, const Tensor<T>&,         \
                                                 ForwardMode, Phase, GeneratorTape<T>*) const;        \
  template Tensor<T> Generator::backward(const ParameterStore<T>&, const GeneratorTape<T>&,          \
                                         const Tensor<T>&, Gradients<T>&) const;                      \
  template void Generator::commit(ParameterStore<T>&, const GeneratorTape<T>&) const;                 \
  template Tensor<T> Discriminator::forward(const ParameterStore<T>&, const Tensor<T>&, Phase,       \
                                            DiscriminatorTape<T>*) const;                             \
  template Tensor<T> Discriminator::backward(const ParameterStore<T>&, const DiscriminatorTape<T>&,  \
                                             const Tensor<T>&, Gradients<T>&) const;                  \
  template void Discriminator::commit(ParameterStore<T>&, const DiscriminatorTape<T>&) const;         \
  template ParameterStore<T> Model::init(std::uint64_t) const;                                        \
  template void Model::check(const ParameterStore<T>&) const;

DEOCCL_INSTANTIATE(float)
DEOCCL_INSTANTIATE(double)
#undef DEOCCL_INSTANTIATE

}  // namespace deoccl
