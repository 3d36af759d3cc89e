#include <cmath>

#include "deoccl/kernels.hpp"
#include "deoccl/network.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace deoccl;
using testing_support::random_tensor;
using testing_support::relative_error;

namespace {

NetworkConfig tiny_config(bool batch_norm = true) { return NetworkConfig::scaled(16, 4, 8, batch_norm); }

ParamId param(const Model& model, const std::string& name) {
  const auto id = model.layout().find(name);
  REQUIRE(id.has_value());
  return *id;
}

// Scalar loop over every element: a * b + c * d.
Tensor<double> fuse_oracle(const Tensor<double>& fe, const Tensor<double>& fd, const Tensor<double>& ae,
                           const Tensor<double>& ad) {
  Tensor<double> out(fe.shape());
  for (int n = 0; n < fe.n(); ++n)
    for (int c = 0; c < fe.c(); ++c)
      for (int y = 0; y < fe.h(); ++y)
        for (int x = 0; x < fe.w(); ++x)
          out.at(n, c, y, x) = fe.at(n, c, y, x) * ae.at(n, c, y, x) + fd.at(n, c, y, x) * ad.at(n, c, y, x);
  return out;
}

// Finite-difference step for the network checks: small enough for ReLU kinks,
// large enough that roundoff in the O(10) weighted loss stays negligible.
constexpr double kStep = 1e-5;

// Picks up to `count` evenly spaced element indices of a tensor.
std::vector<std::size_t> probe_indices(std::size_t size, std::size_t count) {
  std::vector<std::size_t> out;
  const std::size_t stride = std::max<std::size_t>(1, size / count);
  for (std::size_t i = 0; i < size && out.size() < count; i += stride) out.push_back(i);
  return out;
}

double weighted_sum(const Tensor<double>& y, const Tensor<double>& w) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * w[i];
  return s;
}

}  // namespace

TEST_CASE("network config validation") {
  NetworkConfig c = NetworkConfig::scaled(64, 8, 99);
  CHECK(c.attention_site_size == 16);
  CHECK(c.encoder_depth == 4);
  CHECK(c.deepest_size() == 4);
  CHECK_NOTHROW(c.validate());
  c.attention_site_size = 32;
  CHECK_THROWS_AS(c.validate(), Error);
  NetworkConfig d;
  CHECK_NOTHROW(d.validate());
  CHECK(d.deepest_size() == 4);
  d.mask_input_channel = true;
  CHECK_THROWS_AS(d.validate(), Error);
  NetworkConfig e = NetworkConfig::scaled(64, 8, 99);
  e.image_size = 62;
  CHECK_THROWS_AS(e.validate(), Error);
}

TEST_CASE("parameter groups") {
  const Model model(tiny_config());
  const auto p = model.init<float>(1);
  for (Group g : kAllGroups) CHECK(p.parameter_count(g) > 0);
  CHECK(group_name(Group::attention) == "attention");
  CHECK(parse_group("discriminator") == Group::discriminator);
  CHECK_FALSE(parse_group("head").has_value());
  for (const auto& spec : model.layout().specs())
    if (spec.name.rfind("attention.", 0) == 0) CHECK(spec.group == Group::attention);
}

TEST_CASE("shapes follow the configuration") {
  for (int size : {16, 32, 64}) {
    for (int m : {2, 4}) {
      const NetworkConfig c = NetworkConfig::scaled(size, m, 7);
      const Model model(c);
      const auto p = model.init<float>(3);
      const auto x = random_tensor<float>({2, 3, size, size}, 4);
      const Generator& g = model.generator();
      const auto enc = g.encode(p, x);
      CHECK(enc.z.shape() == Shape4{2, 7, 1, 1});
      CHECK(enc.f_enc.shape() == Shape4{2, m, size / 4, size / 4});
      const auto f_dec = g.decode_to_site(p, enc.z);
      CHECK(f_dec.shape() == enc.f_enc.shape());
      const auto fused = g.attention_fuse(p, enc.f_enc, f_dec);
      CHECK(fused.f_fused.shape() == enc.f_enc.shape());
      CHECK(fused.maps.attn_enc.shape() == enc.f_enc.shape());
      const auto out = g.forward(p, x, ForwardMode::attention);
      CHECK(out.x_rec.shape() == Shape4{2, 3, size, size});
      CHECK(out.maps.has_value());
      CHECK_FALSE(g.forward(p, x, ForwardMode::bypass).maps.has_value());
      for (float v : out.x_rec.values()) CHECK((v >= -1.0f && v <= 1.0f));
      const auto prob = model.discriminator().forward(p, x);
      CHECK(prob.shape() == Shape4{2, 1, 1, 1});
      for (float v : prob.values()) CHECK((v > 0.0f && v < 1.0f));
    }
  }
}

TEST_CASE("decoding to the attention site") {
  const Model model(NetworkConfig::scaled(32, 4, 6));
  const auto p = model.init<float>(2);
  const Tensor<float> zero({1, 6, 1, 1});
  const auto f0 = model.generator().decode_to_site(p, zero);
  CHECK(f0.shape() == Shape4{1, 4, 8, 8});
  for (float v : f0.values()) CHECK(std::isfinite(v));
  const auto f1 = model.generator().decode_to_site(p, random_tensor<float>({1, 6, 1, 1}, 3));
  CHECK_FALSE(std::equal(f0.values().begin(), f0.values().end(), f1.values().begin()));
  CHECK_THROWS_AS(model.generator().decode_to_site(p, Tensor<float>({1, 5, 1, 1})), Error);
  CHECK(NetworkConfig().attention_site_size == 64);
}

TEST_CASE("generator rejects the wrong input size") {
  const Model model(tiny_config());
  const auto p = model.init<float>(1);
  const auto x = random_tensor<float>({1, 3, 32, 32}, 1);
  CHECK_THROWS_AS(model.generator().forward(p, x, ForwardMode::attention), Error);
}

TEST_CASE("forward is deterministic") {
  const Model model(NetworkConfig::scaled(32, 4, 16));
  const auto p = model.init<float>(5);
  const auto x = random_tensor<float>({3, 3, 32, 32}, 6);
  for (Phase phase : {Phase::train, Phase::inference}) {
    const auto a = model.generator().forward(p, x, ForwardMode::attention, phase).x_rec;
    const auto b = model.generator().forward(p, x, ForwardMode::attention, phase).x_rec;
    CHECK(std::equal(a.values().begin(), a.values().end(), b.values().begin()));
  }
  const auto q = model.init<float>(5);
  CHECK(q.checksum() == p.checksum());
  CHECK(model.init<float>(6).checksum() != p.checksum());
}

TEST_CASE("bypass mode ignores attention parameters") {
  const Model model(tiny_config());
  auto p = model.init<float>(7);
  const auto x = random_tensor<float>({2, 3, 16, 16}, 8);
  const auto before = model.generator().forward(p, x, ForwardMode::bypass).x_rec;
  const auto attn_before = model.generator().forward(p, x, ForwardMode::attention).x_rec;
  Rng rng(9);
  for (ParamId id = 0; id < model.layout().size(); ++id)
    if (model.layout()[id].group == Group::attention)
      for (float& v : p.value(id).values()) v += static_cast<float>(rng.normal());
  const auto after = model.generator().forward(p, x, ForwardMode::bypass).x_rec;
  const auto attn_after = model.generator().forward(p, x, ForwardMode::attention).x_rec;
  CHECK(std::equal(before.values().begin(), before.values().end(), after.values().begin()));
  CHECK_FALSE(std::equal(attn_before.values().begin(), attn_before.values().end(), attn_after.values().begin()));
}

TEST_CASE("attention fusion matches the scalar loop") {
  const Shape4 s{2, 3, 4, 4};
  for (int trial = 0; trial < 50; ++trial) {
    const auto fe = random_tensor<double>(s, 100 + trial);
    const auto fd = random_tensor<double>(s, 200 + trial);
    const auto ae = random_tensor<double>(s, 300 + trial, -2, 2);
    const auto ad = random_tensor<double>(s, 400 + trial, -2, 2);
    const auto got = fuse_features(fe, fd, ae, ad);
    const auto want = fuse_oracle(fe, fd, ae, ad);
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(relative_error(got[i], want[i], 1e-12) < 1e-6);
  }
}

TEST_CASE("attention maps come from four convolutions over the concatenation") {
  const NetworkConfig c = NetworkConfig::scaled(16, 3, 5);
  const Model model(c);
  const auto p = model.init<double>(11);
  const Shape4 s{2, 3, 4, 4};
  const auto fe = random_tensor<double>(s, 12);
  const auto fd = random_tensor<double>(s, 13);
  const auto fused = model.generator().attention_fuse(p, fe, fd);

  // Independent evaluation with the serial reference convolution.
  Tensor<double> h = concat_channels(fe, fd);
  const int plan[5] = {6, 12, 12, 24, 6};
  for (int l = 0; l < 4; ++l) {
    const ConvGeometry g{plan[l], 4, 4, plan[l + 1], 3, 1, 1};
    const std::string name = "attention.conv" + std::to_string(l);
    Tensor<double> y = reference::conv_forward(h, p.data(param(model, name + ".weight")), g);
    const auto& bias = p.value(param(model, name + ".bias"));
    for (int n = 0; n < y.n(); ++n)
      for (int ch = 0; ch < y.c(); ++ch)
        for (int i = 0; i < 16; ++i) {
          double& v = y[(static_cast<std::size_t>(n) * y.c() + ch) * 16 + i];
          v += bias[ch];
          if (l < 3) v = std::max(0.0, v);
        }
    h = y;
  }
  const auto [ae, ad] = split_channels(h, 3);
  const auto want = fuse_oracle(fe, fd, ae, ad);
  for (std::size_t i = 0; i < want.size(); ++i) CHECK(relative_error(fused.f_fused[i], want[i], 1e-12) < 1e-6);

  const AttentionMaps<double> decoder_only{Tensor<double>(s, 0.0), Tensor<double>(s, 1.0)};
  const auto dec = model.generator().attention_fuse<double>(p, fe, fd, nullptr, &decoder_only);
  CHECK(std::equal(dec.f_fused.values().begin(), dec.f_fused.values().end(), fd.values().begin()));

  const AttentionMaps<double> identity{Tensor<double>(s, 1.0), Tensor<double>(s, 0.0)};
  const auto forced = model.generator().attention_fuse<double>(p, fe, fd, nullptr, &identity);
  CHECK(std::equal(forced.f_fused.values().begin(), forced.f_fused.values().end(), fe.values().begin()));
}

TEST_CASE("generator gradients match finite differences") {
  const Model model(tiny_config());
  auto p = model.init<double>(21);
  auto x = random_tensor<double>({2, 3, 16, 16}, 22);
  const auto weights = random_tensor<double>({2, 3, 16, 16}, 23);
  for (ForwardMode mode : {ForwardMode::attention, ForwardMode::bypass}) {
    CAPTURE(to_string(mode));
    const Generator& g = model.generator();
    GeneratorTape<double> tape;
    g.forward(p, x, mode, Phase::train, &tape);
    Gradients<double> grads(model.layout());
    const Tensor<double> dx = g.backward(p, tape, weights, grads);
    auto loss = [&] { return weighted_sum(g.forward(p, x, mode, Phase::train).x_rec, weights); };

    int checked = 0, worst_id = -1;
    double worst = 0.0;
    for (ParamId id = 0; id < model.layout().size(); ++id) {
      const ParamSpec& spec = model.layout()[id];
      if (!is_learnable(spec.kind) || spec.group == Group::discriminator) continue;
      if (mode == ForwardMode::bypass && spec.group == Group::attention) {
        for (double v : grads[id].values()) CHECK(v == 0.0);
        continue;
      }
      for (std::size_t i : probe_indices(spec.shape.size(), 3)) {
        const double numeric = testing_support::central_difference<double>(p.value(id), i, kStep, loss);
        const double err = relative_error(grads[id][i], numeric, 1e-7);
        if (err > worst) worst = err, worst_id = static_cast<int>(id);
        ++checked;
      }
    }
    for (std::size_t i : probe_indices(x.size(), 24)) {
      const double numeric = testing_support::central_difference<double>(x, i, kStep, loss);
      worst = std::max(worst, relative_error(dx[i], numeric, 1e-7));
    }
    CAPTURE(worst_id >= 0 ? model.layout()[worst_id].name : std::string("input"));
    CHECK(checked > 50);
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("discriminator gradients match finite differences") {
  const Model model(tiny_config());
  auto p = model.init<double>(31);
  auto x = random_tensor<double>({3, 3, 16, 16}, 32);
  const auto weights = random_tensor<double>({3, 1, 1, 1}, 33);
  const Discriminator& d = model.discriminator();
  DiscriminatorTape<double> tape;
  d.forward(p, x, Phase::train, &tape);
  Gradients<double> grads(model.layout());
  const Tensor<double> dx = d.backward(p, tape, weights, grads);
  auto loss = [&] { return weighted_sum(d.forward(p, x, Phase::train), weights); };
  double worst = 0.0;
  for (ParamId id = 0; id < model.layout().size(); ++id) {
    const ParamSpec& spec = model.layout()[id];
    if (!is_learnable(spec.kind) || spec.group != Group::discriminator) continue;
    for (std::size_t i : probe_indices(spec.shape.size(), 6))
      worst = std::max(worst, relative_error(grads[id][i],
                                             testing_support::central_difference<double>(p.value(id), i, kStep, loss),
                                             1e-7));
  }
  for (std::size_t i : probe_indices(x.size(), 24))
    worst = std::max(worst, relative_error(dx[i], testing_support::central_difference<double>(x, i, kStep, loss), 1e-7));
  CHECK(worst < 1e-4);
}

TEST_CASE("model check rejects a store from another configuration") {
  const Model small(NetworkConfig::scaled(16, 4, 8));
  const Model other(NetworkConfig::scaled(32, 4, 8));
  CHECK_NOTHROW(small.check(small.init<float>(1)));
  try {
    small.check(other.init<float>(1));
    FAIL("expected a shape mismatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::shape_mismatch);
  }
}

TEST_CASE("batch norm commit moves running statistics only in train phase") {
  const Model model(tiny_config());
  auto p = model.init<float>(41);
  const auto x = random_tensor<float>({2, 3, 16, 16}, 42);
  const auto before = p.checksum();
  GeneratorTape<float> infer_tape;
  model.generator().forward(p, x, ForwardMode::attention, Phase::inference, &infer_tape);
  model.generator().commit(p, infer_tape);
  CHECK(p.checksum() == before);
  GeneratorTape<float> tape;
  model.generator().forward(p, x, ForwardMode::attention, Phase::train, &tape);
  model.generator().commit(p, tape);
  CHECK(p.checksum() != before);
  CHECK(p.checksum(Group::attention) == model.init<float>(41).checksum(Group::attention));
}
