#include "deoccl/losses.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <vector>

#include "deoccl/metrics.hpp"

namespace deoccl {

std::string_view loss_term_name(LossTerm t) {
  switch (t) {
    case LossTerm::rec: return "rec";
    case LossTerm::adv: return "adv";
    case LossTerm::ssim: return "ssim";
    case LossTerm::mask: return "mask";
  }
  return "?";
}

std::optional<LossTerm> parse_loss_term(std::string_view name) {
  for (LossTerm t : {LossTerm::rec, LossTerm::adv, LossTerm::ssim, LossTerm::mask})
    if (loss_term_name(t) == name) return t;
  return std::nullopt;
}

std::string to_string(LossSet s) {
  std::string out;
  for (LossTerm t : {LossTerm::rec, LossTerm::adv, LossTerm::ssim, LossTerm::mask}) {
    if (!s.contains(t)) continue;
    if (!out.empty()) out += '+';
    out += loss_term_name(t);
  }
  return out.empty() ? "none" : out;
}

void LossWeights::validate() const {
  require(rec >= 0 && adv >= 0 && ssim >= 0 && mask >= 0, ErrorKind::config, "loss weights must be >= 0");
}

namespace {

template <typename T>
T sign(T v) {
  return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0));
}

template <typename T>
T clamp_probability(T p) {
  return std::clamp(p, T(kProbabilityEpsilon), T(1.0 - kProbabilityEpsilon));
}

template <typename T>
bool clamped(T p) {
  return p < T(kProbabilityEpsilon) || p > T(1.0 - kProbabilityEpsilon);
}

}  // namespace

template <typename T>
LossValue<T> rec_loss(const Tensor<T>& x_rec, const Tensor<T>& x_gt) {
  require_same_shape(x_rec.shape(), x_gt.shape(), "rec_loss");
  LossValue<T> out{0.0, Tensor<T>(x_rec.shape())};
  const double n = static_cast<double>(x_rec.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < x_rec.size(); ++i) {
    const T d = x_rec[i] - x_gt[i];
    sum += std::abs(static_cast<double>(d));
    out.grad[i] = static_cast<T>(sign(d) / n);
  }
  out.value = sum / n;
  return out;
}

template <typename T>
LossValue<T> mask_loss(const Tensor<T>& x_rec, const Tensor<T>& x_gt, const Tensor<T>& mask) {
  require_same_shape(x_rec.shape(), x_gt.shape(), "mask_loss");
  const Shape4& s = x_rec.shape();
  require(mask.n() == s.n && mask.c() == 1 && mask.h() == s.h && mask.w() == s.w, ErrorKind::shape_mismatch,
          "mask_loss: mask " + to_string(mask.shape()) + " does not match " + to_string(s));
  for (std::size_t i = 0; i < mask.size(); ++i)
    require(mask[i] == T(0) || mask[i] == T(1), ErrorKind::invalid_mask, "mask_loss: mask is not binary");
  LossValue<T> out{0.0, Tensor<T>(s)};
  const double n = static_cast<double>(x_rec.size());
  double sum = 0.0;
  for (int b = 0; b < s.n; ++b)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x) {
          const T m = mask.at(b, 0, y, x);
          const T d = m * x_gt.at(b, c, y, x) - m * x_rec.at(b, c, y, x);
          sum += std::abs(static_cast<double>(d));
          out.grad.at(b, c, y, x) = static_cast<T>(-m * sign(d) / n);
        }
  out.value = sum / n;
  return out;
}

template <typename T>
LossValue<T> ssim_loss(const Tensor<T>& x_rec, const Tensor<T>& x_gt) {
  require_same_shape(x_rec.shape(), x_gt.shape(), "ssim_loss");
  const Shape4& s = x_rec.shape();
  const std::size_t plane = s.plane();
  const int planes = s.n * s.c;
  LossValue<T> out{0.0, Tensor<T>(s)};
  double total = 0.0;
  std::vector<double> a(plane), b(plane), grad;
  for (int p = 0; p < planes; ++p) {
    const T* ra = x_rec.data() + p * plane;
    const T* rb = x_gt.data() + p * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      a[i] = static_cast<double>((ra[i] + T(1)) * T(0.5));
      b[i] = static_cast<double>((rb[i] + T(1)) * T(0.5));
    }
    total += ssim_plane(a, b, s.h, s.w, {}, nullptr, &grad);
    T* g = out.grad.data() + p * plane;
    // d(1 - mean)/dx = -(1/planes) d(plane mean)/du * du/dx, du/dx = 1/2
    for (std::size_t i = 0; i < plane; ++i) g[i] = static_cast<T>(-0.5 * grad[i] / planes);
  }
  out.value = 1.0 - total / planes;
  return out;
}

template <typename T>
AdversarialValue<T> adv_loss_d(const Tensor<T>& p_real, const Tensor<T>& p_fake) {
  require_same_shape(p_real.shape(), p_fake.shape(), "adv_loss_d");
  AdversarialValue<T> out{0.0, Tensor<T>(p_real.shape()), Tensor<T>(p_fake.shape())};
  const double n = static_cast<double>(p_real.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < p_real.size(); ++i) {
    const double r = clamp_probability(static_cast<double>(p_real[i]));
    const double f = clamp_probability(static_cast<double>(p_fake[i]));
    sum += -(std::log(r) + std::log(1.0 - f));
    out.d_real[i] = clamped(p_real[i]) ? T(0) : static_cast<T>(-1.0 / (r * n));
    out.d_fake[i] = clamped(p_fake[i]) ? T(0) : static_cast<T>(1.0 / ((1.0 - f) * n));
  }
  out.value = sum / n;
  return out;
}

template <typename T>
LossValue<T> adv_loss_g(const Tensor<T>& p_fake) {
  LossValue<T> out{0.0, Tensor<T>(p_fake.shape())};
  const double n = static_cast<double>(p_fake.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < p_fake.size(); ++i) {
    const double f = clamp_probability(static_cast<double>(p_fake[i]));
    sum += -std::log(f);
    out.grad[i] = clamped(p_fake[i]) ? T(0) : static_cast<T>(-1.0 / (f * n));
  }
  out.value = sum / n;
  return out;
}

double adv_loss_d(double p_real, double p_fake) {
  return -(std::log(clamp_probability(p_real)) + std::log(1.0 - clamp_probability(p_fake)));
}

double adv_loss_g(double p_fake) { return -std::log(clamp_probability(p_fake)); }

std::string LossBreakdown::csv_header() { return "step,stage,rec,adv_g,adv_d,ssim,mask,total"; }

std::string LossBreakdown::csv_row(std::uint64_t step, std::string_view stage) const {
  std::string row = std::to_string(step) + "," + std::string(stage);
  char buf[40];
  for (const auto& v : {parts.rec, parts.adv_g, parts.adv_d, parts.ssim, parts.mask}) {
    row += ',';
    if (v) {
      std::snprintf(buf, sizeof buf, "%.9g", *v);
      row += buf;
    }
  }
  std::snprintf(buf, sizeof buf, ",%.9g", total);
  return row + buf;
}

LossBreakdown total_loss(const LossParts& parts, const LossWeights& weights, LossSet active) {
  weights.validate();
  auto need = [&](LossTerm t, const std::optional<double>& v) {
    require(!active.contains(t) || v.has_value(), ErrorKind::precondition,
            "active loss term '" + std::string(loss_term_name(t)) + "' has no value");
  };
  need(LossTerm::rec, parts.rec);
  need(LossTerm::adv, parts.adv_g);
  need(LossTerm::ssim, parts.ssim);
  need(LossTerm::mask, parts.mask);

  LossBreakdown out;
  out.active = active;
  if (active.contains(LossTerm::rec)) {
    out.parts.rec = parts.rec;
    out.total += weights.rec * *parts.rec;
  }
  if (active.contains(LossTerm::adv)) {
    out.parts.adv_g = parts.adv_g;
    out.parts.adv_d = parts.adv_d;
    out.total += weights.adv * *parts.adv_g;
  }
  if (active.contains(LossTerm::ssim)) {
    out.parts.ssim = parts.ssim;
    out.total += weights.ssim * *parts.ssim;
  }
  if (active.contains(LossTerm::mask)) {
    out.parts.mask = parts.mask;
    out.total += weights.mask * *parts.mask;
  }
  return out;
}

#define DEOCCL_INSTANTIATE(T)                                                                   \
  template LossValue<T> rec_loss<T>(const Tensor<T>&, const Tensor<T>&);                        \
  template LossValue<T> mask_loss<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);     \
  template LossValue<T> ssim_loss<T>(const Tensor<T>&, const Tensor<T>&);                       \
  template AdversarialValue<T> adv_loss_d<T>(const Tensor<T>&, const Tensor<T>&);               \
  template LossValue<T> adv_loss_g<T>(const Tensor<T>&);

DEOCCL_INSTANTIATE(float)
DEOCCL_INSTANTIATE(double)
#undef DEOCCL_INSTANTIATE

}  // namespace deoccl
