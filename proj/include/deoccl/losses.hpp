#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "deoccl/tensor.hpp"

namespace deoccl {

enum class LossTerm : std::uint8_t { rec = 0, adv = 1, ssim = 2, mask = 3 };

std::string_view loss_term_name(LossTerm t);
std::optional<LossTerm> parse_loss_term(std::string_view name);

class LossSet {
 public:
  constexpr LossSet() = default;
  constexpr LossSet(std::initializer_list<LossTerm> terms) {
    for (LossTerm t : terms) insert(t);
  }
  constexpr void insert(LossTerm t) { bits_ |= bit(t); }
  constexpr bool contains(LossTerm t) const { return (bits_ & bit(t)) != 0; }
  constexpr bool includes(LossSet other) const { return (bits_ & other.bits_) == other.bits_; }
  constexpr std::uint8_t bits() const { return bits_; }
  static constexpr LossSet from_bits(std::uint8_t b) {
    LossSet s;
    s.bits_ = b & 0x0f;
    return s;
  }
  constexpr bool operator==(const LossSet&) const = default;

 private:
  static constexpr std::uint8_t bit(LossTerm t) {
    return static_cast<std::uint8_t>(1u << static_cast<unsigned>(t));
  }
  std::uint8_t bits_ = 0;
};

// "rec+adv+ssim" style, in rec, adv, ssim, mask order.
std::string to_string(LossSet s);

struct LossWeights {
  double rec = 1.0;
  double adv = 0.25;
  double ssim = 60.0;
  double mask = 1.0;

  void validate() const;
  bool operator==(const LossWeights&) const = default;
};

inline constexpr double kProbabilityEpsilon = 1e-7;

// Loss value with its gradient w.r.t. the first argument (x_rec).
template <typename T>
struct LossValue {
  double value = 0.0;
  Tensor<T> grad;
};

// mean |x_gt - x_rec| over all elements.
template <typename T>
LossValue<T> rec_loss(const Tensor<T>& x_rec, const Tensor<T>& x_gt);

// mean |m * x_gt - m * x_rec| over all elements; mask is N x 1 x H x W,
// broadcast across channels, values in {0, 1}.
template <typename T>
LossValue<T> mask_loss(const Tensor<T>& x_rec, const Tensor<T>& x_gt, const Tensor<T>& mask);

// 1 - mean SSIM of signed-range inputs (mapped to unit range first).
template <typename T>
LossValue<T> ssim_loss(const Tensor<T>& x_rec, const Tensor<T>& x_gt);

template <typename T>
struct AdversarialValue {
  double value = 0.0;
  Tensor<T> d_real;
  Tensor<T> d_fake;
};

// Batch mean of -[log p_real + log(1 - p_fake)]; probabilities are clamped to
// [eps, 1 - eps] and clamped entries get zero gradient.
template <typename T>
AdversarialValue<T> adv_loss_d(const Tensor<T>& p_real, const Tensor<T>& p_fake);
// Batch mean of -log p_fake (non-saturating generator loss).
template <typename T>
LossValue<T> adv_loss_g(const Tensor<T>& p_fake);

double adv_loss_d(double p_real, double p_fake);
double adv_loss_g(double p_fake);

struct LossParts {
  std::optional<double> rec;
  std::optional<double> adv_g;
  std::optional<double> adv_d;
  std::optional<double> ssim;
  std::optional<double> mask;
};

struct LossBreakdown {
  LossParts parts;
  double total = 0.0;
  LossSet active;

  static std::string csv_header();
  // Absent terms are written as empty fields.
  std::string csv_row(std::uint64_t step, std::string_view stage) const;
};

// total = sum of weight * value over the active generator terms. Throws
// precondition when an active term has no value.
LossBreakdown total_loss(const LossParts& parts, const LossWeights& weights, LossSet active);

}  // namespace deoccl
