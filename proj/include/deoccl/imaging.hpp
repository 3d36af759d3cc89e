#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "deoccl/tensor.hpp"

namespace deoccl {

// unit: values in [0, 1]; signed_unit: values in [-1, 1].
enum class ValueRange { unit, signed_unit };

std::string to_string(ValueRange r);

// C x H x W image, channel-planar, R,G,B channel order.
class ImageTensor {
 public:
  ImageTensor() = default;
  ImageTensor(int channels, int height, int width, ValueRange range, float fill = 0.0f);

  int channels() const { return channels_; }
  int height() const { return height_; }
  int width() const { return width_; }
  ValueRange range() const { return range_; }
  std::size_t size() const { return data_.size(); }

  float& at(int c, int y, int x) { return data_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x]; }
  float at(int c, int y, int x) const { return data_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x]; }
  std::span<float> values() { return data_; }
  std::span<const float> values() const { return data_; }

  float range_min() const { return range_ == ValueRange::unit ? 0.0f : -1.0f; }
  float range_max() const { return 1.0f; }

  // Channels in {1, 3} and every value inside the declared range.
  void validate() const;
  // Additionally height, width >= 8 and divisible by 4.
  void validate_for_network() const;

  bool operator==(const ImageTensor&) const = default;

 private:
  int channels_ = 0;
  int height_ = 0;
  int width_ = 0;
  ValueRange range_ = ValueRange::unit;
  std::vector<float> data_;
};

ImageTensor to_range(const ImageTensor& img, ValueRange target);

// 1 x H x W image whose values are exactly 0 or 1; 1 marks occluded pixels.
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(int height, int width, float fill = 0.0f);

  int height() const { return height_; }
  int width() const { return width_; }
  float& at(int y, int x) { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  float at(int y, int x) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  std::span<const float> values() const { return data_; }
  std::span<float> values() { return data_; }

  std::size_t count_set() const;
  void validate() const;

  bool operator==(const BinaryMask&) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<float> data_;
};

// Decodes an 8-bit RGB or grayscale PNG. v in [0,255] maps to v/255 (unit)
// or 2v/255 - 1 (signed). Errors: file_missing, decode_failed,
// unsupported_format (bit depth other than 8, alpha channel).
ImageTensor load_image(const std::filesystem::path& path, ValueRange range);
void save_image(const ImageTensor& img, const std::filesystem::path& path);

// Single-channel PNG: 255 -> 1, 0 -> 0, anything else is invalid_mask.
BinaryMask load_mask(const std::filesystem::path& path);
void save_mask(const BinaryMask& mask, const std::filesystem::path& path);

struct Rect {
  int x = 0;
  int y = 0;
  int width = 0;
  int height = 0;
  bool operator==(const Rect&) const = default;
};

// Crops face_box (or the centred largest square) and resamples it to
// target x target with corner-aligned bilinear interpolation.
ImageTensor resize_crop(const ImageTensor& img, int target, std::optional<Rect> face_box = std::nullopt,
                        bool allow_upscale = true);
BinaryMask resize_crop_mask(const BinaryMask& mask, int target, std::optional<Rect> face_box = std::nullopt);

// fill where mask = 1, gt elsewhere.
ImageTensor apply_occlusion(const ImageTensor& gt, const BinaryMask& mask, float fill);

// Stacks images (all the same extent) into an N x C x H x W batch.
template <typename T>
Tensor<T> stack_images(std::span<const ImageTensor* const> images);
template <typename T>
Tensor<T> stack_masks(std::span<const BinaryMask* const> masks);
// Extracts sample n, clamping into the range to absorb arithmetic round-off.
template <typename T>
ImageTensor unstack_image(const Tensor<T>& batch, int n, ValueRange range);

}  // namespace deoccl
