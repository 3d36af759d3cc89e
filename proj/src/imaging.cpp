#include "deoccl/imaging.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>

namespace deoccl {

namespace fs = std::filesystem;

std::string to_string(ValueRange r) { return r == ValueRange::unit ? "unit" : "signed"; }

ImageTensor::ImageTensor(int channels, int height, int width, ValueRange range, float fill)
    : channels_(channels), height_(height), width_(width), range_(range),
      data_(static_cast<std::size_t>(channels) * height * width, fill) {}

void ImageTensor::validate() const {
  require(channels_ == 1 || channels_ == 3, ErrorKind::shape_mismatch,
          "image must have 1 or 3 channels, got " + std::to_string(channels_));
  const float lo = range_min();
  const float hi = range_max();
  for (float v : data_)
    require(v >= lo && v <= hi, ErrorKind::numeric,
            "image value " + std::to_string(v) + " outside " + to_string(range_) + " range");
}

void ImageTensor::validate_for_network() const {
  validate();
  require(height_ >= 8 && width_ >= 8 && height_ % 4 == 0 && width_ % 4 == 0,
          ErrorKind::shape_mismatch,
          "image extent " + std::to_string(height_) + "x" + std::to_string(width_) +
              " must be >= 8 and divisible by 4");
}

ImageTensor to_range(const ImageTensor& img, ValueRange target) {
  if (img.range() == target) return img;
  ImageTensor out(img.channels(), img.height(), img.width(), target);
  auto src = img.values();
  auto dst = out.values();
  if (target == ValueRange::unit) {
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = std::clamp((src[i] + 1.0f) * 0.5f, 0.0f, 1.0f);
  } else {
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = std::clamp(src[i] * 2.0f - 1.0f, -1.0f, 1.0f);
  }
  return out;
}

BinaryMask::BinaryMask(int height, int width, float fill)
    : height_(height), width_(width), data_(static_cast<std::size_t>(height) * width, fill) {}

std::size_t BinaryMask::count_set() const {
  return static_cast<std::size_t>(std::count(data_.begin(), data_.end(), 1.0f));
}

void BinaryMask::validate() const {
  for (float v : data_)
    require(v == 0.0f || v == 1.0f, ErrorKind::invalid_mask,
            "mask value " + std::to_string(v) + " is not 0 or 1");
}

namespace {

struct PngHeader {
  int width = 0;
  int height = 0;
  int bit_depth = 0;
  int color_type = 0;
};

PngHeader read_png_header(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::file_missing, "cannot open " + path.string());
  std::array<unsigned char, 29> buf{};
  in.read(reinterpret_cast<char*>(buf.data()), buf.size());
  static constexpr unsigned char kSignature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  require(in.gcount() == static_cast<std::streamsize>(buf.size()) &&
              std::equal(std::begin(kSignature), std::end(kSignature), buf.begin()) &&
              std::equal(buf.begin() + 12, buf.begin() + 16, "IHDR"),
          ErrorKind::decode_failed, path.string() + ": not a PNG file");
  auto be32 = [&](int off) {
    return (buf[off] << 24) | (buf[off + 1] << 16) | (buf[off + 2] << 8) | buf[off + 3];
  };
  return {be32(16), be32(20), buf[24], buf[25]};
}

std::vector<unsigned char> decode_png(const fs::path& path, bool gray, int& width, int& height) {
  require(fs::exists(path), ErrorKind::file_missing, "no such file: " + path.string());
  const PngHeader header = read_png_header(path);
  require(header.bit_depth == 8, ErrorKind::unsupported_format,
          path.string() + ": unsupported bit depth " + std::to_string(header.bit_depth) +
              " (only 8-bit PNG is supported)");
  require(header.color_type == PNG_COLOR_TYPE_GRAY || header.color_type == PNG_COLOR_TYPE_RGB ||
              header.color_type == PNG_COLOR_TYPE_PALETTE,
          ErrorKind::unsupported_format, path.string() + ": PNG with alpha channel is not supported");

  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str()))
    fail(ErrorKind::decode_failed, path.string() + ": " + image.message);
  image.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  std::vector<unsigned char> pixels(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, pixels.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    fail(ErrorKind::decode_failed, path.string() + ": " + msg);
  }
  width = static_cast<int>(image.width);
  height = static_cast<int>(image.height);
  return pixels;
}

void encode_png(const fs::path& path, const std::vector<unsigned char>& pixels, int width, int height,
                bool gray) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, pixels.data(), 0, nullptr))
    fail(ErrorKind::write_failed, "cannot write " + path.string() + ": " + image.message);
}

unsigned char quantize(float unit_value) {
  return static_cast<unsigned char>(std::lround(std::clamp(unit_value, 0.0f, 1.0f) * 255.0f));
}

}  // namespace

ImageTensor load_image(const fs::path& path, ValueRange range) {
  require(fs::exists(path), ErrorKind::file_missing, "no such file: " + path.string());
  const PngHeader header = read_png_header(path);
  const bool gray = header.color_type == PNG_COLOR_TYPE_GRAY;
  int width = 0, height = 0;
  const auto pixels = decode_png(path, gray, width, height);
  const int channels = gray ? 1 : 3;
  ImageTensor img(channels, height, width, range);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < channels; ++c) {
        const float v = pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
        img.at(c, y, x) = range == ValueRange::unit ? v / 255.0f : 2.0f * v / 255.0f - 1.0f;
      }
  return img;
}

void save_image(const ImageTensor& img, const fs::path& path) {
  img.validate();
  const int channels = img.channels();
  std::vector<unsigned char> pixels(static_cast<std::size_t>(img.width()) * img.height() * channels);
  const bool is_signed = img.range() == ValueRange::signed_unit;
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < channels; ++c) {
        const float v = img.at(c, y, x);
        pixels[(static_cast<std::size_t>(y) * img.width() + x) * channels + c] =
            quantize(is_signed ? (v + 1.0f) * 0.5f : v);
      }
  encode_png(path, pixels, img.width(), img.height(), channels == 1);
}

BinaryMask load_mask(const fs::path& path) {
  require(fs::exists(path), ErrorKind::file_missing, "no such file: " + path.string());
  const PngHeader header = read_png_header(path);
  require(header.color_type == PNG_COLOR_TYPE_GRAY, ErrorKind::invalid_mask,
          path.string() + ": mask must be a single-channel PNG");
  int width = 0, height = 0;
  const auto pixels = decode_png(path, true, width, height);
  BinaryMask mask(height, width);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const unsigned char v = pixels[static_cast<std::size_t>(y) * width + x];
      require(v == 0 || v == 255, ErrorKind::invalid_mask,
              path.string() + ": mask pixel value " + std::to_string(v) + " is not 0 or 255");
      mask.at(y, x) = v == 255 ? 1.0f : 0.0f;
    }
  return mask;
}

void save_mask(const BinaryMask& mask, const fs::path& path) {
  mask.validate();
  std::vector<unsigned char> pixels(static_cast<std::size_t>(mask.width()) * mask.height());
  for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = mask.values()[i] == 1.0f ? 255 : 0;
  encode_png(path, pixels, mask.width(), mask.height(), true);
}

namespace {

Rect crop_region(int height, int width, std::optional<Rect> face_box) {
  if (face_box) {
    const Rect& b = *face_box;
    require(b.width > 0 && b.height > 0 && b.x >= 0 && b.y >= 0 && b.x + b.width <= width &&
                b.y + b.height <= height,
            ErrorKind::precondition, "face box lies outside the image");
    return b;
  }
  const int side = std::min(width, height);
  return {(width - side) / 2, (height - side) / 2, side, side};
}

// Corner-aligned source coordinate of output index i in [0, target).
double source_coord(int i, int target, int origin, int extent) {
  if (target == 1) return origin + (extent - 1) * 0.5;
  return origin + static_cast<double>(i) * (extent - 1) / (target - 1);
}

}  // namespace

ImageTensor resize_crop(const ImageTensor& img, int target, std::optional<Rect> face_box,
                        bool allow_upscale) {
  require(target > 0 && target % 4 == 0, ErrorKind::config, "target size must be divisible by 4");
  const Rect box = crop_region(img.height(), img.width(), face_box);
  require(allow_upscale || (target <= box.width && target <= box.height), ErrorKind::precondition,
          "target size " + std::to_string(target) + " exceeds crop region and upscaling is disabled");
  ImageTensor out(img.channels(), target, target, img.range());
  for (int oy = 0; oy < target; ++oy) {
    const double sy = source_coord(oy, target, box.y, box.height);
    const int y0 = std::min(static_cast<int>(std::floor(sy)), box.y + box.height - 1);
    const int y1 = std::min(y0 + 1, box.y + box.height - 1);
    const double fy = sy - y0;
    for (int ox = 0; ox < target; ++ox) {
      const double sx = source_coord(ox, target, box.x, box.width);
      const int x0 = std::min(static_cast<int>(std::floor(sx)), box.x + box.width - 1);
      const int x1 = std::min(x0 + 1, box.x + box.width - 1);
      const double fx = sx - x0;
      for (int c = 0; c < img.channels(); ++c) {
        const double a = img.at(c, y0, x0), b = img.at(c, y0, x1);
        const double d = img.at(c, y1, x0), e = img.at(c, y1, x1);
        const double top = a + fx * (b - a);
        const double bottom = d + fx * (e - d);
        const double v = top + fy * (bottom - top);
        const double lo = std::min({a, b, d, e});
        const double hi = std::max({a, b, d, e});
        out.at(c, oy, ox) = static_cast<float>(std::clamp(v, lo, hi));
      }
    }
  }
  return out;
}

BinaryMask resize_crop_mask(const BinaryMask& mask, int target, std::optional<Rect> face_box) {
  const Rect box = crop_region(mask.height(), mask.width(), face_box);
  BinaryMask out(target, target);
  for (int oy = 0; oy < target; ++oy) {
    const int sy = static_cast<int>(std::lround(source_coord(oy, target, box.y, box.height)));
    for (int ox = 0; ox < target; ++ox) {
      const int sx = static_cast<int>(std::lround(source_coord(ox, target, box.x, box.width)));
      out.at(oy, ox) = mask.at(sy, sx);
    }
  }
  return out;
}

ImageTensor apply_occlusion(const ImageTensor& gt, const BinaryMask& mask, float fill) {
  require(gt.height() == mask.height() && gt.width() == mask.width(), ErrorKind::shape_mismatch,
          "mask " + std::to_string(mask.height()) + "x" + std::to_string(mask.width()) +
              " does not match image " + std::to_string(gt.height()) + "x" + std::to_string(gt.width()));
  require(fill >= gt.range_min() && fill <= gt.range_max(), ErrorKind::config,
          "occlusion fill outside the image value range");
  ImageTensor out = gt;
  for (int c = 0; c < gt.channels(); ++c)
    for (int y = 0; y < gt.height(); ++y)
      for (int x = 0; x < gt.width(); ++x)
        if (mask.at(y, x) == 1.0f) out.at(c, y, x) = fill;
  return out;
}

template <typename T>
Tensor<T> stack_images(std::span<const ImageTensor* const> images) {
  require(!images.empty(), ErrorKind::empty_input, "no images to stack");
  const ImageTensor& first = *images.front();
  Tensor<T> out({static_cast<int>(images.size()), first.channels(), first.height(), first.width()});
  for (std::size_t n = 0; n < images.size(); ++n) {
    const ImageTensor& img = *images[n];
    require(img.channels() == first.channels() && img.height() == first.height() &&
                img.width() == first.width(),
            ErrorKind::shape_mismatch, "images in a batch must share an extent");
    std::copy(img.values().begin(), img.values().end(), out.sample(static_cast<int>(n)));
  }
  return out;
}

template <typename T>
Tensor<T> stack_masks(std::span<const BinaryMask* const> masks) {
  require(!masks.empty(), ErrorKind::empty_input, "no masks to stack");
  const BinaryMask& first = *masks.front();
  Tensor<T> out({static_cast<int>(masks.size()), 1, first.height(), first.width()});
  for (std::size_t n = 0; n < masks.size(); ++n) {
    require(masks[n]->height() == first.height() && masks[n]->width() == first.width(),
            ErrorKind::shape_mismatch, "masks in a batch must share an extent");
    std::copy(masks[n]->values().begin(), masks[n]->values().end(), out.sample(static_cast<int>(n)));
  }
  return out;
}

template <typename T>
ImageTensor unstack_image(const Tensor<T>& batch, int n, ValueRange range) {
  ImageTensor img(batch.c(), batch.h(), batch.w(), range);
  const float lo = img.range_min();
  const float hi = img.range_max();
  const T* src = batch.sample(n);
  auto dst = img.values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = std::clamp(static_cast<float>(src[i]), lo, hi);
  return img;
}

template Tensor<float> stack_images<float>(std::span<const ImageTensor* const>);
template Tensor<double> stack_images<double>(std::span<const ImageTensor* const>);
template Tensor<float> stack_masks<float>(std::span<const BinaryMask* const>);
template Tensor<double> stack_masks<double>(std::span<const BinaryMask* const>);
template ImageTensor unstack_image<float>(const Tensor<float>&, int, ValueRange);
template ImageTensor unstack_image<double>(const Tensor<double>&, int, ValueRange);

}  // namespace deoccl
