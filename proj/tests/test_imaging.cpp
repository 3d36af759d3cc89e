#include <cstdint>
#include <fstream>

#include "deoccl/imaging.hpp"
#include "deoccl/random.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace deoccl;

namespace {

// 1x1 RGB PNG holding the pixel (128, 0, 255).
const unsigned char kPixelPng[] = {
    0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a, 0x00, 0x00, 0x00, 0x0d, 0x49, 0x48, 0x44, 0x52, 0x00, 0x00,
    0x00, 0x01, 0x00, 0x00, 0x00, 0x01, 0x08, 0x02, 0x00, 0x00, 0x00, 0x90, 0x77, 0x53, 0xde, 0x00, 0x00, 0x00,
    0x0c, 0x49, 0x44, 0x41, 0x54, 0x78, 0x9c, 0x63, 0x68, 0x60, 0xf8, 0x0f, 0x00, 0x02, 0x83, 0x01, 0x80, 0xad,
    0x69, 0x57, 0xba, 0x00, 0x00, 0x00, 0x00, 0x49, 0x45, 0x4e, 0x44, 0xae, 0x42, 0x60, 0x82};

// 1x1 16-bit grayscale PNG.
const unsigned char kDeepPng[] = {
    0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a, 0x00, 0x00, 0x00, 0x0d, 0x49, 0x48, 0x44, 0x52, 0x00, 0x00,
    0x00, 0x01, 0x00, 0x00, 0x00, 0x01, 0x10, 0x00, 0x00, 0x00, 0x00, 0x6a, 0xee, 0x47, 0x16, 0x00, 0x00, 0x00,
    0x0b, 0x49, 0x44, 0x41, 0x54, 0x78, 0x9c, 0x63, 0x68, 0x60, 0x00, 0x00, 0x01, 0x03, 0x00, 0x81, 0x3e, 0x4c,
    0xc5, 0x93, 0x00, 0x00, 0x00, 0x00, 0x49, 0x45, 0x4e, 0x44, 0xae, 0x42, 0x60, 0x82};

template <std::size_t N>
std::filesystem::path write_bytes(const std::filesystem::path& path, const unsigned char (&bytes)[N]) {
  std::ofstream(path, std::ios::binary).write(reinterpret_cast<const char*>(bytes), N);
  return path;
}

ImageTensor random_image(int c, int h, int w, std::uint64_t seed) {
  ImageTensor img(c, h, w, ValueRange::unit);
  Rng rng(seed);
  for (float& v : img.values()) v = static_cast<float>(rng.uniform());
  return img;
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::usage;
}

}  // namespace

TEST_CASE("decoding a hand-written png") {
  const auto dir = testing_support::scratch_dir("imaging-decode");
  const auto path = write_bytes(dir / "pixel.png", kPixelPng);
  const ImageTensor unit = load_image(path, ValueRange::unit);
  REQUIRE(unit.channels() == 3);
  REQUIRE(unit.height() == 1);
  CHECK(unit.at(0, 0, 0) == doctest::Approx(0.50196).epsilon(1e-5));
  CHECK(unit.at(1, 0, 0) == 0.0f);
  CHECK(unit.at(2, 0, 0) == 1.0f);
  const ImageTensor signed_img = load_image(path, ValueRange::signed_unit);
  CHECK(signed_img.at(0, 0, 0) == doctest::Approx(2.0 * 128 / 255 - 1).epsilon(1e-6));
  CHECK(signed_img.at(1, 0, 0) == -1.0f);
}

TEST_CASE("decoder errors") {
  const auto dir = testing_support::scratch_dir("imaging-errors");
  CHECK(kind_of([&] { load_image(dir / "missing.png", ValueRange::unit); }) == ErrorKind::file_missing);
  std::ofstream(dir / "junk.png") << "not a png";
  CHECK(kind_of([&] { load_image(dir / "junk.png", ValueRange::unit); }) == ErrorKind::decode_failed);
  const auto deep = write_bytes(dir / "deep.png", kDeepPng);
  CHECK(kind_of([&] { load_image(deep, ValueRange::unit); }) == ErrorKind::unsupported_format);
}

TEST_CASE("png round trip stays within one quantisation step") {
  const auto dir = testing_support::scratch_dir("imaging-roundtrip");
  const ImageTensor img = random_image(3, 13, 17, 1);
  save_image(img, dir / "img.png");
  const ImageTensor back = load_image(dir / "img.png", ValueRange::unit);
  REQUIRE(back.height() == 13);
  REQUIRE(back.width() == 17);
  for (std::size_t i = 0; i < img.size(); ++i) CHECK(std::abs(back.values()[i] - img.values()[i]) <= 1.0f / 255);

  save_image(back, dir / "again.png");
  CHECK(load_image(dir / "again.png", ValueRange::unit) == back);

  const ImageTensor gray = random_image(1, 8, 8, 2);
  save_image(gray, dir / "gray.png");
  CHECK(load_image(dir / "gray.png", ValueRange::unit).channels() == 1);
}

TEST_CASE("mask files") {
  const auto dir = testing_support::scratch_dir("imaging-mask");
  BinaryMask m(6, 9);
  m.at(2, 3) = 1.0f;
  m.at(5, 8) = 1.0f;
  save_mask(m, dir / "m.png");
  CHECK(load_mask(dir / "m.png") == m);
  CHECK(m.count_set() == 2);

  ImageTensor gray(1, 4, 4, ValueRange::unit, 0.5f);
  save_image(gray, dir / "gray.png");
  CHECK(kind_of([&] { load_mask(dir / "gray.png"); }) == ErrorKind::invalid_mask);
}

TEST_CASE("value range conversion") {
  ImageTensor img(3, 2, 2, ValueRange::unit, 0.25f);
  const auto s = to_range(img, ValueRange::signed_unit);
  CHECK(s.range() == ValueRange::signed_unit);
  CHECK(s.at(0, 1, 1) == -0.5f);
  CHECK(to_range(s, ValueRange::unit) == img);
  ImageTensor bad(3, 2, 2, ValueRange::unit, 1.5f);
  CHECK_THROWS_AS(bad.validate(), Error);
  ImageTensor tiny(3, 6, 6, ValueRange::unit);
  CHECK_NOTHROW(tiny.validate());
  CHECK_THROWS_AS(tiny.validate_for_network(), Error);
}

TEST_CASE("resize crop") {
  SUBCASE("identity size leaves the image unchanged") {
    const auto img = random_image(3, 16, 16, 3);
    CHECK(resize_crop(img, 16) == img);
  }
  SUBCASE("constant images stay constant") {
    ImageTensor img(3, 30, 50, ValueRange::unit, 0.3f);
    const auto out = resize_crop(img, 12);
    CHECK(out.height() == 12);
    for (float v : out.values()) CHECK(v == 0.3f);
  }
  SUBCASE("the centred square is used without a face box") {
    ImageTensor img(1, 10, 20, ValueRange::unit, 0.0f);
    for (int y = 0; y < 10; ++y)
      for (int x = 5; x < 15; ++x) img.at(0, y, x) = 1.0f;
    const auto out = resize_crop(img, 8);
    for (float v : out.values()) CHECK(v == 1.0f);
  }
  SUBCASE("face box and corners") {
    const auto img = random_image(3, 20, 20, 4);
    const auto out = resize_crop(img, 8, Rect{2, 3, 10, 10});
    CHECK(out.at(1, 0, 0) == img.at(1, 3, 2));
    CHECK(out.at(2, 7, 7) == img.at(2, 12, 11));
    CHECK_THROWS_AS(resize_crop(img, 8, Rect{15, 15, 10, 10}), Error);
  }
  SUBCASE("wide frames use the centred square") {
    const auto img = random_image(3, 720, 1280, 11);
    ImageTensor square(3, 720, 720, ValueRange::unit);
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < 720; ++y)
        for (int x = 0; x < 720; ++x) square.at(c, y, x) = img.at(c, y, x + 280);
    const auto out = resize_crop(img, 256);
    CHECK(out.height() == 256);
    CHECK(out.width() == 256);
    const auto direct = resize_crop(square, 256);
    float worst = 0.0f;
    for (std::size_t i = 0; i < out.size(); ++i) worst = std::max(worst, std::abs(out.values()[i] - direct.values()[i]));
    CHECK(worst < 1e-5f);
    CHECK(out == resize_crop(img, 256, Rect{280, 0, 720, 720}));
  }
  SUBCASE("values stay in range") {
    const auto img = random_image(3, 11, 11, 5);
    const auto out = resize_crop(img, 32);
    CHECK_NOTHROW(out.validate());
    CHECK_THROWS_AS(resize_crop(img, 32, std::nullopt, false), Error);
  }
  SUBCASE("mask resize stays binary") {
    BinaryMask m(20, 20);
    for (int y = 5; y < 10; ++y)
      for (int x = 0; x < 20; ++x) m.at(y, x) = 1.0f;
    const auto out = resize_crop_mask(m, 8);
    CHECK_NOTHROW(out.validate());
    CHECK(out.count_set() > 0);
  }
}

TEST_CASE("occlusion replaces exactly the masked pixels") {
  const auto img = to_range(random_image(3, 8, 8, 6), ValueRange::signed_unit);
  BinaryMask m(8, 8);
  for (int x = 1; x < 7; ++x) m.at(3, x) = 1.0f;
  const auto occ = apply_occlusion(img, m, -1.0f);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x)
        CHECK(occ.at(c, y, x) == (m.at(y, x) == 1.0f ? -1.0f : img.at(c, y, x)));
  CHECK(apply_occlusion(occ, m, -1.0f) == occ);
  CHECK(apply_occlusion(img, BinaryMask(8, 8), -1.0f) == img);
  const auto blank = apply_occlusion(img, BinaryMask(8, 8, 1.0f), 0.0f);
  for (float v : blank.values()) CHECK(v == 0.0f);
  BinaryMask half(8, 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 4; x < 8; ++x) half.at(y, x) = 1.0f;
  const auto split = apply_occlusion(img, half, 0.0f);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) CHECK(split.at(c, y, x) == (x < 4 ? img.at(c, y, x) : 0.0f));
  CHECK_THROWS_AS(apply_occlusion(img, BinaryMask(4, 4), 0.0f), Error);
  CHECK_THROWS_AS(apply_occlusion(random_image(3, 8, 8, 7), m, -1.0f), Error);
}

TEST_CASE("stacking") {
  const auto a = random_image(3, 4, 4, 8);
  const auto b = random_image(3, 4, 4, 9);
  const ImageTensor* both[] = {&a, &b};
  const auto t = stack_images<float>(both);
  CHECK(t.shape() == Shape4{2, 3, 4, 4});
  CHECK(t.at(1, 2, 3, 1) == b.at(2, 3, 1));
  CHECK(unstack_image(t, 1, ValueRange::unit) == b);
  const auto c = random_image(3, 5, 4, 10);
  const ImageTensor* mixed[] = {&a, &c};
  CHECK_THROWS_AS(stack_images<float>(mixed), Error);
}
