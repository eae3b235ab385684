#include <filesystem>
#include <random>

#include "doctest.h"
#include "neo/error.hpp"
#include "neo/image.hpp"

using namespace neo;

namespace {

ImageBuffer noise_image(int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  ImageBuffer img(w, h);
  for (float& v : img.data()) v = u(rng);
  return img;
}

}  // namespace

TEST_SUITE("image") {

TEST_CASE("png round trip is exact after quantization") {
  const auto img = quantize(noise_image(17, 9, 1));
  const auto bytes = encode_png(to_rgb8(img));
  CHECK(from_rgb8(decode_png(bytes)) == img);
  CHECK(encode_png(to_rgb8(img)) == bytes);

  const auto dir = std::filesystem::temp_directory_path() / "neo_image_test";
  std::filesystem::create_directories(dir);
  write_png(dir / "a.png", img);
  CHECK(from_rgb8(read_png(dir / "a.png")) == img);
  std::filesystem::remove_all(dir);
}

TEST_CASE("corrupt png is rejected") {
  auto bytes = encode_png(to_rgb8(noise_image(8, 8, 2)));
  bytes.resize(bytes.size() / 2);
  CHECK_THROWS_AS(decode_png(bytes), Error);
  CHECK_THROWS_AS(read_png("/nonexistent/x.png"), Error);
}

TEST_CASE("quantize is idempotent") {
  const auto q = quantize(noise_image(5, 5, 3));
  CHECK(quantize(q) == q);
}

TEST_CASE("crop and paste") {
  const auto img = noise_image(10, 8, 4);
  const auto c = crop_center(img, 4, 2);
  CHECK(c.width() == 4);
  CHECK(c.at(0, 0, 1) == img.at(3, 3, 1));
  ImageBuffer canvas(10, 8, 0.25f);
  paste(canvas, c, 3, 3);
  CHECK(crop_center(canvas, 4, 2) == c);
  CHECK(canvas.at(0, 0, 0) == 0.25f);
  CHECK_THROWS_AS(crop(img, 8, 0, 4, 2), Error);
  CHECK_THROWS_AS(crop_center(img, 3, 2), Error);
}

TEST_CASE("rgb8 crop matches float crop") {
  const auto img = quantize(noise_image(12, 12, 5));
  CHECK(from_rgb8(crop_center(to_rgb8(img), 6, 4)) == crop_center(img, 6, 4));
}

TEST_CASE("resampling preserves constants") {
  const ImageBuffer c(12, 8, 0.4f);
  const auto up = resize_bilinear(c, 24, 16);
  const auto down = resize_area(c, 5, 3);
  for (float v : up.data()) CHECK(v == doctest::Approx(0.4f));
  for (float v : down.data()) CHECK(v == doctest::Approx(0.4f));
  CHECK_THROWS_AS(resize_area(c, 13, 8), Error);
}

TEST_CASE("area downsample averages blocks") {
  ImageBuffer img(4, 2);
  for (int x = 0; x < 4; ++x)
    for (int y = 0; y < 2; ++y)
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = static_cast<float>(x + 4 * y) / 8.0f;
  const auto d = downsample_area(img, 2);
  CHECK(d.width() == 2);
  CHECK(d.at(0, 0, 0) == doctest::Approx((0 + 1 + 4 + 5) / 32.0));
  CHECK(d.at(1, 0, 2) == doctest::Approx((2 + 3 + 6 + 7) / 32.0));
}

TEST_CASE("bilinear upsample by two uses half-pixel centres") {
  ImageBuffer img(2, 1);
  for (int c = 0; c < 3; ++c) {
    img.at(0, 0, c) = 0.0f;
    img.at(1, 0, c) = 1.0f;
  }
  const auto up = resize_bilinear(img, 4, 1);
  CHECK(up.at(0, 0, 0) == doctest::Approx(0.0));
  CHECK(up.at(1, 0, 0) == doctest::Approx(0.25));
  CHECK(up.at(2, 0, 0) == doctest::Approx(0.75));
  CHECK(up.at(3, 0, 0) == doctest::Approx(1.0));
}

TEST_CASE("luma weights") {
  ImageBuffer img(1, 1);
  img.at(0, 0, 0) = 1.0f;
  CHECK(luma(img)[0] == doctest::Approx(0.299));
  img.at(0, 0, 1) = 1.0f;
  img.at(0, 0, 2) = 1.0f;
  CHECK(luma(img)[0] == doctest::Approx(1.0));
}

TEST_CASE("validate rejects out-of-range values") {
  ImageBuffer img(2, 2);
  CHECK_NOTHROW(img.validate());
  img.at(1, 1, 2) = 1.5f;
  CHECK_THROWS_AS(img.validate(), Error);
}

}  // TEST_SUITE
