#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace neo {

/// Row-major H x W x 3 image with intensities in [0, 1].
class ImageBuffer {
 public:
  ImageBuffer() = default;
  ImageBuffer(int width, int height, float fill = 0.0f);

  [[nodiscard]] int width() const { return width_; }
  [[nodiscard]] int height() const { return height_; }
  [[nodiscard]] bool empty() const { return pixels_.empty(); }
  [[nodiscard]] std::size_t size() const { return pixels_.size(); }

  float& at(int x, int y, int c) {
    return pixels_[(static_cast<std::size_t>(y) * width_ + x) * 3 + c];
  }
  [[nodiscard]] float at(int x, int y, int c) const {
    return pixels_[(static_cast<std::size_t>(y) * width_ + x) * 3 + c];
  }

  [[nodiscard]] std::span<float> data() { return pixels_; }
  [[nodiscard]] std::span<const float> data() const { return pixels_; }

  /// Throws InvalidArgument if any channel is outside [0, 1] or non-finite.
  void validate() const;

  bool operator==(const ImageBuffer&) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<float> pixels_;
};

/// Compact 8-bit RGB storage for large datasets.
struct Rgb8Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  bool operator==(const Rgb8Image&) const = default;
};

Rgb8Image to_rgb8(const ImageBuffer& img);
ImageBuffer from_rgb8(const Rgb8Image& img);

/// Rounds every channel to the nearest multiple of 1/255.
ImageBuffer quantize(const ImageBuffer& img);

ImageBuffer crop(const ImageBuffer& img, int x0, int y0, int width, int height);
ImageBuffer crop_center(const ImageBuffer& img, int width, int height);
Rgb8Image crop_center(const Rgb8Image& img, int width, int height);

/// Copies `patch` into `canvas` with its top-left corner at (x0, y0).
void paste(ImageBuffer& canvas, const ImageBuffer& patch, int x0, int y0);

/// Bilinear resampling with pixel-centre alignment (half-pixel convention).
ImageBuffer resize_bilinear(const ImageBuffer& img, int width, int height);

/// Averages non-overlapping factor x factor blocks.
ImageBuffer downsample_area(const ImageBuffer& img, int factor);

/// Area-averaged resampling to an arbitrary smaller size.
ImageBuffer resize_area(const ImageBuffer& img, int width, int height);

/// 0.299 R + 0.587 G + 0.114 B, row-major.
std::vector<double> luma(const ImageBuffer& img);

ImageBuffer box_blur(const ImageBuffer& img, int radius);

/// Byte-exact 8-bit RGB PNG encoding.
std::vector<std::uint8_t> encode_png(const Rgb8Image& img);
Rgb8Image decode_png(std::span<const std::uint8_t> bytes);

void write_png(const std::filesystem::path& path, const ImageBuffer& img);
void write_png(const std::filesystem::path& path, const Rgb8Image& img);
Rgb8Image read_png(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path,
                std::span<const std::uint8_t> bytes);

}  // namespace neo
