#include "neo/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "neo/error.hpp"

namespace neo {

ImageBuffer::ImageBuffer(int width, int height, float fill)
    : width_(width), height_(height) {
  if (width <= 0 || height <= 0) {
    fail(ErrorKind::InvalidArgument, "image dimensions must be positive");
  }
  pixels_.assign(static_cast<std::size_t>(width) * height * 3, fill);
}

void ImageBuffer::validate() const {
  if (pixels_.size() != static_cast<std::size_t>(width_) * height_ * 3) {
    fail(ErrorKind::InvalidArgument, "image storage does not match dimensions");
  }
  for (float v : pixels_) {
    if (!(v >= 0.0f && v <= 1.0f)) {
      fail(ErrorKind::InvalidArgument, "image intensity outside [0, 1]");
    }
  }
}

namespace {

std::uint8_t to_byte(float v) {
  const float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

}  // namespace

Rgb8Image to_rgb8(const ImageBuffer& img) {
  Rgb8Image out{img.width(), img.height(), {}};
  out.pixels.resize(img.size());
  const auto src = img.data();
  std::transform(src.begin(), src.end(), out.pixels.begin(), to_byte);
  return out;
}

ImageBuffer from_rgb8(const Rgb8Image& img) {
  ImageBuffer out(img.width, img.height);
  auto dst = out.data();
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    dst[i] = static_cast<float>(img.pixels[i]) / 255.0f;
  }
  return out;
}

ImageBuffer quantize(const ImageBuffer& img) { return from_rgb8(to_rgb8(img)); }

ImageBuffer crop(const ImageBuffer& img, int x0, int y0, int width,
                 int height) {
  if (x0 < 0 || y0 < 0 || x0 + width > img.width() ||
      y0 + height > img.height()) {
    fail(ErrorKind::InvalidArgument, "crop window outside image");
  }
  ImageBuffer out(width, height);
  for (int y = 0; y < height; ++y) {
    const float* src = &img.data()[(static_cast<std::size_t>(y + y0) * img.width() + x0) * 3];
    std::copy(src, src + width * 3,
              &out.data()[static_cast<std::size_t>(y) * width * 3]);
  }
  return out;
}

ImageBuffer crop_center(const ImageBuffer& img, int width, int height) {
  const int dx = img.width() - width;
  const int dy = img.height() - height;
  if (dx < 0 || dy < 0 || dx % 2 != 0 || dy % 2 != 0) {
    fail(ErrorKind::InvalidArgument, "central crop must be symmetric");
  }
  return crop(img, dx / 2, dy / 2, width, height);
}

Rgb8Image crop_center(const Rgb8Image& img, int width, int height) {
  const int dx = img.width - width;
  const int dy = img.height - height;
  if (dx < 0 || dy < 0 || dx % 2 != 0 || dy % 2 != 0) {
    fail(ErrorKind::InvalidArgument, "central crop must be symmetric");
  }
  Rgb8Image out{width, height, {}};
  out.pixels.resize(static_cast<std::size_t>(width) * height * 3);
  for (int y = 0; y < height; ++y) {
    const auto* src =
        &img.pixels[(static_cast<std::size_t>(y + dy / 2) * img.width + dx / 2) * 3];
    std::copy(src, src + width * 3,
              &out.pixels[static_cast<std::size_t>(y) * width * 3]);
  }
  return out;
}

void paste(ImageBuffer& canvas, const ImageBuffer& patch, int x0, int y0) {
  if (x0 < 0 || y0 < 0 || x0 + patch.width() > canvas.width() ||
      y0 + patch.height() > canvas.height()) {
    fail(ErrorKind::InvalidArgument, "paste window outside canvas");
  }
  for (int y = 0; y < patch.height(); ++y) {
    const float* src = &patch.data()[static_cast<std::size_t>(y) * patch.width() * 3];
    std::copy(src, src + patch.width() * 3,
              &canvas.data()[(static_cast<std::size_t>(y + y0) * canvas.width() + x0) * 3]);
  }
}

ImageBuffer resize_bilinear(const ImageBuffer& img, int width, int height) {
  ImageBuffer out(width, height);
  const double sx = static_cast<double>(img.width()) / width;
  const double sy = static_cast<double>(img.height()) / height;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, img.height() - 1.0);
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, img.height() - 1);
    const double ty = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, img.width() - 1.0);
      const int x0 = static_cast<int>(std::floor(fx));
      const int x1 = std::min(x0 + 1, img.width() - 1);
      const double tx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        const double top = (1 - tx) * img.at(x0, y0, c) + tx * img.at(x1, y0, c);
        const double bot = (1 - tx) * img.at(x0, y1, c) + tx * img.at(x1, y1, c);
        out.at(x, y, c) = static_cast<float>((1 - ty) * top + ty * bot);
      }
    }
  }
  return out;
}

ImageBuffer downsample_area(const ImageBuffer& img, int factor) {
  if (factor < 1 || img.width() % factor != 0 || img.height() % factor != 0) {
    fail(ErrorKind::InvalidArgument, "downsample factor must divide the image");
  }
  if (factor == 1) return img;
  return resize_area(img, img.width() / factor, img.height() / factor);
}

ImageBuffer resize_area(const ImageBuffer& img, int width, int height) {
  if (width > img.width() || height > img.height()) {
    fail(ErrorKind::InvalidArgument, "area resampling only shrinks");
  }
  ImageBuffer out(width, height);
  const double sx = static_cast<double>(img.width()) / width;
  const double sy = static_cast<double>(img.height()) / height;
  for (int y = 0; y < height; ++y) {
    const double ya = y * sy, yb = (y + 1) * sy;
    for (int x = 0; x < width; ++x) {
      const double xa = x * sx, xb = (x + 1) * sx;
      double acc[3] = {0, 0, 0};
      double wsum = 0;
      for (int iy = static_cast<int>(std::floor(ya)); iy < std::ceil(yb); ++iy) {
        const double wy = std::min<double>(iy + 1, yb) - std::max<double>(iy, ya);
        for (int ix = static_cast<int>(std::floor(xa)); ix < std::ceil(xb); ++ix) {
          const double w = wy * (std::min<double>(ix + 1, xb) - std::max<double>(ix, xa));
          for (int c = 0; c < 3; ++c) acc[c] += w * img.at(ix, iy, c);
          wsum += w;
        }
      }
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = static_cast<float>(acc[c] / wsum);
    }
  }
  return out;
}

std::vector<double> luma(const ImageBuffer& img) {
  std::vector<double> out(static_cast<std::size_t>(img.width()) * img.height());
  const auto px = img.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = 0.299 * px[3 * i] + 0.587 * px[3 * i + 1] + 0.114 * px[3 * i + 2];
  }
  return out;
}

ImageBuffer box_blur(const ImageBuffer& img, int radius) {
  ImageBuffer out(img.width(), img.height());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      double acc[3] = {0, 0, 0};
      int n = 0;
      for (int dy = -radius; dy <= radius; ++dy) {
        const int yy = y + dy;
        if (yy < 0 || yy >= img.height()) continue;
        for (int dx = -radius; dx <= radius; ++dx) {
          const int xx = x + dx;
          if (xx < 0 || xx >= img.width()) continue;
          for (int c = 0; c < 3; ++c) acc[c] += img.at(xx, yy, c);
          ++n;
        }
      }
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = static_cast<float>(acc[c] / n);
    }
  }
  return out;
}

std::vector<std::uint8_t> encode_png(const Rgb8Image& img) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, img.pixels.data(),
                                 0, nullptr)) {
    fail(ErrorKind::Io, std::string("png encode failed: ") + image.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0,
                                 img.pixels.data(), 0, nullptr)) {
    fail(ErrorKind::Io, std::string("png encode failed: ") + image.message);
  }
  out.resize(size);
  return out;
}

Rgb8Image decode_png(std::span<const std::uint8_t> bytes) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    fail(ErrorKind::Format, std::string("png decode failed: ") + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  Rgb8Image out{static_cast<int>(image.width), static_cast<int>(image.height), {}};
  out.pixels.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr)) {
    png_image_free(&image);
    fail(ErrorKind::Format, std::string("png decode failed: ") + image.message);
  }
  return out;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path,
                std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::Io, "short write to " + path.string());
}

void write_png(const std::filesystem::path& path, const ImageBuffer& img) {
  write_png(path, to_rgb8(img));
}

void write_png(const std::filesystem::path& path, const Rgb8Image& img) {
  write_file(path, encode_png(img));
}

Rgb8Image read_png(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return decode_png(bytes);
  } catch (const Error& e) {
    fail(e.kind(), path.string() + ": " + e.what());
  }
}

}  // namespace neo
