#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "neo/geometry.hpp"
#include "neo/image.hpp"

namespace neo {

inline constexpr int kReportSchemaVersion = 1;
inline constexpr double kPsnrCap = 99.0;

/// Per-pixel mask, row-major, nonzero = included.
using PixelMask = std::vector<std::uint8_t>;

/// 1 outside the central small-image region of the large canvas.
PixelMask band_mask(const CameraIntrinsics& small_intr, const CameraIntrinsics& large_intr);

/// 10 log10(1 / MSE) over masked pixels and all channels; kPsnrCap when the
/// images agree exactly.
double psnr(const ImageBuffer& a, const ImageBuffer& b, std::span<const std::uint8_t> mask = {});

/// Single-scale SSIM with an 11x11 Gaussian window (sigma 1.5), averaged over
/// channels and over window centres that fit inside the image and lie in the
/// mask.
double ssim(const ImageBuffer& a, const ImageBuffer& b, std::span<const std::uint8_t> mask = {});

struct MetricStats {
  double mean = 0;
  double stddev = 0;

  bool operator==(const MetricStats&) const = default;
};

/// Population mean and standard deviation.
MetricStats summarize(std::span<const double> values);

struct MetricRow {
  std::string label;
  std::size_t count = 0;
  MetricStats psnr_full;
  MetricStats ssim_full;
  MetricStats psnr_band;
  MetricStats ssim_band;
  /// Reserved for externally computed LPIPS; always null here.
  std::optional<double> lpips;

  bool operator==(const MetricRow&) const = default;
};

struct PerImageMetrics {
  double psnr_full = 0, ssim_full = 0, psnr_band = 0, ssim_band = 0;
};

PerImageMetrics evaluate_image(const ImageBuffer& output, const ImageBuffer& truth,
                               std::span<const std::uint8_t> band);

MetricRow evaluate_method(const std::string& label, std::span<const ImageBuffer> outputs,
                          std::span<const ImageBuffer> ground_truths,
                          std::span<const std::uint8_t> band);

struct MetricReport {
  int schema_version = kReportSchemaVersion;
  std::string title;
  /// Header of the first column, e.g. "Method" or "Interval".
  std::string label_header = "Method";
  std::string config_hash;
  std::vector<MetricRow> rows;

  void validate() const;
  bool operator==(const MetricReport&) const = default;
};

std::string report_markdown(const MetricReport& report);

/// Writes <stem>.json and <stem>.md into dir.
void emit_report(const MetricReport& report, const std::filesystem::path& dir,
                 const std::string& stem = "report");
MetricReport read_report(const std::filesystem::path& json_path);

void to_json(nlohmann::json& j, const MetricStats& s);
void from_json(const nlohmann::json& j, MetricStats& s);
void to_json(nlohmann::json& j, const MetricRow& r);
void from_json(const nlohmann::json& j, MetricRow& r);
void to_json(nlohmann::json& j, const MetricReport& r);
void from_json(const nlohmann::json& j, MetricReport& r);

}  // namespace neo
