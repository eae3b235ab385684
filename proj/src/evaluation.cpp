#include "neo/evaluation.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "neo/error.hpp"
#include "neo/parallel.hpp"

namespace neo {

namespace {

void check_pair(const ImageBuffer& a, const ImageBuffer& b, std::span<const std::uint8_t> mask) {
  if (a.width() != b.width() || a.height() != b.height()) {
    fail(ErrorKind::InvalidArgument, "metric inputs differ in size");
  }
  if (!mask.empty() && mask.size() != static_cast<std::size_t>(a.width()) * a.height()) {
    fail(ErrorKind::InvalidArgument, "mask size does not match the image");
  }
}

constexpr int kRadius = 5;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

std::array<double, 2 * kRadius + 1> gaussian_window() {
  std::array<double, 2 * kRadius + 1> w{};
  double sum = 0;
  for (int i = -kRadius; i <= kRadius; ++i) {
    w[i + kRadius] = std::exp(-(i * i) / (2 * kSigma * kSigma));
    sum += w[i + kRadius];
  }
  for (double& v : w) v /= sum;
  return w;
}

/// Gaussian filter evaluated at valid centres only; output is
/// (W - 2r) x (H - 2r).
std::vector<double> filter_valid(const std::vector<double>& img, int w, int h) {
  static const auto win = gaussian_window();
  const int ow = w - 2 * kRadius, oh = h - 2 * kRadius;
  std::vector<double> rows(static_cast<std::size_t>(ow) * h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0;
      for (int k = 0; k <= 2 * kRadius; ++k) acc += win[k] * img[static_cast<std::size_t>(y) * w + x + k];
      rows[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(ow) * oh);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0;
      for (int k = 0; k <= 2 * kRadius; ++k) acc += win[k] * rows[static_cast<std::size_t>(y + k) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  }
  return out;
}

}  // namespace

PixelMask band_mask(const CameraIntrinsics& small_intr, const CameraIntrinsics& large_intr) {
  const auto [ox, oy] = central_offset(small_intr, large_intr);
  PixelMask m(static_cast<std::size_t>(large_intr.width) * large_intr.height, 1);
  for (int y = oy; y < oy + small_intr.height; ++y) {
    for (int x = ox; x < ox + small_intr.width; ++x) {
      m[static_cast<std::size_t>(y) * large_intr.width + x] = 0;
    }
  }
  return m;
}

double psnr(const ImageBuffer& a, const ImageBuffer& b, std::span<const std::uint8_t> mask) {
  check_pair(a, b, mask);
  const auto da = a.data(), db = b.data();
  double acc = 0;
  std::size_t n = 0;
  for (std::size_t p = 0; p < da.size() / 3; ++p) {
    if (!mask.empty() && !mask[p]) continue;
    for (int c = 0; c < 3; ++c) {
      const double e = static_cast<double>(da[3 * p + c]) - db[3 * p + c];
      acc += e * e;
    }
    n += 3;
  }
  if (n == 0) fail(ErrorKind::InvalidArgument, "psnr mask selects no pixels");
  const double mse = acc / static_cast<double>(n);
  if (mse == 0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim(const ImageBuffer& a, const ImageBuffer& b, std::span<const std::uint8_t> mask) {
  check_pair(a, b, mask);
  const int w = a.width(), h = a.height();
  if (w < 2 * kRadius + 1 || h < 2 * kRadius + 1) {
    fail(ErrorKind::InvalidArgument, "ssim needs images of at least 11x11");
  }
  const int ow = w - 2 * kRadius, oh = h - 2 * kRadius;
  const std::size_t n = static_cast<std::size_t>(w) * h;
  double total = 0;
  std::size_t centres = 0;
  for (int c = 0; c < 3; ++c) {
    std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
    for (std::size_t p = 0; p < n; ++p) {
      x[p] = a.data()[3 * p + c];
      y[p] = b.data()[3 * p + c];
      xx[p] = x[p] * x[p];
      yy[p] = y[p] * y[p];
      xy[p] = x[p] * y[p];
    }
    const auto mx = filter_valid(x, w, h), my = filter_valid(y, w, h);
    const auto sxx = filter_valid(xx, w, h), syy = filter_valid(yy, w, h);
    const auto sxy = filter_valid(xy, w, h);
    centres = 0;
    for (int cy = 0; cy < oh; ++cy) {
      for (int cx = 0; cx < ow; ++cx) {
        if (!mask.empty() &&
            !mask[static_cast<std::size_t>(cy + kRadius) * w + cx + kRadius]) {
          continue;
        }
        const std::size_t i = static_cast<std::size_t>(cy) * ow + cx;
        const double vx = sxx[i] - mx[i] * mx[i];
        const double vy = syy[i] - my[i] * my[i];
        const double cov = sxy[i] - mx[i] * my[i];
        total += ((2 * mx[i] * my[i] + kC1) * (2 * cov + kC2)) /
                 ((mx[i] * mx[i] + my[i] * my[i] + kC1) * (vx + vy + kC2));
        ++centres;
      }
    }
  }
  if (centres == 0) fail(ErrorKind::InvalidArgument, "ssim mask covers no window centre");
  return total / (3.0 * static_cast<double>(centres));
}

MetricStats summarize(std::span<const double> values) {
  if (values.empty()) fail(ErrorKind::InvalidArgument, "no values to summarize");
  double sum = 0;
  for (double v : values) sum += v;
  const double mean = sum / static_cast<double>(values.size());
  double var = 0;
  for (double v : values) var += (v - mean) * (v - mean);
  return {mean, std::sqrt(var / static_cast<double>(values.size()))};
}

PerImageMetrics evaluate_image(const ImageBuffer& output, const ImageBuffer& truth,
                               std::span<const std::uint8_t> band) {
  return {psnr(output, truth), ssim(output, truth), psnr(output, truth, band),
          ssim(output, truth, band)};
}

MetricRow evaluate_method(const std::string& label, std::span<const ImageBuffer> outputs,
                          std::span<const ImageBuffer> ground_truths,
                          std::span<const std::uint8_t> band) {
  if (outputs.size() != ground_truths.size()) {
    fail(ErrorKind::InvalidArgument, "output and ground-truth counts differ");
  }
  if (outputs.empty()) fail(ErrorKind::InvalidArgument, "no images to evaluate");
  std::vector<PerImageMetrics> per(outputs.size());
  parallel_for(outputs.size(), [&](std::size_t i) {
    per[i] = evaluate_image(outputs[i], ground_truths[i], band);
  });
  std::vector<double> pf, sf, pb, sb;
  for (const auto& m : per) {
    pf.push_back(m.psnr_full);
    sf.push_back(m.ssim_full);
    pb.push_back(m.psnr_band);
    sb.push_back(m.ssim_band);
  }
  MetricRow row;
  row.label = label;
  row.count = outputs.size();
  row.psnr_full = summarize(pf);
  row.ssim_full = summarize(sf);
  row.psnr_band = summarize(pb);
  row.ssim_band = summarize(sb);
  return row;
}

void MetricReport::validate() const {
  if (schema_version != kReportSchemaVersion) {
    fail(ErrorKind::Format, "unsupported report schema version " + std::to_string(schema_version));
  }
  if (rows.empty()) fail(ErrorKind::InvalidArgument, "report has no rows");
  for (const auto& r : rows) {
    if (r.count == 0) fail(ErrorKind::InvalidArgument, "row '" + r.label + "' has no images");
    for (double v : {r.psnr_full.mean, r.ssim_full.mean, r.psnr_band.mean, r.ssim_band.mean}) {
      if (!std::isfinite(v)) fail(ErrorKind::InvalidArgument, "row '" + r.label + "' is not finite");
    }
  }
}

std::string report_markdown(const MetricReport& report) {
  report.validate();
  std::ostringstream md;
  if (!report.title.empty()) md << "# " << report.title << "\n\n";
  md << "| " << report.label_header
     << " | PSNR↑ (full) | SSIM↑ (full) | PSNR↑ (band) | SSIM↑ (band) | LPIPS↓ | N |\n";
  md << "|---|---|---|---|---|---|---|\n";
  char buf[256];
  for (const auto& r : report.rows) {
    std::snprintf(buf, sizeof buf,
                  "| %s | %.2f ± %.2f | %.4f ± %.4f | %.2f ± %.2f | %.4f ± %.4f | %s | %zu |\n",
                  r.label.c_str(), r.psnr_full.mean, r.psnr_full.stddev, r.ssim_full.mean,
                  r.ssim_full.stddev, r.psnr_band.mean, r.psnr_band.stddev, r.ssim_band.mean,
                  r.ssim_band.stddev, r.lpips ? std::to_string(*r.lpips).c_str() : "n/a",
                  r.count);
    md << buf;
  }
  if (!report.config_hash.empty()) md << "\nconfig hash: `" << report.config_hash << "`\n";
  return md.str();
}

void emit_report(const MetricReport& report, const std::filesystem::path& dir,
                 const std::string& stem) {
  report.validate();
  std::filesystem::create_directories(dir);
  const auto md = report_markdown(report);
  const auto js = nlohmann::json(report).dump(2) + "\n";
  write_file(dir / (stem + ".json"), {reinterpret_cast<const std::uint8_t*>(js.data()), js.size()});
  write_file(dir / (stem + ".md"), {reinterpret_cast<const std::uint8_t*>(md.data()), md.size()});
}

MetricReport read_report(const std::filesystem::path& json_path) {
  std::ifstream f(json_path);
  if (!f) fail(ErrorKind::MissingArtifact, "missing report " + json_path.string());
  try {
    auto r = nlohmann::json::parse(f).get<MetricReport>();
    r.validate();
    return r;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, json_path.string() + ": " + e.what());
  }
}

void to_json(nlohmann::json& j, const MetricStats& s) {
  j = {{"mean", s.mean}, {"stddev", s.stddev}};
}

void from_json(const nlohmann::json& j, MetricStats& s) {
  s.mean = j.at("mean").get<double>();
  s.stddev = j.at("stddev").get<double>();
}

void to_json(nlohmann::json& j, const MetricRow& r) {
  j = {{"label", r.label},
       {"count", r.count},
       {"psnr_full", r.psnr_full},
       {"ssim_full", r.ssim_full},
       {"psnr_band", r.psnr_band},
       {"ssim_band", r.ssim_band},
       {"lpips", r.lpips ? nlohmann::json(*r.lpips) : nlohmann::json(nullptr)}};
}

void from_json(const nlohmann::json& j, MetricRow& r) {
  r.label = j.at("label").get<std::string>();
  r.count = j.at("count").get<std::size_t>();
  r.psnr_full = j.at("psnr_full").get<MetricStats>();
  r.ssim_full = j.at("ssim_full").get<MetricStats>();
  r.psnr_band = j.at("psnr_band").get<MetricStats>();
  r.ssim_band = j.at("ssim_band").get<MetricStats>();
  const auto& l = j.at("lpips");
  r.lpips = l.is_null() ? std::nullopt : std::optional<double>(l.get<double>());
}

void to_json(nlohmann::json& j, const MetricReport& r) {
  j = {{"schema_version", r.schema_version},
       {"title", r.title},
       {"label_header", r.label_header},
       {"config_hash", r.config_hash},
       {"rows", r.rows}};
}

void from_json(const nlohmann::json& j, MetricReport& r) {
  r.schema_version = j.at("schema_version").get<int>();
  r.title = j.value("title", std::string());
  r.label_header = j.value("label_header", std::string("Method"));
  r.config_hash = j.value("config_hash", std::string());
  r.rows = j.at("rows").get<std::vector<MetricRow>>();
}

}  // namespace neo
