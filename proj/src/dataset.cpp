#include "neo/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <unordered_set>

#include "neo/error.hpp"
#include "neo/parallel.hpp"

namespace neo {

std::size_t DatasetManifest::kept_count() const {
  return static_cast<std::size_t>(
      std::count_if(records.begin(), records.end(), [](const PairRecord& r) { return r.kept; }));
}

void DatasetManifest::validate() const {
  if (schema_version != kManifestSchemaVersion) {
    fail(ErrorKind::Format, "unsupported manifest schema version " +
                                std::to_string(schema_version));
  }
  small_intr.validate();
  large_intr.validate();
  if (small_intr.focal_px != large_intr.focal_px) {
    fail(ErrorKind::InvalidArgument, "small and large intrinsics must share a focal length");
  }
  central_offset(small_intr, large_intr);
  std::unordered_set<std::string> ids;
  for (const auto& r : records) {
    if (!ids.insert(r.id).second) {
      fail(ErrorKind::InvalidArgument, "duplicate pair id '" + r.id + "'");
    }
  }
}

std::string pair_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06zu", index);
  return buf;
}

namespace {

double laplacian_variance(const std::vector<double>& y, int w, int h) {
  if (w < 3 || h < 3) fail(ErrorKind::InvalidArgument, "blur score needs at least 3x3 pixels");
  double sum = 0, sum_sq = 0;
  const auto n = static_cast<double>(w - 2) * (h - 2);
  for (int r = 1; r < h - 1; ++r) {
    for (int c = 1; c < w - 1; ++c) {
      const std::size_t i = static_cast<std::size_t>(r) * w + c;
      const double v = y[i - w] + y[i + w] + y[i - 1] + y[i + 1] - 4.0 * y[i];
      sum += v;
      sum_sq += v * v;
    }
  }
  const double mean = sum / n;
  return std::max(0.0, sum_sq / n - mean * mean);
}

}  // namespace

double blur_score(const ImageBuffer& img) {
  return laplacian_variance(luma(img), img.width(), img.height());
}

double blur_score(const Rgb8Image& img) { return blur_score(from_rgb8(img)); }

double percentile(std::vector<double> values, double q) {
  if (values.empty()) fail(ErrorKind::InvalidArgument, "percentile of an empty set");
  if (!(q >= 0 && q <= 1)) fail(ErrorKind::InvalidArgument, "percentile q must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

Dataset dataset_from_large(std::vector<Rgb8Image> large, std::span<const Pose> poses,
                           const CameraIntrinsics& small_intr,
                           const CameraIntrinsics& large_intr) {
  if (large.size() != poses.size()) {
    fail(ErrorKind::InvalidArgument, "image and pose counts differ");
  }
  Dataset ds;
  ds.manifest.small_intr = small_intr;
  ds.manifest.large_intr = large_intr;
  ds.manifest.validate();
  ds.pairs.resize(large.size());
  ds.manifest.records.resize(large.size());
  parallel_for(large.size(), [&](std::size_t i) {
    if (large[i].width != large_intr.width || large[i].height != large_intr.height) {
      fail(ErrorKind::InvalidArgument, "pair " + pair_id(i) + " does not match large intrinsics");
    }
    auto& rec = ds.manifest.records[i];
    rec.id = pair_id(i);
    rec.pose = poses[i];
    rec.blur_score = blur_score(large[i]);
    ds.pairs[i].small = crop_center(large[i], small_intr.width, small_intr.height);
    ds.pairs[i].large = std::move(large[i]);
  });
  return ds;
}

Dataset generate_pairs(const VoxelRadianceField& field, std::span<const SampledPose> poses,
                       const CameraIntrinsics& small_intr, const CameraIntrinsics& large_intr,
                       const RenderConfig& render) {
  if (small_intr.focal_px != large_intr.focal_px) {
    fail(ErrorKind::InvalidArgument, "small and large intrinsics must share a focal length");
  }
  central_offset(small_intr, large_intr);
  std::vector<Rgb8Image> large(poses.size());
  parallel_for(poses.size(), [&](std::size_t i) {
    large[i] = to_rgb8(render_view(field, poses[i].pose, large_intr, render));
  });
  std::vector<Pose> plain;
  plain.reserve(poses.size());
  for (const auto& p : poses) plain.push_back(p.pose);
  Dataset ds = dataset_from_large(std::move(large), plain, small_intr, large_intr);
  for (std::size_t i = 0; i < poses.size(); ++i) {
    ds.manifest.records[i].position_index = poses[i].position_index;
    ds.manifest.records[i].yaw_index = poses[i].yaw_index;
  }
  return ds;
}

void filter_blurry(DatasetManifest& manifest, double threshold) {
  if (!(threshold >= 0)) fail(ErrorKind::InvalidArgument, "blur threshold must be >= 0");
  for (auto& r : manifest.records) r.kept = r.blur_score >= threshold;
}

void persist(const Dataset& dataset, const std::filesystem::path& dir) {
  dataset.manifest.validate();
  if (dataset.pairs.size() != dataset.manifest.records.size()) {
    fail(ErrorKind::InvalidArgument, "dataset images and records are misaligned");
  }
  std::filesystem::create_directories(dir / "pairs");
  parallel_for(dataset.pairs.size(), [&](std::size_t i) {
    const auto& id = dataset.manifest.records[i].id;
    write_png(dir / "pairs" / (id + "_small.png"), dataset.pairs[i].small);
    write_png(dir / "pairs" / (id + "_large.png"), dataset.pairs[i].large);
  });
  std::ofstream f(dir / "manifest.json");
  f << nlohmann::json(dataset.manifest).dump(1) << '\n';
  if (!f) fail(ErrorKind::Io, "failed writing " + (dir / "manifest.json").string());
}

Dataset load_dataset(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  std::ifstream f(manifest_path);
  if (!f) fail(ErrorKind::MissingArtifact, "missing dataset manifest " + manifest_path.string());
  Dataset ds;
  try {
    ds.manifest = nlohmann::json::parse(f).get<DatasetManifest>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, manifest_path.string() + ": " + e.what());
  }
  ds.manifest.validate();
  ds.pairs.resize(ds.manifest.records.size());
  const auto& m = ds.manifest;
  parallel_for(ds.pairs.size(), [&](std::size_t i) {
    const auto& id = m.records[i].id;
    auto load = [&](const char* suffix, const CameraIntrinsics& intr) {
      Rgb8Image img;
      try {
        img = read_png(dir / "pairs" / (id + suffix));
      } catch (const Error& e) {
        fail(e.kind(), "pair " + id + ": " + e.what());
      }
      if (img.width != intr.width || img.height != intr.height) {
        fail(ErrorKind::Format, "pair " + id + ": image size does not match the manifest");
      }
      return img;
    };
    ds.pairs[i].small = load("_small.png", m.small_intr);
    ds.pairs[i].large = load("_large.png", m.large_intr);
  });
  return ds;
}

void to_json(nlohmann::json& j, const PairRecord& r) {
  j = {{"id", r.id},
       {"small", "pairs/" + r.id + "_small.png"},
       {"large", "pairs/" + r.id + "_large.png"},
       {"pose", r.pose},
       {"position_index", r.position_index},
       {"yaw_index", r.yaw_index},
       {"blur_score", r.blur_score},
       {"kept", r.kept}};
}

void from_json(const nlohmann::json& j, PairRecord& r) {
  r.id = j.at("id").get<std::string>();
  r.pose = j.at("pose").get<Pose>();
  r.position_index = j.value("position_index", -1);
  r.yaw_index = j.value("yaw_index", -1);
  r.blur_score = j.at("blur_score").get<double>();
  r.kept = j.at("kept").get<bool>();
}

void to_json(nlohmann::json& j, const DatasetManifest& m) {
  j = {{"schema_version", m.schema_version},
       {"small_intrinsics", m.small_intr},
       {"large_intrinsics", m.large_intr},
       {"config_hash", m.config_hash},
       {"seed", m.seed},
       {"records", m.records}};
}

void from_json(const nlohmann::json& j, DatasetManifest& m) {
  m.schema_version = j.at("schema_version").get<int>();
  m.small_intr = j.at("small_intrinsics").get<CameraIntrinsics>();
  m.large_intr = j.at("large_intrinsics").get<CameraIntrinsics>();
  m.config_hash = j.value("config_hash", std::string());
  m.seed = j.value("seed", std::uint64_t{0});
  m.records = j.at("records").get<std::vector<PairRecord>>();
}

}  // namespace neo
