#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "neo/geometry.hpp"
#include "neo/image.hpp"
#include "neo/pose_sampling.hpp"
#include "neo/radiance_field.hpp"

namespace neo {

inline constexpr int kManifestSchemaVersion = 1;

struct PairRecord {
  std::string id;
  Pose pose;
  int position_index = -1;
  int yaw_index = -1;
  double blur_score = 0.0;
  bool kept = true;
};

struct DatasetManifest {
  int schema_version = kManifestSchemaVersion;
  CameraIntrinsics small_intr;
  CameraIntrinsics large_intr;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::vector<PairRecord> records;

  [[nodiscard]] std::size_t kept_count() const;
  /// Throws InvalidArgument on duplicate ids or inconsistent intrinsics.
  void validate() const;
};

/// Small image is the exact central crop of the large one.
struct TrainingPair {
  Rgb8Image small;
  Rgb8Image large;
};

/// Manifest plus in-memory images, aligned with manifest.records.
struct Dataset {
  DatasetManifest manifest;
  std::vector<TrainingPair> pairs;
};

std::string pair_id(std::size_t index);

/// Laplacian-variance sharpness of the luma channel over the valid interior.
double blur_score(const ImageBuffer& img);
double blur_score(const Rgb8Image& img);

/// Linear-interpolated percentile, q in [0, 1].
double percentile(std::vector<double> values, double q);

/// Renders the large view once per pose and crops the small one out of it.
/// Images are quantized to 8 bits immediately.
Dataset generate_pairs(const VoxelRadianceField& field, std::span<const SampledPose> poses,
                       const CameraIntrinsics& small_intr, const CameraIntrinsics& large_intr,
                       const RenderConfig& render);

/// Builds a dataset from already rendered large images.
Dataset dataset_from_large(std::vector<Rgb8Image> large, std::span<const Pose> poses,
                           const CameraIntrinsics& small_intr,
                           const CameraIntrinsics& large_intr);

/// kept = large-image blur score >= threshold.
void filter_blurry(DatasetManifest& manifest, double threshold);

void persist(const Dataset& dataset, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

void to_json(nlohmann::json& j, const PairRecord& r);
void from_json(const nlohmann::json& j, PairRecord& r);
void to_json(nlohmann::json& j, const DatasetManifest& m);
void from_json(const nlohmann::json& j, DatasetManifest& m);

}  // namespace neo
