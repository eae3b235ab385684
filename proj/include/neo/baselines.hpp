#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "json.hpp"
#include "neo/dataset.hpp"
#include "neo/geometry.hpp"
#include "neo/image.hpp"
#include "neo/radiance_field.hpp"
#include "neo/scene.hpp"

namespace neo {

/// Resize each training image to the large resolution, then crop its centre
/// to the small resolution. The small crop therefore covers a narrower field
/// of view than the real small images do.
Dataset naive_dataset(std::span<const ImageBuffer> training_images,
                      std::span<const Pose> poses, const CameraIntrinsics& small_intr,
                      const CameraIntrinsics& large_intr);

/// Replaces the central region of `large` with `center`.
ImageBuffer paste_center(ImageBuffer large, const ImageBuffer& center);

ImageBuffer oracle_nerf(const VoxelRadianceField& field, const Pose& gt_pose,
                        const CameraIntrinsics& large_intr, const ImageBuffer& center,
                        const RenderConfig& render);

inline constexpr int kThumbnailSize = 16;

struct RetrievalIndex {
  std::vector<Pose> poses;
  std::vector<std::vector<float>> descriptors;

  /// Entries ordered by descriptor distance, ties by index.
  [[nodiscard]] std::vector<std::size_t> nearest(const ImageBuffer& query, std::size_t k) const;
};

/// 16x16 area-averaged luma.
std::vector<float> thumbnail_descriptor(const ImageBuffer& img);

RetrievalIndex build_retrieval_index(std::span<const ImageBuffer> images,
                                     std::span<const Pose> poses);

struct RelocalizeConfig {
  /// Working resolutions (square side in pixels), coarse to fine.
  std::vector<int> stage_sizes{16, 32};
  std::vector<int> stage_iterations{12, 8};
  double fd_step_rotation = 2e-3;   // radians
  double fd_step_translation = 2e-3;  // metres
  /// Metres of translation treated as equivalent to one radian of rotation.
  double translation_scale = 2.0;
  double initial_step = 0.05;
  int max_backtracks = 6;
  /// Final MSE above this marks the relocalization as failed.
  double failure_residual = 0.01;
  /// Not serialized; the pipeline uses the field's render settings.
  RenderConfig render;
};

struct RelocalizeResult {
  Pose pose;
  Pose initial_pose;
  std::size_t retrieved = 0;
  double residual = 0;
  /// Finest-stage residual at the initial pose and after each stage.
  std::vector<double> stage_residuals;
  bool failed = false;
};

/// Refines `init` by photometric gradient descent against the field.
RelocalizeResult refine_pose(const VoxelRadianceField& field, const ImageBuffer& test,
                             const CameraIntrinsics& intr, const Pose& init,
                             const RelocalizeConfig& cfg);

/// Retrieval initialisation followed by refine_pose.
RelocalizeResult relocalize(const VoxelRadianceField& field, const ImageBuffer& test,
                            const RetrievalIndex& index, const CameraIntrinsics& intr,
                            const RelocalizeConfig& cfg);

struct RelocalizedOutput {
  ImageBuffer image;
  RelocalizeResult reloc;
};

RelocalizedOutput relocalized_nerf(const VoxelRadianceField& field, const ImageBuffer& test,
                                   const RetrievalIndex& index,
                                   const CameraIntrinsics& small_intr,
                                   const CameraIntrinsics& large_intr,
                                   const RelocalizeConfig& cfg);

struct WarpSource {
  ImageBuffer image;
  DepthBuffer depth;
  Pose pose;
  CameraIntrinsics intr;
};

struct WarpResult {
  ImageBuffer image;
  /// 1 where a source pixel or the test image landed.
  std::vector<std::uint8_t> valid;
  double valid_fraction = 0;
};

/// Forward-splats every source pixel through its depth into the target view
/// with a z-buffer, pastes the test image in the centre and fills holes with
/// the mean valid colour.
WarpResult warp_fuse(const ImageBuffer& test, std::span<const WarpSource> neighbors,
                     const Pose& target_pose, const CameraIntrinsics& large_intr);

void to_json(nlohmann::json& j, const RelocalizeConfig& c);
void from_json(const nlohmann::json& j, RelocalizeConfig& c);

}  // namespace neo
