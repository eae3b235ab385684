#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"
#include "neo/geometry.hpp"
#include "neo/image.hpp"
#include "neo/scene.hpp"

namespace neo {

struct RenderConfig {
  int samples = 192;
  double near = 0.05;
  double far = 6.0;
  std::array<double, 3> background{0.0, 0.0, 0.0};
  /// Marching stops once transmittance drops below this value; 0 disables
  /// early termination. The remaining transmittance still weights the
  /// background, so weights and final transmittance always sum to one.
  double min_transmittance = 0.0;

  void validate() const;
  [[nodiscard]] double step() const { return (far - near) / samples; }
};

struct FieldSample {
  double density = 0;
  std::array<double, 3> color{0, 0, 0};
};

struct RenderedRay {
  std::array<double, 3> color{0, 0, 0};
  double final_transmittance = 1.0;
  /// Sum of the per-sample compositing weights.
  double weight_sum = 0.0;
};

/// Dense voxel grid of raw density and colour values with trilinear
/// interpolation; density = softplus(raw), colour = logistic(raw).
///
/// Grid values live on the lattice min + i * (max - min) / (dim - 1), so the
/// outermost samples sit exactly on the bounds. Parameters are interleaved
/// per voxel as (density, r, g, b) with voxel index (ix * ny + iy) * nz + iz.
class VoxelRadianceField {
 public:
  static constexpr int kChannels = 4;

  VoxelRadianceField() = default;
  VoxelRadianceField(Box bounds, std::array<int, 3> dims,
                     float density_raw = 0.0f, float color_raw = 0.0f);

  /// Grid initialised to constant density and colour after activation.
  static VoxelRadianceField constant(Box bounds, std::array<int, 3> dims,
                                     double density = 0.01, double color = 0.5);

  [[nodiscard]] const Box& bounds() const { return bounds_; }
  [[nodiscard]] const std::array<int, 3>& dims() const { return dims_; }
  [[nodiscard]] std::size_t voxel_count() const {
    return static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2];
  }
  [[nodiscard]] std::size_t voxel_index(int ix, int iy, int iz) const {
    return (static_cast<std::size_t>(ix) * dims_[1] + iy) * dims_[2] + iz;
  }
  [[nodiscard]] Vec3 voxel_position(int ix, int iy, int iz) const;

  std::span<float> params() { return params_; }
  [[nodiscard]] std::span<const float> params() const { return params_; }

  float& density_raw(std::size_t voxel) { return params_[kChannels * voxel]; }
  float& color_raw(std::size_t voxel, int c) { return params_[kChannels * voxel + 1 + c]; }

  [[nodiscard]] FieldSample query(const Vec3& p) const;

  /// Trilinear resampling of the raw grids onto new dimensions.
  [[nodiscard]] VoxelRadianceField resampled(std::array<int, 3> dims) const;

  void validate() const;

  void save(const std::filesystem::path& path) const;
  static VoxelRadianceField load(const std::filesystem::path& path);
  [[nodiscard]] std::vector<std::uint8_t> serialize() const;
  static VoxelRadianceField deserialize(std::span<const std::uint8_t> bytes);

  /// Corner indices and weights for trilinear interpolation at p. Returns
  /// false outside the bounds.
  bool corners(const Vec3& p, std::array<std::size_t, 8>& index,
               std::array<double, 8>& weight) const;

 private:
  Box bounds_;
  std::array<int, 3> dims_{0, 0, 0};
  Vec3 scale_ = Vec3::Zero();
  std::vector<float> params_;
};

double softplus(double x);
double logistic(double x);
double inverse_softplus(double y);
double logit(double y);

RenderedRay volume_render(const VoxelRadianceField& field, const Ray& ray,
                          const RenderConfig& cfg);

ImageBuffer render_view(const VoxelRadianceField& field, const Pose& pose,
                        const CameraIntrinsics& intr, const RenderConfig& cfg);

struct TrainingRay {
  Ray ray;
  std::array<float, 3> rgb{0, 0, 0};
};

/// Mean squared error over rays and channels. When `grad` is non-empty the
/// analytic gradient with respect to the raw parameters is accumulated into
/// it (same layout as params()).
double photometric_loss(const VoxelRadianceField& field,
                        std::span<const TrainingRay> rays,
                        const RenderConfig& cfg, std::span<double> grad = {});

struct ScheduleStage {
  int start_iteration = 0;
  std::array<int, 3> dims{64, 64, 64};
};

struct FitConfig {
  int iterations = 8000;
  int rays_per_batch = 1024;
  double lr_density = 1.0;
  double lr_color = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double epsilon = 1e-8;
  std::vector<ScheduleStage> schedule{{0, {16, 16, 16}},
                                      {2000, {32, 32, 32}},
                                      {4000, {64, 64, 64}},
                                      {6000, {128, 128, 128}}};
  /// Weight of the mean squared raw-density difference over grid edges.
  double tv_weight = 1e-6;
  RenderConfig render;

  void validate() const;
};

struct FitView {
  ImageBuffer image;
  Pose pose;
  CameraIntrinsics intr;
};

struct FitResult {
  VoxelRadianceField field;
  std::vector<double> loss_trace;
};

using FitProgress = std::function<void(int iteration, double loss)>;

/// Adaptive-moment gradient descent on the photometric loss over rays drawn
/// uniformly from all views. Views are canonically ordered first, so the
/// result depends only on the view set, the config and the seed.
FitResult fit(VoxelRadianceField field, std::span<const FitView> views,
              const FitConfig& cfg, std::uint64_t seed,
              const FitProgress& progress = {});

struct GradCheckOptions {
  int max_params = 1000;
  double step = 1e-4;
  std::uint64_t seed = 0;
  /// Negative control: doubles the analytic gradient of this parameter and
  /// forces it into the checked set.
  std::optional<std::size_t> corrupt_param;
};

struct GradCheckResult {
  double max_relative_error = 0;
  int checked = 0;
};

GradCheckResult grad_check(const VoxelRadianceField& field,
                           std::span<const TrainingRay> rays,
                           const RenderConfig& cfg,
                           const GradCheckOptions& options = {});

void to_json(nlohmann::json& j, const RenderConfig& c);
void from_json(const nlohmann::json& j, RenderConfig& c);
void to_json(nlohmann::json& j, const FitConfig& c);
void from_json(const nlohmann::json& j, FitConfig& c);

}  // namespace neo
