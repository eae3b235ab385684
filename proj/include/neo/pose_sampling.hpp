#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"
#include "neo/geometry.hpp"
#include "neo/scene.hpp"

namespace neo {

enum class Dof { Z, Pitch, Roll, Yaw, X, Y };
inline constexpr int kDofCount = 6;

enum class DistributionKind { Fixed, Uniform, Gaussian };

struct DofSpec {
  DistributionKind kind = DistributionKind::Fixed;
  /// Fixed: a = value. Uniform: [a, b]. Gaussian: mean a, stddev b.
  double a = 0.0;
  double b = 0.0;

  static DofSpec fixed(double value) { return {DistributionKind::Fixed, value, value}; }
  static DofSpec uniform(double lo, double hi) { return {DistributionKind::Uniform, lo, hi}; }
  static DofSpec gaussian(double mean, double stddev) {
    return {DistributionKind::Gaussian, mean, stddev};
  }

  void validate() const;
  /// Maps two unit-interval variates to a draw. Gaussian draws are clamped
  /// to mean ± 4 stddev.
  [[nodiscard]] double draw(double u1, double u2) const;
  bool operator==(const DofSpec&) const = default;
};

/// Angles in degrees, positions in metres.
struct DofDistribution {
  std::array<DofSpec, kDofCount> dofs{DofSpec::fixed(1.5), DofSpec::fixed(0.0),
                                      DofSpec::fixed(0.0), DofSpec::uniform(0.0, 360.0),
                                      DofSpec::fixed(0.0), DofSpec::fixed(0.0)};

  DofSpec& operator[](Dof d) { return dofs[static_cast<int>(d)]; }
  const DofSpec& operator[](Dof d) const { return dofs[static_cast<int>(d)]; }
  void validate() const;
};

/// Which distribution family each DoF is fitted with.
using DofFitSpec = std::array<DistributionKind, kDofCount>;

/// Fixed z/pitch/roll, as for cameras held at a constant height.
DofFitSpec default_fit_spec();

struct SamplerConfig {
  double interval = 0.05;
  int yaw_count = 72;
  std::optional<double> coverage_threshold;
  std::uint64_t seed = 0;
  /// Draw yaw from the distribution instead of sweeping yaw_count angles.
  bool yaw_from_distribution = false;

  void validate() const;
};

struct SampledPose {
  Pose pose;
  int position_index = 0;
  int yaw_index = 0;
};

/// Lattice anchored at the minimum corner of the walkable bounding box with
/// points on both edges; a point is kept when its cell is walkable.
std::vector<Vec2> grid_positions(const WalkableArea& walkable, double interval);

std::vector<double> yaw_sweep(int k);

DofDistribution fit_dof_distribution(std::span<const Pose> training_poses,
                                     const DofFitSpec& spec);

/// Per candidate: planar distance to the nearest anchor is within threshold.
std::vector<bool> coverage_mask(std::span<const Pose> candidates,
                                std::span<const Pose> anchors, double threshold);

std::vector<Pose> coverage_filter(std::span<const Pose> candidates,
                                  std::span<const Pose> anchors, double threshold);

/// Grid positions × yaw sweep with the remaining DoFs drawn from `dof`,
/// ordered by (position index, yaw index). Each pose's draws depend only on
/// (seed, position index, yaw index).
std::vector<SampledPose> sample_poses(const WalkableArea& walkable,
                                      const SamplerConfig& cfg,
                                      const DofDistribution& dof,
                                      std::span<const Pose> anchors = {});

void write_pose_list(const std::filesystem::path& path, std::span<const SampledPose> poses);
std::vector<SampledPose> read_pose_list(const std::filesystem::path& path);

nlohmann::json fit_spec_to_json(const DofFitSpec& spec);
DofFitSpec fit_spec_from_json(const nlohmann::json& j);
void to_json(nlohmann::json& j, const DofSpec& s);
void from_json(const nlohmann::json& j, DofSpec& s);
void to_json(nlohmann::json& j, const DofDistribution& d);
void from_json(const nlohmann::json& j, DofDistribution& d);
void to_json(nlohmann::json& j, const SamplerConfig& c);
void from_json(const nlohmann::json& j, SamplerConfig& c);

}  // namespace neo
