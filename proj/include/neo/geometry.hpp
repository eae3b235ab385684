#pragma once

#include <Eigen/Core>
#include <array>
#include "json.hpp"

namespace neo {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Twist = Eigen::Matrix<double, 6, 1>;

/// Rigid world-from-camera transform. Camera frame is right-handed with +x
/// right, +y down and +z forward.
struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static Pose identity() { return {}; }

  /// Throws InvalidPose unless the rotation is orthonormal with det +1.
  void validate(double tol = 1e-9) const;

  [[nodiscard]] Vec3 transform(const Vec3& p_camera) const {
    return rotation * p_camera + translation;
  }
};

Pose compose(const Pose& a, const Pose& b);
Pose invert(const Pose& p);

/// Rodrigues exponential map.
Mat3 rotation_exp(const Vec3& omega);

/// twist = (omega, v): rotation applied on the left (world frame) about the
/// camera centre, translation added in the world frame.
Pose se3_perturb(const Pose& p, const Twist& twist);

/// Projects the rotation back onto SO(3).
Pose reorthonormalize(const Pose& p);

/// Upright camera at (x, y, z) in a z-up world. yaw is measured in the
/// world x-y plane from +x, pitch raises the optical axis, roll spins about
/// it. Angles in degrees.
Pose pose_from_dofs(double x, double y, double z, double yaw_deg,
                    double pitch_deg = 0.0, double roll_deg = 0.0);

struct PoseDofs {
  double x = 0, y = 0, z = 0;
  double yaw_deg = 0, pitch_deg = 0, roll_deg = 0;
};

/// Inverse of pose_from_dofs; yaw in [0, 360).
PoseDofs dofs_from_pose(const Pose& p);

/// Pinhole camera with principal point at the image centre.
struct CameraIntrinsics {
  double focal_px = 1.0;
  int width = 1;
  int height = 1;

  [[nodiscard]] double cx() const { return 0.5 * width; }
  [[nodiscard]] double cy() const { return 0.5 * height; }

  /// Throws InvalidIntrinsics for non-positive focal or resolution.
  void validate() const;

  /// Same field of view at `factor` times the resolution.
  [[nodiscard]] CameraIntrinsics scaled(double factor) const;

  bool operator==(const CameraIntrinsics&) const = default;
};

struct Fov {
  double x_deg = 0;
  double y_deg = 0;
};

Fov fov_from_intrinsics(const CameraIntrinsics& intr);

/// Keeps the focal length and grows the resolution symmetrically so the
/// horizontal/vertical field of view reaches the target. Dimensions are
/// rounded to the nearest even integer so the original image stays centred.
CameraIntrinsics extend_intrinsics(const CameraIntrinsics& intr,
                                   double target_fov_x_deg,
                                   double target_fov_y_deg);

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();

  [[nodiscard]] Vec3 at(double t) const { return origin + t * direction; }
};

/// (x, y) are pixel indices; the ray passes through the pixel centre.
Ray ray_for_pixel(const Pose& pose, const CameraIntrinsics& intr, double x,
                  double y);

/// Pixel-index coordinates of a world point; inverse of ray_for_pixel.
/// Returns false when the point is behind the camera.
bool project(const Pose& pose, const CameraIntrinsics& intr, const Vec3& world,
             Vec2& pixel, double& depth_z);

/// Offset of the small image inside the large canvas for two intrinsics
/// sharing a focal length. Throws InvalidArgument when the small image does
/// not fit or cannot be centred on the pixel grid.
std::array<int, 2> central_offset(const CameraIntrinsics& small,
                                  const CameraIntrinsics& large);

double deg_to_rad(double deg);
double rad_to_deg(double rad);

void to_json(nlohmann::json& j, const Pose& p);
void from_json(const nlohmann::json& j, Pose& p);
void to_json(nlohmann::json& j, const CameraIntrinsics& intr);
void from_json(const nlohmann::json& j, CameraIntrinsics& intr);

}  // namespace neo
