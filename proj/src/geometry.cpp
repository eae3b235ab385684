#include "neo/geometry.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <Eigen/SVD>
#include <cmath>
#include <numbers>
#include <sstream>

#include "neo/error.hpp"

namespace neo {

double deg_to_rad(double deg) { return deg * std::numbers::pi / 180.0; }
double rad_to_deg(double rad) { return rad * 180.0 / std::numbers::pi; }

void Pose::validate(double tol) const {
  if (!rotation.allFinite() || !translation.allFinite()) {
    fail(ErrorKind::InvalidPose, "pose has non-finite entries");
  }
  const double ortho = (rotation.transpose() * rotation - Mat3::Identity())
                           .cwiseAbs()
                           .maxCoeff();
  const double det = rotation.determinant();
  if (ortho > tol || std::abs(det - 1.0) > tol) {
    std::ostringstream msg;
    msg << "rotation is not in SO(3): orthogonality error " << ortho
        << ", determinant " << det;
    fail(ErrorKind::InvalidPose, msg.str());
  }
}

Pose compose(const Pose& a, const Pose& b) {
  return {a.rotation * b.rotation, a.rotation * b.translation + a.translation};
}

Pose invert(const Pose& p) {
  const Mat3 rt = p.rotation.transpose();
  return {rt, -(rt * p.translation)};
}

Mat3 rotation_exp(const Vec3& omega) {
  const double theta = omega.norm();
  const Mat3 k = (Mat3() << 0, -omega.z(), omega.y(),  //
                  omega.z(), 0, -omega.x(),            //
                  -omega.y(), omega.x(), 0)
                     .finished();
  if (theta < 1e-12) {
    return Mat3::Identity() + k;
  }
  const double a = std::sin(theta) / theta;
  const double b = (1.0 - std::cos(theta)) / (theta * theta);
  return Mat3::Identity() + a * k + b * k * k;
}

Pose se3_perturb(const Pose& p, const Twist& twist) {
  const Vec3 omega = twist.head<3>();
  const Vec3 v = twist.tail<3>();
  return {rotation_exp(omega) * p.rotation, p.translation + v};
}

Pose reorthonormalize(const Pose& p) {
  Eigen::JacobiSVD<Mat3> svd(p.rotation,
                             Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0) {
    Mat3 u = svd.matrixU();
    u.col(2) *= -1.0;
    r = u * svd.matrixV().transpose();
  }
  return {r, p.translation};
}

namespace {

// Camera looking along world +x with image-down along world -z.
const Mat3& base_rotation() {
  static const Mat3 base = (Mat3() << 0, 0, 1,  //
                            -1, 0, 0,           //
                            0, -1, 0)
                               .finished();
  return base;
}

Mat3 rot_x(double a) {
  return Eigen::AngleAxisd(a, Vec3::UnitX()).toRotationMatrix();
}
Mat3 rot_z(double a) {
  return Eigen::AngleAxisd(a, Vec3::UnitZ()).toRotationMatrix();
}

}  // namespace

Pose pose_from_dofs(double x, double y, double z, double yaw_deg,
                    double pitch_deg, double roll_deg) {
  Pose p;
  p.rotation = rot_z(deg_to_rad(yaw_deg)) * base_rotation() *
               rot_x(deg_to_rad(pitch_deg)) * rot_z(deg_to_rad(roll_deg));
  p.translation = Vec3(x, y, z);
  return p;
}

PoseDofs dofs_from_pose(const Pose& p) {
  PoseDofs d;
  d.x = p.translation.x();
  d.y = p.translation.y();
  d.z = p.translation.z();
  const Vec3 fwd = p.rotation.col(2);
  const double yaw = std::atan2(fwd.y(), fwd.x());
  const double pitch = std::asin(std::clamp(fwd.z(), -1.0, 1.0));
  const Mat3 q = (rot_z(yaw) * base_rotation() * rot_x(pitch)).transpose() *
                 p.rotation;
  const double roll = std::atan2(q(1, 0), q(0, 0));
  d.yaw_deg = rad_to_deg(yaw);
  if (d.yaw_deg < 0) d.yaw_deg += 360.0;
  if (d.yaw_deg >= 360.0) d.yaw_deg -= 360.0;
  d.pitch_deg = rad_to_deg(pitch);
  d.roll_deg = rad_to_deg(roll);
  return d;
}

void CameraIntrinsics::validate() const {
  if (!(focal_px > 0.0) || !std::isfinite(focal_px) || width <= 0 ||
      height <= 0) {
    std::ostringstream msg;
    msg << "invalid intrinsics: focal " << focal_px << ", " << width << "x"
        << height;
    fail(ErrorKind::InvalidIntrinsics, msg.str());
  }
}

CameraIntrinsics CameraIntrinsics::scaled(double factor) const {
  return {focal_px * factor, static_cast<int>(std::lround(width * factor)),
          static_cast<int>(std::lround(height * factor))};
}

Fov fov_from_intrinsics(const CameraIntrinsics& intr) {
  intr.validate();
  return {rad_to_deg(2.0 * std::atan(intr.width / (2.0 * intr.focal_px))),
          rad_to_deg(2.0 * std::atan(intr.height / (2.0 * intr.focal_px)))};
}

namespace {

int extended_dim(double focal, double target_deg) {
  const double exact = 2.0 * focal * std::tan(deg_to_rad(target_deg) / 2.0);
  return 2 * static_cast<int>(std::lround(exact / 2.0));
}

}  // namespace

CameraIntrinsics extend_intrinsics(const CameraIntrinsics& intr,
                                   double target_fov_x_deg,
                                   double target_fov_y_deg) {
  const Fov current = fov_from_intrinsics(intr);
  if (!(target_fov_x_deg > current.x_deg) ||
      !(target_fov_y_deg > current.y_deg) || !(target_fov_x_deg < 180.0) ||
      !(target_fov_y_deg < 180.0)) {
    std::ostringstream msg;
    msg << "target FOV (" << target_fov_x_deg << ", " << target_fov_y_deg
        << ") must exceed the current FOV (" << current.x_deg << ", "
        << current.y_deg << ") and stay below 180 degrees";
    fail(ErrorKind::InvalidTarget, msg.str());
  }
  CameraIntrinsics out = intr;
  out.width = extended_dim(intr.focal_px, target_fov_x_deg);
  out.height = extended_dim(intr.focal_px, target_fov_y_deg);
  if ((out.width - intr.width) % 2 != 0 || (out.height - intr.height) % 2 != 0 ||
      out.width <= intr.width || out.height <= intr.height) {
    std::ostringstream msg;
    msg << "extension to " << out.width << "x" << out.height
        << " cannot be centred on a " << intr.width << "x" << intr.height
        << " image";
    fail(ErrorKind::InvalidTarget, msg.str());
  }
  return out;
}

Ray ray_for_pixel(const Pose& pose, const CameraIntrinsics& intr, double x,
                  double y) {
  if (!(x >= 0.0 && x < intr.width && y >= 0.0 && y < intr.height)) {
    std::ostringstream msg;
    msg << "pixel (" << x << ", " << y << ") outside " << intr.width << "x"
        << intr.height;
    fail(ErrorKind::OutOfRange, msg.str());
  }
  const Vec3 dir_cam((x + 0.5 - intr.cx()) / intr.focal_px,
                     (y + 0.5 - intr.cy()) / intr.focal_px, 1.0);
  return {pose.translation, (pose.rotation * dir_cam).normalized()};
}

bool project(const Pose& pose, const CameraIntrinsics& intr, const Vec3& world,
             Vec2& pixel, double& depth_z) {
  const Vec3 pc = pose.rotation.transpose() * (world - pose.translation);
  depth_z = pc.z();
  if (pc.z() <= 0.0) return false;
  pixel.x() = intr.focal_px * pc.x() / pc.z() + intr.cx() - 0.5;
  pixel.y() = intr.focal_px * pc.y() / pc.z() + intr.cy() - 0.5;
  return true;
}

std::array<int, 2> central_offset(const CameraIntrinsics& small,
                                  const CameraIntrinsics& large) {
  const int dx = large.width - small.width;
  const int dy = large.height - small.height;
  if (dx < 0 || dy < 0 || dx % 2 != 0 || dy % 2 != 0) {
    std::ostringstream msg;
    msg << small.width << "x" << small.height << " cannot be centred in "
        << large.width << "x" << large.height;
    fail(ErrorKind::InvalidArgument, msg.str());
  }
  return {dx / 2, dy / 2};
}

void to_json(nlohmann::json& j, const Pose& p) {
  nlohmann::json rot = nlohmann::json::array();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) rot.push_back(p.rotation(r, c));
  j = nlohmann::json{
      {"rotation", rot},
      {"translation",
       {p.translation.x(), p.translation.y(), p.translation.z()}}};
}

void from_json(const nlohmann::json& j, Pose& p) {
  const auto& rot = j.at("rotation");
  const auto& tr = j.at("translation");
  if (rot.size() != 9 || tr.size() != 3) {
    fail(ErrorKind::Format, "pose JSON needs 9 rotation and 3 translation values");
  }
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) p.rotation(r, c) = rot[3 * r + c].get<double>();
  for (int i = 0; i < 3; ++i) p.translation[i] = tr[i].get<double>();
}

void to_json(nlohmann::json& j, const CameraIntrinsics& intr) {
  j = nlohmann::json{
      {"focal_px", intr.focal_px}, {"width", intr.width}, {"height", intr.height}};
}

void from_json(const nlohmann::json& j, CameraIntrinsics& intr) {
  intr.focal_px = j.at("focal_px").get<double>();
  intr.width = j.at("width").get<int>();
  intr.height = j.at("height").get<int>();
}

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "invalid-argument";
    case ErrorKind::InvalidIntrinsics: return "invalid-intrinsics";
    case ErrorKind::InvalidTarget: return "invalid-target";
    case ErrorKind::OutOfRange: return "index-error";
    case ErrorKind::InvalidPose: return "invalid-pose";
    case ErrorKind::SceneGeneration: return "scene-generation";
    case ErrorKind::SpecViolation: return "spec-violation";
    case ErrorKind::FitDiverged: return "fit-error";
    case ErrorKind::TrainingDiverged: return "training-error";
    case ErrorKind::Architecture: return "architecture-error";
    case ErrorKind::Io: return "io-error";
    case ErrorKind::Format: return "format-error";
    case ErrorKind::StaleArtifact: return "stale-artifact";
    case ErrorKind::MissingArtifact: return "missing-artifact";
  }
  return "error";
}

}  // namespace neo
