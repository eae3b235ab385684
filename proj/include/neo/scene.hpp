#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "json.hpp"
#include "neo/geometry.hpp"
#include "neo/image.hpp"

namespace neo {

enum class TextureKind { Checker, Stripes, Gradient, ValueNoise };

/// Two-colour procedural pattern over face coordinates (u, v) in metres.
struct Texture {
  TextureKind kind = TextureKind::Checker;
  std::array<float, 3> color_a{0.5f, 0.5f, 0.5f};
  std::array<float, 3> color_b{0.5f, 0.5f, 0.5f};
  double scale = 0.5;
  std::uint64_t noise_seed = 0;

  [[nodiscard]] std::array<float, 3> evaluate(double u, double v) const;

  static Texture solid(std::array<float, 3> color);
};

struct Box {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Ones();

  [[nodiscard]] bool contains(const Vec3& p) const;
  [[nodiscard]] bool overlaps(const Box& other, double gap = 0.0) const;
};

/// Face order: -x, +x, -y, +y, -z, +z.
struct TexturedBox {
  Box box;
  std::array<Texture, 6> faces;
};

struct SceneConfig {
  Vec3 room_size{4.0, 3.5, 2.6};
  int obstacle_count = 3;
  double obstacle_min_size = 0.4;
  double obstacle_max_size = 0.9;
  double obstacle_min_height = 0.5;
  double obstacle_max_height = 2.0;
  double wall_gap = 0.3;
  int max_retries = 2000;
};

/// Closed room with the floor at z = 0 and obstacles standing on the floor.
struct Scene {
  std::uint64_t seed = 0;
  SceneConfig config;
  TexturedBox room;
  std::vector<TexturedBox> obstacles;
};

Scene build_scene(std::uint64_t seed, const SceneConfig& config);

struct DepthBuffer {
  int width = 0;
  int height = 0;
  std::vector<float> depth;

  [[nodiscard]] float at(int x, int y) const {
    return depth[static_cast<std::size_t>(y) * width + x];
  }
};

struct SurfaceHit {
  double distance = 0;
  std::array<float, 3> color{0, 0, 0};
};

/// Nearest intersection of a ray starting inside the room.
std::optional<SurfaceHit> trace(const Scene& scene, const Ray& ray);

/// Throws InvalidPose when the camera centre is outside the room or inside an
/// obstacle.
void check_camera_position(const Scene& scene, const Vec3& position);

struct GroundTruthView {
  ImageBuffer image;
  DepthBuffer depth;
};

GroundTruthView render_ground_truth(const Scene& scene, const Pose& pose,
                                    const CameraIntrinsics& intr);

/// Occupancy grid over the floor; a cell is walkable when a vertical camera
/// column through its centre clears every obstacle and the walls by `margin`.
class WalkableArea {
 public:
  WalkableArea() = default;
  WalkableArea(Vec2 origin, double cell, int nx, int ny,
               std::vector<std::uint8_t> walkable);

  static WalkableArea from_scene(const Scene& scene, double cell,
                                 double margin);
  static WalkableArea rectangle(Vec2 min, Vec2 max, double cell);

  [[nodiscard]] double cell_size() const { return cell_; }
  [[nodiscard]] int nx() const { return nx_; }
  [[nodiscard]] int ny() const { return ny_; }
  [[nodiscard]] Vec2 origin() const { return origin_; }
  [[nodiscard]] bool walkable(int ix, int iy) const;
  [[nodiscard]] Vec2 cell_center(int ix, int iy) const;
  [[nodiscard]] std::size_t walkable_count() const;

  /// Point lies in a walkable cell. Points on the outer edge of the walkable
  /// bounding box belong to the adjacent interior cell.
  [[nodiscard]] bool contains(double x, double y) const;

  /// Extent of the walkable cells; nullopt when nothing is walkable.
  [[nodiscard]] std::optional<std::array<Vec2, 2>> walkable_bounds() const;

 private:
  Vec2 origin_ = Vec2::Zero();
  double cell_ = 1.0;
  int nx_ = 0;
  int ny_ = 0;
  std::vector<std::uint8_t> walkable_;
  int min_ix_ = 0, max_ix_ = -1, min_iy_ = 0, max_iy_ = -1;
};

std::vector<Pose> sample_training_trajectory(const WalkableArea& walkable,
                                             int n, std::uint64_t seed,
                                             double height = 1.5);

struct WalkConfig {
  double step = 0.15;
  double max_turn_deg = 20.0;
  double height = 1.5;
};

std::vector<Pose> sample_test_paths(const WalkableArea& walkable, int paths,
                                    int per_path, std::uint64_t seed,
                                    const WalkConfig& walk = {});

void to_json(nlohmann::json& j, const Scene& s);
void from_json(const nlohmann::json& j, Scene& s);
void to_json(nlohmann::json& j, const SceneConfig& c);
void from_json(const nlohmann::json& j, SceneConfig& c);

/// Raw little-endian float32 with a {width, height} JSON sidecar.
void write_depth(const std::filesystem::path& raw_path, const DepthBuffer& depth);
DepthBuffer read_depth(const std::filesystem::path& raw_path);

}  // namespace neo
