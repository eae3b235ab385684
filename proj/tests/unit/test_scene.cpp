#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "neo/error.hpp"
#include "neo/scene.hpp"

using namespace neo;

namespace {

Scene empty_room() {
  SceneConfig cfg;
  cfg.obstacle_count = 0;
  return build_scene(3, cfg);
}

}  // namespace

TEST_SUITE("scene") {

TEST_CASE("scene generation is deterministic per seed") {
  const SceneConfig cfg;
  const nlohmann::json a = build_scene(11, cfg);
  const nlohmann::json b = build_scene(11, cfg);
  const nlohmann::json c = build_scene(12, cfg);
  CHECK(a == b);
  CHECK(a != c);
}

TEST_CASE("obstacles are disjoint and inside the room") {
  const SceneConfig cfg;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Scene s = build_scene(seed, cfg);
    REQUIRE(s.obstacles.size() == static_cast<std::size_t>(cfg.obstacle_count));
    for (std::size_t i = 0; i < s.obstacles.size(); ++i) {
      const Box& b = s.obstacles[i].box;
      CHECK(b.min.z() == 0.0);
      CHECK((b.min.array() >= 0.0).all());
      CHECK((b.max.array() <= cfg.room_size.array()).all());
      for (std::size_t j = i + 1; j < s.obstacles.size(); ++j) {
        CHECK_FALSE(b.overlaps(s.obstacles[j].box));
      }
    }
  }
}

TEST_CASE("scene json round trip") {
  const Scene s = build_scene(5, SceneConfig{});
  const nlohmann::json j = s;
  CHECK(nlohmann::json(j.get<Scene>()) == j);
}

TEST_CASE("wall depth matches the analytic distance") {
  const Scene s = empty_room();
  const Pose pose = pose_from_dofs(1.0, 1.75, 1.3, 0.0);
  const auto hit = trace(s, ray_for_pixel(pose, {16, 32, 32}, 15.5, 15.5));
  REQUIRE(hit);
  CHECK(hit->distance == doctest::Approx(3.0).epsilon(1e-12));

  const CameraIntrinsics intr{16, 32, 32};
  const auto gt = render_ground_truth(s, pose, intr);
  int on_wall = 0;
  for (int y = 0; y < 32; y += 3) {
    for (int x = 0; x < 32; x += 3) {
      const Ray r = ray_for_pixel(pose, intr, x, y);
      const double expected = 3.0 / r.direction.x();
      const Vec3 hit = r.at(expected);
      if (hit.y() <= 0 || hit.y() >= 3.5 || hit.z() <= 0 || hit.z() >= 2.6) continue;
      ++on_wall;
      CHECK(gt.depth.at(x, y) == doctest::Approx(expected).epsilon(1e-5));
    }
  }
  CHECK(on_wall > 20);
}

TEST_CASE("solid wall renders a constant image") {
  Scene s = empty_room();
  for (auto& f : s.room.faces) f = Texture::solid({0.25f, 0.5f, 0.75f});
  const auto gt = render_ground_truth(s, pose_from_dofs(2.0, 1.75, 1.3, 20), {16, 32, 32});
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) CHECK(gt.image.at(x, y, 2) == 0.75f);
}

TEST_CASE("checker phase follows the plane projection") {
  Scene s = empty_room();
  Texture checker;
  checker.kind = TextureKind::Checker;
  checker.color_a = {1.0f, 1.0f, 1.0f};
  checker.color_b = {0.0f, 0.0f, 0.0f};
  checker.scale = 0.5;
  s.room.faces[1] = checker;
  // Wall at x = 4 seen from 2 m away with a 90 degree field of view.
  const Pose pose = pose_from_dofs(2.0, 1.75, 1.3, 0.0);
  const CameraIntrinsics intr{16, 32, 32};
  const auto gt = render_ground_truth(s, pose, intr);
  for (auto [px, py] : {std::pair{3, 9}, std::pair{16, 16}, std::pair{27, 22}}) {
    const Vec3 d = ray_for_pixel(pose, intr, px, py).direction;
    const double t = 2.0 / d.x();
    const double y = 1.75 + t * d.y(), z = 1.3 + t * d.z();
    const bool odd = (static_cast<int>(std::floor(y / 0.5)) + static_cast<int>(std::floor(z / 0.5))) % 2 != 0;
    CHECK(gt.image.at(px, py, 0) == (odd ? 0.0f : 1.0f));
  }
}

TEST_CASE("small render equals the centre crop of the large render") {
  const Scene s = build_scene(2, SceneConfig{});
  const auto walk = WalkableArea::from_scene(s, 0.05, 0.2);
  const auto poses = sample_training_trajectory(walk, 3, 9);
  const CameraIntrinsics small{16, 32, 32};
  const CameraIntrinsics large = extend_intrinsics(small, 126.87, 126.87);
  for (const Pose& p : poses) {
    const auto a = render_ground_truth(s, p, small);
    const auto b = render_ground_truth(s, p, large);
    CHECK(crop_center(b.image, 32, 32) == a.image);
  }
}

TEST_CASE("depth back-projects to the same pixel") {
  const Scene s = build_scene(4, SceneConfig{});
  const auto walk = WalkableArea::from_scene(s, 0.05, 0.2);
  const Pose pose = sample_training_trajectory(walk, 1, 1).front();
  const CameraIntrinsics intr{16, 32, 32};
  const auto gt = render_ground_truth(s, pose, intr);
  for (int y = 0; y < 32; y += 5) {
    for (int x = 0; x < 32; x += 5) {
      const Vec3 world = ray_for_pixel(pose, intr, x, y).at(gt.depth.at(x, y));
      Vec2 px;
      double z = 0;
      REQUIRE(project(pose, intr, world, px, z));
      CHECK(px.x() == doctest::Approx(x).epsilon(1e-4));
      CHECK(px.y() == doctest::Approx(y).epsilon(1e-4));
    }
  }
}

TEST_CASE("camera position checks") {
  const Scene s = build_scene(1, SceneConfig{});
  const Box& b = s.obstacles.front().box;
  CHECK_THROWS_AS(check_camera_position(s, 0.5 * (b.min + b.max)), Error);
  CHECK_THROWS_AS(check_camera_position(s, Vec3(-1, 1, 1)), Error);
}

TEST_CASE("walkable cells clear the obstacles") {
  const Scene s = build_scene(6, SceneConfig{});
  const double margin = 0.2;
  const auto walk = WalkableArea::from_scene(s, 0.05, margin);
  REQUIRE(walk.walkable_count() > 0);
  for (int iy = 0; iy < walk.ny(); ++iy) {
    for (int ix = 0; ix < walk.nx(); ++ix) {
      if (!walk.walkable(ix, iy)) continue;
      const Vec2 c = walk.cell_center(ix, iy);
      for (const auto& o : s.obstacles) {
        const bool inside_x = c.x() > o.box.min.x() - margin && c.x() < o.box.max.x() + margin;
        const bool inside_y = c.y() > o.box.min.y() - margin && c.y() < o.box.max.y() + margin;
        CHECK_FALSE((inside_x && inside_y));
      }
    }
  }
}

TEST_CASE("training yaw is uniform") {
  const auto walk = WalkableArea::rectangle({0.5, 0.5}, {3.5, 3.0}, 0.05);
  const int n = 10000, bins = 12;
  const auto poses = sample_training_trajectory(walk, n, 21);
  std::vector<int> counts(bins, 0);
  for (const Pose& p : poses) {
    const auto d = dofs_from_pose(p);
    CHECK(walk.contains(d.x, d.y));
    CHECK(d.z == doctest::Approx(1.5));
    ++counts[std::min(bins - 1, static_cast<int>(d.yaw_deg / 30.0))];
  }
  double chi2 = 0;
  const double expected = static_cast<double>(n) / bins;
  for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
  // 99th percentile of chi-square with 11 degrees of freedom.
  CHECK(chi2 < 24.725);
}

TEST_CASE("test paths take fixed steps inside the walkable area") {
  const Scene s = build_scene(8, SceneConfig{});
  const auto walk = WalkableArea::from_scene(s, 0.05, 0.2);
  WalkConfig wc;
  const int paths = 4, per = 20;
  const auto poses = sample_test_paths(walk, paths, per, 5, wc);
  REQUIRE(poses.size() == static_cast<std::size_t>(paths * per));
  for (int p = 0; p < paths; ++p) {
    for (int k = 1; k < per; ++k) {
      const auto a = dofs_from_pose(poses[p * per + k - 1]);
      const auto b = dofs_from_pose(poses[p * per + k]);
      const double step = std::hypot(b.x - a.x, b.y - a.y);
      const bool stayed = step < 1e-12;
      CHECK((stayed || std::abs(step - wc.step) < 1e-9));
      CHECK(walk.contains(b.x, b.y));
    }
  }
  CHECK_THROWS_AS(sample_test_paths(walk, 0, 3, 1), Error);
}

TEST_CASE("depth file round trip") {
  const auto gt = render_ground_truth(empty_room(), pose_from_dofs(2, 2, 1, 45), {8, 12, 10});
  const auto dir = std::filesystem::temp_directory_path() / "neo_scene_test";
  std::filesystem::create_directories(dir);
  write_depth(dir / "d.raw", gt.depth);
  const auto back = read_depth(dir / "d.raw");
  CHECK(back.width == 12);
  CHECK(back.height == 10);
  CHECK(back.depth == gt.depth.depth);
  std::filesystem::remove_all(dir);
}

}  // TEST_SUITE
