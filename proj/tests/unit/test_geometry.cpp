#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "neo/error.hpp"
#include "neo/geometry.hpp"

using namespace neo;

namespace {

Pose random_pose(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  return {rotation_exp(Vec3(u(rng), u(rng), u(rng))), Vec3(u(rng), u(rng), u(rng))};
}

double pose_distance(const Pose& a, const Pose& b) {
  return (a.rotation - b.rotation).cwiseAbs().maxCoeff() +
         (a.translation - b.translation).cwiseAbs().maxCoeff();
}

}  // namespace

TEST_SUITE("geometry") {

TEST_CASE("fov of the reference cameras") {
  const Fov small = fov_from_intrinsics({128, 256, 256});
  CHECK(small.x_deg == doctest::Approx(90.0).epsilon(1e-12));
  CHECK(small.y_deg == doctest::Approx(90.0).epsilon(1e-12));
  const Fov large = fov_from_intrinsics({128, 512, 512});
  CHECK(std::abs(large.x_deg - 126.87) < 0.01);
  for (double f : {0.5, 7.0, 333.0}) {
    CHECK(fov_from_intrinsics({f, static_cast<int>(2 * f), 2}).x_deg ==
          doctest::Approx(90.0));
  }
}

TEST_CASE("fov rejects degenerate intrinsics") {
  CHECK_THROWS_AS(fov_from_intrinsics({0.0, 10, 10}), Error);
  CHECK_THROWS_AS(fov_from_intrinsics({10.0, 0, 10}), Error);
  try {
    fov_from_intrinsics({-1.0, 10, 10});
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InvalidIntrinsics);
  }
}

TEST_CASE("extend_intrinsics keeps the focal length") {
  const auto big = extend_intrinsics({128, 256, 256}, 126.87, 126.87);
  CHECK(big.width == 512);
  CHECK(big.height == 512);
  CHECK(big.focal_px == 128);

  // 2 * 120 * tan(63.435 deg) = 480.0
  const double target = rad_to_deg(2 * std::atan(2.0));
  CHECK(extend_intrinsics({120, 240, 160}, target, 100.0).width == 480);

  try {
    extend_intrinsics({128, 256, 256}, 90.0, 126.87);
    FAIL("equal FOV accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InvalidTarget);
  }
  CHECK_THROWS_AS(extend_intrinsics({128, 256, 256}, 180.0, 120.0), Error);
}

TEST_CASE("extended fov matches the target within rounding") {
  for (double f : {16.0, 32.0, 64.0}) {
    for (double target : {100.0, 110.0, 126.87, 140.0}) {
      const auto ext = extend_intrinsics({f, static_cast<int>(2 * f), static_cast<int>(2 * f)},
                                         target, target);
      // Rounding to an even width moves each edge by at most half a pixel.
      const double c = std::cos(deg_to_rad(target / 2));
      CHECK(std::abs(fov_from_intrinsics(ext).x_deg - target) <= rad_to_deg(c * c / f) + 1e-9);
      CHECK((ext.width - static_cast<int>(2 * f)) % 2 == 0);
    }
  }
}

TEST_CASE("ray directions") {
  const CameraIntrinsics intr{128, 256, 256};
  // Pixel 127.5 has its centre on the principal point.
  const Ray centre = ray_for_pixel(Pose::identity(), intr, 127.5, 127.5);
  CHECK((centre.direction - Vec3::UnitZ()).norm() < 1e-15);

  const CameraIntrinsics wide{128, 1024, 256};
  const Ray right = ray_for_pixel(Pose::identity(), wide, 511.5 + 128, 127.5);
  CHECK(rad_to_deg(std::acos(right.direction.z())) == doctest::Approx(45.0));

  const Ray corner = ray_for_pixel(Pose::identity(), intr, 0, 0);
  const Vec3 expected = Vec3(-0.99609375, -0.99609375, 1.0).normalized();
  CHECK((corner.direction - expected).norm() < 1e-12);
  CHECK(corner.direction.norm() == doctest::Approx(1.0).epsilon(1e-12));

  try {
    ray_for_pixel(Pose::identity(), intr, 256, 0);
    FAIL("out-of-range pixel accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::OutOfRange);
  }
  CHECK_THROWS_AS(ray_for_pixel(Pose::identity(), intr, 0, -0.5), Error);
}

TEST_CASE("project inverts ray_for_pixel") {
  std::mt19937_64 rng(3);
  const CameraIntrinsics intr{40, 64, 48};
  for (int k = 0; k < 20; ++k) {
    const Pose p = random_pose(rng);
    for (int y = 0; y < intr.height; y += 7) {
      for (int x = 0; x < intr.width; x += 5) {
        const Ray r = ray_for_pixel(p, intr, x, y);
        Vec2 px;
        double z = 0;
        REQUIRE(project(p, intr, r.at(0.1 + 0.37 * k), px, z));
        CHECK(std::abs(px.x() - x) < 1e-6);
        CHECK(std::abs(px.y() - y) < 1e-6);
      }
    }
  }
  Vec2 px;
  double z = 0;
  CHECK_FALSE(project(Pose::identity(), intr, Vec3(0, 0, -1), px, z));
}

TEST_CASE("group axioms") {
  std::mt19937_64 rng(11);
  for (int k = 0; k < 50; ++k) {
    const Pose a = random_pose(rng), b = random_pose(rng), c = random_pose(rng);
    CHECK(pose_distance(compose(a, invert(a)), Pose::identity()) < 1e-9);
    CHECK(pose_distance(compose(compose(a, b), c), compose(a, compose(b, c))) < 1e-9);
    CHECK(pose_distance(invert(invert(a)), a) < 1e-12);
    CHECK_NOTHROW(a.validate());
  }
}

TEST_CASE("se3_perturb") {
  const Pose t = se3_perturb(Pose::identity(), (Twist() << 0, 0, 0, 1, 0, 0).finished());
  CHECK((t.translation - Vec3(1, 0, 0)).norm() == 0.0);
  CHECK(t.rotation == Mat3::Identity());

  const Pose r =
      se3_perturb(Pose::identity(), (Twist() << 0, 0, std::numbers::pi / 2, 0, 0, 0).finished());
  Mat3 yaw90;
  yaw90 << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  CHECK((r.rotation - yaw90).cwiseAbs().maxCoeff() < 1e-15);

  std::mt19937_64 rng(5);
  const Pose p = random_pose(rng);
  CHECK(pose_distance(se3_perturb(p, Twist::Zero()), p) == 0.0);
}

TEST_CASE("pose validation") {
  Pose bad;
  bad.rotation(0, 0) = -1;  // reflection
  CHECK_THROWS_AS(bad.validate(), Error);
  Pose skew;
  skew.rotation(0, 1) = 1e-3;
  CHECK_THROWS_AS(skew.validate(), Error);
  CHECK_NOTHROW(reorthonormalize(skew).validate());
}

TEST_CASE("dofs round trip") {
  for (double yaw : {0.0, 45.0, 181.0, 359.0}) {
    for (double pitch : {-10.0, 0.0, 12.5}) {
      for (double roll : {-3.0, 0.0, 7.0}) {
        const auto d = dofs_from_pose(pose_from_dofs(0.3, -1.2, 1.5, yaw, pitch, roll));
        CHECK(d.yaw_deg == doctest::Approx(yaw));
        CHECK(d.pitch_deg == doctest::Approx(pitch));
        CHECK(d.roll_deg == doctest::Approx(roll).epsilon(1e-9));
        CHECK(d.z == 1.5);
      }
    }
  }
  // Upright camera at yaw 0 looks along +x with image-down along -z.
  const Pose p = pose_from_dofs(0, 0, 0, 0);
  CHECK((p.rotation.col(2) - Vec3::UnitX()).norm() < 1e-15);
  CHECK((p.rotation.col(1) + Vec3::UnitZ()).norm() < 1e-15);
}

TEST_CASE("central offset") {
  const auto off = central_offset({16, 32, 32}, {16, 64, 64});
  CHECK(off[0] == 16);
  CHECK(off[1] == 16);
  CHECK_THROWS_AS(central_offset({16, 32, 32}, {16, 63, 64}), Error);
  CHECK_THROWS_AS(central_offset({16, 64, 64}, {16, 32, 32}), Error);
}

TEST_CASE("json layout") {
  const Pose p = pose_from_dofs(1, 2, 3, 30, 5, 0);
  const nlohmann::json j = p;
  CHECK(j.at("rotation").size() == 9);
  CHECK(j.at("rotation")[1].get<double>() == p.rotation(0, 1));
  CHECK(pose_distance(j.get<Pose>(), p) == 0.0);
  const nlohmann::json ij = CameraIntrinsics{128, 256, 200};
  CHECK(ij.get<CameraIntrinsics>() == CameraIntrinsics{128, 256, 200});
}

}  // TEST_SUITE
