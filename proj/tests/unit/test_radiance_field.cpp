#include <cmath>
#include <random>

#include "doctest.h"
#include "neo/error.hpp"
#include "neo/radiance_field.hpp"

using namespace neo;

namespace {

VoxelRadianceField random_field(std::array<int, 3> dims, std::uint64_t seed) {
  VoxelRadianceField f(Box{Vec3(-1, -1, -1), Vec3(1, 1, 1)}, dims);
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n(0.0f, 1.0f);
  for (float& v : f.params()) v = n(rng);
  return f;
}

std::vector<TrainingRay> random_rays(int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<TrainingRay> rays;
  for (int i = 0; i < count; ++i) {
    TrainingRay r;
    r.ray.origin = Vec3(u(rng), u(rng), u(rng)) * 0.3;
    r.ray.direction = Vec3(u(rng), u(rng), u(rng)).normalized();
    for (float& c : r.rgb) c = static_cast<float>(0.5 + 0.5 * u(rng));
    rays.push_back(r);
  }
  return rays;
}

}  // namespace

TEST_SUITE("radiance_field") {

TEST_CASE("activation inverses") {
  for (double x : {-5.0, -0.3, 0.0, 0.7, 4.0}) {
    CHECK(inverse_softplus(softplus(x)) == doctest::Approx(x).epsilon(1e-9));
    CHECK(logit(logistic(x)) == doctest::Approx(x).epsilon(1e-9));
  }
}

TEST_CASE("homogeneous medium matches Beer-Lambert") {
  const double sigma = 0.8, albedo = 0.3;
  const auto field = VoxelRadianceField::constant(Box{Vec3(-10, -10, -10), Vec3(10, 10, 10)},
                                                  {4, 4, 4}, sigma, albedo);
  RenderConfig cfg;
  cfg.samples = 64;
  cfg.near = 0.1;
  cfg.far = 2.1;
  cfg.background = {1.0, 0.0, 0.5};
  const auto r = volume_render(field, Ray{Vec3::Zero(), Vec3(0, 0.6, 0.8)}, cfg);
  const double t = std::exp(-sigma * 2.0);
  CHECK(r.final_transmittance == doctest::Approx(t).epsilon(1e-6));
  CHECK(r.color[0] == doctest::Approx(albedo * (1 - t) + t).epsilon(1e-6));
  CHECK(r.color[1] == doctest::Approx(albedo * (1 - t)).epsilon(1e-6));
  CHECK(r.color[2] == doctest::Approx(albedo * (1 - t) + 0.5 * t).epsilon(1e-6));
}

TEST_CASE("weights and transmittance sum to one") {
  const auto field = random_field({6, 5, 7}, 3);
  RenderConfig cfg;
  cfg.samples = 48;
  cfg.far = 3.0;
  for (double stop : {0.0, 1e-2}) {
    cfg.min_transmittance = stop;
    for (const auto& r : random_rays(20, 4)) {
      const auto out = volume_render(field, r.ray, cfg);
      CHECK(out.weight_sum + out.final_transmittance == doctest::Approx(1.0).epsilon(1e-9));
    }
  }
}

TEST_CASE("empty space renders the background") {
  const auto field = VoxelRadianceField::constant(Box{Vec3(5, 5, 5), Vec3(6, 6, 6)}, {2, 2, 2}, 50.0);
  RenderConfig cfg;
  cfg.background = {0.2, 0.4, 0.6};
  const auto r = volume_render(field, Ray{Vec3::Zero(), Vec3(-1, 0, 0)}, cfg);
  CHECK(r.final_transmittance == 1.0);
  CHECK(r.color[1] == doctest::Approx(0.4));
}

TEST_CASE("analytic gradient matches finite differences") {
  const auto field = random_field({5, 5, 5}, 1);
  const auto rays = random_rays(16, 2);
  RenderConfig cfg;
  cfg.samples = 32;
  cfg.far = 2.0;
  GradCheckOptions opts;
  opts.max_params = 300;
  const auto ok = grad_check(field, rays, cfg, opts);
  CHECK(ok.checked > 50);
  CHECK(ok.max_relative_error < 1e-4);

  GradCheckOptions bad = opts;
  bad.corrupt_param = field.voxel_index(2, 2, 2) * VoxelRadianceField::kChannels;
  CHECK(grad_check(field, rays, cfg, bad).max_relative_error > 0.1);
}

TEST_CASE("serialization round trip") {
  const auto field = random_field({3, 4, 5}, 7);
  const auto bytes = field.serialize();
  const auto back = VoxelRadianceField::deserialize(bytes);
  CHECK(back.dims() == field.dims());
  CHECK(std::equal(back.params().begin(), back.params().end(), field.params().begin()));
  auto truncated = bytes;
  truncated.resize(bytes.size() - 5);
  CHECK_THROWS_AS(VoxelRadianceField::deserialize(truncated), Error);
}

TEST_CASE("resampling keeps a constant field constant") {
  const auto field = VoxelRadianceField::constant(Box{Vec3::Zero(), Vec3::Ones()}, {3, 3, 3}, 0.4, 0.7);
  const auto up = field.resampled({7, 5, 6});
  const auto s = up.query(Vec3(0.3, 0.6, 0.9));
  CHECK(s.density == doctest::Approx(0.4).epsilon(1e-6));
  CHECK(s.color[2] == doctest::Approx(0.7).epsilon(1e-6));
}

TEST_CASE("fitting reduces the photometric loss") {
  SceneConfig sc;
  sc.obstacle_count = 1;
  const Scene scene = build_scene(2, sc);
  const CameraIntrinsics intr{8, 16, 16};
  std::vector<FitView> views;
  for (int i = 0; i < 6; ++i) {
    const Pose p = pose_from_dofs(0.6, 0.6 + 0.4 * i, 1.3, 60.0 * i);
    views.push_back({render_ground_truth(scene, p, intr).image, p, intr});
  }
  FitConfig cfg;
  cfg.iterations = 120;
  cfg.rays_per_batch = 256;
  cfg.schedule = {{0, {8, 8, 8}}};
  cfg.render.samples = 48;
  cfg.render.far = 5.5;
  const auto init = VoxelRadianceField::constant(
      Box{Vec3::Zero(), sc.room_size}, {8, 8, 8});
  const auto a = fit(init, views, cfg, 9);
  const auto b = fit(init, views, cfg, 9);
  REQUIRE(a.loss_trace.size() == 120);
  double head = 0, tail = 0;
  for (int i = 0; i < 10; ++i) {
    head += a.loss_trace[i];
    tail += a.loss_trace[110 + i];
  }
  CHECK(tail < 0.7 * head);
  CHECK(a.loss_trace == b.loss_trace);
}

TEST_CASE("invalid configs are rejected") {
  RenderConfig r;
  r.samples = 0;
  CHECK_THROWS_AS(r.validate(), Error);
  FitConfig f;
  f.schedule = {{0, {32, 32, 32}}, {10, {16, 16, 16}}};
  CHECK_THROWS_AS(f.validate(), Error);
}

}  // TEST_SUITE
