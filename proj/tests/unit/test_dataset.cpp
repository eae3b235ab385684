#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "neo/dataset.hpp"
#include "neo/error.hpp"

using namespace neo;

namespace {

ImageBuffer textured(int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.1f, 0.9f);
  ImageBuffer img(w, h);
  for (float& v : img.data()) v = u(rng);
  return img;
}

Dataset small_dataset() {
  VoxelRadianceField field(Box{Vec3::Zero(), Vec3(4, 4, 3)}, {6, 6, 6});
  std::mt19937_64 rng(5);
  std::normal_distribution<float> n(0.0f, 1.0f);
  for (float& v : field.params()) v = n(rng);
  SamplerConfig cfg;
  cfg.interval = 0.5;
  cfg.yaw_count = 2;
  const auto poses =
      sample_poses(WalkableArea::rectangle({1, 1}, {2, 2}, 0.05), cfg, DofDistribution{});
  RenderConfig render;
  render.samples = 32;
  const CameraIntrinsics small{8, 16, 16};
  return generate_pairs(field, poses, small, extend_intrinsics(small, 126.87, 126.87), render);
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& name)
      : path(std::filesystem::temp_directory_path() / name) {
    std::filesystem::remove_all(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace

TEST_SUITE("dataset") {

TEST_CASE("blur score of a single bright pixel") {
  ImageBuffer img(5, 5, 0.0f);
  for (int c = 0; c < 3; ++c) img.at(2, 2, c) = 1.0f;
  // Interior responses: -4 once, +1 four times, 0 four times.
  CHECK(blur_score(img) == doctest::Approx(20.0 / 9.0).epsilon(1e-6));
  CHECK(blur_score(ImageBuffer(7, 4, 0.3f)) == 0.0);
  CHECK_THROWS_AS(blur_score(ImageBuffer(2, 5)), Error);
}

TEST_CASE("blurring lowers the score") {
  int lower = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto img = textured(24, 20, seed);
    if (blur_score(box_blur(img, 2)) < blur_score(img)) ++lower;
  }
  CHECK(lower == 100);
}

TEST_CASE("blur score ignores a constant offset") {
  auto img = textured(12, 12, 1);
  for (float& v : img.data()) v *= 0.5f;
  const double base = blur_score(img);
  for (float& v : img.data()) v += 0.25f;
  CHECK(blur_score(img) == doctest::Approx(base).epsilon(1e-5));
}

TEST_CASE("percentile interpolates linearly") {
  CHECK(percentile({3, 1, 2, 4}, 0.0) == 1.0);
  CHECK(percentile({3, 1, 2, 4}, 1.0) == 4.0);
  CHECK(percentile({3, 1, 2, 4}, 0.5) == doctest::Approx(2.5));
  CHECK(percentile({10, 20}, 0.2) == doctest::Approx(12.0));
  CHECK_THROWS_AS(percentile({}, 0.5), Error);
  CHECK_THROWS_AS(percentile({1.0}, 1.5), Error);
}

TEST_CASE("generated pairs satisfy crop identity") {
  const auto ds = small_dataset();
  REQUIRE(ds.pairs.size() == 9 * 2);
  for (const auto& p : ds.pairs) {
    CHECK(p.large.width == 32);
    CHECK(crop_center(p.large, 16, 16) == p.small);
  }
  for (const auto& r : ds.manifest.records) CHECK(r.blur_score >= 0.0);
}

TEST_CASE("filtering thresholds") {
  auto m = small_dataset().manifest;
  filter_blurry(m, 0.0);
  CHECK(m.kept_count() == m.records.size());
  filter_blurry(m, 1e9);
  CHECK(m.kept_count() == 0);

  std::vector<double> scores;
  for (const auto& r : m.records) scores.push_back(r.blur_score);
  const double median = percentile(scores, 0.5);
  filter_blurry(m, median);
  const auto once = nlohmann::json(m);
  CHECK(m.kept_count() == m.records.size() / 2);
  filter_blurry(m, median);
  CHECK(nlohmann::json(m) == once);
}

TEST_CASE("persist and load round trip") {
  TempDir tmp("neo_dataset_rt");
  auto ds = small_dataset();
  ds.manifest.config_hash = "abc";
  ds.manifest.seed = 4;
  persist(ds, tmp.path);
  CHECK(std::filesystem::exists(tmp.path / "pairs" / (ds.manifest.records[0].id + "_small.png")));
  const auto back = load_dataset(tmp.path);
  CHECK(nlohmann::json(back.manifest) == nlohmann::json(ds.manifest));
  REQUIRE(back.pairs.size() == ds.pairs.size());
  for (std::size_t i = 0; i < ds.pairs.size(); ++i) {
    CHECK(back.pairs[i].small == ds.pairs[i].small);
    CHECK(back.pairs[i].large == ds.pairs[i].large);
  }
}

TEST_CASE("truncated png names the pair") {
  TempDir tmp("neo_dataset_trunc");
  const auto ds = small_dataset();
  persist(ds, tmp.path);
  const auto id = ds.manifest.records[3].id;
  const auto png = tmp.path / "pairs" / (id + "_large.png");
  std::filesystem::resize_file(png, std::filesystem::file_size(png) / 2);
  try {
    load_dataset(tmp.path);
    FAIL("expected a load error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find(id) != std::string::npos);
  }
}

TEST_CASE("duplicate ids are rejected") {
  auto m = small_dataset().manifest;
  m.records[1].id = m.records[0].id;
  CHECK_THROWS_AS(m.validate(), Error);
  CHECK_THROWS_AS(load_dataset("/nonexistent/neo_dataset"), Error);
}

}  // TEST_SUITE
