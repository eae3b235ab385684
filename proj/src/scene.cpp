#include "neo/scene.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include "neo/error.hpp"
#include "neo/parallel.hpp"

namespace neo {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

namespace {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

double lattice_value(std::int64_t ix, std::int64_t iy, std::uint64_t seed) {
  const std::uint64_t h = mix64(seed ^ mix64(static_cast<std::uint64_t>(ix) ^
                                             mix64(static_cast<std::uint64_t>(iy))));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

std::array<float, 3> lerp(const std::array<float, 3>& a,
                          const std::array<float, 3>& b, double t) {
  return {static_cast<float>(a[0] + (b[0] - a[0]) * t),
          static_cast<float>(a[1] + (b[1] - a[1]) * t),
          static_cast<float>(a[2] + (b[2] - a[2]) * t)};
}

}  // namespace

std::array<float, 3> Texture::evaluate(double u, double v) const {
  const double su = u / scale;
  const double sv = v / scale;
  switch (kind) {
    case TextureKind::Checker: {
      const auto parity = (static_cast<std::int64_t>(std::floor(su)) +
                           static_cast<std::int64_t>(std::floor(sv))) & 1;
      return parity ? color_b : color_a;
    }
    case TextureKind::Stripes: {
      const auto parity = static_cast<std::int64_t>(std::floor(su)) & 1;
      return parity ? color_b : color_a;
    }
    case TextureKind::Gradient: {
      const double t = 0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * (su + 0.5 * sv));
      return lerp(color_a, color_b, t);
    }
    case TextureKind::ValueNoise: {
      const double fu = std::floor(su), fv = std::floor(sv);
      const auto iu = static_cast<std::int64_t>(fu);
      const auto iv = static_cast<std::int64_t>(fv);
      const double tu = smoothstep(su - fu), tv = smoothstep(sv - fv);
      const double v00 = lattice_value(iu, iv, noise_seed);
      const double v10 = lattice_value(iu + 1, iv, noise_seed);
      const double v01 = lattice_value(iu, iv + 1, noise_seed);
      const double v11 = lattice_value(iu + 1, iv + 1, noise_seed);
      const double t = (1 - tv) * ((1 - tu) * v00 + tu * v10) +
                       tv * ((1 - tu) * v01 + tu * v11);
      return lerp(color_a, color_b, t);
    }
  }
  return color_a;
}

Texture Texture::solid(std::array<float, 3> color) {
  Texture t;
  t.kind = TextureKind::Stripes;
  t.color_a = color;
  t.color_b = color;
  return t;
}

bool Box::contains(const Vec3& p) const {
  return (p.array() > min.array()).all() && (p.array() < max.array()).all();
}

bool Box::overlaps(const Box& other, double gap) const {
  for (int a = 0; a < 3; ++a) {
    if (max[a] + gap <= other.min[a] || other.max[a] + gap <= min[a]) return false;
  }
  return true;
}

namespace {

Texture random_texture(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Texture t;
  t.kind = static_cast<TextureKind>(std::uniform_int_distribution<int>(0, 3)(rng));
  for (int c = 0; c < 3; ++c) {
    const double a = 0.15 + 0.7 * unit(rng);
    const double offset = (0.2 + 0.25 * unit(rng)) * (unit(rng) < 0.5 ? -1 : 1);
    double b = a + offset;
    if (b < 0.05 || b > 0.95) b = a - offset;
    t.color_a[c] = static_cast<float>(a);
    t.color_b[c] = static_cast<float>(std::clamp(b, 0.05, 0.95));
  }
  t.scale = 0.3 + 0.6 * unit(rng);
  t.noise_seed = rng();
  return t;
}

TexturedBox random_textured_box(const Box& box, std::mt19937_64& rng) {
  TexturedBox tb;
  tb.box = box;
  for (auto& face : tb.faces) face = random_texture(rng);
  return tb;
}

}  // namespace

Scene build_scene(std::uint64_t seed, const SceneConfig& config) {
  const Vec3& size = config.room_size;
  if (size.x() < 3.0 || size.y() < 3.0 || size.z() < 2.5) {
    fail(ErrorKind::InvalidArgument, "room must be at least 3 x 3 x 2.5 m");
  }
  if (config.obstacle_count < 0) {
    fail(ErrorKind::InvalidArgument, "obstacle count must be non-negative");
  }
  std::mt19937_64 rng(seed);
  Scene scene;
  scene.seed = seed;
  scene.config = config;
  scene.room = random_textured_box({Vec3::Zero(), size}, rng);

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  int attempts = 0;
  while (static_cast<int>(scene.obstacles.size()) < config.obstacle_count) {
    if (++attempts > config.max_retries) {
      std::ostringstream msg;
      msg << "could not place " << config.obstacle_count << " obstacles after "
          << config.max_retries << " attempts";
      fail(ErrorKind::SceneGeneration, msg.str());
    }
    const double sx = config.obstacle_min_size +
                      (config.obstacle_max_size - config.obstacle_min_size) * unit(rng);
    const double sy = config.obstacle_min_size +
                      (config.obstacle_max_size - config.obstacle_min_size) * unit(rng);
    const double sz = config.obstacle_min_height +
                      (config.obstacle_max_height - config.obstacle_min_height) * unit(rng);
    const double free_x = size.x() - 2 * config.wall_gap - sx;
    const double free_y = size.y() - 2 * config.wall_gap - sy;
    if (free_x <= 0 || free_y <= 0 || sz >= size.z()) continue;
    const double x0 = config.wall_gap + free_x * unit(rng);
    const double y0 = config.wall_gap + free_y * unit(rng);
    Box candidate{Vec3(x0, y0, 0.0), Vec3(x0 + sx, y0 + sy, sz)};
    const bool clash = std::any_of(
        scene.obstacles.begin(), scene.obstacles.end(),
        [&](const TexturedBox& o) { return o.box.overlaps(candidate, config.wall_gap); });
    if (clash) continue;
    scene.obstacles.push_back(random_textured_box(candidate, rng));
  }
  return scene;
}

namespace {

// Slab test; returns the parametric interval of the ray inside the box and
// the axis of the entry and exit planes.
bool slab(const Box& box, const Ray& ray, double& t_near, double& t_far,
          int& near_axis, int& far_axis) {
  t_near = -std::numeric_limits<double>::infinity();
  t_far = std::numeric_limits<double>::infinity();
  near_axis = far_axis = -1;
  for (int a = 0; a < 3; ++a) {
    const double o = ray.origin[a];
    const double d = ray.direction[a];
    if (std::abs(d) < 1e-15) {
      if (o < box.min[a] || o > box.max[a]) return false;
      continue;
    }
    double t0 = (box.min[a] - o) / d;
    double t1 = (box.max[a] - o) / d;
    if (t0 > t1) std::swap(t0, t1);
    if (t0 > t_near) {
      t_near = t0;
      near_axis = a;
    }
    if (t1 < t_far) {
      t_far = t1;
      far_axis = a;
    }
  }
  return t_near <= t_far;
}

std::array<double, 2> face_uv(const Vec3& p, int axis) {
  switch (axis) {
    case 0: return {p.y(), p.z()};
    case 1: return {p.x(), p.z()};
    default: return {p.x(), p.y()};
  }
}

}  // namespace

std::optional<SurfaceHit> trace(const Scene& scene, const Ray& ray) {
  double best = std::numeric_limits<double>::infinity();
  const Texture* texture = nullptr;
  int hit_axis = -1;

  double t0, t1;
  int a0, a1;
  if (slab(scene.room.box, ray, t0, t1, a0, a1) && t1 > 0 && a1 >= 0) {
    best = t1;
    hit_axis = a1;
    texture = &scene.room.faces[2 * a1 + (ray.direction[a1] > 0 ? 1 : 0)];
  }
  for (const auto& obstacle : scene.obstacles) {
    if (!slab(obstacle.box, ray, t0, t1, a0, a1)) continue;
    if (t0 <= 0 || a0 < 0 || t0 >= best) continue;
    best = t0;
    hit_axis = a0;
    texture = &obstacle.faces[2 * a0 + (ray.direction[a0] > 0 ? 0 : 1)];
  }
  if (!texture) return std::nullopt;
  const Vec3 p = ray.at(best);
  const auto uv = face_uv(p, hit_axis);
  return SurfaceHit{best, texture->evaluate(uv[0], uv[1])};
}

void check_camera_position(const Scene& scene, const Vec3& position) {
  if (!scene.room.box.contains(position)) {
    fail(ErrorKind::InvalidPose, "camera outside the room");
  }
  for (const auto& o : scene.obstacles) {
    if (o.box.contains(position)) {
      fail(ErrorKind::InvalidPose, "camera inside an obstacle");
    }
  }
}

GroundTruthView render_ground_truth(const Scene& scene, const Pose& pose,
                                    const CameraIntrinsics& intr) {
  intr.validate();
  check_camera_position(scene, pose.translation);
  GroundTruthView view{ImageBuffer(intr.width, intr.height),
                       DepthBuffer{intr.width, intr.height, {}}};
  view.depth.depth.assign(static_cast<std::size_t>(intr.width) * intr.height,
                          std::numeric_limits<float>::infinity());
  parallel_for(static_cast<std::size_t>(intr.height), [&](std::size_t row) {
    const int y = static_cast<int>(row);
    for (int x = 0; x < intr.width; ++x) {
      const Ray ray = ray_for_pixel(pose, intr, x, y);
      const auto hit = trace(scene, ray);
      if (!hit) continue;
      for (int c = 0; c < 3; ++c) view.image.at(x, y, c) = hit->color[c];
      view.depth.depth[static_cast<std::size_t>(y) * intr.width + x] =
          static_cast<float>(hit->distance);
    }
  });
  return view;
}

WalkableArea::WalkableArea(Vec2 origin, double cell, int nx, int ny,
                           std::vector<std::uint8_t> walkable)
    : origin_(origin), cell_(cell), nx_(nx), ny_(ny), walkable_(std::move(walkable)) {
  if (cell <= 0 || nx <= 0 || ny <= 0 ||
      walkable_.size() != static_cast<std::size_t>(nx) * ny) {
    fail(ErrorKind::InvalidArgument, "malformed walkable grid");
  }
  min_ix_ = nx_;
  min_iy_ = ny_;
  for (int iy = 0; iy < ny_; ++iy) {
    for (int ix = 0; ix < nx_; ++ix) {
      if (!this->walkable(ix, iy)) continue;
      min_ix_ = std::min(min_ix_, ix);
      max_ix_ = std::max(max_ix_, ix);
      min_iy_ = std::min(min_iy_, iy);
      max_iy_ = std::max(max_iy_, iy);
    }
  }
}

WalkableArea WalkableArea::from_scene(const Scene& scene, double cell,
                                      double margin) {
  const Vec3& size = scene.room.box.max;
  const int nx = static_cast<int>(std::ceil(size.x() / cell - 1e-9));
  const int ny = static_cast<int>(std::ceil(size.y() / cell - 1e-9));
  std::vector<std::uint8_t> grid(static_cast<std::size_t>(nx) * ny, 0);
  for (int iy = 0; iy < ny; ++iy) {
    for (int ix = 0; ix < nx; ++ix) {
      const double x = (ix + 0.5) * cell;
      const double y = (iy + 0.5) * cell;
      bool ok = x >= margin && y >= margin && x <= size.x() - margin &&
                y <= size.y() - margin;
      for (const auto& o : scene.obstacles) {
        if (!ok) break;
        const bool inside = x > o.box.min.x() - margin && x < o.box.max.x() + margin &&
                            y > o.box.min.y() - margin && y < o.box.max.y() + margin;
        ok = !inside;
      }
      grid[static_cast<std::size_t>(iy) * nx + ix] = ok ? 1 : 0;
    }
  }
  return {Vec2::Zero(), cell, nx, ny, std::move(grid)};
}

WalkableArea WalkableArea::rectangle(Vec2 min, Vec2 max, double cell) {
  const int nx = std::max(1, static_cast<int>(std::lround((max.x() - min.x()) / cell)));
  const int ny = std::max(1, static_cast<int>(std::lround((max.y() - min.y()) / cell)));
  return {min, cell, nx, ny,
          std::vector<std::uint8_t>(static_cast<std::size_t>(nx) * ny, 1)};
}

bool WalkableArea::walkable(int ix, int iy) const {
  if (ix < 0 || iy < 0 || ix >= nx_ || iy >= ny_) return false;
  return walkable_[static_cast<std::size_t>(iy) * nx_ + ix] != 0;
}

Vec2 WalkableArea::cell_center(int ix, int iy) const {
  return origin_ + Vec2((ix + 0.5) * cell_, (iy + 0.5) * cell_);
}

std::size_t WalkableArea::walkable_count() const {
  return static_cast<std::size_t>(std::count(walkable_.begin(), walkable_.end(), 1));
}

bool WalkableArea::contains(double x, double y) const {
  if (max_ix_ < 0) return false;
  constexpr double eps = 1e-9;
  const double fx = (x - origin_.x()) / cell_;
  const double fy = (y - origin_.y()) / cell_;
  if (fx < min_ix_ - eps || fy < min_iy_ - eps || fx > max_ix_ + 1 + eps ||
      fy > max_iy_ + 1 + eps) {
    return false;
  }
  const int ix = std::clamp(static_cast<int>(std::floor(fx + eps)), min_ix_, max_ix_);
  const int iy = std::clamp(static_cast<int>(std::floor(fy + eps)), min_iy_, max_iy_);
  return walkable(ix, iy);
}

std::optional<std::array<Vec2, 2>> WalkableArea::walkable_bounds() const {
  if (max_ix_ < 0) return std::nullopt;
  return std::array<Vec2, 2>{
      origin_ + Vec2(min_ix_ * cell_, min_iy_ * cell_),
      origin_ + Vec2((max_ix_ + 1) * cell_, (max_iy_ + 1) * cell_)};
}

namespace {

std::vector<std::array<int, 2>> walkable_cells(const WalkableArea& area) {
  std::vector<std::array<int, 2>> cells;
  for (int iy = 0; iy < area.ny(); ++iy)
    for (int ix = 0; ix < area.nx(); ++ix)
      if (area.walkable(ix, iy)) cells.push_back({ix, iy});
  if (cells.empty()) fail(ErrorKind::InvalidArgument, "walkable area is empty");
  return cells;
}

}  // namespace

std::vector<Pose> sample_training_trajectory(const WalkableArea& walkable,
                                             int n, std::uint64_t seed,
                                             double height) {
  if (n <= 0) fail(ErrorKind::InvalidArgument, "trajectory size must be positive");
  const auto cells = walkable_cells(walkable);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, cells.size() - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Pose> poses;
  poses.reserve(n);
  const double cell = walkable.cell_size();
  for (int i = 0; i < n; ++i) {
    const auto [ix, iy] = cells[pick(rng)];
    const Vec2 c = walkable.cell_center(ix, iy);
    const double x = c.x() + (unit(rng) - 0.5) * cell;
    const double y = c.y() + (unit(rng) - 0.5) * cell;
    const double yaw = 360.0 * unit(rng);
    poses.push_back(pose_from_dofs(x, y, height, yaw));
  }
  return poses;
}

std::vector<Pose> sample_test_paths(const WalkableArea& walkable, int paths,
                                    int per_path, std::uint64_t seed,
                                    const WalkConfig& walk) {
  if (paths <= 0 || per_path <= 0) {
    fail(ErrorKind::InvalidArgument, "path counts must be positive");
  }
  const auto cells = walkable_cells(walkable);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, cells.size() - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Pose> poses;
  poses.reserve(static_cast<std::size_t>(paths) * per_path);
  for (int p = 0; p < paths; ++p) {
    const auto [ix, iy] = cells[pick(rng)];
    Vec2 pos = walkable.cell_center(ix, iy);
    double yaw = 360.0 * unit(rng);
    poses.push_back(pose_from_dofs(pos.x(), pos.y(), walk.height, yaw));
    for (int k = 1; k < per_path; ++k) {
      bool moved = false;
      for (int attempt = 0; attempt < 64 && !moved; ++attempt) {
        // Widen the turn range after repeated rejections so walks escape corners.
        const double turn = attempt < 16 ? walk.max_turn_deg : 180.0;
        const double new_yaw = yaw + (2.0 * unit(rng) - 1.0) * turn;
        const double rad = deg_to_rad(new_yaw);
        const Vec2 next = pos + walk.step * Vec2(std::cos(rad), std::sin(rad));
        const Vec2 mid = 0.5 * (pos + next);
        if (walkable.contains(next.x(), next.y()) && walkable.contains(mid.x(), mid.y())) {
          pos = next;
          yaw = new_yaw;
          moved = true;
        }
      }
      if (!moved) yaw += 180.0;
      yaw = std::fmod(yaw, 360.0);
      if (yaw < 0) yaw += 360.0;
      poses.push_back(pose_from_dofs(pos.x(), pos.y(), walk.height, yaw));
    }
  }
  return poses;
}

namespace {

std::string kind_name(TextureKind k) {
  switch (k) {
    case TextureKind::Checker: return "checker";
    case TextureKind::Stripes: return "stripes";
    case TextureKind::Gradient: return "gradient";
    case TextureKind::ValueNoise: return "value-noise";
  }
  return "checker";
}

TextureKind kind_from_name(const std::string& s) {
  if (s == "checker") return TextureKind::Checker;
  if (s == "stripes") return TextureKind::Stripes;
  if (s == "gradient") return TextureKind::Gradient;
  if (s == "value-noise") return TextureKind::ValueNoise;
  fail(ErrorKind::Format, "unknown texture kind " + s);
}

nlohmann::json texture_json(const Texture& t) {
  return {{"kind", kind_name(t.kind)},
          {"color_a", t.color_a},
          {"color_b", t.color_b},
          {"scale", t.scale},
          {"noise_seed", t.noise_seed}};
}

Texture texture_from_json(const nlohmann::json& j) {
  Texture t;
  t.kind = kind_from_name(j.at("kind").get<std::string>());
  t.color_a = j.at("color_a").get<std::array<float, 3>>();
  t.color_b = j.at("color_b").get<std::array<float, 3>>();
  t.scale = j.at("scale").get<double>();
  t.noise_seed = j.at("noise_seed").get<std::uint64_t>();
  return t;
}

nlohmann::json box_json(const TexturedBox& b) {
  nlohmann::json faces = nlohmann::json::array();
  for (const auto& f : b.faces) faces.push_back(texture_json(f));
  return {{"min", {b.box.min.x(), b.box.min.y(), b.box.min.z()}},
          {"max", {b.box.max.x(), b.box.max.y(), b.box.max.z()}},
          {"faces", faces}};
}

TexturedBox box_from_json(const nlohmann::json& j) {
  TexturedBox b;
  const auto mn = j.at("min").get<std::array<double, 3>>();
  const auto mx = j.at("max").get<std::array<double, 3>>();
  b.box = {Vec3(mn[0], mn[1], mn[2]), Vec3(mx[0], mx[1], mx[2])};
  const auto& faces = j.at("faces");
  if (faces.size() != 6) fail(ErrorKind::Format, "box needs six face textures");
  for (int i = 0; i < 6; ++i) b.faces[i] = texture_from_json(faces[i]);
  return b;
}

}  // namespace

void to_json(nlohmann::json& j, const SceneConfig& c) {
  j = {{"room_size", {c.room_size.x(), c.room_size.y(), c.room_size.z()}},
       {"obstacle_count", c.obstacle_count},
       {"obstacle_min_size", c.obstacle_min_size},
       {"obstacle_max_size", c.obstacle_max_size},
       {"obstacle_min_height", c.obstacle_min_height},
       {"obstacle_max_height", c.obstacle_max_height},
       {"wall_gap", c.wall_gap},
       {"max_retries", c.max_retries}};
}

void from_json(const nlohmann::json& j, SceneConfig& c) {
  const SceneConfig d;
  const auto size = j.value("room_size", std::array<double, 3>{
                                             d.room_size.x(), d.room_size.y(), d.room_size.z()});
  c.room_size = Vec3(size[0], size[1], size[2]);
  c.obstacle_count = j.value("obstacle_count", d.obstacle_count);
  c.obstacle_min_size = j.value("obstacle_min_size", d.obstacle_min_size);
  c.obstacle_max_size = j.value("obstacle_max_size", d.obstacle_max_size);
  c.obstacle_min_height = j.value("obstacle_min_height", d.obstacle_min_height);
  c.obstacle_max_height = j.value("obstacle_max_height", d.obstacle_max_height);
  c.wall_gap = j.value("wall_gap", d.wall_gap);
  c.max_retries = j.value("max_retries", d.max_retries);
}

void to_json(nlohmann::json& j, const Scene& s) {
  nlohmann::json obstacles = nlohmann::json::array();
  for (const auto& o : s.obstacles) obstacles.push_back(box_json(o));
  j = {{"seed", s.seed}, {"config", s.config}, {"room", box_json(s.room)},
       {"obstacles", obstacles}};
}

void from_json(const nlohmann::json& j, Scene& s) {
  s.seed = j.at("seed").get<std::uint64_t>();
  s.config = j.at("config").get<SceneConfig>();
  s.room = box_from_json(j.at("room"));
  s.obstacles.clear();
  for (const auto& o : j.at("obstacles")) s.obstacles.push_back(box_from_json(o));
}

void write_depth(const std::filesystem::path& raw_path, const DepthBuffer& depth) {
  const auto* bytes = reinterpret_cast<const std::uint8_t*>(depth.depth.data());
  write_file(raw_path, {bytes, depth.depth.size() * sizeof(float)});
  const nlohmann::json sidecar = {{"width", depth.width}, {"height", depth.height}};
  const std::string text = sidecar.dump(2) + "\n";
  auto sidecar_path = raw_path;
  sidecar_path.replace_extension(".json");
  write_file(sidecar_path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

DepthBuffer read_depth(const std::filesystem::path& raw_path) {
  auto sidecar_path = raw_path;
  sidecar_path.replace_extension(".json");
  const auto text = read_file(sidecar_path);
  const auto meta = nlohmann::json::parse(text.begin(), text.end());
  DepthBuffer d;
  d.width = meta.at("width").get<int>();
  d.height = meta.at("height").get<int>();
  const auto bytes = read_file(raw_path);
  const std::size_t expected = static_cast<std::size_t>(d.width) * d.height * sizeof(float);
  if (bytes.size() != expected) {
    fail(ErrorKind::Format, raw_path.string() + ": depth size does not match sidecar");
  }
  d.depth.resize(static_cast<std::size_t>(d.width) * d.height);
  std::memcpy(d.depth.data(), bytes.data(), expected);
  return d;
}

}  // namespace neo
