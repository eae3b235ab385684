#include "neo/pose_sampling.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <string>
#include <unordered_map>

#include "neo/error.hpp"

namespace neo {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Counter-based stream: the i-th variate is a hash of (key, i).
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t a, std::uint64_t b)
      : key_(splitmix64(splitmix64(splitmix64(seed) ^ a) ^ b)) {}

  double uniform() {
    const std::uint64_t bits = splitmix64(key_ ^ splitmix64(counter_++));
    return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

const char* kind_name(DistributionKind k) {
  switch (k) {
    case DistributionKind::Fixed: return "fixed";
    case DistributionKind::Uniform: return "uniform";
    case DistributionKind::Gaussian: return "gaussian";
  }
  return "fixed";
}

DistributionKind kind_from_name(const std::string& s) {
  if (s == "fixed") return DistributionKind::Fixed;
  if (s == "uniform") return DistributionKind::Uniform;
  if (s == "gaussian") return DistributionKind::Gaussian;
  fail(ErrorKind::InvalidArgument, "unknown distribution kind '" + s + "'");
}

constexpr std::array<const char*, kDofCount> kDofNames{"z", "pitch", "roll", "yaw", "x", "y"};

double dof_value(const PoseDofs& d, int i) {
  switch (static_cast<Dof>(i)) {
    case Dof::Z: return d.z;
    case Dof::Pitch: return d.pitch_deg;
    case Dof::Roll: return d.roll_deg;
    case Dof::Yaw: return d.yaw_deg;
    case Dof::X: return d.x;
    case Dof::Y: return d.y;
  }
  return 0.0;
}

}  // namespace

void DofSpec::validate() const {
  if (!std::isfinite(a) || !std::isfinite(b)) {
    fail(ErrorKind::InvalidArgument, "distribution parameters must be finite");
  }
  if (kind == DistributionKind::Uniform && a > b) {
    fail(ErrorKind::InvalidArgument, "uniform distribution needs lo <= hi");
  }
  if (kind == DistributionKind::Gaussian && b < 0) {
    fail(ErrorKind::InvalidArgument, "gaussian distribution needs stddev >= 0");
  }
}

double DofSpec::draw(double u1, double u2) const {
  switch (kind) {
    case DistributionKind::Fixed: return a;
    case DistributionKind::Uniform: return a + (b - a) * u1;
    case DistributionKind::Gaussian: {
      const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
      return a + b * std::clamp(z, -4.0, 4.0);
    }
  }
  return a;
}

void DofDistribution::validate() const {
  for (const auto& d : dofs) d.validate();
}

DofFitSpec default_fit_spec() {
  return {DistributionKind::Fixed, DistributionKind::Fixed, DistributionKind::Fixed,
          DistributionKind::Uniform, DistributionKind::Uniform, DistributionKind::Uniform};
}

void SamplerConfig::validate() const {
  if (!(interval > 0)) fail(ErrorKind::InvalidArgument, "sampling interval must be positive");
  if (yaw_count < 1) fail(ErrorKind::InvalidArgument, "yaw count must be at least 1");
  if (coverage_threshold && !(*coverage_threshold > 0)) {
    fail(ErrorKind::InvalidArgument, "coverage threshold must be positive");
  }
}

std::vector<Vec2> grid_positions(const WalkableArea& walkable, double interval) {
  if (!(interval > 0)) fail(ErrorKind::InvalidArgument, "sampling interval must be positive");
  std::vector<Vec2> out;
  const auto bounds = walkable.walkable_bounds();
  if (!bounds) return out;
  const Vec2 lo = (*bounds)[0];
  const Vec2 extent = (*bounds)[1] - lo;
  constexpr double eps = 1e-9;
  const auto nx = static_cast<long>(std::floor(extent.x() / interval + eps)) + 1;
  const auto ny = static_cast<long>(std::floor(extent.y() / interval + eps)) + 1;
  for (long iy = 0; iy < ny; ++iy) {
    for (long ix = 0; ix < nx; ++ix) {
      const Vec2 p = lo + Vec2(ix * interval, iy * interval);
      if (walkable.contains(p.x(), p.y())) out.push_back(p);
    }
  }
  return out;
}

std::vector<double> yaw_sweep(int k) {
  if (k <= 0) fail(ErrorKind::InvalidArgument, "yaw count must be positive");
  std::vector<double> out(k);
  for (int i = 0; i < k; ++i) out[i] = i * 360.0 / k;
  return out;
}

DofDistribution fit_dof_distribution(std::span<const Pose> training_poses,
                                     const DofFitSpec& spec) {
  if (training_poses.size() < 2) {
    fail(ErrorKind::InvalidArgument, "fitting a pose distribution needs at least two poses");
  }
  std::vector<PoseDofs> dofs;
  dofs.reserve(training_poses.size());
  for (const auto& p : training_poses) dofs.push_back(dofs_from_pose(p));

  DofDistribution out;
  const auto n = static_cast<double>(dofs.size());
  for (int i = 0; i < kDofCount; ++i) {
    double lo = dof_value(dofs[0], i), hi = lo, sum = 0;
    for (const auto& d : dofs) {
      const double v = dof_value(d, i);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      sum += v;
    }
    const double mean = sum / n;
    switch (spec[i]) {
      case DistributionKind::Fixed:
        if (hi - lo > 1e-6) {
          fail(ErrorKind::SpecViolation, std::string("dof '") + kDofNames[i] +
                                             "' is declared fixed but varies by " +
                                             std::to_string(hi - lo));
        }
        out.dofs[i] = DofSpec::fixed(mean);
        break;
      case DistributionKind::Uniform:
        out.dofs[i] = DofSpec::uniform(lo, hi);
        break;
      case DistributionKind::Gaussian: {
        double ss = 0;
        for (const auto& d : dofs) ss += (dof_value(d, i) - mean) * (dof_value(d, i) - mean);
        out.dofs[i] = DofSpec::gaussian(mean, std::sqrt(ss / (n - 1.0)));
        break;
      }
    }
  }
  return out;
}

std::vector<bool> coverage_mask(std::span<const Pose> candidates,
                                std::span<const Pose> anchors, double threshold) {
  if (!(threshold > 0)) fail(ErrorKind::InvalidArgument, "coverage threshold must be positive");
  std::vector<bool> keep(candidates.size(), false);
  if (anchors.empty()) return keep;

  // Cells of side `threshold`: every anchor within range of a point lies in
  // the 3x3 block of cells around it.
  auto cell_of = [threshold](double v) {
    return static_cast<std::int64_t>(std::floor(v / threshold));
  };
  auto key = [](std::int64_t cx, std::int64_t cy) {
    return static_cast<std::uint64_t>(cx) * 0x9e3779b97f4a7c15ULL ^ static_cast<std::uint64_t>(cy);
  };
  std::unordered_map<std::uint64_t, std::vector<Vec2>> grid;
  for (const auto& a : anchors) {
    const Vec2 p = a.translation.head<2>();
    grid[key(cell_of(p.x()), cell_of(p.y()))].push_back(p);
  }
  const double t2 = threshold * threshold;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const Vec2 p = candidates[i].translation.head<2>();
    const auto cx = cell_of(p.x()), cy = cell_of(p.y());
    for (std::int64_t dx = -1; dx <= 1 && !keep[i]; ++dx) {
      for (std::int64_t dy = -1; dy <= 1 && !keep[i]; ++dy) {
        const auto it = grid.find(key(cx + dx, cy + dy));
        if (it == grid.end()) continue;
        for (const Vec2& q : it->second) {
          if ((p - q).squaredNorm() <= t2) {
            keep[i] = true;
            break;
          }
        }
      }
    }
  }
  return keep;
}

std::vector<Pose> coverage_filter(std::span<const Pose> candidates,
                                  std::span<const Pose> anchors, double threshold) {
  const auto keep = coverage_mask(candidates, anchors, threshold);
  std::vector<Pose> out;
  for (std::size_t i = 0; i < candidates.size(); ++i)
    if (keep[i]) out.push_back(candidates[i]);
  return out;
}

std::vector<SampledPose> sample_poses(const WalkableArea& walkable, const SamplerConfig& cfg,
                                      const DofDistribution& dof,
                                      std::span<const Pose> anchors) {
  cfg.validate();
  dof.validate();
  const auto positions = grid_positions(walkable, cfg.interval);
  const auto yaws = yaw_sweep(cfg.yaw_count);
  std::vector<SampledPose> out;
  out.reserve(positions.size() * yaws.size());
  for (std::size_t pi = 0; pi < positions.size(); ++pi) {
    for (std::size_t yi = 0; yi < yaws.size(); ++yi) {
      CounterRng rng(cfg.seed, pi, yi);
      auto draw = [&](Dof d) {
        const double u1 = rng.uniform();
        const double u2 = rng.uniform();
        return dof[d].draw(u1, u2);
      };
      const double z = draw(Dof::Z);
      const double pitch = draw(Dof::Pitch);
      const double roll = draw(Dof::Roll);
      const double drawn_yaw = draw(Dof::Yaw);
      const double yaw = cfg.yaw_from_distribution ? drawn_yaw : yaws[yi];
      out.push_back({pose_from_dofs(positions[pi].x(), positions[pi].y(), z, yaw, pitch, roll),
                     static_cast<int>(pi), static_cast<int>(yi)});
    }
  }
  if (cfg.coverage_threshold && !anchors.empty()) {
    std::vector<Pose> poses;
    poses.reserve(out.size());
    for (const auto& s : out) poses.push_back(s.pose);
    const auto keep = coverage_mask(poses, anchors, *cfg.coverage_threshold);
    std::vector<SampledPose> kept;
    for (std::size_t i = 0; i < out.size(); ++i)
      if (keep[i]) kept.push_back(out[i]);
    out = std::move(kept);
  }
  return out;
}

void write_pose_list(const std::filesystem::path& path, std::span<const SampledPose> poses) {
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::Io, "cannot write " + path.string());
  for (const auto& p : poses) {
    const nlohmann::json j = {{"position_index", p.position_index},
                              {"yaw_index", p.yaw_index},
                              {"pose", p.pose}};
    f << j.dump() << '\n';
  }
  if (!f) fail(ErrorKind::Io, "failed writing " + path.string());
}

std::vector<SampledPose> read_pose_list(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) fail(ErrorKind::MissingArtifact, "cannot read pose list " + path.string());
  std::vector<SampledPose> out;
  std::string line;
  int line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      out.push_back({j.at("pose").get<Pose>(), j.at("position_index").get<int>(),
                     j.at("yaw_index").get<int>()});
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::Format,
           path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void to_json(nlohmann::json& j, const DofSpec& s) {
  j = {{"kind", kind_name(s.kind)}};
  switch (s.kind) {
    case DistributionKind::Fixed: j["value"] = s.a; break;
    case DistributionKind::Uniform: j["lo"] = s.a; j["hi"] = s.b; break;
    case DistributionKind::Gaussian: j["mean"] = s.a; j["stddev"] = s.b; break;
  }
}

void from_json(const nlohmann::json& j, DofSpec& s) {
  s.kind = kind_from_name(j.at("kind").get<std::string>());
  switch (s.kind) {
    case DistributionKind::Fixed: s.a = s.b = j.at("value").get<double>(); break;
    case DistributionKind::Uniform:
      s.a = j.at("lo").get<double>();
      s.b = j.at("hi").get<double>();
      break;
    case DistributionKind::Gaussian:
      s.a = j.at("mean").get<double>();
      s.b = j.at("stddev").get<double>();
      break;
  }
}

nlohmann::json fit_spec_to_json(const DofFitSpec& spec) {
  nlohmann::json j = nlohmann::json::object();
  for (int i = 0; i < kDofCount; ++i) j[kDofNames[i]] = kind_name(spec[i]);
  return j;
}

DofFitSpec fit_spec_from_json(const nlohmann::json& j) {
  DofFitSpec spec = default_fit_spec();
  for (int i = 0; i < kDofCount; ++i) {
    if (j.contains(kDofNames[i])) spec[i] = kind_from_name(j.at(kDofNames[i]).get<std::string>());
  }
  return spec;
}

void to_json(nlohmann::json& j, const DofDistribution& d) {
  j = nlohmann::json::object();
  for (int i = 0; i < kDofCount; ++i) j[kDofNames[i]] = d.dofs[i];
}

void from_json(const nlohmann::json& j, DofDistribution& d) {
  for (int i = 0; i < kDofCount; ++i) {
    if (j.contains(kDofNames[i])) d.dofs[i] = j.at(kDofNames[i]).get<DofSpec>();
  }
}

void to_json(nlohmann::json& j, const SamplerConfig& c) {
  j = {{"interval", c.interval},
       {"yaw_count", c.yaw_count},
       {"coverage_threshold", c.coverage_threshold ? nlohmann::json(*c.coverage_threshold)
                                                   : nlohmann::json(nullptr)},
       {"seed", c.seed},
       {"yaw_from_distribution", c.yaw_from_distribution}};
}

void from_json(const nlohmann::json& j, SamplerConfig& c) {
  const SamplerConfig d;
  c.interval = j.value("interval", d.interval);
  c.yaw_count = j.value("yaw_count", d.yaw_count);
  c.coverage_threshold.reset();
  if (j.contains("coverage_threshold") && !j.at("coverage_threshold").is_null()) {
    c.coverage_threshold = j.at("coverage_threshold").get<double>();
  }
  c.seed = j.value("seed", d.seed);
  c.yaw_from_distribution = j.value("yaw_from_distribution", d.yaw_from_distribution);
}

}  // namespace neo
