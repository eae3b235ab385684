#include "neo/radiance_field.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numeric>
#include <random>
#include <sstream>

#include "neo/adam.hpp"
#include "neo/error.hpp"
#include "neo/parallel.hpp"

namespace neo {

double softplus(double x) {
  return x > 30.0 ? x : std::log1p(std::exp(x));
}

double logistic(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double inverse_softplus(double y) { return y > 30.0 ? y : std::log(std::expm1(y)); }

double logit(double y) { return std::log(y / (1.0 - y)); }

void RenderConfig::validate() const {
  if (samples < 2) fail(ErrorKind::InvalidArgument, "render needs at least 2 samples");
  if (!(near < far) || near < 0) fail(ErrorKind::InvalidArgument, "render needs 0 <= near < far");
  if (min_transmittance < 0 || min_transmittance >= 1) {
    fail(ErrorKind::InvalidArgument, "min_transmittance must lie in [0, 1)");
  }
}

VoxelRadianceField::VoxelRadianceField(Box bounds, std::array<int, 3> dims,
                                       float density_raw, float color_raw)
    : bounds_(bounds), dims_(dims) {
  for (int a = 0; a < 3; ++a) {
    if (dims[a] < 2) fail(ErrorKind::InvalidArgument, "field dims must be >= 2");
    if (!(bounds.max[a] > bounds.min[a])) fail(ErrorKind::InvalidArgument, "empty field bounds");
    scale_[a] = (dims[a] - 1) / (bounds.max[a] - bounds.min[a]);
  }
  params_.resize(voxel_count() * kChannels);
  for (std::size_t v = 0; v < voxel_count(); ++v) {
    params_[kChannels * v] = density_raw;
    for (int c = 0; c < 3; ++c) params_[kChannels * v + 1 + c] = color_raw;
  }
}

VoxelRadianceField VoxelRadianceField::constant(Box bounds, std::array<int, 3> dims,
                                                double density, double color) {
  return {bounds, dims, static_cast<float>(inverse_softplus(density)),
          static_cast<float>(logit(color))};
}

Vec3 VoxelRadianceField::voxel_position(int ix, int iy, int iz) const {
  return bounds_.min + Vec3(ix / scale_.x(), iy / scale_.y(), iz / scale_.z());
}

bool VoxelRadianceField::corners(const Vec3& p, std::array<std::size_t, 8>& index,
                                 std::array<double, 8>& weight) const {
  std::array<int, 3> i0;
  std::array<double, 3> t;
  for (int a = 0; a < 3; ++a) {
    const double f = (p[a] - bounds_.min[a]) * scale_[a];
    if (!(f >= 0.0 && f <= dims_[a] - 1)) return false;
    i0[a] = std::min(static_cast<int>(f), dims_[a] - 2);
    t[a] = f - i0[a];
  }
  const std::size_t sy = dims_[2];
  const std::size_t sx = static_cast<std::size_t>(dims_[1]) * dims_[2];
  const std::size_t base = voxel_index(i0[0], i0[1], i0[2]);
  for (int k = 0; k < 8; ++k) {
    const int bx = (k >> 2) & 1, by = (k >> 1) & 1, bz = k & 1;
    index[k] = base + bx * sx + by * sy + bz;
    weight[k] = (bx ? t[0] : 1 - t[0]) * (by ? t[1] : 1 - t[1]) * (bz ? t[2] : 1 - t[2]);
  }
  return true;
}

namespace {

struct RawSample {
  double density = 0;
  double color[3] = {0, 0, 0};
};

inline RawSample interpolate(const float* params, const std::array<std::size_t, 8>& idx,
                             const std::array<double, 8>& w) {
  RawSample s;
  for (int k = 0; k < 8; ++k) {
    const float* v = params + VoxelRadianceField::kChannels * idx[k];
    s.density += w[k] * v[0];
    s.color[0] += w[k] * v[1];
    s.color[1] += w[k] * v[2];
    s.color[2] += w[k] * v[3];
  }
  return s;
}

}  // namespace

FieldSample VoxelRadianceField::query(const Vec3& p) const {
  std::array<std::size_t, 8> idx;
  std::array<double, 8> w;
  FieldSample out;
  if (!corners(p, idx, w)) return out;
  const RawSample raw = interpolate(params_.data(), idx, w);
  out.density = softplus(raw.density);
  for (int c = 0; c < 3; ++c) out.color[c] = logistic(raw.color[c]);
  return out;
}

VoxelRadianceField VoxelRadianceField::resampled(std::array<int, 3> dims) const {
  VoxelRadianceField out(bounds_, dims);
  std::array<std::size_t, 8> idx;
  std::array<double, 8> w;
  for (int ix = 0; ix < dims[0]; ++ix) {
    for (int iy = 0; iy < dims[1]; ++iy) {
      for (int iz = 0; iz < dims[2]; ++iz) {
        Vec3 p = out.voxel_position(ix, iy, iz);
        p = p.cwiseMax(bounds_.min).cwiseMin(bounds_.max);
        corners(p, idx, w);
        const RawSample raw = interpolate(params_.data(), idx, w);
        const std::size_t v = out.voxel_index(ix, iy, iz);
        out.params_[kChannels * v] = static_cast<float>(raw.density);
        for (int c = 0; c < 3; ++c) {
          out.params_[kChannels * v + 1 + c] = static_cast<float>(raw.color[c]);
        }
      }
    }
  }
  return out;
}

void VoxelRadianceField::validate() const {
  if (params_.size() != voxel_count() * kChannels) {
    fail(ErrorKind::InvalidArgument, "field storage does not match dims");
  }
  for (float v : params_) {
    if (!std::isfinite(v)) fail(ErrorKind::InvalidArgument, "field has non-finite values");
  }
}

namespace {

constexpr char kFieldMagic[4] = {'N', 'E', 'O', 'F'};
constexpr std::uint32_t kFieldVersion = 1;

template <typename T>
void put(std::vector<std::uint8_t>& out, T value) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
  out.insert(out.end(), p, p + sizeof(T));
}

template <typename T>
T take(std::span<const std::uint8_t> bytes, std::size_t& offset) {
  if (offset + sizeof(T) > bytes.size()) {
    fail(ErrorKind::Format, "field checkpoint truncated");
  }
  T value;
  std::memcpy(&value, bytes.data() + offset, sizeof(T));
  offset += sizeof(T);
  return value;
}

}  // namespace

std::vector<std::uint8_t> VoxelRadianceField::serialize() const {
  std::vector<std::uint8_t> out(kFieldMagic, kFieldMagic + 4);
  put(out, kFieldVersion);
  for (int a = 0; a < 3; ++a) put(out, bounds_.min[a]);
  for (int a = 0; a < 3; ++a) put(out, bounds_.max[a]);
  for (int a = 0; a < 3; ++a) put(out, static_cast<std::uint32_t>(dims_[a]));
  const std::size_t n = voxel_count();
  out.reserve(out.size() + n * kChannels * sizeof(float));
  for (std::size_t v = 0; v < n; ++v) put(out, params_[kChannels * v]);
  for (std::size_t v = 0; v < n; ++v)
    for (int c = 0; c < 3; ++c) put(out, params_[kChannels * v + 1 + c]);
  return out;
}

VoxelRadianceField VoxelRadianceField::deserialize(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kFieldMagic, 4) != 0) {
    fail(ErrorKind::Format, "not a field checkpoint (bad magic)");
  }
  std::size_t off = 4;
  const auto version = take<std::uint32_t>(bytes, off);
  if (version != kFieldVersion) {
    fail(ErrorKind::Format, "unsupported field checkpoint version " + std::to_string(version));
  }
  Box bounds;
  for (int a = 0; a < 3; ++a) bounds.min[a] = take<double>(bytes, off);
  for (int a = 0; a < 3; ++a) bounds.max[a] = take<double>(bytes, off);
  std::array<int, 3> dims;
  for (int a = 0; a < 3; ++a) dims[a] = static_cast<int>(take<std::uint32_t>(bytes, off));
  for (int a = 0; a < 3; ++a) {
    if (dims[a] < 2 || dims[a] > 4096) fail(ErrorKind::Format, "field checkpoint has bad dims");
  }
  const std::size_t n = static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  if (bytes.size() != off + n * kChannels * sizeof(float)) {
    fail(ErrorKind::Format, "field checkpoint length does not match its dims");
  }
  VoxelRadianceField field(bounds, dims);
  for (std::size_t v = 0; v < n; ++v) field.params_[kChannels * v] = take<float>(bytes, off);
  for (std::size_t v = 0; v < n; ++v)
    for (int c = 0; c < 3; ++c) field.params_[kChannels * v + 1 + c] = take<float>(bytes, off);
  return field;
}

void VoxelRadianceField::save(const std::filesystem::path& path) const {
  write_file(path, serialize());
}

VoxelRadianceField VoxelRadianceField::load(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return deserialize(bytes);
  } catch (const Error& e) {
    fail(e.kind(), path.string() + ": " + e.what());
  }
}

namespace {

struct SampleRecord {
  std::array<std::size_t, 8> index;
  std::array<double, 8> weight;
  double sigma_grad;  // d softplus / d raw
  double transmittance;
  double keep;
  double color[3];
};

// Marches one ray. Samples sit at the midpoints of `samples` equal intervals
// of [near, far]. When `record` is given, every in-bounds sample is stored for
// the backward pass.
void march(const VoxelRadianceField& field, const Ray& ray, const RenderConfig& cfg,
           RenderedRay& out, std::vector<SampleRecord>* record = nullptr) {
  // Samples are processed in chunks so the activations vectorize.
  constexpr int kChunk = 16;
  using Chunk = Eigen::Array<double, kChunk, 1>;
  const double delta = cfg.step();
  const float* params = field.params().data();
  std::array<std::array<std::size_t, 8>, kChunk> idx;
  std::array<std::array<double, 8>, kChunk> w;
  std::array<bool, kChunk> inside;
  Chunk raw_d, raw_r, raw_g, raw_b;
  double transmittance = 1.0;
  double acc[3] = {0, 0, 0};
  double weight_sum = 0;
  if (record) record->clear();
  bool done = false;
  for (int start = 0; start < cfg.samples && !done; start += kChunk) {
    const int n = std::min(kChunk, cfg.samples - start);
    bool any = false;
    for (int s = 0; s < kChunk; ++s) {
      inside[s] = s < n &&
                  field.corners(ray.at(cfg.near + (start + s + 0.5) * delta), idx[s], w[s]);
      if (inside[s]) {
        const RawSample raw = interpolate(params, idx[s], w[s]);
        raw_d[s] = raw.density;
        raw_r[s] = raw.color[0];
        raw_g[s] = raw.color[1];
        raw_b[s] = raw.color[2];
        any = true;
      } else {
        raw_d[s] = raw_r[s] = raw_g[s] = raw_b[s] = 0.0;
      }
    }
    if (!any) continue;
    // softplus = max(x, 0) + log1p(exp(-|x|)), with log1p(y) written as
    // log(u) - ((u - 1) - y) / u for u = 1 + y so it vectorizes.
    const Chunk y = (-raw_d.abs()).exp();
    const Chunk u = 1.0 + y;
    const Chunk sigma = raw_d.max(0.0) + (u.log() - ((u - 1.0) - y) / u);
    const Chunk keep = (-sigma * delta).exp();
    const Chunk col_r = 1.0 / (1.0 + (-raw_r).exp());
    const Chunk col_g = 1.0 / (1.0 + (-raw_g).exp());
    const Chunk col_b = 1.0 / (1.0 + (-raw_b).exp());
    Chunk sigma_grad;
    if (record) sigma_grad = 1.0 / (1.0 + (-raw_d).exp());
    for (int s = 0; s < n; ++s) {
      if (!inside[s]) continue;
      const double weight = transmittance * (1.0 - keep[s]);
      acc[0] += weight * col_r[s];
      acc[1] += weight * col_g[s];
      acc[2] += weight * col_b[s];
      if (record) {
        record->push_back({idx[s], w[s], sigma_grad[s], transmittance, keep[s],
                           {col_r[s], col_g[s], col_b[s]}});
      }
      weight_sum += weight;
      transmittance *= keep[s];
      if (transmittance < cfg.min_transmittance) {
        done = true;
        break;
      }
    }
  }
  for (int c = 0; c < 3; ++c) out.color[c] = acc[c] + transmittance * cfg.background[c];
  out.final_transmittance = transmittance;
  out.weight_sum = weight_sum;
}

// Back-propagates dL/dC through the quadrature, activations and trilinear
// weights of one recorded ray into `grad`. `on_voxel` sees every touched voxel.
template <typename OnVoxel>
void backprop_ray(std::span<const SampleRecord> samples, const RenderConfig& cfg,
                  const RenderedRay& rendered, const double dl_dc[3], double* grad,
                  OnVoxel&& on_voxel) {
  const double delta = cfg.step();
  double prefix[3] = {0, 0, 0};
  for (const SampleRecord& s : samples) {
    const double weight = s.transmittance * (1.0 - s.keep);
    const double next_t = s.transmittance * s.keep;
    double g_dot_c = 0, g_dot_suffix = 0;
    for (int c = 0; c < 3; ++c) {
      prefix[c] += weight * s.color[c];
      g_dot_c += dl_dc[c] * s.color[c];
      g_dot_suffix += dl_dc[c] * (rendered.color[c] - prefix[c]);
    }
    double d_raw[4];
    d_raw[0] = delta * (next_t * g_dot_c - g_dot_suffix) * s.sigma_grad;
    for (int c = 0; c < 3; ++c) {
      d_raw[1 + c] = weight * dl_dc[c] * s.color[c] * (1.0 - s.color[c]);
    }
    for (int k = 0; k < 8; ++k) {
      if (s.weight[k] == 0.0) continue;
      double* g = grad + VoxelRadianceField::kChannels * s.index[k];
      g[0] += s.weight[k] * d_raw[0];
      g[1] += s.weight[k] * d_raw[1];
      g[2] += s.weight[k] * d_raw[2];
      g[3] += s.weight[k] * d_raw[3];
      on_voxel(s.index[k]);
    }
  }
}

template <typename OnVoxel>
double loss_and_grad(const VoxelRadianceField& field, std::span<const TrainingRay> rays,
                     std::span<const std::size_t> selection, const RenderConfig& cfg,
                     double* grad, OnVoxel&& on_voxel) {
  const std::size_t n = selection.empty() ? rays.size() : selection.size();
  const double norm = 1.0 / (3.0 * static_cast<double>(n));
  double loss = 0;
  std::vector<SampleRecord> record;
  record.reserve(cfg.samples);
  for (std::size_t r = 0; r < n; ++r) {
    const TrainingRay& tr = rays[selection.empty() ? r : selection[r]];
    RenderedRay out;
    march(field, tr.ray, cfg, out, grad ? &record : nullptr);
    double dl_dc[3];
    for (int c = 0; c < 3; ++c) {
      const double diff = out.color[c] - tr.rgb[c];
      loss += diff * diff * norm;
      dl_dc[c] = 2.0 * diff * norm;
    }
    if (grad) backprop_ray(record, cfg, out, dl_dc, grad, on_voxel);
  }
  return loss;
}

}  // namespace

RenderedRay volume_render(const VoxelRadianceField& field, const Ray& ray,
                          const RenderConfig& cfg) {
  RenderedRay out;
  march(field, ray, cfg, out);
  return out;
}

ImageBuffer render_view(const VoxelRadianceField& field, const Pose& pose,
                        const CameraIntrinsics& intr, const RenderConfig& cfg) {
  intr.validate();
  cfg.validate();
  ImageBuffer img(intr.width, intr.height);
  parallel_for(static_cast<std::size_t>(intr.height), [&](std::size_t row) {
    const int y = static_cast<int>(row);
    for (int x = 0; x < intr.width; ++x) {
      const RenderedRay r = volume_render(field, ray_for_pixel(pose, intr, x, y), cfg);
      for (int c = 0; c < 3; ++c) {
        img.at(x, y, c) = static_cast<float>(std::clamp(r.color[c], 0.0, 1.0));
      }
    }
  });
  return img;
}

double photometric_loss(const VoxelRadianceField& field, std::span<const TrainingRay> rays,
                        const RenderConfig& cfg, std::span<double> grad) {
  cfg.validate();
  if (!grad.empty() && grad.size() != field.params().size()) {
    fail(ErrorKind::InvalidArgument, "gradient buffer does not match field parameters");
  }
  return loss_and_grad(field, rays, {}, cfg, grad.empty() ? nullptr : grad.data(),
                       [](std::size_t) {});
}

void FitConfig::validate() const {
  render.validate();
  if (iterations < 0 || rays_per_batch <= 0 || lr_density <= 0 || lr_color <= 0 ||
      beta1 <= 0 || beta1 >= 1 || beta2 <= 0 || beta2 >= 1 || epsilon <= 0 || tv_weight < 0) {
    fail(ErrorKind::InvalidArgument, "fit config values must be positive");
  }
  for (std::size_t i = 1; i < schedule.size(); ++i) {
    for (int a = 0; a < 3; ++a) {
      if (schedule[i].dims[a] < schedule[i - 1].dims[a]) {
        fail(ErrorKind::InvalidArgument, "grid schedule must be non-decreasing");
      }
    }
    if (schedule[i].start_iteration <= schedule[i - 1].start_iteration) {
      fail(ErrorKind::InvalidArgument, "grid schedule start iterations must increase");
    }
  }
}

namespace {

bool pose_less(const FitView& a, const FitView& b) {
  for (int i = 0; i < 3; ++i) {
    if (a.pose.translation[i] != b.pose.translation[i])
      return a.pose.translation[i] < b.pose.translation[i];
  }
  for (int i = 0; i < 9; ++i) {
    const double x = a.pose.rotation.data()[i], y = b.pose.rotation.data()[i];
    if (x != y) return x < y;
  }
  const auto da = a.image.data(), db = b.image.data();
  return std::lexicographical_compare(da.begin(), da.end(), db.begin(), db.end());
}

std::vector<TrainingRay> collect_rays(std::span<const FitView> views) {
  std::vector<std::size_t> order(views.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return pose_less(views[a], views[b]);
  });
  std::vector<TrainingRay> rays;
  for (const std::size_t v : order) {
    const FitView& view = views[v];
    if (view.image.width() != view.intr.width || view.image.height() != view.intr.height) {
      fail(ErrorKind::InvalidArgument, "fit view image does not match its intrinsics");
    }
    for (int y = 0; y < view.intr.height; ++y) {
      for (int x = 0; x < view.intr.width; ++x) {
        rays.push_back({ray_for_pixel(view.pose, view.intr, x, y),
                        {view.image.at(x, y, 0), view.image.at(x, y, 1),
                         view.image.at(x, y, 2)}});
      }
    }
  }
  return rays;
}

}  // namespace

FitResult fit(VoxelRadianceField field, std::span<const FitView> views,
              const FitConfig& cfg, std::uint64_t seed, const FitProgress& progress) {
  cfg.validate();
  if (views.size() < 2) fail(ErrorKind::InvalidArgument, "fit needs at least two views");
  for (const auto& v : views) {
    if (!field.bounds().contains(v.pose.translation)) {
      fail(ErrorKind::InvalidArgument, "fit view pose lies outside the field bounds");
    }
  }
  const std::vector<TrainingRay> rays = collect_rays(views);

  FitResult result;
  result.loss_trace.reserve(cfg.iterations);
  Adam adam;
  std::vector<double> grad;
  std::vector<std::uint32_t> stamp;
  std::vector<std::size_t> touched_voxels;
  std::vector<std::size_t> touched_params;
  std::vector<std::size_t> batch(cfg.rays_per_batch);
  const std::array<double, 4> lr_scale{cfg.lr_density, cfg.lr_color, cfg.lr_color, cfg.lr_color};
  std::size_t next_stage = 0;

  auto reset_state = [&] {
    adam = Adam(field.params().size(), {1.0, cfg.beta1, cfg.beta2, cfg.epsilon});
    grad.assign(field.params().size(), 0.0);
    stamp.assign(field.voxel_count(), 0);
  };
  reset_state();

  for (int it = 0; it < cfg.iterations; ++it) {
    bool rescaled = false;
    while (next_stage < cfg.schedule.size() &&
           cfg.schedule[next_stage].start_iteration <= it) {
      if (cfg.schedule[next_stage].dims != field.dims()) {
        field = field.resampled(cfg.schedule[next_stage].dims);
        rescaled = true;
      }
      ++next_stage;
    }
    if (rescaled) reset_state();

    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(it)};
    std::mt19937_64 rng(seq);
    std::uniform_int_distribution<std::size_t> pick(0, rays.size() - 1);
    for (auto& b : batch) b = pick(rng);

    const auto mark = static_cast<std::uint32_t>(it + 1);
    touched_voxels.clear();
    const double loss = loss_and_grad(field, rays, batch, cfg.render, grad.data(),
                                      [&](std::size_t v) {
                                        if (stamp[v] != mark) {
                                          stamp[v] = mark;
                                          touched_voxels.push_back(v);
                                        }
                                      });
    if (!std::isfinite(loss)) {
      fail(ErrorKind::FitDiverged,
           "fit diverged: non-finite loss at iteration " + std::to_string(it));
    }

    if (cfg.tv_weight > 0) {
      const auto& d = field.dims();
      const auto params = field.params();
      const std::size_t stride[3] = {static_cast<std::size_t>(d[1]) * d[2],
                                     static_cast<std::size_t>(d[2]), 1};
      // Mean over grid edges, so the weight does not depend on resolution.
      double edges = 0;
      for (int a = 0; a < 3; ++a) {
        edges += static_cast<double>(d[a] - 1) * d[(a + 1) % 3] * d[(a + 2) % 3];
      }
      const double tv_scale = 2.0 * cfg.tv_weight / edges;
      for (const std::size_t v : touched_voxels) {
        const std::size_t coord[3] = {v / stride[0], (v / stride[1]) % d[1], v % d[2]};
        const double center = params[VoxelRadianceField::kChannels * v];
        double g = 0;
        for (int a = 0; a < 3; ++a) {
          if (coord[a] > 0) g += center - params[VoxelRadianceField::kChannels * (v - stride[a])];
          if (coord[a] + 1 < static_cast<std::size_t>(d[a]))
            g += center - params[VoxelRadianceField::kChannels * (v + stride[a])];
        }
        grad[VoxelRadianceField::kChannels * v] += tv_scale * g;
      }
    }

    std::sort(touched_voxels.begin(), touched_voxels.end());
    touched_params.clear();
    for (const std::size_t v : touched_voxels)
      for (int c = 0; c < VoxelRadianceField::kChannels; ++c)
        touched_params.push_back(VoxelRadianceField::kChannels * v + c);
    adam.step_sparse(field.params(), grad, touched_params, lr_scale);
    for (const std::size_t p : touched_params) grad[p] = 0.0;

    result.loss_trace.push_back(loss);
    if (progress) progress(it, loss);
  }
  result.field = std::move(field);
  return result;
}

GradCheckResult grad_check(const VoxelRadianceField& field, std::span<const TrainingRay> rays,
                           const RenderConfig& cfg, const GradCheckOptions& options) {
  std::vector<double> analytic(field.params().size(), 0.0);
  photometric_loss(field, rays, cfg, analytic);
  if (options.corrupt_param) analytic.at(*options.corrupt_param) *= 2.0;

  const std::size_t total = analytic.size();
  std::vector<std::size_t> chosen;
  if (total <= static_cast<std::size_t>(options.max_params)) {
    chosen.resize(total);
    std::iota(chosen.begin(), chosen.end(), 0);
  } else {
    std::mt19937_64 rng(options.seed);
    std::uniform_int_distribution<std::size_t> pick(0, total - 1);
    std::vector<std::uint8_t> used(total, 0);
    while (chosen.size() < static_cast<std::size_t>(options.max_params)) {
      const std::size_t i = pick(rng);
      if (!used[i]) {
        used[i] = 1;
        chosen.push_back(i);
      }
    }
  }
  if (options.corrupt_param &&
      std::find(chosen.begin(), chosen.end(), *options.corrupt_param) == chosen.end()) {
    chosen.back() = *options.corrupt_param;
  }

  VoxelRadianceField probe = field;
  auto params = probe.params();
  GradCheckResult result;
  for (const std::size_t i : chosen) {
    const float original = params[i];
    params[i] = static_cast<float>(original + options.step);
    const double up_value = params[i];
    const double up = photometric_loss(probe, rays, cfg);
    params[i] = static_cast<float>(original - options.step);
    const double down_value = params[i];
    const double down = photometric_loss(probe, rays, cfg);
    params[i] = original;
    const double numeric = (up - down) / (up_value - down_value);
    const double scale = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-10});
    result.max_relative_error =
        std::max(result.max_relative_error, std::abs(analytic[i] - numeric) / scale);
    ++result.checked;
  }
  return result;
}

void to_json(nlohmann::json& j, const RenderConfig& c) {
  j = {{"samples", c.samples},       {"near", c.near},
       {"far", c.far},               {"background", c.background},
       {"min_transmittance", c.min_transmittance}};
}

void from_json(const nlohmann::json& j, RenderConfig& c) {
  const RenderConfig d;
  c.samples = j.value("samples", d.samples);
  c.near = j.value("near", d.near);
  c.far = j.value("far", d.far);
  c.background = j.value("background", d.background);
  c.min_transmittance = j.value("min_transmittance", d.min_transmittance);
}

void to_json(nlohmann::json& j, const FitConfig& c) {
  nlohmann::json schedule = nlohmann::json::array();
  for (const auto& s : c.schedule) {
    schedule.push_back({{"start_iteration", s.start_iteration}, {"dims", s.dims}});
  }
  j = {{"iterations", c.iterations}, {"rays_per_batch", c.rays_per_batch},
       {"lr_density", c.lr_density}, {"lr_color", c.lr_color},
       {"beta1", c.beta1},           {"beta2", c.beta2},
       {"epsilon", c.epsilon},       {"schedule", schedule},
       {"tv_weight", c.tv_weight},   {"render", c.render}};
}

void from_json(const nlohmann::json& j, FitConfig& c) {
  const FitConfig d;
  c.iterations = j.value("iterations", d.iterations);
  c.rays_per_batch = j.value("rays_per_batch", d.rays_per_batch);
  c.lr_density = j.value("lr_density", d.lr_density);
  c.lr_color = j.value("lr_color", d.lr_color);
  c.beta1 = j.value("beta1", d.beta1);
  c.beta2 = j.value("beta2", d.beta2);
  c.epsilon = j.value("epsilon", d.epsilon);
  c.tv_weight = j.value("tv_weight", d.tv_weight);
  c.render = j.value("render", d.render);
  if (j.contains("schedule")) {
    c.schedule.clear();
    for (const auto& s : j.at("schedule")) {
      c.schedule.push_back({s.at("start_iteration").get<int>(),
                            s.at("dims").get<std::array<int, 3>>()});
    }
  } else {
    c.schedule = d.schedule;
  }
}

}  // namespace neo
