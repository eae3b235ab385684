#include "neo/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "neo/error.hpp"
#include "neo/parallel.hpp"

namespace neo {

Dataset naive_dataset(std::span<const ImageBuffer> training_images,
                      std::span<const Pose> poses, const CameraIntrinsics& small_intr,
                      const CameraIntrinsics& large_intr) {
  small_intr.validate();
  large_intr.validate();
  // H/h == W/w, compared exactly in integers.
  if (static_cast<long>(large_intr.height) * small_intr.width !=
      static_cast<long>(large_intr.width) * small_intr.height) {
    fail(ErrorKind::InvalidArgument, "naive resize ratio differs between height and width");
  }
  if (training_images.size() != poses.size()) {
    fail(ErrorKind::InvalidArgument, "image and pose counts differ");
  }
  std::vector<Rgb8Image> large(training_images.size());
  parallel_for(training_images.size(), [&](std::size_t i) {
    large[i] = to_rgb8(resize_bilinear(training_images[i], large_intr.width, large_intr.height));
  });
  // The manifest keeps the real intrinsics; the pairs themselves cover a
  // narrower field of view than the small intrinsics claim.
  return dataset_from_large(std::move(large), poses, small_intr, large_intr);
}

ImageBuffer paste_center(ImageBuffer large, const ImageBuffer& center) {
  if (center.width() > large.width() || center.height() > large.height() ||
      (large.width() - center.width()) % 2 != 0 || (large.height() - center.height()) % 2 != 0) {
    fail(ErrorKind::InvalidArgument, "centre image cannot be centred in the canvas");
  }
  paste(large, center, (large.width() - center.width()) / 2,
        (large.height() - center.height()) / 2);
  return large;
}

ImageBuffer oracle_nerf(const VoxelRadianceField& field, const Pose& gt_pose,
                        const CameraIntrinsics& large_intr, const ImageBuffer& center,
                        const RenderConfig& render) {
  return paste_center(render_view(field, gt_pose, large_intr, render), center);
}

std::vector<float> thumbnail_descriptor(const ImageBuffer& img) {
  const auto y = luma(resize_area(img, kThumbnailSize, kThumbnailSize));
  return {y.begin(), y.end()};
}

RetrievalIndex build_retrieval_index(std::span<const ImageBuffer> images,
                                     std::span<const Pose> poses) {
  if (images.empty()) fail(ErrorKind::InvalidArgument, "retrieval index needs training views");
  if (images.size() != poses.size()) {
    fail(ErrorKind::InvalidArgument, "image and pose counts differ");
  }
  RetrievalIndex index;
  index.poses.assign(poses.begin(), poses.end());
  index.descriptors.resize(images.size());
  parallel_for(images.size(),
               [&](std::size_t i) { index.descriptors[i] = thumbnail_descriptor(images[i]); });
  return index;
}

std::vector<std::size_t> RetrievalIndex::nearest(const ImageBuffer& query, std::size_t k) const {
  if (descriptors.empty()) fail(ErrorKind::InvalidArgument, "retrieval index is empty");
  const auto q = thumbnail_descriptor(query);
  std::vector<double> dist(descriptors.size());
  for (std::size_t i = 0; i < descriptors.size(); ++i) {
    double d = 0;
    for (std::size_t j = 0; j < q.size(); ++j) {
      const double e = static_cast<double>(descriptors[i][j]) - q[j];
      d += e * e;
    }
    dist[i] = d;
  }
  std::vector<std::size_t> order(descriptors.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  k = std::min(k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      return dist[a] != dist[b] ? dist[a] < dist[b] : a < b;
                    });
  order.resize(k);
  return order;
}

namespace {

double mse(const ImageBuffer& a, const ImageBuffer& b) {
  const auto da = a.data();
  const auto db = b.data();
  double acc = 0;
  for (std::size_t i = 0; i < da.size(); ++i) {
    const double e = static_cast<double>(da[i]) - db[i];
    acc += e * e;
  }
  return acc / static_cast<double>(da.size());
}

struct Stage {
  CameraIntrinsics intr;
  ImageBuffer target;
};

Stage make_stage(const ImageBuffer& test, const CameraIntrinsics& intr, int size) {
  if (size >= intr.width) return {intr, test};
  Stage s;
  s.intr = intr.scaled(static_cast<double>(size) / intr.width);
  s.target = resize_area(test, s.intr.width, s.intr.height);
  return s;
}

}  // namespace

RelocalizeResult refine_pose(const VoxelRadianceField& field, const ImageBuffer& test,
                             const CameraIntrinsics& intr, const Pose& init,
                             const RelocalizeConfig& cfg) {
  intr.validate();
  if (test.width() != intr.width || test.height() != intr.height) {
    fail(ErrorKind::InvalidArgument, "test image does not match intrinsics");
  }
  if (cfg.stage_sizes.empty() || cfg.stage_sizes.size() != cfg.stage_iterations.size()) {
    fail(ErrorKind::InvalidArgument, "relocalization stages are inconsistent");
  }
  const Stage finest = make_stage(test, intr, cfg.stage_sizes.back());
  auto residual = [&](const Stage& s, const Pose& p) {
    return mse(render_view(field, p, s.intr, cfg.render), s.target);
  };

  RelocalizeResult out;
  out.initial_pose = init;
  Pose pose = init;
  double fine = residual(finest, pose);
  out.stage_residuals.push_back(fine);

  const std::array<double, 6> scale{1, 1, 1, cfg.translation_scale, cfg.translation_scale,
                                    cfg.translation_scale};
  const std::array<double, 6> h{cfg.fd_step_rotation,    cfg.fd_step_rotation,
                                cfg.fd_step_rotation,    cfg.fd_step_translation,
                                cfg.fd_step_translation, cfg.fd_step_translation};

  for (std::size_t si = 0; si < cfg.stage_sizes.size(); ++si) {
    const bool is_finest = si + 1 == cfg.stage_sizes.size();
    const Stage stage = is_finest ? finest : make_stage(test, intr, cfg.stage_sizes[si]);
    Pose p = pose;
    double r = residual(stage, p);
    double step = cfg.initial_step;
    for (int it = 0; it < cfg.stage_iterations[si]; ++it) {
      Twist g;
      for (int k = 0; k < 6; ++k) {
        Twist d = Twist::Zero();
        d[k] = h[k];
        g[k] = (residual(stage, se3_perturb(p, d)) - residual(stage, se3_perturb(p, -d))) /
               (2 * h[k]) * scale[k];
      }
      const double norm = g.norm();
      if (!(norm > 0) || !std::isfinite(norm)) break;
      bool accepted = false;
      for (int b = 0; b <= cfg.max_backtracks; ++b, step *= 0.5) {
        Twist move;
        for (int k = 0; k < 6; ++k) move[k] = -step * g[k] / norm * scale[k];
        const Pose cand = reorthonormalize(se3_perturb(p, move));
        const double rc = residual(stage, cand);
        if (rc < r) {
          p = cand;
          r = rc;
          accepted = true;
          break;
        }
      }
      if (!accepted) break;
      step = std::min(cfg.initial_step, 2 * step);
    }
    // A coarse stage may trade fine-scale error for coarse-scale error; keep
    // the fine residual monotone by rejecting such a stage.
    const double candidate_fine = is_finest ? r : residual(finest, p);
    if (candidate_fine <= fine) {
      pose = p;
      fine = candidate_fine;
    }
    out.stage_residuals.push_back(fine);
  }
  out.pose = pose;
  out.residual = fine;
  out.failed = !(fine <= cfg.failure_residual);
  return out;
}

RelocalizeResult relocalize(const VoxelRadianceField& field, const ImageBuffer& test,
                            const RetrievalIndex& index, const CameraIntrinsics& intr,
                            const RelocalizeConfig& cfg) {
  const std::size_t best = index.nearest(test, 1).front();
  RelocalizeResult r = refine_pose(field, test, intr, index.poses[best], cfg);
  r.retrieved = best;
  return r;
}

RelocalizedOutput relocalized_nerf(const VoxelRadianceField& field, const ImageBuffer& test,
                                   const RetrievalIndex& index,
                                   const CameraIntrinsics& small_intr,
                                   const CameraIntrinsics& large_intr,
                                   const RelocalizeConfig& cfg) {
  RelocalizedOutput out;
  out.reloc = relocalize(field, test, index, small_intr, cfg);
  out.image = paste_center(render_view(field, out.reloc.pose, large_intr, cfg.render), test);
  return out;
}

WarpResult warp_fuse(const ImageBuffer& test, std::span<const WarpSource> neighbors,
                     const Pose& target_pose, const CameraIntrinsics& large_intr) {
  if (neighbors.empty()) fail(ErrorKind::InvalidArgument, "warp_fuse needs at least one neighbor");
  large_intr.validate();
  const int W = large_intr.width, H = large_intr.height;
  const std::size_t n = static_cast<std::size_t>(W) * H;
  WarpResult out;
  out.image = ImageBuffer(W, H);
  out.valid.assign(n, 0);
  std::vector<double> zbuf(n, std::numeric_limits<double>::infinity());

  for (const auto& src : neighbors) {
    if (src.depth.width != src.image.width() || src.depth.height != src.image.height() ||
        src.intr.width != src.image.width() || src.intr.height != src.image.height()) {
      fail(ErrorKind::InvalidArgument, "warp source image, depth and intrinsics disagree");
    }
    for (int y = 0; y < src.intr.height; ++y) {
      for (int x = 0; x < src.intr.width; ++x) {
        const float d = src.depth.at(x, y);
        if (!std::isfinite(d)) continue;
        const Vec3 world = ray_for_pixel(src.pose, src.intr, x, y).at(d);
        Vec2 px;
        double z = 0;
        if (!project(target_pose, large_intr, world, px, z)) continue;
        const long tx = std::lround(px.x()), ty = std::lround(px.y());
        if (tx < 0 || ty < 0 || tx >= W || ty >= H) continue;
        const std::size_t i = static_cast<std::size_t>(ty) * W + tx;
        if (z >= zbuf[i]) continue;
        zbuf[i] = z;
        out.valid[i] = 1;
        for (int c = 0; c < 3; ++c) out.image.at(tx, ty, c) = src.image.at(x, y, c);
      }
    }
  }

  const auto [ox, oy] = central_offset(
      CameraIntrinsics{large_intr.focal_px, test.width(), test.height()}, large_intr);
  paste(out.image, test, ox, oy);
  for (int y = 0; y < test.height(); ++y) {
    for (int x = 0; x < test.width(); ++x) {
      out.valid[static_cast<std::size_t>(y + oy) * W + (x + ox)] = 1;
    }
  }

  double mean[3] = {0, 0, 0};
  std::size_t count = 0;
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      if (!out.valid[static_cast<std::size_t>(y) * W + x]) continue;
      ++count;
      for (int c = 0; c < 3; ++c) mean[c] += out.image.at(x, y, c);
    }
  }
  for (double& m : mean) m /= static_cast<double>(count);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      if (out.valid[static_cast<std::size_t>(y) * W + x]) continue;
      for (int c = 0; c < 3; ++c) out.image.at(x, y, c) = static_cast<float>(mean[c]);
    }
  }
  out.valid_fraction = static_cast<double>(count) / static_cast<double>(n);
  return out;
}

void to_json(nlohmann::json& j, const RelocalizeConfig& c) {
  j = {{"stage_sizes", c.stage_sizes},
       {"stage_iterations", c.stage_iterations},
       {"fd_step_rotation", c.fd_step_rotation},
       {"fd_step_translation", c.fd_step_translation},
       {"translation_scale", c.translation_scale},
       {"initial_step", c.initial_step},
       {"max_backtracks", c.max_backtracks},
       {"failure_residual", c.failure_residual}};
}

void from_json(const nlohmann::json& j, RelocalizeConfig& c) {
  RelocalizeConfig d;
  c.stage_sizes = j.value("stage_sizes", d.stage_sizes);
  c.stage_iterations = j.value("stage_iterations", d.stage_iterations);
  c.fd_step_rotation = j.value("fd_step_rotation", d.fd_step_rotation);
  c.fd_step_translation = j.value("fd_step_translation", d.fd_step_translation);
  c.translation_scale = j.value("translation_scale", d.translation_scale);
  c.initial_step = j.value("initial_step", d.initial_step);
  c.max_backtracks = j.value("max_backtracks", d.max_backtracks);
  c.failure_residual = j.value("failure_residual", d.failure_residual);
}

}  // namespace neo
