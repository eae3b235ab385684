#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace neo {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adaptive-moment optimiser over a flat float parameter vector.
///
/// step() is the textbook dense update. step_sparse() only visits the given
/// indices and keeps a per-parameter step count for bias correction, so
/// parameters that receive no gradient in a batch are left untouched (the
/// "lazy" variant used for large voxel grids).
class Adam {
 public:
  Adam() = default;
  Adam(std::size_t size, AdamConfig config);

  [[nodiscard]] const AdamConfig& config() const { return config_; }
  [[nodiscard]] std::int64_t steps() const { return steps_; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }

  void step(std::span<float> params, std::span<const double> grads);
  void step(std::span<float> params, std::span<const float> grads);

  /// `lr_scale[i % lr_scale.size()]` multiplies the learning rate, which lets
  /// interleaved parameter groups use different step sizes.
  void step_sparse(std::span<float> params, std::span<const double> grads,
                   std::span<const std::size_t> indices,
                   std::span<const double> lr_scale = {});

 private:
  AdamConfig config_;
  std::vector<float> m_;
  std::vector<float> v_;
  std::vector<std::int32_t> count_;
  std::vector<double> bias1_;
  std::vector<double> bias2_;
  std::int64_t steps_ = 0;
};

}  // namespace neo
