#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"
#include "neo/dataset.hpp"
#include "neo/geometry.hpp"
#include "neo/image.hpp"

namespace neo {

enum class Activation : std::uint32_t { None = 0, Relu = 1, Logistic = 2 };

/// 3x3-style same-padded convolution, optionally preceded by a 2x
/// nearest-neighbour upsample.
struct LayerSpec {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;
  int stride = 1;
  bool upsample = false;
  Activation activation = Activation::Relu;

  bool operator==(const LayerSpec&) const = default;
};

using Architecture = std::vector<LayerSpec>;

Architecture default_architecture();

/// Same layers with every activation replaced by the identity.
Architecture linearized(Architecture arch);

/// Product of strides divided by upsample factors must be met by the canvas.
int downsample_factor(const Architecture& arch);

/// Parameters stored flat, layer by layer: weights [out][in][ky][kx], then
/// biases.
struct OutpaintModel {
  Architecture arch;
  std::vector<float> params;

  [[nodiscard]] std::size_t param_count() const { return params.size(); }
  /// Offset of each layer's weights; bias follows its weights.
  [[nodiscard]] std::vector<std::size_t> layer_offsets() const;
  void validate() const;

  void save(const std::filesystem::path& path) const;
  static OutpaintModel load(const std::filesystem::path& path);
  [[nodiscard]] std::vector<std::uint8_t> serialize() const;
  static OutpaintModel deserialize(std::span<const std::uint8_t> bytes);

  bool operator==(const OutpaintModel&) const = default;
};

std::size_t architecture_param_count(const Architecture& arch);

/// He-scaled normal weights, zero biases, zero final layer.
OutpaintModel init_model(const Architecture& arch, std::uint64_t seed);

/// 4-channel planar canvas: RGB then mask.
struct Canvas {
  int width = 0;
  int height = 0;
  std::vector<float> data;  // [4][height][width]

  [[nodiscard]] float& at(int c, int x, int y) {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  [[nodiscard]] float at(int c, int x, int y) const {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
};

/// Places `small` at the centre of an H x W canvas; mask is 1 on the known
/// region. `small` must share the focal length of `large_intr`.
Canvas canvas_embed(const ImageBuffer& small, const CameraIntrinsics& large_intr);

ImageBuffer forward(const OutpaintModel& model, const Canvas& canvas);

struct TrainConfig {
  int iterations = 3000;
  int batch_size = 8;
  double learning_rate = 2e-3;
  /// "cosine" anneals the rate to zero over the run; "constant" keeps it.
  std::string lr_schedule = "cosine";
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Only "l1" is supported.
  std::string loss = "l1";

  void validate() const;
};

struct TrainResult {
  OutpaintModel model;
  std::vector<double> loss_trace;
};

using TrainProgress = std::function<void(int iteration, double loss)>;

/// Adam on the mean absolute error over the full canvas, minibatches drawn
/// from a per-epoch shuffle of the kept pairs. Per-item gradients are reduced
/// in item order, so results do not depend on the worker count.
TrainResult train(OutpaintModel model, const Dataset& dataset, const TrainConfig& cfg,
                  std::uint64_t seed, const TrainProgress& progress = {});

/// Mean absolute error of forward(canvas) against target over the canvas.
double evaluate_loss(const OutpaintModel& model, const Canvas& canvas,
                     const ImageBuffer& target);

struct ModelGradCheckOptions {
  int max_params = 500;
  double step = 1e-3;
  bool double_precision = true;
  std::uint64_t seed = 0;
  /// Negative control: doubles the analytic gradient of the first layer's
  /// weights.
  bool corrupt_backward = false;
};

struct ModelGradCheckResult {
  double max_relative_error = 0;
  int checked = 0;
  /// Parameters skipped because a ReLU or L1 kink lies within ±step.
  int skipped_kinks = 0;
};

/// Central finite differences against the analytic gradient of the L1 loss
/// on one pair. Candidates are drawn evenly across layers.
ModelGradCheckResult grad_check_model(const OutpaintModel& model, const Canvas& canvas,
                                      const ImageBuffer& target,
                                      const ModelGradCheckOptions& options = {});

void write_loss_csv(const std::filesystem::path& path, std::span<const double> trace);

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
void to_json(nlohmann::json& j, const LayerSpec& l);
void from_json(const nlohmann::json& j, LayerSpec& l);

}  // namespace neo
