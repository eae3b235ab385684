#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "neo/baselines.hpp"
#include "neo/evaluation.hpp"
#include "neo/outpainter.hpp"
#include "neo/pose_sampling.hpp"
#include "neo/radiance_field.hpp"
#include "neo/scene.hpp"

namespace neo {

struct SceneSection {
  std::uint64_t seed = 1;
  SceneConfig config;
  double walkable_cell = 0.05;
  double walkable_margin = 0.2;
};

/// Test inputs use the small intrinsics; the large ones follow from the
/// target field of view at the same focal length. Training views for the
/// radiance field are captured with the same field of view as the small
/// intrinsics at `capture_scale` times the resolution.
struct CameraSection {
  double focal_px = 16;
  int small_width = 32;
  int small_height = 32;
  double large_fov_x_deg = 126.87;
  double large_fov_y_deg = 126.87;
  int capture_scale = 2;

  [[nodiscard]] CameraIntrinsics small_intr() const;
  [[nodiscard]] CameraIntrinsics large_intr() const;
  [[nodiscard]] CameraIntrinsics capture_intr() const;
};

struct TrajectorySection {
  int train_count = 200;
  int test_paths = 8;
  int test_per_path = 25;
  WalkConfig walk;
};

inline RenderConfig default_pipeline_render() {
  RenderConfig r;
  r.min_transmittance = 1e-4;
  return r;
}

inline FitConfig default_pipeline_fit() {
  FitConfig f;
  f.render = default_pipeline_render();
  return f;
}

struct FieldSection {
  FitConfig fit = default_pipeline_fit();
  RenderConfig render = default_pipeline_render();
  double bounds_padding = 0.1;
  /// Minimum held-out PSNR of oracle-pose renders, from the calibration run.
  double calibration_threshold_db = 28.0;
};

struct SamplerSection {
  double interval = 0.1;
  int yaw_count = 12;
  std::optional<double> coverage_threshold = 0.3;
  bool yaw_from_distribution = false;
  DofFitSpec dof_fit = default_fit_spec();
};

enum class BlurPolicy { None, Fixed, Percentile };

struct DatasetSection {
  BlurPolicy blur_policy = BlurPolicy::Percentile;
  /// Percentile of blur scores over field renders at the training poses.
  double blur_percentile = 0.2;
  double blur_threshold = 0.0;
};

struct OutpainterSection {
  Architecture architecture = default_architecture();
  TrainConfig train;
};

struct BaselineSection {
  int neighbors = 3;
  RelocalizeConfig relocalize;
};

inline const std::vector<std::string> kAllMethods{"NaiveOutpainting", "WarpFusion",
                                                  "RelocalizedNeRF", "OracleNeRF", "NEO"};

struct EvalSection {
  std::vector<std::string> methods = kAllMethods;
};

struct AblationSection {
  std::vector<double> density_intervals{0.4, 0.2, 0.1};
};

struct PipelineConfig {
  std::uint64_t seed = 0;
  std::string output_dir = "runs/desk";
  SceneSection scene;
  CameraSection camera;
  TrajectorySection trajectory;
  FieldSection field;
  SamplerSection sampler;
  DatasetSection dataset;
  OutpainterSection outpainter;
  BaselineSection baselines;
  EvalSection eval;
  AblationSection ablation;

  /// Throws InvalidArgument on inconsistent sections.
  void validate() const;
};

PipelineConfig load_config(const std::filesystem::path& path);

void to_json(nlohmann::json& j, const PipelineConfig& c);
void from_json(const nlohmann::json& j, PipelineConfig& c);

std::string sha256_hex(std::string_view data);

/// Stage seeds are the global seed plus fixed offsets.
namespace seed_offset {
inline constexpr std::uint64_t kTrainTrajectory = 101;
inline constexpr std::uint64_t kTestPaths = 202;
inline constexpr std::uint64_t kFieldFit = 303;
inline constexpr std::uint64_t kSampler = 404;
inline constexpr std::uint64_t kOutpainterInit = 505;
inline constexpr std::uint64_t kOutpainterTrain = 606;
}  // namespace seed_offset

using Logger = std::function<void(const std::string&)>;

struct TestView {
  std::string id;
  Pose pose;
  ImageBuffer small;
  ImageBuffer large;
};

struct TrainView {
  std::string id;
  Pose pose;
  ImageBuffer image;
  DepthBuffer depth;
};

/// Stages persist into fixed subdirectories of the output directory and
/// stamp each with provenance.json. A stage whose stamp matches its current
/// hash is skipped; a mismatching stamp is an error unless `force` is set.
class Pipeline {
 public:
  Pipeline(PipelineConfig config, std::filesystem::path out, bool force = false,
           Logger log = {});

  [[nodiscard]] const PipelineConfig& config() const { return config_; }
  [[nodiscard]] const std::filesystem::path& out() const { return out_; }

  void scene_gen();
  void render_train();
  void fit_field();
  void sample_poses();
  void gen_dataset();
  void train_outpainter();
  void train_naive();
  void run_baselines();
  void eval();
  void run_all();

  /// NEO retrained at each sampling interval; report in ablate/density.
  MetricReport ablate_density(const std::vector<double>& intervals);
  /// NEO trained on resized original-FOV pairs versus extended-FOV pairs;
  /// report in ablate/fov.
  MetricReport ablate_fov();

  [[nodiscard]] std::string stage_hash(const std::string& stage) const;
  [[nodiscard]] std::filesystem::path stage_dir(const std::string& stage) const;

  Scene load_scene() const;
  std::vector<TrainView> load_train_views(bool with_depth = true) const;
  std::vector<TestView> load_test_views() const;
  VoxelRadianceField load_field() const;

 private:
  bool up_to_date(const std::string& stage) const;
  void require(const std::string& stage) const;
  void stamp(const std::string& stage, nlohmann::json extra = nlohmann::json::object()) const;
  void begin(const std::string& stage) const;
  void log(const std::string& msg) const;

  /// NEO outputs of this variant's model on the test set, scored into a row.
  MetricRow neo_results();

  PipelineConfig config_;
  std::filesystem::path out_;
  /// Stages downstream of the field live here; equals out_ except for
  /// ablation variants.
  std::filesystem::path variant_;
  /// Ablation arm: pairs are resized crops of the original-FOV renders.
  bool original_fov_ = false;
  bool force_;
  Logger log_;
};

inline constexpr int kProvenanceVersion = 1;

nlohmann::json read_provenance(const std::filesystem::path& stage_dir);

}  // namespace neo
