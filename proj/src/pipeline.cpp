#include "neo/pipeline.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "neo/dataset.hpp"
#include "neo/error.hpp"
#include "neo/parallel.hpp"

namespace neo {

namespace {

constexpr int kStageVersion = 1;

const std::map<std::string, std::string> kStageCommand{
    {"scene", "scene-gen"},          {"views", "render-train"},   {"field", "fit-field"},
    {"poses", "sample-poses"},       {"dataset", "gen-dataset"},  {"outpainter", "train-outpainter"},
    {"naive", "train-naive"},        {"results", "run-baselines"}, {"eval", "eval"},
    {"neo_results", "ablate"}};

const char* blur_policy_name(BlurPolicy p) {
  switch (p) {
    case BlurPolicy::None: return "none";
    case BlurPolicy::Fixed: return "fixed";
    case BlurPolicy::Percentile: return "percentile";
  }
  return "none";
}

BlurPolicy blur_policy_from(const std::string& s) {
  if (s == "none") return BlurPolicy::None;
  if (s == "fixed") return BlurPolicy::Fixed;
  if (s == "percentile") return BlurPolicy::Percentile;
  fail(ErrorKind::InvalidArgument, "unknown blur policy '" + s + "'");
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) fail(ErrorKind::MissingArtifact, "missing " + path.string());
  try {
    return nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, path.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  const auto text = j.dump(2) + "\n";
  write_file(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

ImageBuffer load_png(const std::filesystem::path& path) { return from_rgb8(read_png(path)); }

std::string interval_tag(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  [[nodiscard]] double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

}  // namespace

CameraIntrinsics CameraSection::small_intr() const {
  CameraIntrinsics intr{focal_px, small_width, small_height};
  intr.validate();
  return intr;
}

CameraIntrinsics CameraSection::large_intr() const {
  return extend_intrinsics(small_intr(), large_fov_x_deg, large_fov_y_deg);
}

CameraIntrinsics CameraSection::capture_intr() const {
  return small_intr().scaled(capture_scale);
}

void PipelineConfig::validate() const {
  const auto small = camera.small_intr();
  const auto large = camera.large_intr();
  if (camera.capture_scale < 1) fail(ErrorKind::InvalidArgument, "capture_scale must be >= 1");
  central_offset(small, large);
  const int factor = downsample_factor(outpainter.architecture);
  if (large.width % factor != 0 || large.height % factor != 0) {
    fail(ErrorKind::InvalidArgument, "large resolution must be divisible by the model's " +
                                         std::to_string(factor) + "x downsampling");
  }
  if (trajectory.train_count < 2) fail(ErrorKind::InvalidArgument, "need at least 2 training views");
  if (trajectory.test_paths < 1 || trajectory.test_per_path < 1) {
    fail(ErrorKind::InvalidArgument, "test paths and views per path must be positive");
  }
  field.fit.validate();
  field.render.validate();
  SamplerConfig{sampler.interval, sampler.yaw_count, sampler.coverage_threshold, 0,
                sampler.yaw_from_distribution}
      .validate();
  if (!(dataset.blur_percentile >= 0 && dataset.blur_percentile <= 1)) {
    fail(ErrorKind::InvalidArgument, "blur_percentile must lie in [0, 1]");
  }
  if (!(dataset.blur_threshold >= 0)) fail(ErrorKind::InvalidArgument, "blur_threshold must be >= 0");
  outpainter.train.validate();
  if (baselines.neighbors < 1) fail(ErrorKind::InvalidArgument, "neighbors must be >= 1");
  for (const auto& m : eval.methods) {
    if (std::find(kAllMethods.begin(), kAllMethods.end(), m) == kAllMethods.end()) {
      fail(ErrorKind::InvalidArgument, "unknown method '" + m + "'");
    }
  }
  for (double v : ablation.density_intervals) {
    if (!(v > 0)) fail(ErrorKind::InvalidArgument, "ablation intervals must be positive");
  }
}

PipelineConfig load_config(const std::filesystem::path& path) {
  const auto j = read_json(path);
  PipelineConfig c;
  try {
    c = j.get<PipelineConfig>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, path.string() + ": " + e.what());
  }
  c.validate();
  return c;
}

void to_json(nlohmann::json& j, const PipelineConfig& c) {
  nlohmann::json arch = nlohmann::json::array();
  for (const auto& l : c.outpainter.architecture) arch.push_back(l);
  j = {{"seed", c.seed},
       {"output_dir", c.output_dir},
       {"scene",
        {{"seed", c.scene.seed},
         {"config", c.scene.config},
         {"walkable_cell", c.scene.walkable_cell},
         {"walkable_margin", c.scene.walkable_margin}}},
       {"camera",
        {{"focal_px", c.camera.focal_px},
         {"small_width", c.camera.small_width},
         {"small_height", c.camera.small_height},
         {"large_fov_x_deg", c.camera.large_fov_x_deg},
         {"large_fov_y_deg", c.camera.large_fov_y_deg},
         {"capture_scale", c.camera.capture_scale}}},
       {"trajectory",
        {{"train_count", c.trajectory.train_count},
         {"test_paths", c.trajectory.test_paths},
         {"test_per_path", c.trajectory.test_per_path},
         {"walk_step", c.trajectory.walk.step},
         {"walk_max_turn_deg", c.trajectory.walk.max_turn_deg},
         {"height", c.trajectory.walk.height}}},
       {"field",
        {{"fit", c.field.fit},
         {"render", c.field.render},
         {"bounds_padding", c.field.bounds_padding},
         {"calibration_threshold_db", c.field.calibration_threshold_db}}},
       {"sampler",
        {{"interval", c.sampler.interval},
         {"yaw_count", c.sampler.yaw_count},
         {"coverage_threshold", c.sampler.coverage_threshold
                                    ? nlohmann::json(*c.sampler.coverage_threshold)
                                    : nlohmann::json(nullptr)},
         {"yaw_from_distribution", c.sampler.yaw_from_distribution},
         {"dof_fit", fit_spec_to_json(c.sampler.dof_fit)}}},
       {"dataset",
        {{"blur_policy", blur_policy_name(c.dataset.blur_policy)},
         {"blur_percentile", c.dataset.blur_percentile},
         {"blur_threshold", c.dataset.blur_threshold}}},
       {"outpainter", {{"architecture", arch}, {"train", c.outpainter.train}}},
       {"baselines",
        {{"neighbors", c.baselines.neighbors}, {"relocalize", c.baselines.relocalize}}},
       {"eval", {{"methods", c.eval.methods}}},
       {"ablation", {{"density_intervals", c.ablation.density_intervals}}}};
}

void from_json(const nlohmann::json& j, PipelineConfig& c) {
  const PipelineConfig d;
  const auto empty = nlohmann::json::object();
  auto section = [&](const char* name) -> const nlohmann::json& {
    return j.contains(name) ? j.at(name) : empty;
  };
  c.seed = j.value("seed", d.seed);
  c.output_dir = j.value("output_dir", d.output_dir);

  const auto& s = section("scene");
  c.scene.seed = s.value("seed", d.scene.seed);
  c.scene.config = s.value("config", d.scene.config);
  c.scene.walkable_cell = s.value("walkable_cell", d.scene.walkable_cell);
  c.scene.walkable_margin = s.value("walkable_margin", d.scene.walkable_margin);

  const auto& cam = section("camera");
  c.camera.focal_px = cam.value("focal_px", d.camera.focal_px);
  c.camera.small_width = cam.value("small_width", d.camera.small_width);
  c.camera.small_height = cam.value("small_height", d.camera.small_height);
  c.camera.large_fov_x_deg = cam.value("large_fov_x_deg", d.camera.large_fov_x_deg);
  c.camera.large_fov_y_deg = cam.value("large_fov_y_deg", d.camera.large_fov_y_deg);
  c.camera.capture_scale = cam.value("capture_scale", d.camera.capture_scale);

  const auto& t = section("trajectory");
  c.trajectory.train_count = t.value("train_count", d.trajectory.train_count);
  c.trajectory.test_paths = t.value("test_paths", d.trajectory.test_paths);
  c.trajectory.test_per_path = t.value("test_per_path", d.trajectory.test_per_path);
  c.trajectory.walk.step = t.value("walk_step", d.trajectory.walk.step);
  c.trajectory.walk.max_turn_deg = t.value("walk_max_turn_deg", d.trajectory.walk.max_turn_deg);
  c.trajectory.walk.height = t.value("height", d.trajectory.walk.height);

  const auto& f = section("field");
  c.field.fit = f.value("fit", d.field.fit);
  c.field.render = f.value("render", d.field.render);
  c.field.bounds_padding = f.value("bounds_padding", d.field.bounds_padding);
  c.field.calibration_threshold_db =
      f.value("calibration_threshold_db", d.field.calibration_threshold_db);

  const auto& sm = section("sampler");
  c.sampler.interval = sm.value("interval", d.sampler.interval);
  c.sampler.yaw_count = sm.value("yaw_count", d.sampler.yaw_count);
  if (sm.contains("coverage_threshold")) {
    const auto& ct = sm.at("coverage_threshold");
    c.sampler.coverage_threshold =
        ct.is_null() ? std::nullopt : std::optional<double>(ct.get<double>());
  } else {
    c.sampler.coverage_threshold = d.sampler.coverage_threshold;
  }
  c.sampler.yaw_from_distribution =
      sm.value("yaw_from_distribution", d.sampler.yaw_from_distribution);
  c.sampler.dof_fit =
      sm.contains("dof_fit") ? fit_spec_from_json(sm.at("dof_fit")) : d.sampler.dof_fit;

  const auto& ds = section("dataset");
  c.dataset.blur_policy =
      blur_policy_from(ds.value("blur_policy", std::string(blur_policy_name(d.dataset.blur_policy))));
  c.dataset.blur_percentile = ds.value("blur_percentile", d.dataset.blur_percentile);
  c.dataset.blur_threshold = ds.value("blur_threshold", d.dataset.blur_threshold);

  const auto& o = section("outpainter");
  if (o.contains("architecture")) {
    c.outpainter.architecture.clear();
    for (const auto& l : o.at("architecture")) c.outpainter.architecture.push_back(l.get<LayerSpec>());
  } else {
    c.outpainter.architecture = d.outpainter.architecture;
  }
  c.outpainter.train = o.value("train", d.outpainter.train);

  const auto& b = section("baselines");
  c.baselines.neighbors = b.value("neighbors", d.baselines.neighbors);
  c.baselines.relocalize = b.value("relocalize", d.baselines.relocalize);

  c.eval.methods = section("eval").value("methods", d.eval.methods);
  c.ablation.density_intervals =
      section("ablation").value("density_intervals", d.ablation.density_intervals);
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    fail(ErrorKind::Io, "SHA-256 digest failed");
  }
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

nlohmann::json read_provenance(const std::filesystem::path& stage_dir) {
  return read_json(stage_dir / "provenance.json");
}

Pipeline::Pipeline(PipelineConfig config, std::filesystem::path out, bool force, Logger log)
    : config_(std::move(config)), out_(std::move(out)), variant_(out_), force_(force),
      log_(std::move(log)) {
  config_.validate();
}

void Pipeline::log(const std::string& msg) const {
  if (log_) log_(msg);
}

std::filesystem::path Pipeline::stage_dir(const std::string& stage) const {
  if (stage == "poses" || stage == "dataset" || stage == "outpainter" || stage == "neo_results") {
    return variant_ / stage;
  }
  return out_ / stage;
}

std::string Pipeline::stage_hash(const std::string& stage) const {
  const auto& c = config_;
  const nlohmann::json full = c;
  nlohmann::json j = {{"stage", stage}, {"version", kStageVersion}};
  if (stage == "scene") {
    j["scene"] = full["scene"];
  } else if (stage == "views") {
    j["upstream"] = {stage_hash("scene")};
    j["camera"] = full["camera"];
    j["trajectory"] = full["trajectory"];
    j["seed"] = c.seed;
  } else if (stage == "field") {
    j["upstream"] = {stage_hash("views")};
    j["field"] = full["field"];
    j["seed"] = c.seed;
  } else if (stage == "poses") {
    j["upstream"] = {stage_hash("views")};
    j["sampler"] = full["sampler"];
    j["seed"] = c.seed;
  } else if (stage == "dataset") {
    j["upstream"] = {stage_hash("field"), stage_hash("poses")};
    j["dataset"] = full["dataset"];
    j["original_fov"] = original_fov_;
  } else if (stage == "outpainter") {
    j["upstream"] = {stage_hash("dataset")};
    j["outpainter"] = full["outpainter"];
    j["seed"] = c.seed;
  } else if (stage == "naive") {
    j["upstream"] = {stage_hash("views")};
    j["outpainter"] = full["outpainter"];
    j["seed"] = c.seed;
  } else if (stage == "results") {
    j["upstream"] = {stage_hash("field"), stage_hash("outpainter"), stage_hash("naive")};
    j["baselines"] = full["baselines"];
    j["methods"] = c.eval.methods;
  } else if (stage == "eval") {
    j["upstream"] = {stage_hash("results")};
  } else if (stage == "neo_results") {
    j["upstream"] = {stage_hash("outpainter")};
  } else {
    fail(ErrorKind::InvalidArgument, "unknown stage '" + stage + "'");
  }
  return sha256_hex(j.dump());
}

bool Pipeline::up_to_date(const std::string& stage) const {
  const auto path = stage_dir(stage) / "provenance.json";
  if (!std::filesystem::exists(path)) return false;
  const auto recorded = read_json(path).value("config_hash", std::string());
  if (recorded == stage_hash(stage)) return true;
  if (force_) return false;
  fail(ErrorKind::StaleArtifact, stage_dir(stage).string() +
                                     " was produced by a different configuration; rerun with "
                                     "--force to overwrite it");
}

void Pipeline::require(const std::string& stage) const {
  const auto path = stage_dir(stage) / "provenance.json";
  if (!std::filesystem::exists(path)) {
    fail(ErrorKind::MissingArtifact, "missing artifact " + stage_dir(stage).string() +
                                         "; run `neo " + kStageCommand.at(stage) + "` first");
  }
  const auto recorded = read_json(path).value("config_hash", std::string());
  if (recorded != stage_hash(stage) && !force_) {
    fail(ErrorKind::StaleArtifact, stage_dir(stage).string() +
                                       " does not match the current configuration; rerun `neo " +
                                       kStageCommand.at(stage) + "` or pass --force");
  }
}

void Pipeline::begin(const std::string& stage) const {
  const auto dir = stage_dir(stage);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  log("[" + stage + "] running");
}

void Pipeline::stamp(const std::string& stage, nlohmann::json extra) const {
  extra["stage"] = stage;
  extra["stage_version"] = kStageVersion;
  extra["provenance_version"] = kProvenanceVersion;
  extra["config_hash"] = stage_hash(stage);
  extra["seed"] = config_.seed;
  write_json(stage_dir(stage) / "provenance.json", extra);
}

// ---------------------------------------------------------------- loaders

Scene Pipeline::load_scene() const {
  return read_json(stage_dir("scene") / "scene.json").get<Scene>();
}

std::vector<TrainView> Pipeline::load_train_views(bool with_depth) const {
  const auto dir = stage_dir("views") / "train";
  const auto list = read_json(dir / "poses.json");
  std::vector<TrainView> views(list.size());
  parallel_for(views.size(), [&](std::size_t i) {
    auto& v = views[i];
    v.id = list[i].at("id").get<std::string>();
    v.pose = list[i].at("pose").get<Pose>();
    v.image = load_png(dir / (v.id + ".png"));
    if (with_depth) v.depth = read_depth(dir / (v.id + "_depth.raw"));
  });
  return views;
}

std::vector<TestView> Pipeline::load_test_views() const {
  const auto dir = stage_dir("views") / "test";
  const auto list = read_json(dir / "poses.json");
  std::vector<TestView> views(list.size());
  parallel_for(views.size(), [&](std::size_t i) {
    auto& v = views[i];
    v.id = list[i].at("id").get<std::string>();
    v.pose = list[i].at("pose").get<Pose>();
    v.small = load_png(dir / (v.id + "_small.png"));
    v.large = load_png(dir / (v.id + "_large.png"));
  });
  return views;
}

VoxelRadianceField Pipeline::load_field() const {
  return VoxelRadianceField::load(stage_dir("field") / "field.neof");
}

// ----------------------------------------------------------------- stages

void Pipeline::scene_gen() {
  if (up_to_date("scene")) return log("[scene] up to date");
  begin("scene");
  const Scene scene = build_scene(config_.scene.seed, config_.scene.config);
  const auto walk =
      WalkableArea::from_scene(scene, config_.scene.walkable_cell, config_.scene.walkable_margin);
  if (walk.walkable_count() == 0) fail(ErrorKind::SceneGeneration, "scene has no walkable cells");
  write_json(stage_dir("scene") / "scene.json", scene);
  stamp("scene", {{"obstacles", scene.obstacles.size()},
                  {"walkable_cells", walk.walkable_count()}});
}

void Pipeline::render_train() {
  if (up_to_date("views")) return log("[views] up to date");
  require("scene");
  begin("views");
  const Timer timer;
  const Scene scene = load_scene();
  const auto& t = config_.trajectory;
  const auto walk =
      WalkableArea::from_scene(scene, config_.scene.walkable_cell, config_.scene.walkable_margin);
  const auto train = sample_training_trajectory(walk, t.train_count,
                                                config_.seed + seed_offset::kTrainTrajectory,
                                                t.walk.height);
  const auto test = sample_test_paths(walk, t.test_paths, t.test_per_path,
                                      config_.seed + seed_offset::kTestPaths, t.walk);
  const auto capture = config_.camera.capture_intr();
  const auto small = config_.camera.small_intr();
  const auto large = config_.camera.large_intr();

  const auto train_dir = stage_dir("views") / "train";
  const auto test_dir = stage_dir("views") / "test";
  std::filesystem::create_directories(train_dir);
  std::filesystem::create_directories(test_dir);

  nlohmann::json train_list = nlohmann::json::array();
  for (std::size_t i = 0; i < train.size(); ++i) {
    const auto id = pair_id(i);
    const auto view = render_ground_truth(scene, train[i], capture);
    write_png(train_dir / (id + ".png"), view.image);
    write_depth(train_dir / (id + "_depth.raw"), view.depth);
    train_list.push_back({{"id", id}, {"pose", train[i]}});
  }
  write_json(train_dir / "poses.json", train_list);

  nlohmann::json test_list = nlohmann::json::array();
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto id = pair_id(i);
    const auto big = to_rgb8(render_ground_truth(scene, test[i], large).image);
    write_png(test_dir / (id + "_large.png"), big);
    write_png(test_dir / (id + "_small.png"), crop_center(big, small.width, small.height));
    test_list.push_back({{"id", id}, {"pose", test[i]}});
  }
  write_json(test_dir / "poses.json", test_list);
  stamp("views", {{"train_views", train.size()},
                  {"test_views", test.size()},
                  {"capture_intrinsics", capture},
                  {"small_intrinsics", small},
                  {"large_intrinsics", large},
                  {"seconds", timer.seconds()}});
}

void Pipeline::fit_field() {
  if (up_to_date("field")) return log("[field] up to date");
  require("views");
  begin("field");
  const Timer timer;
  const Scene scene = load_scene();
  const auto capture = config_.camera.capture_intr();
  const auto train = load_train_views(false);
  std::vector<FitView> views;
  views.reserve(train.size());
  for (const auto& v : train) views.push_back({v.image, v.pose, capture});

  const auto& fc = config_.field;
  const Vec3 pad = Vec3::Constant(fc.bounds_padding);
  const Box bounds{scene.room.box.min - pad, scene.room.box.max + pad};
  auto result = fit(VoxelRadianceField::constant(bounds, fc.fit.schedule.front().dims), views,
                    fc.fit, config_.seed + seed_offset::kFieldFit, [&](int it, double loss) {
                      if (it % 500 == 0) {
                        char buf[96];
                        std::snprintf(buf, sizeof buf, "[field] iteration %d loss %.6f", it, loss);
                        log(buf);
                      }
                    });
  result.field.save(stage_dir("field") / "field.neof");
  {
    std::ofstream csv(stage_dir("field") / "loss.csv");
    csv << "iteration,loss\n";
    for (std::size_t i = 0; i < result.loss_trace.size(); ++i) {
      csv << i << ',' << result.loss_trace[i] << '\n';
    }
  }

  // Held-out fidelity: oracle-pose renders at the test poses.
  const auto test_list = read_json(stage_dir("views") / "test" / "poses.json");
  std::vector<double> scores(test_list.size());
  parallel_for(scores.size(), [&](std::size_t i) {
    const auto pose = test_list[i].at("pose").get<Pose>();
    const auto truth = quantize(render_ground_truth(scene, pose, capture).image);
    scores[i] = psnr(render_view(result.field, pose, capture, fc.render), truth);
  });
  const double heldout = summarize(scores).mean;
  char buf[128];
  std::snprintf(buf, sizeof buf, "[field] held-out PSNR %.2f dB (threshold %.2f dB)", heldout,
                fc.calibration_threshold_db);
  log(buf);
  stamp("field", {{"heldout_psnr_db", heldout},
                  {"heldout_views", scores.size()},
                  {"calibration_threshold_db", fc.calibration_threshold_db},
                  {"meets_threshold", heldout >= fc.calibration_threshold_db},
                  {"final_loss", result.loss_trace.empty() ? 0.0 : result.loss_trace.back()},
                  {"seconds", timer.seconds()}});
}

void Pipeline::sample_poses() {
  if (up_to_date("poses")) return log("[poses] up to date");
  require("views");
  begin("poses");
  const Scene scene = load_scene();
  const auto walk =
      WalkableArea::from_scene(scene, config_.scene.walkable_cell, config_.scene.walkable_margin);
  std::vector<Pose> anchors;
  for (const auto& e : read_json(stage_dir("views") / "train" / "poses.json")) {
    anchors.push_back(e.at("pose").get<Pose>());
  }
  const auto& s = config_.sampler;
  const auto dof = fit_dof_distribution(anchors, s.dof_fit);
  const SamplerConfig cfg{s.interval, s.yaw_count, s.coverage_threshold,
                          config_.seed + seed_offset::kSampler, s.yaw_from_distribution};
  const auto poses = neo::sample_poses(walk, cfg, dof, anchors);
  write_pose_list(stage_dir("poses") / "poses.jsonl", poses);
  write_json(stage_dir("poses") / "dof.json", dof);
  log("[poses] " + std::to_string(poses.size()) + " poses");
  stamp("poses", {{"count", poses.size()},
                  {"positions", grid_positions(walk, s.interval).size()},
                  {"sampler", cfg}});
}

void Pipeline::gen_dataset() {
  if (up_to_date("dataset")) return log("[dataset] up to date");
  const auto small = config_.camera.small_intr();
  const auto large = config_.camera.large_intr();
  Dataset ds;
  nlohmann::json extra;
  const Timer timer;
  if (original_fov_) {
    // Resize-and-crop of the original-FOV renders, keyed to the main dataset.
    const auto main_dir = out_ / "dataset";
    if (!std::filesystem::exists(main_dir / "provenance.json")) {
      fail(ErrorKind::MissingArtifact, "missing artifact " + main_dir.string() +
                                           "; run `neo gen-dataset` first");
    }
    begin("dataset");
    const Dataset main = load_dataset(main_dir);
    std::vector<ImageBuffer> smalls(main.pairs.size());
    std::vector<Pose> poses(main.pairs.size());
    for (std::size_t i = 0; i < smalls.size(); ++i) {
      smalls[i] = from_rgb8(main.pairs[i].small);
      poses[i] = main.manifest.records[i].pose;
    }
    ds = naive_dataset(smalls, poses, small, large);
    for (std::size_t i = 0; i < ds.manifest.records.size(); ++i) {
      const auto& src = main.manifest.records[i];
      auto& dst = ds.manifest.records[i];
      dst.position_index = src.position_index;
      dst.yaw_index = src.yaw_index;
      dst.kept = src.kept;
    }
    extra["source"] = main_dir.string();
  } else {
    require("field");
    require("poses");
    begin("dataset");
    const auto field = load_field();
    const auto poses = read_pose_list(stage_dir("poses") / "poses.jsonl");
    const auto& render = config_.field.render;
    ds = generate_pairs(field, poses, small, large, render);

    const auto& dc = config_.dataset;
    double threshold = 0;
    if (dc.blur_policy == BlurPolicy::Fixed) {
      threshold = dc.blur_threshold;
    } else if (dc.blur_policy == BlurPolicy::Percentile) {
      const auto train = read_json(stage_dir("views") / "train" / "poses.json");
      std::vector<double> scores(train.size());
      parallel_for(scores.size(), [&](std::size_t i) {
        scores[i] = blur_score(
            to_rgb8(render_view(field, train[i].at("pose").get<Pose>(), large, render)));
      });
      threshold = percentile(scores, dc.blur_percentile);
    }
    filter_blurry(ds.manifest, threshold);
    extra["blur_threshold"] = threshold;
    extra["blur_policy"] = blur_policy_name(dc.blur_policy);
  }
  ds.manifest.config_hash = stage_hash("dataset");
  ds.manifest.seed = config_.seed;
  persist(ds, stage_dir("dataset"));
  const auto kept = ds.manifest.kept_count();
  log("[dataset] " + std::to_string(ds.pairs.size()) + " pairs, " + std::to_string(kept) +
      " kept");
  extra["pairs"] = ds.pairs.size();
  extra["kept"] = kept;
  extra["dropped"] = ds.pairs.size() - kept;
  extra["any_dropped"] = kept != ds.pairs.size();
  extra["seconds"] = timer.seconds();
  stamp("dataset", extra);
}

namespace {

TrainResult train_model(const PipelineConfig& c, const Dataset& ds, const std::string& tag,
                        const Logger& log) {
  const auto& o = c.outpainter;
  const auto model = init_model(o.architecture, c.seed + seed_offset::kOutpainterInit);
  return train(model, ds, o.train, c.seed + seed_offset::kOutpainterTrain,
               [&](int it, double loss) {
                 if (log && it % 250 == 0) {
                   char buf[96];
                   std::snprintf(buf, sizeof buf, "[%s] iteration %d loss %.6f", tag.c_str(), it,
                                 loss);
                   log(buf);
                 }
               });
}

}  // namespace

void Pipeline::train_outpainter() {
  if (up_to_date("outpainter")) return log("[outpainter] up to date");
  require("dataset");
  begin("outpainter");
  const Timer timer;
  const Dataset ds = load_dataset(stage_dir("dataset"));
  const auto result = train_model(config_, ds, "outpainter", log_);
  result.model.save(stage_dir("outpainter") / "model.neom");
  write_loss_csv(stage_dir("outpainter") / "loss.csv", result.loss_trace);
  stamp("outpainter", {{"final_loss", result.loss_trace.empty() ? 0.0 : result.loss_trace.back()},
                       {"train_pairs", ds.manifest.kept_count()},
                       {"seconds", timer.seconds()}});
}

void Pipeline::train_naive() {
  if (up_to_date("naive")) return log("[naive] up to date");
  require("views");
  begin("naive");
  const Timer timer;
  const auto train = load_train_views(false);
  std::vector<ImageBuffer> images;
  std::vector<Pose> poses;
  for (const auto& v : train) {
    images.push_back(downsample_area(v.image, config_.camera.capture_scale));
    poses.push_back(v.pose);
  }
  Dataset ds = naive_dataset(images, poses, config_.camera.small_intr(), config_.camera.large_intr());
  ds.manifest.config_hash = stage_hash("naive");
  ds.manifest.seed = config_.seed;
  persist(ds, stage_dir("naive") / "dataset");
  const auto result = train_model(config_, ds, "naive", log_);
  result.model.save(stage_dir("naive") / "model.neom");
  write_loss_csv(stage_dir("naive") / "loss.csv", result.loss_trace);
  stamp("naive", {{"final_loss", result.loss_trace.empty() ? 0.0 : result.loss_trace.back()},
                  {"train_pairs", ds.pairs.size()},
                  {"seconds", timer.seconds()}});
}

void Pipeline::run_baselines() {
  if (up_to_date("results")) return log("[results] up to date");
  require("field");
  require("outpainter");
  require("naive");
  begin("results");
  const Timer total;
  const auto small = config_.camera.small_intr();
  const auto large = config_.camera.large_intr();
  const auto capture = config_.camera.capture_intr();
  const auto& render = config_.field.render;
  const auto field = load_field();
  const auto tests = load_test_views();
  const auto train = load_train_views(true);
  std::vector<ImageBuffer> train_images;
  std::vector<Pose> train_poses;
  for (const auto& v : train) {
    train_images.push_back(v.image);
    train_poses.push_back(v.pose);
  }
  const auto index = build_retrieval_index(train_images, train_poses);
  const auto neo_model = OutpaintModel::load(stage_dir("outpainter") / "model.neom");
  const auto naive_model = OutpaintModel::load(stage_dir("naive") / "model.neom");
  auto reloc_cfg = config_.baselines.relocalize;
  reloc_cfg.render = render;

  nlohmann::json summary = nlohmann::json::object();
  for (const auto& method : config_.eval.methods) {
    const Timer timer;
    const auto dir = stage_dir("results") / method;
    std::filesystem::create_directories(dir);
    std::vector<nlohmann::json> meta(tests.size());
    parallel_for(tests.size(), [&](std::size_t i) {
      const auto& t = tests[i];
      ImageBuffer out;
      nlohmann::json m = {{"id", t.id}};
      if (method == "NEO") {
        out = forward(neo_model, canvas_embed(t.small, large));
      } else if (method == "NaiveOutpainting") {
        out = forward(naive_model, canvas_embed(t.small, large));
      } else if (method == "OracleNeRF") {
        out = oracle_nerf(field, t.pose, large, t.small, render);
      } else if (method == "RelocalizedNeRF") {
        auto r = relocalized_nerf(field, t.small, index, small, large, reloc_cfg);
        out = std::move(r.image);
        m["estimated_pose"] = r.reloc.pose;
        m["retrieved"] = train[r.reloc.retrieved].id;
        m["residual"] = r.reloc.residual;
        m["stage_residuals"] = r.reloc.stage_residuals;
        m["failed"] = r.reloc.failed;
        const Vec3 dt = r.reloc.pose.translation - t.pose.translation;
        m["translation_error_m"] = dt.norm();
        const double c = std::clamp(
            ((r.reloc.pose.rotation.transpose() * t.pose.rotation).trace() - 1.0) / 2.0, -1.0, 1.0);
        m["rotation_error_deg"] = rad_to_deg(std::acos(c));
      } else if (method == "WarpFusion") {
        std::vector<WarpSource> sources;
        nlohmann::json ids = nlohmann::json::array();
        for (auto k : index.nearest(t.small, static_cast<std::size_t>(config_.baselines.neighbors))) {
          sources.push_back({train[k].image, train[k].depth, train[k].pose, capture});
          ids.push_back(train[k].id);
        }
        auto w = warp_fuse(t.small, sources, t.pose, large);
        out = std::move(w.image);
        m["neighbors"] = ids;
        m["valid_fraction"] = w.valid_fraction;
      }
      write_png(dir / (t.id + ".png"), out);
      meta[i] = m;
    });
    write_json(dir / "metadata.json", {{"method", method}, {"images", meta}});
    summary[method] = {{"seconds", timer.seconds()}};
    if (method == "WarpFusion") {
      double v = 0;
      for (const auto& m : meta) v += m.at("valid_fraction").get<double>();
      summary[method]["mean_valid_fraction"] = v / static_cast<double>(meta.size());
    }
    if (method == "RelocalizedNeRF") {
      int failed = 0;
      for (const auto& m : meta) failed += m.at("failed").get<bool>() ? 1 : 0;
      summary[method]["failed"] = failed;
    }
    char buf[128];
    std::snprintf(buf, sizeof buf, "[results] %s done in %.1f s", method.c_str(), timer.seconds());
    log(buf);
  }
  stamp("results", {{"methods", summary}, {"test_views", tests.size()},
                    {"seconds", total.seconds()}});
}

void Pipeline::eval() {
  if (up_to_date("eval")) return log("[eval] up to date");
  require("results");
  begin("eval");
  const auto tests = load_test_views();
  const auto band = band_mask(config_.camera.small_intr(), config_.camera.large_intr());
  std::vector<ImageBuffer> truths;
  for (const auto& t : tests) truths.push_back(t.large);
  MetricReport report;
  report.title = "Field-of-view extrapolation on the test set";
  report.config_hash = stage_hash("eval");
  for (const auto& method : config_.eval.methods) {
    std::vector<ImageBuffer> outputs(tests.size());
    parallel_for(tests.size(), [&](std::size_t i) {
      outputs[i] = load_png(stage_dir("results") / method / (tests[i].id + ".png"));
    });
    report.rows.push_back(evaluate_method(method, outputs, truths, band));
  }
  emit_report(report, stage_dir("eval"));
  log("\n" + report_markdown(report));
  stamp("eval");
}

void Pipeline::run_all() {
  scene_gen();
  render_train();
  fit_field();
  sample_poses();
  gen_dataset();
  train_outpainter();
  train_naive();
  run_baselines();
  eval();
}

MetricRow Pipeline::neo_results() {
  const auto dir = stage_dir("neo_results");
  if (up_to_date("neo_results")) {
    log("[neo_results] up to date");
    return read_json(dir / "row.json").get<MetricRow>();
  }
  require("outpainter");
  begin("neo_results");
  const auto large = config_.camera.large_intr();
  const auto model = OutpaintModel::load(stage_dir("outpainter") / "model.neom");
  const auto tests = load_test_views();
  std::vector<ImageBuffer> outputs(tests.size()), truths(tests.size());
  parallel_for(tests.size(), [&](std::size_t i) {
    outputs[i] = from_rgb8(to_rgb8(forward(model, canvas_embed(tests[i].small, large))));
    truths[i] = tests[i].large;
    write_png(dir / (tests[i].id + ".png"), outputs[i]);
  });
  const auto row = evaluate_method(
      "NEO", outputs, truths, band_mask(config_.camera.small_intr(), large));
  write_json(dir / "row.json", row);
  stamp("neo_results");
  return row;
}

MetricReport Pipeline::ablate_density(const std::vector<double>& intervals) {
  if (intervals.empty()) fail(ErrorKind::InvalidArgument, "no intervals to ablate");
  scene_gen();
  render_train();
  fit_field();
  MetricReport report;
  report.title = "Sampling density ablation";
  report.label_header = "Interval (m)";
  nlohmann::json hashes = nlohmann::json::array();
  for (double interval : intervals) {
    PipelineConfig c = config_;
    c.sampler.interval = interval;
    Pipeline arm(c, out_, force_, log_);
    if (arm.stage_hash("poses") != stage_hash("poses")) {
      arm.variant_ = out_ / "ablate" / "density" / ("interval_" + interval_tag(interval));
    }
    log("[ablate density] interval " + interval_tag(interval) + " in " + arm.variant_.string());
    arm.sample_poses();
    arm.gen_dataset();
    arm.train_outpainter();
    auto row = arm.neo_results();
    const auto poses = read_json(arm.stage_dir("poses") / "provenance.json").at("count");
    row.label = interval_tag(interval) + " (" + std::to_string(poses.get<std::size_t>()) +
                " poses)";
    report.rows.push_back(row);
    hashes.push_back(arm.stage_hash("neo_results"));
  }
  report.config_hash = sha256_hex(hashes.dump());
  emit_report(report, out_ / "ablate" / "density");
  log("\n" + report_markdown(report));
  return report;
}

MetricReport Pipeline::ablate_fov() {
  scene_gen();
  render_train();
  fit_field();
  sample_poses();
  gen_dataset();
  train_outpainter();
  Pipeline arm(config_, out_, force_, log_);
  arm.original_fov_ = true;
  arm.variant_ = out_ / "ablate" / "fov" / "original";
  arm.gen_dataset();
  arm.train_outpainter();
  MetricReport report;
  report.title = "Training field-of-view ablation";
  report.label_header = "Training pairs";
  auto original = arm.neo_results();
  original.label = "original FOV (resized)";
  auto extended = neo_results();
  extended.label = "extended FOV";
  report.rows = {original, extended};
  report.config_hash =
      sha256_hex(nlohmann::json{arm.stage_hash("neo_results"), stage_hash("neo_results")}.dump());
  emit_report(report, out_ / "ablate" / "fov");
  log("\n" + report_markdown(report));
  return report;
}

}  // namespace neo
