#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "im2flow/flow_core.hpp"
#include "im2flow/image.hpp"

namespace im2flow {

enum class ActionClass : int {
  TranslateLeft = 0,
  TranslateRight,
  Rise,
  Fall,
  RotateCw,
  RotateCcw,
  Expand,
  Contract,
};

inline constexpr int kNumActionClasses = 8;
inline constexpr int kNumAmbiguousPairs = 4;

std::string_view action_name(ActionClass a);
/// Throws ConfigError for unknown names.
ActionClass action_from_name(std::string_view name);
std::vector<ActionClass> all_action_classes();

/// Classes 2k and 2k+1 form ambiguous pair k.
inline int pair_index(ActionClass a) { return static_cast<int>(a) / 2; }
inline ActionClass pair_partner(ActionClass a) { return static_cast<ActionClass>(static_cast<int>(a) ^ 1); }

enum class ShapeKind : int { Disc = 0, Square, Triangle };
std::string_view shape_name(ShapeKind s);

struct MotionProgram {
  ActionClass action = ActionClass::TranslateRight;
  /// px/frame for translations, rad/frame for rotations, scale/frame for
  /// expansion and contraction.
  double magnitude = 0.0;

  friend bool operator==(const MotionProgram&, const MotionProgram&) = default;
};

struct SceneSpec {
  int image_size = 64;
  ShapeKind shape = ShapeKind::Disc;
  double radius = 8.0;  // circumradius in pixels
  double cx = 32.0;     // centroid at t = 0, pixel-center coordinates
  double cy = 32.0;
  double orientation = 0.0;  // radians, clockwise on screen
  bool mirrored = false;     // reflect object coordinates in x
  std::array<float, 3> fill{0.8f, 0.3f, 0.3f};
  double texture_fx = 0.5;
  double texture_fy = 0.5;
  double texture_phase = 0.0;
  std::uint64_t background_seed = 0;
  float background_level = 0.45f;
  float background_contrast = 0.08f;
  MotionProgram motion;

  std::string describe() const;
  friend bool operator==(const SceneSpec&, const SceneSpec&) = default;
};

/// Frames t+1..t+kHorizon are used for the averaged target flow.
inline constexpr int kHorizon = 5;

/// Throws ConfigError naming the spec when the shape is not fully inside the
/// frame at t = 0 or less than half of it stays in frame over the horizon.
void validate_scene(const SceneSpec& spec);

/// Mirror image of a scene about the vertical center line.
SceneSpec mirror_scene(const SceneSpec& spec);

/// Foreground mask at time t: pixel centers inside the shape.
Mask shape_mask(const SceneSpec& spec, double t);

/// Displacement between t and t + 1 of every pixel on the shape at t;
/// background is zero.
FlowField analytic_flow(const SceneSpec& spec, double t);

/// Displacement between t+k-1 and t+k of the scene points that sit on the
/// pixel grid at time t (k >= 1). step_flow(spec, t, 1) == analytic_flow(spec, t).
FlowField step_flow(const SceneSpec& spec, double t, int k);

/// Static procedural background (1 or 3 identical channels).
Image render_background(const SceneSpec& spec);

/// Anti-aliased render integrated over a symmetric half-frame exposure
/// centered at t. Output is quantized to 8-bit levels so a frame written to
/// and read back from disk is bit-identical.
Image render_frame(const SceneSpec& spec, double t);

enum class Split : int { Train = 0, Val, Test };
std::string_view split_name(Split s);

struct SyntheticSample {
  std::string id;
  Split split = Split::Train;
  ActionClass label = ActionClass::TranslateRight;
  SceneSpec scene;
  Image frame;                         // at t = 0
  std::vector<Image> future_frames;    // t = 1..kHorizon, when requested
  std::vector<FlowField> step_flows;   // k = 1..kHorizon, when requested
  FlowField target;                    // average of the kHorizon step flows
  Mask mask;
};

/// Parameter ranges, expressed as fractions of the image size where spatial.
struct SceneRanges {
  double radius_min = 0.11, radius_max = 0.17;
  double translate_speed_min = 0.5 / 64.0, translate_speed_max = 4.0 / 64.0;  // x image_size px/frame
  double start_offset_min = 0.12, start_offset_max = 0.25;  // behind center, along motion
  double lateral_offset = 0.15;
  double central_region = 0.2;  // |c - S/2| for rotation and scale scenes
  double rotation_min = 0.05, rotation_max = 0.15;
  double scale_rate_min = 0.02, scale_rate_max = 0.06;
};

struct DatasetConfig {
  std::uint64_t seed = 1;
  int n_train = 2000;
  int n_val = 250;
  int n_test = 250;
  int image_size = 64;
  std::vector<ActionClass> classes = all_action_classes();
  SceneRanges ranges;

  void validate() const;
};

struct SampleOptions {
  bool render_future_frames = false;
  bool keep_step_flows = false;
};

/// Samples the scene for one (seed, split, index). Class is
/// classes[index % classes.size()].
SceneSpec sample_scene(const DatasetConfig& config, Split split, int index);

SyntheticSample make_sample(const SceneSpec& scene, Split split, std::string id, const SampleOptions& options = {});

struct Dataset {
  DatasetConfig config;
  std::vector<SyntheticSample> train;
  std::vector<SyntheticSample> val;
  std::vector<SyntheticSample> test;

  const std::vector<SyntheticSample>& split(Split s) const;
};

Dataset generate_dataset(const DatasetConfig& config, const SampleOptions& options = {});

/// Directory layout: images/<id>.ppm, flows/<id>.flo, masks/<id>.pgm,
/// manifest.jsonl (one record per sample) and dataset.cfg.
void write_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset read_dataset(const std::filesystem::path& dir);

std::string dataset_config_to_text(const DatasetConfig& config);
DatasetConfig dataset_config_from_text(const std::string& text);

}  // namespace im2flow
