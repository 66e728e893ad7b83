#include "im2flow/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "im2flow/error.hpp"
#include "im2flow/flow_io.hpp"
#include "im2flow/rng.hpp"

namespace im2flow {

namespace {

using nlohmann::json;

constexpr std::array<std::string_view, kNumActionClasses> kActionNames = {
    "translate-left", "translate-right", "rise", "fall", "rotate-cw", "rotate-ccw", "expand", "contract"};
constexpr std::array<std::string_view, 3> kShapeNames = {"disc", "square", "triangle"};
constexpr std::array<std::string_view, 3> kSplitNames = {"train", "val", "test"};

// Base fill color per ambiguous pair: the only appearance cue tied to the label.
constexpr std::array<std::array<float, 3>, kNumAmbiguousPairs> kPairFill = {{
    {0.85f, 0.30f, 0.25f},
    {0.30f, 0.80f, 0.35f},
    {0.30f, 0.40f, 0.90f},
    {0.90f, 0.80f, 0.25f},
}};

constexpr double kExposure = 1.0;  // frames
constexpr int kExposureSamples = 8;
constexpr int kSuperSamples = 4;   // per axis

struct Vec2 {
  double x = 0, y = 0;
};

/// Pose of the object frame at a given time.
struct Pose {
  Vec2 center;
  double angle = 0;
  double scale = 1;
};

Pose pose_at(const SceneSpec& s, double tau) {
  Pose p{{s.cx, s.cy}, s.orientation, 1.0};
  const double m = s.motion.magnitude;
  switch (s.motion.action) {
    case ActionClass::TranslateLeft: p.center.x += -m * tau; break;
    case ActionClass::TranslateRight: p.center.x += m * tau; break;
    case ActionClass::Rise: p.center.y += -m * tau; break;
    case ActionClass::Fall: p.center.y += m * tau; break;
    case ActionClass::RotateCw: p.angle += m * tau; break;
    case ActionClass::RotateCcw: p.angle += -m * tau; break;
    case ActionClass::Expand: p.scale = 1.0 + m * tau; break;
    case ActionClass::Contract: p.scale = 1.0 + -m * tau; break;
  }
  return p;
}

Vec2 to_object(const SceneSpec& s, const Pose& pose, Vec2 q) {
  const double dx = q.x - pose.center.x, dy = q.y - pose.center.y;
  const double c = std::cos(pose.angle), sn = std::sin(pose.angle);
  Vec2 o{(c * dx + sn * dy) / pose.scale, (-sn * dx + c * dy) / pose.scale};
  if (s.mirrored) o.x = -o.x;
  return o;
}

Vec2 to_image(const SceneSpec& s, const Pose& pose, Vec2 o) {
  if (s.mirrored) o.x = -o.x;
  const double c = std::cos(pose.angle), sn = std::sin(pose.angle);
  return {pose.center.x + pose.scale * (c * o.x - sn * o.y), pose.center.y + pose.scale * (sn * o.x + c * o.y)};
}

bool inside(const SceneSpec& s, Vec2 o) {
  const double r = s.radius;
  switch (s.shape) {
    case ShapeKind::Disc: return o.x * o.x + o.y * o.y <= r * r;
    case ShapeKind::Square: {
      const double a = r / std::numbers::sqrt2;
      return std::abs(o.x) <= a && std::abs(o.y) <= a;
    }
    case ShapeKind::Triangle: {
      // Apex up (negative y); outward edge normals at 90, 210 and 330 degrees.
      const double h = 0.5 * r;
      const double k = std::sqrt(3.0) / 2.0;
      return o.y <= h && (-k * o.x - 0.5 * o.y) <= h && (k * o.x - 0.5 * o.y) <= h;
    }
  }
  return false;
}

double texture(const SceneSpec& s, Vec2 o) {
  return 0.72 + 0.28 * std::sin(s.texture_fx * o.x + s.texture_phase) * std::cos(s.texture_fy * o.y - s.texture_phase);
}

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

std::vector<double> exposure_times(double t) {
  std::vector<double> taus(kExposureSamples);
  for (int j = 0; j < kExposureSamples; ++j)
    taus[j] = t + kExposure * static_cast<double>(2 * j - (kExposureSamples - 1)) / (2.0 * (kExposureSamples - 1));
  return taus;
}

// Points covering the shape in object coordinates.
std::vector<Vec2> shape_samples(const SceneSpec& s) {
  std::vector<Vec2> pts;
  constexpr int n = 24;
  for (int i = 0; i <= n; ++i)
    for (int j = 0; j <= n; ++j) {
      const Vec2 o{s.radius * (2.0 * i / n - 1.0), s.radius * (2.0 * j / n - 1.0)};
      if (inside(s, o)) pts.push_back(o);
    }
  return pts;
}

float quantize8(double v) {
  const auto b = static_cast<int>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
  return static_cast<float>(b) / 255.0f;
}

}  // namespace

std::string_view action_name(ActionClass a) { return kActionNames.at(static_cast<std::size_t>(a)); }

ActionClass action_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kActionNames.size(); ++i)
    if (kActionNames[i] == name) return static_cast<ActionClass>(i);
  throw ConfigError("unknown action class '" + std::string(name) + "'");
}

std::vector<ActionClass> all_action_classes() {
  std::vector<ActionClass> out;
  for (int i = 0; i < kNumActionClasses; ++i) out.push_back(static_cast<ActionClass>(i));
  return out;
}

std::string_view shape_name(ShapeKind s) { return kShapeNames.at(static_cast<std::size_t>(s)); }
std::string_view split_name(Split s) { return kSplitNames.at(static_cast<std::size_t>(s)); }

std::string SceneSpec::describe() const {
  std::ostringstream os;
  os.precision(6);
  os << "SceneSpec{size=" << image_size << ", shape=" << shape_name(shape) << ", radius=" << radius << ", center=("
     << cx << "," << cy << "), orientation=" << orientation << ", mirrored=" << mirrored
     << ", action=" << action_name(motion.action) << ", magnitude=" << motion.magnitude << "}";
  return os.str();
}

void validate_scene(const SceneSpec& s) {
  auto fail = [&](const std::string& why) { throw ConfigError("infeasible scene (" + why + "): " + s.describe()); };
  if (s.image_size < 1) fail("image_size < 1");
  if (!(s.radius > 0.0) || !std::isfinite(s.radius)) fail("radius must be > 0");
  if (!(s.motion.magnitude >= 0.0) || !std::isfinite(s.motion.magnitude)) fail("magnitude must be >= 0");
  const auto pts = shape_samples(s);
  if (pts.empty()) fail("shape has no area");
  const double lo = -0.5, hi = s.image_size - 0.5;
  auto in_frame = [&](Vec2 q) { return q.x >= lo && q.x <= hi && q.y >= lo && q.y <= hi; };

  for (double tau : exposure_times(0.0)) {
    const Pose pose = pose_at(s, tau);
    if (!(pose.scale > 0.0)) fail("non-positive scale");
    for (const auto& o : pts)
      if (!in_frame(to_image(s, pose, o))) fail("shape not fully inside the frame at t=0");
  }
  for (int k = 0; k <= kHorizon; ++k) {
    for (double tau : exposure_times(k)) {
      const Pose pose = pose_at(s, tau);
      if (!(pose.scale > 0.0)) fail("non-positive scale within the horizon");
      std::size_t count = 0;
      for (const auto& o : pts) count += in_frame(to_image(s, pose, o)) ? 1 : 0;
      if (2 * count < pts.size()) fail("less than half of the shape in frame at t=" + std::to_string(tau));
    }
  }
}

SceneSpec mirror_scene(const SceneSpec& spec) {
  SceneSpec m = spec;
  m.cx = (spec.image_size - 1) - spec.cx;
  m.orientation = -spec.orientation;
  m.mirrored = !spec.mirrored;
  switch (spec.motion.action) {
    case ActionClass::TranslateLeft: m.motion.action = ActionClass::TranslateRight; break;
    case ActionClass::TranslateRight: m.motion.action = ActionClass::TranslateLeft; break;
    case ActionClass::RotateCw: m.motion.action = ActionClass::RotateCcw; break;
    case ActionClass::RotateCcw: m.motion.action = ActionClass::RotateCw; break;
    default: break;
  }
  return m;
}

Mask shape_mask(const SceneSpec& spec, double t) {
  const int n = spec.image_size;
  Mask mask(n, n);
  const Pose pose = pose_at(spec, t);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) mask.set(y, x, inside(spec, to_object(spec, pose, {double(x), double(y)})));
  return mask;
}

FlowField step_flow(const SceneSpec& spec, double t, int k) {
  if (k < 1) throw ConfigError("step_flow: k must be >= 1");
  const int n = spec.image_size;
  FlowField flow(n, n);
  const Mask mask = shape_mask(spec, t);
  const Pose pose = pose_at(spec, t);
  const double m = spec.motion.magnitude;
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      if (!mask.at(y, x)) continue;
      double du = 0, dv = 0;
      const double rx = x - pose.center.x, ry = y - pose.center.y;
      switch (spec.motion.action) {
        case ActionClass::TranslateLeft: du = -m; break;
        case ActionClass::TranslateRight: du = m; break;
        case ActionClass::Rise: dv = -m; break;
        case ActionClass::Fall: dv = m; break;
        case ActionClass::RotateCw:
        case ActionClass::RotateCcw: {
          const double w = spec.motion.action == ActionClass::RotateCw ? m : -m;
          const double a1 = w * k, a0 = w * (k - 1);
          du = (std::cos(a1) - std::cos(a0)) * rx - (std::sin(a1) - std::sin(a0)) * ry;
          dv = (std::sin(a1) - std::sin(a0)) * rx + (std::cos(a1) - std::cos(a0)) * ry;
          break;
        }
        case ActionClass::Expand:
        case ActionClass::Contract: {
          const double rate = (spec.motion.action == ActionClass::Expand ? m : -m) / pose.scale;
          du = rate * rx;
          dv = rate * ry;
          break;
        }
      }
      const auto i = flow.index(y, x);
      flow.u[i] = static_cast<float>(du);
      flow.v[i] = static_cast<float>(dv);
    }
  }
  return flow;
}

FlowField analytic_flow(const SceneSpec& spec, double t) { return step_flow(spec, t, 1); }

Image render_background(const SceneSpec& spec) {
  const int n = spec.image_size;
  constexpr int kCell = 8;
  const int grid = n / kCell + 2;
  Rng rng(Rng::derive(spec.background_seed, 0xb6));
  std::vector<double> nodes(static_cast<std::size_t>(grid) * grid);
  for (auto& v : nodes) v = rng.uniform(-1.0, 1.0);
  Image bg(n, n, 3);
  for (int y = 0; y < n; ++y) {
    const int gy = y / kCell;
    const double fy = smoothstep((y % kCell + 0.5) / kCell);
    for (int x = 0; x < n; ++x) {
      const int gx = x / kCell;
      const double fx = smoothstep((x % kCell + 0.5) / kCell);
      auto node = [&](int i, int j) { return nodes[static_cast<std::size_t>(j) * grid + i]; };
      const double top = node(gx, gy) * (1 - fx) + node(gx + 1, gy) * fx;
      const double bot = node(gx, gy + 1) * (1 - fx) + node(gx + 1, gy + 1) * fx;
      const auto v = static_cast<float>(spec.background_level + spec.background_contrast * (top * (1 - fy) + bot * fy));
      for (int c = 0; c < 3; ++c) bg.at(c, y, x) = v;
    }
  }
  return bg;
}

Image render_frame(const SceneSpec& spec, double t) {
  const int n = spec.image_size;
  const Image bg = render_background(spec);
  const auto taus = exposure_times(t);
  std::vector<Pose> poses;
  double x0 = n, x1 = -1, y0 = n, y1 = -1;
  for (double tau : taus) {
    const Pose p = pose_at(spec, tau);
    poses.push_back(p);
    const double reach = spec.radius * p.scale + 1.5;
    x0 = std::min(x0, p.center.x - reach);
    x1 = std::max(x1, p.center.x + reach);
    y0 = std::min(y0, p.center.y - reach);
    y1 = std::max(y1, p.center.y + reach);
  }
  const int bx0 = std::max(0, static_cast<int>(std::floor(x0)));
  const int bx1 = std::min(n - 1, static_cast<int>(std::ceil(x1)));
  const int by0 = std::max(0, static_cast<int>(std::floor(y0)));
  const int by1 = std::min(n - 1, static_cast<int>(std::ceil(y1)));

  Image frame = bg;
  std::array<std::array<double, 3>, kExposureSamples> sub{};
  for (int y = by0; y <= by1; ++y) {
    for (int x = bx0; x <= bx1; ++x) {
      for (int j = 0; j < kExposureSamples; ++j) {
        std::array<double, 3> acc{0, 0, 0};
        for (int sy = 0; sy < kSuperSamples; ++sy) {
          for (int sx = 0; sx < kSuperSamples; ++sx) {
            const Vec2 q{x + (sx + 0.5) / kSuperSamples - 0.5, y + (sy + 0.5) / kSuperSamples - 0.5};
            const Vec2 o = to_object(spec, poses[j], q);
            if (inside(spec, o)) {
              const double tex = texture(spec, o);
              for (int c = 0; c < 3; ++c) acc[c] += spec.fill[c] * tex;
            } else {
              for (int c = 0; c < 3; ++c) acc[c] += bg.at(c, y, x);
            }
          }
        }
        for (int c = 0; c < 3; ++c) sub[j][c] = acc[c] / (kSuperSamples * kSuperSamples);
      }
      // Symmetric pairing makes renders of opposite motions bit-identical.
      for (int c = 0; c < 3; ++c) {
        double total = 0.0;
        for (int j = 0; j < kExposureSamples / 2; ++j) total += sub[j][c] + sub[kExposureSamples - 1 - j][c];
        frame.at(c, y, x) = static_cast<float>(total / kExposureSamples);
      }
    }
  }
  for (auto& v : frame.data) v = quantize8(v);
  return frame;
}

void DatasetConfig::validate() const {
  if (n_train < 1 || n_val < 1 || n_test < 1) throw ConfigError("dataset: n_train, n_val and n_test must be >= 1");
  if (image_size < 32) throw ConfigError("dataset: image_size must be >= 32, got " + std::to_string(image_size));
  if (classes.size() < 2) throw ConfigError("dataset: need at least two classes");
  const auto& r = ranges;
  auto ordered = [](double a, double b) { return a >= 0 && a <= b; };
  if (!ordered(r.radius_min, r.radius_max) || r.radius_min <= 0 ||
      !ordered(r.translate_speed_min, r.translate_speed_max) || !ordered(r.start_offset_min, r.start_offset_max) ||
      !ordered(r.rotation_min, r.rotation_max) || !ordered(r.scale_rate_min, r.scale_rate_max) ||
      r.lateral_offset < 0 || r.central_region < 0)
    throw ConfigError("dataset: scene ranges must be non-negative with min <= max");
}

SceneSpec sample_scene(const DatasetConfig& config, Split split, int index) {
  const double S = config.image_size;
  const auto& r = config.ranges;
  Rng rng(Rng::derive(config.seed, static_cast<int>(split), index));
  SceneSpec s;
  s.image_size = config.image_size;
  s.motion.action = config.classes[static_cast<std::size_t>(index) % config.classes.size()];
  s.shape = static_cast<ShapeKind>(rng.below(3));
  s.radius = rng.uniform(r.radius_min, r.radius_max) * S;
  s.orientation = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const auto& base = kPairFill[static_cast<std::size_t>(pair_index(s.motion.action))];
  for (int c = 0; c < 3; ++c) s.fill[c] = static_cast<float>(base[c] + rng.uniform(-0.05, 0.05));
  s.texture_fx = rng.uniform(0.6, 1.0);
  s.texture_fy = rng.uniform(0.6, 1.0);
  s.texture_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  s.background_seed = rng.next();
  s.background_level = static_cast<float>(rng.uniform(0.35, 0.55));
  s.background_contrast = static_cast<float>(rng.uniform(0.05, 0.10));

  const double mid = (S - 1.0) / 2.0;
  switch (s.motion.action) {
    case ActionClass::TranslateLeft:
    case ActionClass::TranslateRight:
    case ActionClass::Rise:
    case ActionClass::Fall: {
      Vec2 dir{0, 0};
      switch (s.motion.action) {
        case ActionClass::TranslateLeft: dir = {-1, 0}; break;
        case ActionClass::TranslateRight: dir = {1, 0}; break;
        case ActionClass::Rise: dir = {0, -1}; break;
        default: dir = {0, 1}; break;
      }
      // Objects travel toward the frame interior from a start point behind
      // the center.
      const double along = rng.uniform(r.start_offset_min, r.start_offset_max) * S;
      const double lateral = rng.uniform(-r.lateral_offset, r.lateral_offset) * S;
      s.cx = mid - dir.x * along + (-dir.y) * lateral;
      s.cy = mid - dir.y * along + dir.x * lateral;
      s.motion.magnitude = rng.uniform(r.translate_speed_min, r.translate_speed_max) * S;
      break;
    }
    case ActionClass::RotateCw:
    case ActionClass::RotateCcw:
      s.cx = mid + rng.uniform(-r.central_region, r.central_region) * S;
      s.cy = mid + rng.uniform(-r.central_region, r.central_region) * S;
      s.motion.magnitude = rng.uniform(r.rotation_min, r.rotation_max);
      break;
    case ActionClass::Expand:
    case ActionClass::Contract:
      s.cx = mid + rng.uniform(-r.central_region, r.central_region) * S;
      s.cy = mid + rng.uniform(-r.central_region, r.central_region) * S;
      s.motion.magnitude = rng.uniform(r.scale_rate_min, r.scale_rate_max);
      break;
  }
  validate_scene(s);
  return s;
}

SyntheticSample make_sample(const SceneSpec& scene, Split split, std::string id, const SampleOptions& options) {
  validate_scene(scene);
  SyntheticSample sample;
  sample.id = std::move(id);
  sample.split = split;
  sample.label = scene.motion.action;
  sample.scene = scene;
  sample.frame = render_frame(scene, 0.0);
  sample.mask = shape_mask(scene, 0.0);
  std::vector<FlowField> flows;
  flows.reserve(kHorizon);
  for (int k = 1; k <= kHorizon; ++k) flows.push_back(step_flow(scene, 0.0, k));
  sample.target = average_flows(flows);
  if (options.keep_step_flows) sample.step_flows = std::move(flows);
  if (options.render_future_frames)
    for (int k = 1; k <= kHorizon; ++k) sample.future_frames.push_back(render_frame(scene, k));
  return sample;
}

const std::vector<SyntheticSample>& Dataset::split(Split s) const {
  switch (s) {
    case Split::Train: return train;
    case Split::Val: return val;
    default: return test;
  }
}

Dataset generate_dataset(const DatasetConfig& config, const SampleOptions& options) {
  config.validate();
  Dataset ds;
  ds.config = config;
  auto fill = [&](Split split, int count, std::vector<SyntheticSample>& out) {
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
      std::ostringstream id;
      id << split_name(split) << '_';
      id.width(5);
      id.fill('0');
      id << i;
      out.push_back(make_sample(sample_scene(config, split, i), split, id.str(), options));
    }
  };
  fill(Split::Train, config.n_train, ds.train);
  fill(Split::Val, config.n_val, ds.val);
  fill(Split::Test, config.n_test, ds.test);
  return ds;
}

namespace {

json scene_to_json(const SceneSpec& s) {
  return json{{"image_size", s.image_size},
              {"shape", shape_name(s.shape)},
              {"radius", s.radius},
              {"cx", s.cx},
              {"cy", s.cy},
              {"orientation", s.orientation},
              {"mirrored", s.mirrored},
              {"fill", s.fill},
              {"texture_fx", s.texture_fx},
              {"texture_fy", s.texture_fy},
              {"texture_phase", s.texture_phase},
              {"background_seed", s.background_seed},
              {"background_level", s.background_level},
              {"background_contrast", s.background_contrast},
              {"action", action_name(s.motion.action)},
              {"magnitude", s.motion.magnitude}};
}

SceneSpec scene_from_json(const json& j) {
  SceneSpec s;
  s.image_size = j.at("image_size").get<int>();
  const auto shape = j.at("shape").get<std::string>();
  bool found = false;
  for (std::size_t i = 0; i < kShapeNames.size(); ++i)
    if (kShapeNames[i] == shape) {
      s.shape = static_cast<ShapeKind>(i);
      found = true;
    }
  if (!found) throw InputError("unknown shape '" + shape + "' in manifest");
  s.radius = j.at("radius").get<double>();
  s.cx = j.at("cx").get<double>();
  s.cy = j.at("cy").get<double>();
  s.orientation = j.at("orientation").get<double>();
  s.mirrored = j.at("mirrored").get<bool>();
  s.fill = j.at("fill").get<std::array<float, 3>>();
  s.texture_fx = j.at("texture_fx").get<double>();
  s.texture_fy = j.at("texture_fy").get<double>();
  s.texture_phase = j.at("texture_phase").get<double>();
  s.background_seed = j.at("background_seed").get<std::uint64_t>();
  s.background_level = j.at("background_level").get<float>();
  s.background_contrast = j.at("background_contrast").get<float>();
  s.motion.action = action_from_name(j.at("action").get<std::string>());
  s.motion.magnitude = j.at("magnitude").get<double>();
  return s;
}

json config_to_json(const DatasetConfig& c) {
  std::vector<std::string> classes;
  for (auto a : c.classes) classes.emplace_back(action_name(a));
  const auto& r = c.ranges;
  return json{{"seed", c.seed},
              {"n_train", c.n_train},
              {"n_val", c.n_val},
              {"n_test", c.n_test},
              {"image_size", c.image_size},
              {"classes", classes},
              {"ranges",
               {{"radius_min", r.radius_min},
                {"radius_max", r.radius_max},
                {"translate_speed_min", r.translate_speed_min},
                {"translate_speed_max", r.translate_speed_max},
                {"start_offset_min", r.start_offset_min},
                {"start_offset_max", r.start_offset_max},
                {"lateral_offset", r.lateral_offset},
                {"central_region", r.central_region},
                {"rotation_min", r.rotation_min},
                {"rotation_max", r.rotation_max},
                {"scale_rate_min", r.scale_rate_min},
                {"scale_rate_max", r.scale_rate_max}}}};
}

DatasetConfig config_from_json(const json& j) {
  DatasetConfig c;
  c.seed = j.at("seed").get<std::uint64_t>();
  c.n_train = j.at("n_train").get<int>();
  c.n_val = j.at("n_val").get<int>();
  c.n_test = j.at("n_test").get<int>();
  c.image_size = j.at("image_size").get<int>();
  c.classes.clear();
  for (const auto& name : j.at("classes")) c.classes.push_back(action_from_name(name.get<std::string>()));
  if (j.contains("ranges")) {
    const auto& r = j.at("ranges");
    auto get = [&](const char* key, double& out) {
      if (r.contains(key)) out = r.at(key).get<double>();
    };
    get("radius_min", c.ranges.radius_min);
    get("radius_max", c.ranges.radius_max);
    get("translate_speed_min", c.ranges.translate_speed_min);
    get("translate_speed_max", c.ranges.translate_speed_max);
    get("start_offset_min", c.ranges.start_offset_min);
    get("start_offset_max", c.ranges.start_offset_max);
    get("lateral_offset", c.ranges.lateral_offset);
    get("central_region", c.ranges.central_region);
    get("rotation_min", c.ranges.rotation_min);
    get("rotation_max", c.ranges.rotation_max);
    get("scale_rate_min", c.ranges.scale_rate_min);
    get("scale_rate_max", c.ranges.scale_rate_max);
  }
  return c;
}

}  // namespace

std::string dataset_config_to_text(const DatasetConfig& config) { return config_to_json(config).dump(2); }

DatasetConfig dataset_config_from_text(const std::string& text) {
  try {
    return config_from_json(json::parse(text));
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed dataset config: ") + e.what());
  }
}

void write_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "flows");
  fs::create_directories(dir / "masks");
  std::ofstream manifest(dir / "manifest.jsonl");
  if (!manifest) throw InputError("cannot write manifest in " + dir.string());
  for (Split split : {Split::Train, Split::Val, Split::Test}) {
    for (const auto& s : dataset.split(split)) {
      const std::string image = "images/" + s.id + ".ppm";
      const std::string flow = "flows/" + s.id + ".flo";
      const std::string mask = "masks/" + s.id + ".pgm";
      write_pnm(s.frame, dir / image);
      write_flo(s.target, dir / flow);
      write_mask(s.mask, dir / mask);
      const json record{{"id", s.id},     {"split", split_name(split)}, {"class", action_name(s.label)},
                        {"image", image}, {"flow", flow},               {"mask", mask},
                        {"scene", scene_to_json(s.scene)}};
      manifest << record.dump() << '\n';
    }
  }
  std::ofstream cfg(dir / "dataset.json");
  cfg << dataset_config_to_text(dataset.config) << '\n';
  if (!manifest || !cfg) throw InputError("failed writing dataset to " + dir.string());
}

Dataset read_dataset(const std::filesystem::path& dir) {
  std::ifstream cfg(dir / "dataset.json");
  if (!cfg) throw InputError("missing dataset.json in " + dir.string());
  std::stringstream text;
  text << cfg.rdbuf();
  Dataset ds;
  ds.config = dataset_config_from_text(text.str());

  std::ifstream manifest(dir / "manifest.jsonl");
  if (!manifest) throw InputError("missing manifest.jsonl in " + dir.string());
  std::string line;
  int lineno = 0;
  while (std::getline(manifest, line)) {
    ++lineno;
    if (line.empty()) continue;
    json record;
    try {
      record = json::parse(line);
    } catch (const json::exception& e) {
      throw InputError("manifest line " + std::to_string(lineno) + ": " + e.what());
    }
    SyntheticSample s;
    s.id = record.at("id").get<std::string>();
    const auto split = record.at("split").get<std::string>();
    if (split == "train") s.split = Split::Train;
    else if (split == "val") s.split = Split::Val;
    else if (split == "test") s.split = Split::Test;
    else throw InputError("manifest line " + std::to_string(lineno) + ": unknown split '" + split + "'");
    s.label = action_from_name(record.at("class").get<std::string>());
    s.scene = scene_from_json(record.at("scene"));
    s.frame = read_pnm(dir / record.at("image").get<std::string>());
    s.target = read_flo(dir / record.at("flow").get<std::string>());
    s.mask = read_mask(dir / record.at("mask").get<std::string>());
    switch (s.split) {
      case Split::Train: ds.train.push_back(std::move(s)); break;
      case Split::Val: ds.val.push_back(std::move(s)); break;
      case Split::Test: ds.test.push_back(std::move(s)); break;
    }
  }
  return ds;
}

}  // namespace im2flow
