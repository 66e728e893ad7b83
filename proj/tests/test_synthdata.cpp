#include <array>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>

#include <gtest/gtest.h>

#include "im2flow/error.hpp"
#include "im2flow/synthdata.hpp"
#include "test_util.hpp"

using namespace im2flow;

namespace {

SceneSpec base_scene(ActionClass action, double magnitude) {
  SceneSpec s;
  s.shape = ShapeKind::Disc;
  s.radius = 8.0;
  s.cx = 28.0;
  s.cy = 30.0;
  s.motion = {action, magnitude};
  return s;
}

// intensity-weighted centroid of |frame - background| in channel 0; frames are
// 8-bit quantized, so differences below one level are background
std::array<double, 2> centroid(const SceneSpec& s, double t) {
  const Image f = render_frame(s, t);
  const Image bg = render_background(s);
  double sx = 0, sy = 0, sw = 0;
  for (int y = 0; y < f.height; ++y)
    for (int x = 0; x < f.width; ++x) {
      double w = std::abs(f.at(0, y, x) - bg.at(0, y, x));
      if (w < 1.0 / 255.0) w = 0.0;
      sx += w * x;
      sy += w * y;
      sw += w;
    }
  return {sx / sw, sy / sw};
}

}  // namespace

TEST(Synth, ActionNamesRoundTrip) {
  for (ActionClass a : all_action_classes()) EXPECT_EQ(action_from_name(action_name(a)), a);
  EXPECT_THROW(action_from_name("jump"), ConfigError);
  EXPECT_EQ(pair_partner(ActionClass::Rise), ActionClass::Fall);
  EXPECT_EQ(pair_index(ActionClass::Contract), 3);
}

TEST(Synth, TranslationFlowIsConstantOnShape) {
  const SceneSpec s = base_scene(ActionClass::TranslateRight, 2.0);
  const FlowField f = analytic_flow(s, 0.0);
  const Mask m = shape_mask(s, 0.0);
  ASSERT_GT(m.count(), 100u);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      const auto i = f.index(y, x);
      EXPECT_FLOAT_EQ(f.u[i], m.at(y, x) ? 2.0f : 0.0f);
      EXPECT_FLOAT_EQ(f.v[i], 0.0f);
    }
}

TEST(Synth, RotationFixesCentroid) {
  SceneSpec s = base_scene(ActionClass::RotateCw, 0.1);
  s.cx = 30.0;
  s.cy = 31.0;
  const FlowField f = analytic_flow(s, 0.0);
  const auto i = f.index(31, 30);
  EXPECT_NEAR(f.u[i], 0.0, 1e-9);
  EXPECT_NEAR(f.v[i], 0.0, 1e-9);
  EXPECT_GT(std::abs(f.u[f.index(31 + 6, 30)]), 0.3);
}

TEST(Synth, StepFlowOneIsAnalyticFlow) {
  const SceneSpec s = base_scene(ActionClass::Expand, 0.04);
  EXPECT_EQ(step_flow(s, 0.0, 1), analytic_flow(s, 0.0));
}

TEST(Synth, RenderIsDeterministic) {
  const SceneSpec s = base_scene(ActionClass::Fall, 1.5);
  EXPECT_EQ(render_frame(s, 0.0), render_frame(s, 0.0));
}

TEST(Synth, AmbiguousPairsRenderIdenticallyAtTimeZero) {
  for (int k = 0; k < kNumAmbiguousPairs; ++k) {
    const auto a = static_cast<ActionClass>(2 * k);
    const double mag = k < 2 ? (k == 0 ? 2.0 : 1.0) : (k == 2 ? 0.1 : 0.04);
    SceneSpec s = base_scene(a, mag);
    SceneSpec t = s;
    t.motion.action = pair_partner(a);
    EXPECT_EQ(render_frame(s, 0.0), render_frame(t, 0.0)) << action_name(a);
    EXPECT_NE(analytic_flow(s, 0.0), analytic_flow(t, 0.0));
  }
}

TEST(Synth, CentroidFollowsAnalyticTranslation) {
  for (ActionClass a : {ActionClass::TranslateLeft, ActionClass::TranslateRight, ActionClass::Rise, ActionClass::Fall}) {
    SceneSpec s = base_scene(a, 1.7);
    s.cx = s.cy = 31.5;
    s.background_contrast = 0.0f;
    const auto c0 = centroid(s, 0.0), c1 = centroid(s, 1.0);
    const FlowField f = analytic_flow(s, 0.0);
    const auto i = f.index(31, 31);
    EXPECT_NEAR(c1[0] - c0[0], f.u[i], 0.2) << action_name(a);
    EXPECT_NEAR(c1[1] - c0[1], f.v[i], 0.2) << action_name(a);
  }
}

TEST(Synth, MirroredSceneFlowIsFlippedFlow) {
  for (ActionClass a : all_action_classes()) {
    SceneSpec s = base_scene(a, a <= ActionClass::Fall ? 1.3 : (a <= ActionClass::RotateCcw ? 0.08 : 0.03));
    s.shape = ShapeKind::Triangle;
    s.orientation = 0.4;
    const SceneSpec m = mirror_scene(s);
    const FlowField expected = flip_horizontal(analytic_flow(s, 0.0));
    const FlowField got = analytic_flow(m, 0.0);
    for (std::size_t i = 0; i < got.pixel_count(); ++i) {
      ASSERT_NEAR(got.u[i], expected.u[i], 1e-4) << action_name(a) << " pixel " << i;
      ASSERT_NEAR(got.v[i], expected.v[i], 1e-4) << action_name(a) << " pixel " << i;
    }
    EXPECT_EQ(shape_mask(m, 0.0), flip_horizontal(shape_mask(s, 0.0)));
  }
}

TEST(Synth, TargetFlowLivesOnDilatedMask) {
  DatasetConfig cfg;
  cfg.n_train = 16;
  cfg.n_val = cfg.n_test = 1;
  const Dataset ds = generate_dataset(cfg);
  for (const auto& s : ds.train) {
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) {
        const auto i = s.target.index(y, x);
        if (s.target.u[i] == 0.0f && s.target.v[i] == 0.0f) continue;
        bool near = false;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int yy = y + dy, xx = x + dx;
            if (yy >= 0 && yy < 64 && xx >= 0 && xx < 64 && s.mask.at(yy, xx)) near = true;
          }
        ASSERT_TRUE(near) << s.id << " (" << x << "," << y << ")";
      }
  }
}

TEST(Synth, TargetIsFiveStepAverage) {
  const SceneSpec s = base_scene(ActionClass::RotateCcw, 0.1);
  const auto sample = make_sample(s, Split::Train, "x", {.keep_step_flows = true});
  ASSERT_EQ(sample.step_flows.size(), static_cast<std::size_t>(kHorizon));
  for (std::size_t i = 0; i < sample.target.pixel_count(); ++i) {
    double su = 0;
    for (const auto& f : sample.step_flows) su += f.u[i];
    EXPECT_NEAR(sample.target.u[i], su / kHorizon, 1e-6);
  }
}

TEST(Synth, InfeasibleSceneNamesSpec) {
  SceneSpec s = base_scene(ActionClass::TranslateRight, 2.0);
  s.radius = 40.0;
  try {
    validate_scene(s);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("infeasible scene"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("radius"), std::string::npos) << e.what();
  }
}

TEST(Synth, DatasetBalanceAndDeterminism) {
  DatasetConfig cfg;
  cfg.n_train = 80;
  cfg.n_val = 16;
  cfg.n_test = 16;
  const Dataset a = generate_dataset(cfg);
  const Dataset b = generate_dataset(cfg);
  std::map<ActionClass, int> hist;
  for (const auto& s : a.train) ++hist[s.label];
  ASSERT_EQ(hist.size(), 8u);
  for (const auto& [k, n] : hist) EXPECT_EQ(n, 10);
  for (std::size_t i = 0; i < a.train.size(); ++i) {
    EXPECT_EQ(a.train[i].frame, b.train[i].frame);
    EXPECT_EQ(a.train[i].target, b.train[i].target);
    EXPECT_EQ(a.train[i].scene, b.train[i].scene);
  }
  std::set<std::uint64_t> train_bg;
  for (const auto& s : a.train) train_bg.insert(s.scene.background_seed);
  for (const auto& s : a.test) EXPECT_FALSE(train_bg.count(s.scene.background_seed));
}

TEST(Synth, ConfigValidation) {
  DatasetConfig cfg;
  cfg.n_val = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.image_size = 16;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  EXPECT_EQ(dataset_config_from_text(dataset_config_to_text(cfg)).seed, cfg.seed);
}

TEST(Synth, DiskRoundTrip) {
  DatasetConfig cfg;
  cfg.n_train = 8;
  cfg.n_val = 2;
  cfg.n_test = 2;
  const Dataset a = generate_dataset(cfg);
  test::TempDir dir;
  write_dataset(a, dir.path());
  const Dataset b = read_dataset(dir.path());
  ASSERT_EQ(b.train.size(), 8u);
  for (std::size_t i = 0; i < a.train.size(); ++i) {
    EXPECT_EQ(a.train[i].id, b.train[i].id);
    EXPECT_EQ(a.train[i].label, b.train[i].label);
    EXPECT_EQ(a.train[i].frame, b.train[i].frame);
    EXPECT_EQ(a.train[i].target, b.train[i].target);
    EXPECT_EQ(a.train[i].mask, b.train[i].mask);
  }
  EXPECT_THROW(read_dataset(dir.path() / "missing"), InputError);
}
