#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "im2flow/error.hpp"
#include "im2flow/flow_core.hpp"
#include "im2flow/rng.hpp"

using namespace im2flow;

namespace {

FlowField random_field(Rng& rng, int w, int h, double lo = -2.0, double hi = 2.0) {
  FlowField f(w, h);
  for (std::size_t i = 0; i < f.pixel_count(); ++i) {
    f.u[i] = static_cast<float>(rng.uniform(lo, hi));
    f.v[i] = static_cast<float>(rng.uniform(lo, hi));
  }
  return f;
}

}  // namespace

TEST(Encode, PythagoreanPixel) {
  FlowField f(1, 1);
  f.u[0] = 3.0f;
  f.v[0] = 4.0f;
  const EncodedFlow e = encode_flow(f);
  EXPECT_FLOAT_EQ(e.f1[0], 0.8f);
  EXPECT_FLOAT_EQ(e.f2[0], 0.6f);
  EXPECT_FLOAT_EQ(e.f3[0], 5.0f);
}

TEST(Encode, StaticPixelIsAllZero) {
  const EncodedFlow e = encode_flow(FlowField(1, 1));
  EXPECT_EQ(e.f1[0], 0.0f);
  EXPECT_EQ(e.f2[0], 0.0f);
  EXPECT_EQ(e.f3[0], 0.0f);
}

TEST(Encode, MatchesScalarOracle) {
  Rng rng(11);
  const FlowField f = random_field(rng, 8, 8);
  const EncodedFlow e = encode_flow(f);
  for (std::size_t i = 0; i < f.pixel_count(); ++i) {
    const double u = f.u[i], v = f.v[i];
    const double m = std::sqrt(u * u + v * v);
    EXPECT_NEAR(e.f3[i], m, 1e-6);
    EXPECT_NEAR(e.f1[i], m > 1e-3 ? v / m : 0.0, 1e-6);
    EXPECT_NEAR(e.f2[i], m > 1e-3 ? u / m : 0.0, 1e-6);
  }
}

TEST(Encode, BelowEpsilonHasNoDirection) {
  FlowField f(2, 1);
  f.u[0] = 5e-4f;
  f.u[1] = 2e-3f;
  const EncodedFlow e = encode_flow(f);
  EXPECT_EQ(e.f2[0], 0.0f);
  EXPECT_NEAR(e.f3[0], 5e-4f, 1e-9);
  EXPECT_FLOAT_EQ(e.f2[1], 1.0f);
}

TEST(Encode, RejectsNonFiniteNamingPixel) {
  FlowField f(4, 3);
  f.v[f.index(2, 1)] = std::nanf("");
  try {
    encode_flow(f);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("x=1, y=2"), std::string::npos) << e.what();
  }
}

TEST(Encode, RejectsBadEpsilon) {
  EXPECT_THROW(encode_flow(FlowField(1, 1), MotionThresholds{0.0f}), ConfigError);
}

TEST(Decode, AxisCase) {
  EncodedFlow e(1, 1);
  e.f1[0] = 1.0f;
  e.f2[0] = 0.0f;
  e.f3[0] = 2.0f;
  const FlowField f = decode_flow(e);
  EXPECT_FLOAT_EQ(f.u[0], 0.0f);
  EXPECT_FLOAT_EQ(f.v[0], 2.0f);
}

TEST(Decode, RoundTripExactAtMovingPixels) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    FlowField f = random_field(rng, 1 + static_cast<int>(rng.below(16)), 1 + static_cast<int>(rng.below(16)));
    for (std::size_t i = 0; i < f.pixel_count(); i += 3) f.u[i] = f.v[i] = 0.0f;
    const FlowField g = decode_flow(encode_flow(f));
    for (std::size_t i = 0; i < f.pixel_count(); ++i) {
      const double m = std::hypot(f.u[i], f.v[i]);
      if (m > 1e-3) {
        EXPECT_NEAR(g.u[i], f.u[i], 1e-6);
        EXPECT_NEAR(g.v[i], f.v[i], 1e-6);
      } else {
        EXPECT_EQ(g.u[i], 0.0f);
        EXPECT_EQ(g.v[i], 0.0f);
      }
    }
  }
}

TEST(Decode, UnnormalizedDirectionKeepsMagnitude) {
  Rng rng(5);
  EncodedFlow e(6, 5);
  for (std::size_t i = 0; i < e.pixel_count(); ++i) {
    e.f1[i] = static_cast<float>(rng.uniform(-1, 1));
    e.f2[i] = static_cast<float>(rng.uniform(-1, 1));
    e.f3[i] = static_cast<float>(rng.uniform(0, 4));
  }
  const FlowField f = decode_flow(e);
  for (std::size_t i = 0; i < f.pixel_count(); ++i) {
    const double m = std::sqrt(static_cast<double>(f.u[i]) * f.u[i] + static_cast<double>(f.v[i]) * f.v[i]);
    EXPECT_NEAR(m, e.f3[i], 1e-6);
  }
}

TEST(Decode, ZeroDirectionIsStatic) {
  EncodedFlow e(1, 1);
  e.f3[0] = 3.0f;
  const FlowField f = decode_flow(e);
  EXPECT_EQ(f.u[0], 0.0f);
  EXPECT_EQ(f.v[0], 0.0f);
}

TEST(Average, IdenticalInputs) {
  Rng rng(8);
  const FlowField f = random_field(rng, 5, 4);
  const std::vector<FlowField> five(5, f);
  const FlowField a = average_flows(five);
  for (std::size_t i = 0; i < f.pixel_count(); ++i) {
    EXPECT_NEAR(a.u[i], f.u[i], 1e-6);
    EXPECT_NEAR(a.v[i], f.v[i], 1e-6);
  }
}

TEST(Average, TwoElementMean) {
  FlowField a(1, 1), b(1, 1);
  a.u[0] = 2.0f;
  b.v[0] = 2.0f;
  const FlowField m = average_flows(std::vector<FlowField>{a, b});
  EXPECT_FLOAT_EQ(m.u[0], 1.0f);
  EXPECT_FLOAT_EQ(m.v[0], 1.0f);
}

TEST(Average, MatchesScalarOracle) {
  Rng rng(9);
  std::vector<FlowField> fs;
  for (int k = 0; k < 5; ++k) fs.push_back(random_field(rng, 7, 3));
  const FlowField m = average_flows(fs);
  for (std::size_t i = 0; i < m.pixel_count(); ++i) {
    double su = 0, sv = 0;
    for (const auto& f : fs) {
      su += f.u[i];
      sv += f.v[i];
    }
    EXPECT_NEAR(m.u[i], su / 5, 1e-6);
    EXPECT_NEAR(m.v[i], sv / 5, 1e-6);
  }
}

TEST(Average, Errors) {
  EXPECT_THROW(average_flows(std::vector<FlowField>{}), ConfigError);
  EXPECT_THROW(average_flows(std::vector<FlowField>{FlowField(2, 2), FlowField(2, 3)}), ConfigError);
}

TEST(Flip, InvolutionAndSign) {
  Rng rng(1);
  const FlowField f = random_field(rng, 9, 4);
  EXPECT_EQ(flip_horizontal(flip_horizontal(f)), f);
  FlowField one(1, 3);
  for (auto& u : one.u) u = 1.0f;
  for (float u : flip_horizontal(one).u) EXPECT_EQ(u, -1.0f);
}

TEST(Flip, EncodedFlipCommutesWithEncoding) {
  Rng rng(2);
  const FlowField f = random_field(rng, 7, 5);
  const EncodedFlow a = flip_horizontal(encode_flow(f));
  const EncodedFlow b = encode_flow(flip_horizontal(f));
  for (std::size_t i = 0; i < f.pixel_count(); ++i) {
    EXPECT_NEAR(a.f1[i], b.f1[i], 1e-7);
    EXPECT_NEAR(a.f2[i], b.f2[i], 1e-7);
    EXPECT_NEAR(a.f3[i], b.f3[i], 1e-7);
  }
}

TEST(MotionPotential, Examples) {
  Mask half(4, 2);
  for (int x = 0; x < 4; ++x) half.set(0, x, true);
  EXPECT_EQ(motion_potential(EncodedFlow(4, 2), half), 0.0);
  EncodedFlow ones(4, 2);
  for (auto& m : ones.f3) m = 1.0f;
  EXPECT_DOUBLE_EQ(motion_potential(ones, half), 2.0);
}

TEST(MotionPotential, MatchesScalarOracleAndFloorsArea) {
  Rng rng(4);
  EncodedFlow e(10, 10);
  Mask mask(10, 10);
  for (std::size_t i = 0; i < e.pixel_count(); ++i) {
    e.f3[i] = static_cast<float>(rng.uniform(0, 3));
    mask.bits[i] = rng.uniform() < 0.3;
  }
  double sum = 0;
  std::size_t fg = 0;
  for (std::size_t i = 0; i < e.pixel_count(); ++i) {
    sum += e.f3[i];
    fg += mask.bits[i];
  }
  EXPECT_NEAR(motion_potential(e, mask), (sum / 100.0) / (fg / 100.0), 1e-6);
  EXPECT_NEAR(motion_potential(e, Mask(10, 10)), (sum / 100.0) / 0.01, 1e-6);
  EXPECT_THROW(motion_potential(e, Mask(9, 10)), ConfigError);
}

TEST(FlowField, RejectsBadDimensions) {
  EXPECT_THROW(FlowField(0, 3), ConfigError);
  EXPECT_THROW(EncodedFlow(2, -1), ConfigError);
}
