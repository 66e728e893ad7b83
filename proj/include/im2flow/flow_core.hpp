#pragma once

#include <span>
#include <vector>

#include "im2flow/image.hpp"

namespace im2flow {

/// Dense displacement field in pixels/frame. Row 0 is the top of the image;
/// positive u points right, positive v points down.
struct FlowField {
  int width = 0;
  int height = 0;
  std::vector<float> u;
  std::vector<float> v;

  FlowField() = default;
  FlowField(int w, int h);

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
  std::size_t index(int y, int x) const { return static_cast<std::size_t>(y) * width + x; }

  /// Throws ConfigError on bad dimensions and NumericalError (naming the
  /// pixel) on non-finite values.
  void validate() const;

  friend bool operator==(const FlowField&, const FlowField&) = default;
};

/// Three-channel motion encoding: f1 = sin(theta) = v/M, f2 = cos(theta) = u/M,
/// f3 = M.
struct EncodedFlow {
  int width = 0;
  int height = 0;
  std::vector<float> f1;
  std::vector<float> f2;
  std::vector<float> f3;

  EncodedFlow() = default;
  EncodedFlow(int w, int h);

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
  void validate() const;

  friend bool operator==(const EncodedFlow&, const EncodedFlow&) = default;
};

struct MotionThresholds {
  /// Magnitude (px/frame) at or below which a pixel has no direction.
  float motion_epsilon = 1e-3f;
};

EncodedFlow encode_flow(const FlowField& field, const MotionThresholds& thresholds = {});

/// Inverse of encode_flow. (f1, f2) is projected onto the unit circle first;
/// pixels whose direction norm is <= 1e-6 decode to zero motion.
FlowField decode_flow(const EncodedFlow& enc);

/// Per-pixel mean of equally sized fields.
FlowField average_flows(std::span<const FlowField> fields);

/// Mirrors columns and negates u.
FlowField flip_horizontal(const FlowField& field);

/// Column mirror of an encoding with f2 negated; equal to
/// encode(flip_horizontal(decode(enc))) at moving pixels.
EncodedFlow flip_horizontal(const EncodedFlow& enc);

inline constexpr double kMotionPotentialAreaFloor = 0.01;

/// Mean magnitude over the whole image divided by the foreground fraction
/// (floored at kMotionPotentialAreaFloor).
double motion_potential(const EncodedFlow& enc, const Mask& fg_mask);

}  // namespace im2flow
