#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "im2flow/flow_core.hpp"
#include "im2flow/image.hpp"

namespace im2flow {

// --- Middlebury .flo -------------------------------------------------------

/// Tag value stored in the first four bytes of every .flo file ("PIEH").
inline constexpr float kFloTag = 202021.25f;

/// Little-endian .flo: float tag, int32 width, int32 height, then
/// height*width interleaved (u, v) float32 pairs in row-major order.
void write_flo(const FlowField& field, const std::filesystem::path& path);
FlowField read_flo(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_flo_bytes(const FlowField& field);
FlowField decode_flo_bytes(const std::vector<std::uint8_t>& bytes, const std::string& source = "<memory>");

// --- quantized 3-channel flow images ---------------------------------------

struct QuantizedFlowImage {
  int width = 0;
  int height = 0;
  /// Interleaved (f1, f2, f3) bytes, row-major.
  std::vector<std::uint8_t> values;
  float m_max = 1.0f;

  friend bool operator==(const QuantizedFlowImage&, const QuantizedFlowImage&) = default;
};

/// f1, f2: [-1, 1] -> [0, 255]; f3: [0, m_max] -> [0, 255], clamped.
/// Rounds half away from zero.
QuantizedFlowImage quantize(const EncodedFlow& enc, float m_max);
EncodedFlow dequantize(const QuantizedFlowImage& q);

/// Writes `path` as a PPM and `path` + ".meta" holding m_max.
void write_quantized(const QuantizedFlowImage& q, const std::filesystem::path& path);
QuantizedFlowImage read_quantized(const std::filesystem::path& path);

// --- sidecar key/value files ----------------------------------------------

/// One "key = value" pair per line; '#' starts a comment.
using KeyValues = std::map<std::string, std::string>;
void write_key_values(const KeyValues& kv, const std::filesystem::path& path);
KeyValues read_key_values(const std::filesystem::path& path);

// --- visualization ---------------------------------------------------------

/// Hue in degrees [0, 360) assigned to direction (u, v): 0 = rightward,
/// 90 = downward.
double flow_hue_degrees(double u, double v);

/// HSV color coding: hue from direction, saturation min(M / m_display, 1),
/// full value. Zero motion is white.
Rgb8Image flow_to_color(const FlowField& field, float m_display);

/// Hue (degrees) of an 8-bit RGB color; NaN for greys.
double rgb_hue_degrees(const std::uint8_t* rgb);

}  // namespace im2flow
