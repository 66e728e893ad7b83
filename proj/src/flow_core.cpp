#include "im2flow/flow_core.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "im2flow/error.hpp"

namespace im2flow {

namespace {

void check_dims(int w, int h, const char* what) {
  if (w < 1 || h < 1)
    throw ConfigError(std::string(what) + ": dimensions must be >= 1, got " + std::to_string(w) + "x" +
                      std::to_string(h));
}

void check_finite(std::span<const float> values, int width, const char* what, const char* channel) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      const auto y = i / static_cast<std::size_t>(width);
      const auto x = i % static_cast<std::size_t>(width);
      throw NumericalError(std::string(what) + ": non-finite " + channel + " at pixel (x=" + std::to_string(x) +
                           ", y=" + std::to_string(y) + ")");
    }
  }
}

}  // namespace

FlowField::FlowField(int w, int h) : width(w), height(h) {
  check_dims(w, h, "FlowField");
  u.assign(pixel_count(), 0.0f);
  v.assign(pixel_count(), 0.0f);
}

void FlowField::validate() const {
  check_dims(width, height, "FlowField");
  if (u.size() != pixel_count() || v.size() != pixel_count())
    throw ConfigError("FlowField: channel size does not match width*height");
  check_finite(u, width, "FlowField", "u");
  check_finite(v, width, "FlowField", "v");
}

EncodedFlow::EncodedFlow(int w, int h) : width(w), height(h) {
  check_dims(w, h, "EncodedFlow");
  f1.assign(pixel_count(), 0.0f);
  f2.assign(pixel_count(), 0.0f);
  f3.assign(pixel_count(), 0.0f);
}

void EncodedFlow::validate() const {
  check_dims(width, height, "EncodedFlow");
  if (f1.size() != pixel_count() || f2.size() != pixel_count() || f3.size() != pixel_count())
    throw ConfigError("EncodedFlow: channel size does not match width*height");
  check_finite(f1, width, "EncodedFlow", "f1");
  check_finite(f2, width, "EncodedFlow", "f2");
  check_finite(f3, width, "EncodedFlow", "f3");
}

EncodedFlow encode_flow(const FlowField& field, const MotionThresholds& thresholds) {
  if (!(thresholds.motion_epsilon > 0.0f)) throw ConfigError("encode_flow: motion_epsilon must be > 0");
  field.validate();
  EncodedFlow enc(field.width, field.height);
  for (std::size_t i = 0; i < field.pixel_count(); ++i) {
    const double u = field.u[i], v = field.v[i];
    const double m = std::sqrt(u * u + v * v);
    enc.f3[i] = static_cast<float>(m);
    if (m > thresholds.motion_epsilon) {
      enc.f1[i] = static_cast<float>(v / m);
      enc.f2[i] = static_cast<float>(u / m);
    }
  }
  return enc;
}

FlowField decode_flow(const EncodedFlow& enc) {
  enc.validate();
  FlowField field(enc.width, enc.height);
  for (std::size_t i = 0; i < enc.pixel_count(); ++i) {
    const double s = enc.f1[i], c = enc.f2[i];
    const double norm = std::sqrt(s * s + c * c);
    if (norm <= 1e-6) continue;
    const double m = enc.f3[i];
    field.u[i] = static_cast<float>(c / norm * m);
    field.v[i] = static_cast<float>(s / norm * m);
  }
  return field;
}

FlowField average_flows(std::span<const FlowField> fields) {
  if (fields.empty()) throw ConfigError("average_flows: need at least one field");
  const int w = fields.front().width, h = fields.front().height;
  for (const auto& f : fields) {
    if (f.width != w || f.height != h)
      throw ConfigError("average_flows: dimension mismatch (" + std::to_string(f.width) + "x" +
                        std::to_string(f.height) + " vs " + std::to_string(w) + "x" + std::to_string(h) + ")");
    f.validate();
  }
  FlowField out(w, h);
  const double inv = 1.0 / static_cast<double>(fields.size());
  for (std::size_t i = 0; i < out.pixel_count(); ++i) {
    double su = 0.0, sv = 0.0;
    for (const auto& f : fields) {
      su += f.u[i];
      sv += f.v[i];
    }
    out.u[i] = static_cast<float>(su * inv);
    out.v[i] = static_cast<float>(sv * inv);
  }
  return out;
}

FlowField flip_horizontal(const FlowField& field) {
  field.validate();
  FlowField out(field.width, field.height);
  for (int y = 0; y < field.height; ++y) {
    for (int x = 0; x < field.width; ++x) {
      const auto src = field.index(y, field.width - 1 - x);
      const auto dst = field.index(y, x);
      out.u[dst] = -field.u[src];
      out.v[dst] = field.v[src];
    }
  }
  return out;
}

EncodedFlow flip_horizontal(const EncodedFlow& enc) {
  enc.validate();
  EncodedFlow out(enc.width, enc.height);
  for (int y = 0; y < enc.height; ++y) {
    for (int x = 0; x < enc.width; ++x) {
      const auto src = static_cast<std::size_t>(y) * enc.width + (enc.width - 1 - x);
      const auto dst = static_cast<std::size_t>(y) * enc.width + x;
      out.f1[dst] = enc.f1[src];
      out.f2[dst] = -enc.f2[src];
      out.f3[dst] = enc.f3[src];
    }
  }
  return out;
}

double motion_potential(const EncodedFlow& enc, const Mask& fg_mask) {
  enc.validate();
  if (fg_mask.width != enc.width || fg_mask.height != enc.height)
    throw ConfigError("motion_potential: mask dimensions do not match the flow");
  const double n = static_cast<double>(enc.pixel_count());
  double sum = 0.0;
  for (float m : enc.f3) sum += m;
  const double fg_fraction = static_cast<double>(fg_mask.count()) / n;
  return (sum / n) / std::max(fg_fraction, kMotionPotentialAreaFloor);
}

}  // namespace im2flow
