#include "im2flow/flow_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <numbers>
#include <sstream>

#include "im2flow/error.hpp"

namespace im2flow {

namespace {

static_assert(std::numeric_limits<float>::is_iec559);

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  static_assert(sizeof(T) == 4);
  auto bits = std::bit_cast<std::uint32_t>(value);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((bits >> (8 * i)) & 0xffu));
}

template <typename T>
T get_le(const std::uint8_t* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return std::bit_cast<T>(bits);
}

std::uint8_t round_byte(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, 255.0));
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::filesystem::path meta_path(const std::filesystem::path& path) {
  auto p = path;
  p += ".meta";
  return p;
}

}  // namespace

std::vector<std::uint8_t> encode_flo_bytes(const FlowField& field) {
  field.validate();
  std::vector<std::uint8_t> bytes;
  bytes.reserve(12 + field.pixel_count() * 8);
  put_le(bytes, kFloTag);
  put_le(bytes, static_cast<std::int32_t>(field.width));
  put_le(bytes, static_cast<std::int32_t>(field.height));
  for (std::size_t i = 0; i < field.pixel_count(); ++i) {
    put_le(bytes, field.u[i]);
    put_le(bytes, field.v[i]);
  }
  return bytes;
}

FlowField decode_flo_bytes(const std::vector<std::uint8_t>& bytes, const std::string& source) {
  if (bytes.size() < 12) throw InputError("truncated .flo header: " + source);
  const float tag = get_le<float>(bytes.data());
  if (tag != kFloTag) throw InputError("bad magic in .flo file: " + source);
  const auto w = get_le<std::int32_t>(bytes.data() + 4);
  const auto h = get_le<std::int32_t>(bytes.data() + 8);
  if (w <= 0 || h <= 0)
    throw InputError("non-positive dimensions in .flo file (" + std::to_string(w) + "x" + std::to_string(h) +
                     "): " + source);
  const auto expected = 12 + static_cast<std::uint64_t>(w) * static_cast<std::uint64_t>(h) * 8;
  if (bytes.size() < expected)
    throw InputError("truncated .flo payload (" + std::to_string(bytes.size()) + " of " + std::to_string(expected) +
                     " bytes): " + source);
  FlowField field(w, h);
  const std::uint8_t* p = bytes.data() + 12;
  for (std::size_t i = 0; i < field.pixel_count(); ++i, p += 8) {
    field.u[i] = get_le<float>(p);
    field.v[i] = get_le<float>(p + 4);
  }
  return field;
}

void write_flo(const FlowField& field, const std::filesystem::path& path) {
  const auto bytes = encode_flo_bytes(field);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InputError("write failed: " + path.string());
}

FlowField read_flo(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_flo_bytes(bytes, path.string());
}

QuantizedFlowImage quantize(const EncodedFlow& enc, float m_max) {
  if (!(m_max > 0.0f) || !std::isfinite(m_max)) throw ConfigError("quantize: m_max must be finite and > 0");
  enc.validate();
  QuantizedFlowImage q{enc.width, enc.height, std::vector<std::uint8_t>(enc.pixel_count() * 3), m_max};
  for (std::size_t i = 0; i < enc.pixel_count(); ++i) {
    const double d1 = std::clamp(static_cast<double>(enc.f1[i]), -1.0, 1.0);
    const double d2 = std::clamp(static_cast<double>(enc.f2[i]), -1.0, 1.0);
    const double m = std::clamp(static_cast<double>(enc.f3[i]), 0.0, static_cast<double>(m_max));
    q.values[i * 3 + 0] = round_byte((d1 + 1.0) * 0.5 * 255.0);
    q.values[i * 3 + 1] = round_byte((d2 + 1.0) * 0.5 * 255.0);
    q.values[i * 3 + 2] = round_byte(m / m_max * 255.0);
  }
  return q;
}

EncodedFlow dequantize(const QuantizedFlowImage& q) {
  if (!(q.m_max > 0.0f)) throw ConfigError("dequantize: m_max must be > 0");
  EncodedFlow enc(q.width, q.height);
  if (q.values.size() != enc.pixel_count() * 3) throw ConfigError("dequantize: value count does not match dimensions");
  for (std::size_t i = 0; i < enc.pixel_count(); ++i) {
    enc.f1[i] = static_cast<float>(q.values[i * 3 + 0] / 255.0 * 2.0 - 1.0);
    enc.f2[i] = static_cast<float>(q.values[i * 3 + 1] / 255.0 * 2.0 - 1.0);
    enc.f3[i] = static_cast<float>(q.values[i * 3 + 2] / 255.0 * q.m_max);
  }
  return enc;
}

void write_quantized(const QuantizedFlowImage& q, const std::filesystem::path& path) {
  write_ppm(Rgb8Image{q.width, q.height, q.values}, path);
  std::ostringstream m;
  m.precision(9);
  m << q.m_max;
  write_key_values({{"m_max", m.str()}, {"encoding", "sin_theta,cos_theta,magnitude"}}, meta_path(path));
}

QuantizedFlowImage read_quantized(const std::filesystem::path& path) {
  auto rgb = read_ppm(path);
  const auto kv = read_key_values(meta_path(path));
  const auto it = kv.find("m_max");
  if (it == kv.end()) throw InputError("missing m_max in " + meta_path(path).string());
  float m_max = 0.0f;
  try {
    m_max = std::stof(it->second);
  } catch (const std::exception&) {
    throw InputError("malformed m_max in " + meta_path(path).string());
  }
  if (!(m_max > 0.0f)) throw InputError("non-positive m_max in " + meta_path(path).string());
  return QuantizedFlowImage{rgb.width, rgb.height, std::move(rgb.rgb), m_max};
}

void write_key_values(const KeyValues& kv, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot open for writing: " + path.string());
  for (const auto& [k, v] : kv) out << k << " = " << v << '\n';
  if (!out) throw InputError("write failed: " + path.string());
}

KeyValues read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open: " + path.string());
  KeyValues kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw InputError(path.string() + ":" + std::to_string(lineno) + ": expected 'key = value'");
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

double flow_hue_degrees(double u, double v) {
  double deg = std::atan2(v, u) * 180.0 / std::numbers::pi;
  if (deg < 0.0) deg += 360.0;
  return deg >= 360.0 ? 0.0 : deg;
}

Rgb8Image flow_to_color(const FlowField& field, float m_display) {
  if (!(m_display > 0.0f)) throw ConfigError("flow_to_color: m_display must be > 0");
  field.validate();
  Rgb8Image out{field.width, field.height, std::vector<std::uint8_t>(field.pixel_count() * 3)};
  for (std::size_t i = 0; i < field.pixel_count(); ++i) {
    const double u = field.u[i], v = field.v[i];
    const double s = std::min(std::sqrt(u * u + v * v) / m_display, 1.0);
    const double h = flow_hue_degrees(u, v) / 60.0;
    const int sector = static_cast<int>(h) % 6;
    const double f = h - std::floor(h);
    // HSV -> RGB with V = 1.
    const double p = 1.0 - s, q = 1.0 - s * f, t = 1.0 - s * (1.0 - f);
    double r = 1, g = 1, b = 1;
    switch (sector) {
      case 0: r = 1; g = t; b = p; break;
      case 1: r = q; g = 1; b = p; break;
      case 2: r = p; g = 1; b = t; break;
      case 3: r = p; g = q; b = 1; break;
      case 4: r = t; g = p; b = 1; break;
      default: r = 1; g = p; b = q; break;
    }
    out.rgb[i * 3 + 0] = round_byte(r * 255.0);
    out.rgb[i * 3 + 1] = round_byte(g * 255.0);
    out.rgb[i * 3 + 2] = round_byte(b * 255.0);
  }
  return out;
}

double rgb_hue_degrees(const std::uint8_t* rgb) {
  const double r = rgb[0] / 255.0, g = rgb[1] / 255.0, b = rgb[2] / 255.0;
  const double mx = std::max({r, g, b}), mn = std::min({r, g, b});
  const double d = mx - mn;
  if (d <= 0.0) return std::numeric_limits<double>::quiet_NaN();
  double h = 0.0;
  if (mx == r) h = std::fmod((g - b) / d, 6.0);
  else if (mx == g) h = (b - r) / d + 2.0;
  else h = (r - g) / d + 4.0;
  h *= 60.0;
  return h < 0.0 ? h + 360.0 : h;
}

}  // namespace im2flow
