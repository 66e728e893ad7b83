#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace im2flow {

/// Planar float image, values nominally in [0, 1]. Channel-major:
/// pixel (c, y, x) lives at (c * height + y) * width + x.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<float> data;

  Image() = default;
  Image(int w, int h, int c, float fill = 0.0f)
      : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

  float& at(int c, int y, int x) { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  float at(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }

  std::span<float> plane(int c) {
    return {data.data() + static_cast<std::size_t>(c) * pixel_count(), pixel_count()};
  }
  std::span<const float> plane(int c) const {
    return {data.data() + static_cast<std::size_t>(c) * pixel_count(), pixel_count()};
  }

  friend bool operator==(const Image&, const Image&) = default;
};

/// Per-pixel boolean mask, row-major.
struct Mask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;

  Mask() = default;
  Mask(int w, int h, bool fill = false)
      : width(w), height(h), bits(static_cast<std::size_t>(w) * h, fill ? 1 : 0) {}

  bool at(int y, int x) const { return bits[static_cast<std::size_t>(y) * width + x] != 0; }
  void set(int y, int x, bool v) { bits[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }
  std::size_t count() const;

  friend bool operator==(const Mask&, const Mask&) = default;
};

/// Luma (Rec. 601) for 3-channel images; identity for 1-channel.
Image to_grayscale(const Image& image);

Image flip_horizontal(const Image& image);
Mask flip_horizontal(const Mask& mask);

/// Binary PGM (1 channel) or PPM (3 channels), 8 bits per sample.
/// Values are clamped to [0,1] and rounded half away from zero.
void write_pnm(const Image& image, const std::filesystem::path& path);
Image read_pnm(const std::filesystem::path& path);

void write_mask(const Mask& mask, const std::filesystem::path& path);
Mask read_mask(const std::filesystem::path& path);

/// Raw 8-bit interleaved RGB buffer, e.g. a flow visualization.
struct Rgb8Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;  // interleaved, row-major

  std::uint8_t* pixel(int y, int x) { return rgb.data() + (static_cast<std::size_t>(y) * width + x) * 3; }
  const std::uint8_t* pixel(int y, int x) const {
    return rgb.data() + (static_cast<std::size_t>(y) * width + x) * 3;
  }
};

void write_ppm(const Rgb8Image& image, const std::filesystem::path& path);
Rgb8Image read_ppm(const std::filesystem::path& path);

}  // namespace im2flow
