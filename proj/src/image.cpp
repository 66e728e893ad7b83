#include "im2flow/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "im2flow/error.hpp"

namespace im2flow {

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count_if(bits.begin(), bits.end(), [](auto b) { return b != 0; }));
}

Image to_grayscale(const Image& image) {
  if (image.channels == 1) return image;
  if (image.channels != 3) throw ConfigError("to_grayscale: expected 1 or 3 channels");
  Image gray(image.width, image.height, 1);
  const auto r = image.plane(0), g = image.plane(1), b = image.plane(2);
  for (std::size_t i = 0; i < gray.data.size(); ++i) gray.data[i] = 0.299f * r[i] + 0.587f * g[i] + 0.114f * b[i];
  return gray;
}

Image flip_horizontal(const Image& image) {
  Image out(image.width, image.height, image.channels);
  for (int c = 0; c < image.channels; ++c)
    for (int y = 0; y < image.height; ++y)
      for (int x = 0; x < image.width; ++x) out.at(c, y, x) = image.at(c, y, image.width - 1 - x);
  return out;
}

Mask flip_horizontal(const Mask& mask) {
  Mask out(mask.width, mask.height);
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x) out.set(y, x, mask.at(y, mask.width - 1 - x));
  return out;
}

namespace {

std::uint8_t to_byte(float v) {
  const float c = std::clamp(v, 0.0f, 1.0f) * 255.0f;
  return static_cast<std::uint8_t>(std::lround(c));
}

struct PnmHeader {
  char kind = 0;
  int width = 0;
  int height = 0;
};

// Skips whitespace and '#' comments between header tokens.
int read_header_int(std::istream& in, const std::filesystem::path& path) {
  for (;;) {
    const int ch = in.peek();
    if (ch == '#') {
      std::string discard;
      std::getline(in, discard);
    } else if (std::isspace(ch)) {
      in.get();
    } else {
      break;
    }
  }
  int value = 0;
  if (!(in >> value)) throw InputError("malformed PNM header in " + path.string());
  return value;
}

PnmHeader read_pnm_header(std::istream& in, const std::filesystem::path& path) {
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (!in || magic[0] != 'P' || (magic[1] != '5' && magic[1] != '6'))
    throw InputError("not a binary PGM/PPM file: " + path.string());
  PnmHeader h;
  h.kind = magic[1];
  h.width = read_header_int(in, path);
  h.height = read_header_int(in, path);
  const int maxval = read_header_int(in, path);
  if (h.width <= 0 || h.height <= 0) throw InputError("non-positive PNM dimensions in " + path.string());
  if (maxval != 255) throw InputError("unsupported PNM maxval in " + path.string());
  in.get();  // single whitespace before raster
  return h;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open for writing: " + path.string());
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open: " + path.string());
  return in;
}

}  // namespace

void write_pnm(const Image& image, const std::filesystem::path& path) {
  if (image.channels != 1 && image.channels != 3) throw ConfigError("write_pnm: expected 1 or 3 channels");
  auto out = open_out(path);
  out << (image.channels == 1 ? "P5" : "P6") << '\n' << image.width << ' ' << image.height << "\n255\n";
  std::vector<std::uint8_t> raster(image.pixel_count() * image.channels);
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x)
      for (int c = 0; c < image.channels; ++c)
        raster[(static_cast<std::size_t>(y) * image.width + x) * image.channels + c] = to_byte(image.at(c, y, x));
  out.write(reinterpret_cast<const char*>(raster.data()), static_cast<std::streamsize>(raster.size()));
  if (!out) throw InputError("write failed: " + path.string());
}

Image read_pnm(const std::filesystem::path& path) {
  auto in = open_in(path);
  const auto h = read_pnm_header(in, path);
  const int channels = h.kind == '5' ? 1 : 3;
  std::vector<std::uint8_t> raster(static_cast<std::size_t>(h.width) * h.height * channels);
  in.read(reinterpret_cast<char*>(raster.data()), static_cast<std::streamsize>(raster.size()));
  if (in.gcount() != static_cast<std::streamsize>(raster.size())) throw InputError("truncated PNM raster: " + path.string());
  Image image(h.width, h.height, channels);
  for (int y = 0; y < h.height; ++y)
    for (int x = 0; x < h.width; ++x)
      for (int c = 0; c < channels; ++c)
        image.at(c, y, x) = raster[(static_cast<std::size_t>(y) * h.width + x) * channels + c] / 255.0f;
  return image;
}

void write_mask(const Mask& mask, const std::filesystem::path& path) {
  Image image(mask.width, mask.height, 1);
  for (std::size_t i = 0; i < mask.bits.size(); ++i) image.data[i] = mask.bits[i] ? 1.0f : 0.0f;
  write_pnm(image, path);
}

Mask read_mask(const std::filesystem::path& path) {
  const Image image = read_pnm(path);
  if (image.channels != 1) throw InputError("mask must be a 1-channel image: " + path.string());
  Mask mask(image.width, image.height);
  for (std::size_t i = 0; i < mask.bits.size(); ++i) mask.bits[i] = image.data[i] >= 0.5f ? 1 : 0;
  return mask;
}

void write_ppm(const Rgb8Image& image, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.rgb.data()), static_cast<std::streamsize>(image.rgb.size()));
  if (!out) throw InputError("write failed: " + path.string());
}

Rgb8Image read_ppm(const std::filesystem::path& path) {
  auto in = open_in(path);
  const auto h = read_pnm_header(in, path);
  if (h.kind != '6') throw InputError("expected a PPM (P6) file: " + path.string());
  Rgb8Image image{h.width, h.height, std::vector<std::uint8_t>(static_cast<std::size_t>(h.width) * h.height * 3)};
  in.read(reinterpret_cast<char*>(image.rgb.data()), static_cast<std::streamsize>(image.rgb.size()));
  if (in.gcount() != static_cast<std::streamsize>(image.rgb.size())) throw InputError("truncated PPM raster: " + path.string());
  return image;
}

}  // namespace im2flow
