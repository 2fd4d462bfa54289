#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace callipaint {

enum class PixelRange {
  kUnit8,  // [0, 255], integral values
  kModel,  // [-1, +1]
};

const char* to_string(PixelRange range);

struct Resolution {
  int height = 32;
  int width = 32;

  int pixels() const { return height * width; }
  friend bool operator==(const Resolution&, const Resolution&) = default;
};

std::string to_string(const Resolution& res);

// Single-channel image, row-major. The range tag states which value range
// the pixels live in; conversions between ranges go through to_model /
// to_unit8 only.
struct GlyphImage {
  Resolution resolution;
  PixelRange range = PixelRange::kUnit8;
  std::vector<float> pixels;

  GlyphImage() = default;
  GlyphImage(Resolution res, PixelRange r, float fill = 0.0f)
      : resolution(res), range(r), pixels(res.pixels(), fill) {}
  GlyphImage(Resolution res, PixelRange r, std::vector<float> px);

  int height() const { return resolution.height; }
  int width() const { return resolution.width; }
  float& at(int y, int x) { return pixels[y * resolution.width + x]; }
  float at(int y, int x) const { return pixels[y * resolution.width + x]; }

  // Throws if a pixel leaves the declared range or the size is inconsistent.
  void validate() const;
  bool all_finite() const;

  friend bool operator==(const GlyphImage&, const GlyphImage&) = default;
};

// x_model = x_unit8 / 127.5 - 1.
GlyphImage to_model(const GlyphImage& unit8);
// Inverse map, rounded to the nearest integer level and clamped to [0,255].
GlyphImage to_unit8(const GlyphImage& model);
// Clamps a model-range image to [-1, 1].
GlyphImage clamp_model(GlyphImage img);

GlyphImage from_bytes(Resolution res, std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> to_bytes(const GlyphImage& unit8);

// Fraction of pixels darker than mid-grey in a unit8 image.
double ink_coverage(const GlyphImage& unit8);

// Binary map, 1 = region to inpaint (unknown), 0 = known.
struct Mask {
  Resolution resolution;
  std::vector<std::uint8_t> bits;

  Mask() = default;
  explicit Mask(Resolution res, std::uint8_t fill = 0)
      : resolution(res), bits(res.pixels(), fill) {}

  static Mask zeros(Resolution res) { return Mask(res, 0); }
  static Mask ones(Resolution res) { return Mask(res, 1); }

  std::uint8_t& at(int y, int x) { return bits[y * resolution.width + x]; }
  std::uint8_t at(int y, int x) const {
    return bits[y * resolution.width + x];
  }

  double coverage() const;
  void validate() const;

  friend bool operator==(const Mask&, const Mask&) = default;
};

// PNG convention: 255 = inpaint, 0 = keep. Any nonzero byte reads as 1.
Mask mask_from_bytes(Resolution res, std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> mask_to_bytes(const Mask& mask);

}  // namespace callipaint
