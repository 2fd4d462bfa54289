#include "callipaint/image.hpp"

#include <algorithm>
#include <cmath>

#include "callipaint/error.hpp"

namespace callipaint {

const char* to_string(PixelRange range) {
  return range == PixelRange::kUnit8 ? "unit8" : "model";
}

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return "invalid-argument";
    case ErrorKind::kShapeMismatch: return "shape-mismatch";
    case ErrorKind::kOutOfRange: return "out-of-range";
    case ErrorKind::kMissingGlyph: return "missing-glyph";
    case ErrorKind::kUnreadableFont: return "unreadable-font";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kFormat: return "format";
    case ErrorKind::kVersionMismatch: return "version-mismatch";
    case ErrorKind::kTruncated: return "truncated-file";
    case ErrorKind::kNonFinite: return "non-finite";
    case ErrorKind::kVocabulary: return "vocabulary";
    case ErrorKind::kInsufficientPool: return "insufficient-pool";
  }
  return "unknown";
}

std::string to_string(const Resolution& res) {
  return std::to_string(res.height) + "x" + std::to_string(res.width);
}

GlyphImage::GlyphImage(Resolution res, PixelRange r, std::vector<float> px)
    : resolution(res), range(r), pixels(std::move(px)) {
  require(static_cast<int>(pixels.size()) == res.pixels(),
          ErrorKind::kShapeMismatch,
          "pixel count does not match resolution " + to_string(res));
}

bool GlyphImage::all_finite() const {
  return std::all_of(pixels.begin(), pixels.end(),
                     [](float v) { return std::isfinite(v); });
}

void GlyphImage::validate() const {
  require(resolution.height > 0 && resolution.width > 0 &&
              static_cast<int>(pixels.size()) == resolution.pixels(),
          ErrorKind::kShapeMismatch, "image size inconsistent with resolution");
  const float lo = range == PixelRange::kUnit8 ? 0.0f : -1.0f;
  const float hi = range == PixelRange::kUnit8 ? 255.0f : 1.0f;
  for (float v : pixels) {
    require(std::isfinite(v), ErrorKind::kNonFinite, "non-finite pixel");
    require(v >= lo && v <= hi, ErrorKind::kOutOfRange,
            std::string("pixel outside ") + to_string(range) + " range");
  }
}

GlyphImage to_model(const GlyphImage& unit8) {
  require(unit8.range == PixelRange::kUnit8, ErrorKind::kInvalidArgument,
          "to_model expects a unit8 image");
  GlyphImage out(unit8.resolution, PixelRange::kModel);
  for (std::size_t i = 0; i < unit8.pixels.size(); ++i)
    out.pixels[i] = unit8.pixels[i] / 127.5f - 1.0f;
  return out;
}

GlyphImage to_unit8(const GlyphImage& model) {
  require(model.range == PixelRange::kModel, ErrorKind::kInvalidArgument,
          "to_unit8 expects a model-range image");
  GlyphImage out(model.resolution, PixelRange::kUnit8);
  for (std::size_t i = 0; i < model.pixels.size(); ++i) {
    const float v = std::round((model.pixels[i] + 1.0f) * 127.5f);
    out.pixels[i] = std::clamp(v, 0.0f, 255.0f);
  }
  return out;
}

GlyphImage clamp_model(GlyphImage img) {
  for (auto& v : img.pixels) v = std::clamp(v, -1.0f, 1.0f);
  return img;
}

GlyphImage from_bytes(Resolution res, std::span<const std::uint8_t> bytes) {
  require(static_cast<int>(bytes.size()) == res.pixels(),
          ErrorKind::kShapeMismatch, "byte count does not match resolution");
  GlyphImage out(res, PixelRange::kUnit8);
  std::copy(bytes.begin(), bytes.end(), out.pixels.begin());
  return out;
}

std::vector<std::uint8_t> to_bytes(const GlyphImage& unit8) {
  require(unit8.range == PixelRange::kUnit8, ErrorKind::kInvalidArgument,
          "to_bytes expects a unit8 image");
  std::vector<std::uint8_t> out(unit8.pixels.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<std::uint8_t>(
        std::clamp(std::lround(unit8.pixels[i]), 0L, 255L));
  return out;
}

double ink_coverage(const GlyphImage& unit8) {
  if (unit8.pixels.empty()) return 0.0;
  std::size_t ink = 0;
  for (float v : unit8.pixels) ink += v < 127.5f ? 1 : 0;
  return static_cast<double>(ink) / unit8.pixels.size();
}

double Mask::coverage() const {
  if (bits.empty()) return 0.0;
  std::size_t on = 0;
  for (auto b : bits) on += b;
  return static_cast<double>(on) / bits.size();
}

void Mask::validate() const {
  require(static_cast<int>(bits.size()) == resolution.pixels(),
          ErrorKind::kShapeMismatch, "mask size inconsistent with resolution");
  for (auto b : bits)
    require(b <= 1, ErrorKind::kOutOfRange, "mask bits must be 0 or 1");
}

Mask mask_from_bytes(Resolution res, std::span<const std::uint8_t> bytes) {
  require(static_cast<int>(bytes.size()) == res.pixels(),
          ErrorKind::kShapeMismatch, "mask byte count does not match resolution");
  Mask m(res);
  for (std::size_t i = 0; i < bytes.size(); ++i) m.bits[i] = bytes[i] ? 1 : 0;
  return m;
}

std::vector<std::uint8_t> mask_to_bytes(const Mask& mask) {
  std::vector<std::uint8_t> out(mask.bits.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = mask.bits[i] ? 255 : 0;
  return out;
}

}  // namespace callipaint
