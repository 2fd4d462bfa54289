#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "callipaint/image.hpp"

namespace callipaint {

// 8-bit single-channel PNG. Colour or alpha inputs are rejected rather than
// silently converted.
struct GrayPng {
  Resolution resolution;
  std::vector<std::uint8_t> bytes;
};

std::vector<std::uint8_t> encode_png(const GrayPng& img);
GrayPng decode_png(std::span<const std::uint8_t> data);

void write_png(const std::filesystem::path& path, const GrayPng& img);
GrayPng read_png(const std::filesystem::path& path);

// Convenience wrappers over the GlyphImage / Mask byte conventions.
void write_image_png(const std::filesystem::path& path, const GlyphImage& img);
GlyphImage read_image_png(const std::filesystem::path& path);
void write_mask_png(const std::filesystem::path& path, const Mask& mask);
Mask read_mask_png(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path,
                      std::span<const std::uint8_t> bytes);

}  // namespace callipaint
