#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "callipaint/image.hpp"

namespace callipaint {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

// A glyph outline flattened to closed polygons, in font units (y up).
struct Outline {
  std::vector<std::vector<Point2>> contours;

  bool empty() const { return contours.empty(); }
};

// Minimal TrueType reader: sfnt (.ttf, first face of .ttc) and WOFF 1.0
// containers with glyf outlines. CFF-flavoured fonts are rejected.
class Font {
 public:
  static Font load(const std::filesystem::path& path);
  static Font from_bytes(std::vector<std::uint8_t> data, std::string name);

  const std::string& name() const { return name_; }
  int units_per_em() const { return units_per_em_; }
  int glyph_count() const { return num_glyphs_; }

  // 0 when the code point is not mapped.
  std::uint32_t glyph_index(char32_t code_point) const;
  bool has_glyph(char32_t code_point) const {
    return glyph_index(code_point) != 0;
  }
  Outline outline(char32_t code_point) const;

 private:
  struct Table {
    std::uint32_t offset = 0;
    std::uint32_t length = 0;
  };

  const Table* table(const char* tag) const;
  void parse_tables();
  void load_cmap();
  void append_glyph(std::uint32_t glyph, const double xform[6], int depth,
                    Outline& out) const;

  std::string name_;
  // Decompressed sfnt tables laid out back to back.
  std::vector<std::uint8_t> data_;
  std::map<std::string, Table> tables_;
  int units_per_em_ = 1000;
  int num_glyphs_ = 0;
  bool long_loca_ = false;
  std::map<char32_t, std::uint32_t> cmap_;
};

// Rasterises the glyph dark-on-light into a unit8 image. The em square is
// scaled to the inner box left after a 2-pixel margin on every side and the
// ink bounding box is centred; glyphs that overflow the em box are shrunk
// to fit. Pure function of its inputs.
GlyphImage render_glyph(char32_t code_point, const Font& font, Resolution res);
GlyphImage render_glyph(char32_t code_point,
                        const std::filesystem::path& font_path,
                        Resolution res);

// UTF-8 helpers for labels and character specs.
std::u32string utf8_to_u32(const std::string& s);
std::string u32_to_utf8(char32_t cp);

}  // namespace callipaint
