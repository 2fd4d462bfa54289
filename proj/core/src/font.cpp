#include "callipaint/font.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "callipaint/error.hpp"
#include "callipaint/png_io.hpp"

namespace callipaint {
namespace {

constexpr int kMargin = 2;
constexpr int kSupersample = 8;
constexpr int kCurveSegments = 8;
constexpr int kMaxCompositeDepth = 8;

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& d, std::size_t base, std::size_t len)
      : d_(d), base_(base), len_(len) {}

  std::uint8_t u8(std::size_t off) const {
    check(off, 1);
    return d_[base_ + off];
  }
  std::uint16_t u16(std::size_t off) const {
    check(off, 2);
    return static_cast<std::uint16_t>(d_[base_ + off] << 8 | d_[base_ + off + 1]);
  }
  std::int16_t i16(std::size_t off) const {
    return static_cast<std::int16_t>(u16(off));
  }
  std::uint32_t u32(std::size_t off) const {
    return static_cast<std::uint32_t>(u16(off)) << 16 | u16(off + 2);
  }
  std::size_t size() const { return len_; }

 private:
  void check(std::size_t off, std::size_t n) const {
    if (off + n > len_)
      fail(ErrorKind::kUnreadableFont, "font table read out of bounds");
  }
  const std::vector<std::uint8_t>& d_;
  std::size_t base_;
  std::size_t len_;
};

std::uint32_t be32(const std::vector<std::uint8_t>& d, std::size_t off) {
  if (off + 4 > d.size())
    fail(ErrorKind::kUnreadableFont, "font header truncated");
  return static_cast<std::uint32_t>(d[off]) << 24 | d[off + 1] << 16 |
         d[off + 2] << 8 | d[off + 3];
}

std::uint16_t be16(const std::vector<std::uint8_t>& d, std::size_t off) {
  if (off + 2 > d.size())
    fail(ErrorKind::kUnreadableFont, "font header truncated");
  return static_cast<std::uint16_t>(d[off] << 8 | d[off + 1]);
}

std::string tag_at(const std::vector<std::uint8_t>& d, std::size_t off) {
  if (off + 4 > d.size())
    fail(ErrorKind::kUnreadableFont, "font header truncated");
  return std::string(reinterpret_cast<const char*>(d.data() + off), 4);
}

void flatten_quad(std::vector<Point2>& poly, Point2 p0, Point2 c, Point2 p1) {
  for (int i = 1; i <= kCurveSegments; ++i) {
    const double t = static_cast<double>(i) / kCurveSegments;
    const double u = 1.0 - t;
    poly.push_back({u * u * p0.x + 2 * u * t * c.x + t * t * p1.x,
                    u * u * p0.y + 2 * u * t * c.y + t * t * p1.y});
  }
}

Point2 mid(Point2 a, Point2 b) { return {(a.x + b.x) / 2, (a.y + b.y) / 2}; }

// Converts one TrueType contour (on/off curve points) to a polygon.
std::vector<Point2> contour_to_polygon(const std::vector<Point2>& pts,
                                       const std::vector<bool>& on) {
  const std::size_t n = pts.size();
  std::vector<Point2> poly;
  if (n == 0) return poly;
  // Find a starting on-curve point, synthesising one if all are off-curve.
  std::size_t start = n;
  for (std::size_t i = 0; i < n; ++i)
    if (on[i]) {
      start = i;
      break;
    }
  Point2 first;
  if (start == n) {
    first = mid(pts[n - 1], pts[0]);
    start = 0;
  } else {
    first = pts[start];
    start = start + 1;
  }
  poly.push_back(first);
  Point2 cur = first;
  std::optional<Point2> ctrl;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t i = (start + k) % n;
    const Point2 p = pts[i];
    if (on[i]) {
      if (ctrl) {
        flatten_quad(poly, cur, *ctrl, p);
        ctrl.reset();
      } else {
        poly.push_back(p);
      }
      cur = p;
    } else {
      if (ctrl) {
        const Point2 m = mid(*ctrl, p);
        flatten_quad(poly, cur, *ctrl, m);
        cur = m;
      }
      ctrl = p;
    }
  }
  if (ctrl) flatten_quad(poly, cur, *ctrl, first);
  return poly;
}

}  // namespace

Font Font::load(const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes;
  try {
    bytes = read_file_bytes(path);
  } catch (const Error&) {
    fail(ErrorKind::kUnreadableFont, "cannot read font file " + path.string());
  }
  return from_bytes(std::move(bytes), path.filename().string());
}

Font Font::from_bytes(std::vector<std::uint8_t> data, std::string name) {
  Font f;
  f.name_ = std::move(name);
  const std::string sig = data.size() >= 4 ? tag_at(data, 0) : std::string();
  if (sig == "wOFF") {
    const std::uint16_t num_tables = be16(data, 12);
    for (std::uint16_t i = 0; i < num_tables; ++i) {
      const std::size_t rec = 44 + 20 * static_cast<std::size_t>(i);
      const std::string tag = tag_at(data, rec);
      const std::uint32_t off = be32(data, rec + 4);
      const std::uint32_t comp_len = be32(data, rec + 8);
      const std::uint32_t orig_len = be32(data, rec + 12);
      if (static_cast<std::size_t>(off) + comp_len > data.size())
        fail(ErrorKind::kUnreadableFont, "WOFF table out of bounds");
      Table t{static_cast<std::uint32_t>(f.data_.size()), orig_len};
      if (comp_len < orig_len) {
        f.data_.resize(f.data_.size() + orig_len);
        uLongf dest_len = orig_len;
        const int rc = uncompress(f.data_.data() + t.offset, &dest_len,
                                  data.data() + off, comp_len);
        if (rc != Z_OK || dest_len != orig_len)
          fail(ErrorKind::kUnreadableFont, "WOFF table inflate failed: " + tag);
      } else {
        f.data_.insert(f.data_.end(), data.begin() + off,
                       data.begin() + off + orig_len);
      }
      f.tables_[tag] = t;
    }
  } else if (sig == "wOF2") {
    fail(ErrorKind::kUnreadableFont, "WOFF2 fonts are not supported");
  } else if (sig == "OTTO") {
    fail(ErrorKind::kUnreadableFont, "CFF-outline fonts are not supported");
  } else {
    std::size_t base = 0;
    if (sig == "ttcf") base = be32(data, 12);
    const std::uint32_t version = be32(data, base);
    if (version != 0x00010000 && tag_at(data, base) != "true")
      fail(ErrorKind::kUnreadableFont, "not a TrueType font: " + f.name_);
    const std::uint16_t num_tables = be16(data, base + 4);
    for (std::uint16_t i = 0; i < num_tables; ++i) {
      const std::size_t rec = base + 12 + 16 * static_cast<std::size_t>(i);
      const std::string tag = tag_at(data, rec);
      const std::uint32_t off = be32(data, rec + 8);
      const std::uint32_t len = be32(data, rec + 12);
      if (static_cast<std::size_t>(off) + len > data.size())
        fail(ErrorKind::kUnreadableFont, "table out of bounds: " + tag);
      f.tables_[tag] = Table{off, len};
    }
    f.data_ = std::move(data);
  }
  f.parse_tables();
  return f;
}

const Font::Table* Font::table(const char* tag) const {
  auto it = tables_.find(tag);
  return it == tables_.end() ? nullptr : &it->second;
}

void Font::parse_tables() {
  for (const char* tag : {"head", "maxp", "cmap", "loca", "glyf"})
    if (!table(tag))
      fail(ErrorKind::kUnreadableFont,
           name_ + ": missing required table '" + tag + "'");
  const Table* head = table("head");
  Reader hr(data_, head->offset, head->length);
  units_per_em_ = hr.u16(18);
  long_loca_ = hr.i16(50) != 0;
  if (units_per_em_ <= 0)
    fail(ErrorKind::kUnreadableFont, name_ + ": bad unitsPerEm");
  const Table* maxp = table("maxp");
  num_glyphs_ = Reader(data_, maxp->offset, maxp->length).u16(4);
  load_cmap();
}

void Font::load_cmap() {
  const Table* t = table("cmap");
  Reader r(data_, t->offset, t->length);
  const std::uint16_t n = r.u16(2);
  std::size_t best = 0;
  int best_rank = -1;
  for (std::uint16_t i = 0; i < n; ++i) {
    const std::uint16_t platform = r.u16(4 + 8 * i);
    const std::uint16_t encoding = r.u16(6 + 8 * i);
    const std::uint32_t off = r.u32(8 + 8 * i);
    const std::uint16_t format = r.u16(off);
    int rank = -1;
    if (format == 12 && (platform == 0 || (platform == 3 && encoding == 10)))
      rank = 2;
    else if (format == 4 && (platform == 0 || (platform == 3 && encoding == 1)))
      rank = 1;
    if (rank > best_rank) {
      best_rank = rank;
      best = off;
    }
  }
  if (best_rank < 0)
    fail(ErrorKind::kUnreadableFont, name_ + ": no Unicode cmap subtable");
  if (r.u16(best) == 12) {
    const std::uint32_t groups = r.u32(best + 12);
    for (std::uint32_t g = 0; g < groups; ++g) {
      const std::size_t rec = best + 16 + 12 * static_cast<std::size_t>(g);
      const std::uint32_t lo = r.u32(rec), hi = r.u32(rec + 4);
      const std::uint32_t gid = r.u32(rec + 8);
      if (hi < lo || hi - lo > 0x10FFFF) continue;
      for (std::uint32_t c = lo; c <= hi; ++c) cmap_[c] = gid + (c - lo);
    }
    return;
  }
  const std::uint16_t segx2 = r.u16(best + 6);
  const std::size_t ends = best + 14;
  const std::size_t starts = ends + segx2 + 2;
  const std::size_t deltas = starts + segx2;
  const std::size_t ranges = deltas + segx2;
  for (std::size_t s = 0; s < segx2 / 2u; ++s) {
    const std::uint16_t end = r.u16(ends + 2 * s);
    const std::uint16_t start = r.u16(starts + 2 * s);
    const std::uint16_t delta = r.u16(deltas + 2 * s);
    const std::uint16_t range_off = r.u16(ranges + 2 * s);
    if (start > end) continue;
    for (std::uint32_t c = start; c <= end && c != 0xFFFF; ++c) {
      std::uint32_t gid;
      if (range_off == 0) {
        gid = (c + delta) & 0xFFFF;
      } else {
        const std::size_t addr = ranges + 2 * s + range_off + 2 * (c - start);
        gid = r.u16(addr);
        if (gid != 0) gid = (gid + delta) & 0xFFFF;
      }
      if (gid != 0) cmap_[c] = gid;
    }
  }
}

std::uint32_t Font::glyph_index(char32_t code_point) const {
  auto it = cmap_.find(code_point);
  if (it == cmap_.end() || it->second >= static_cast<std::uint32_t>(num_glyphs_))
    return 0;
  return it->second;
}

void Font::append_glyph(std::uint32_t glyph, const double xf[6], int depth,
                        Outline& out) const {
  if (depth > kMaxCompositeDepth)
    fail(ErrorKind::kUnreadableFont, name_ + ": composite glyph nesting too deep");
  const Table* loca = table("loca");
  const Table* glyf = table("glyf");
  Reader lr(data_, loca->offset, loca->length);
  std::uint32_t start, end;
  if (long_loca_) {
    start = lr.u32(4 * glyph);
    end = lr.u32(4 * glyph + 4);
  } else {
    start = 2u * lr.u16(2 * glyph);
    end = 2u * lr.u16(2 * glyph + 2);
  }
  if (end <= start) return;  // empty glyph, e.g. space
  if (end > glyf->length)
    fail(ErrorKind::kUnreadableFont, name_ + ": glyph data out of bounds");
  Reader g(data_, glyf->offset + start, end - start);
  const std::int16_t contours = g.i16(0);
  auto apply = [&](double x, double y) {
    return Point2{xf[0] * x + xf[2] * y + xf[4], xf[1] * x + xf[3] * y + xf[5]};
  };

  if (contours >= 0) {
    std::vector<std::uint16_t> end_pts(contours);
    for (int i = 0; i < contours; ++i) end_pts[i] = g.u16(10 + 2 * i);
    if (contours == 0) return;
    const std::size_t n_pts = static_cast<std::size_t>(end_pts.back()) + 1;
    std::size_t p = 10 + 2 * static_cast<std::size_t>(contours);
    p += 2 + g.u16(p);  // skip hinting instructions
    std::vector<std::uint8_t> flags;
    flags.reserve(n_pts);
    while (flags.size() < n_pts) {
      const std::uint8_t f = g.u8(p++);
      flags.push_back(f);
      if (f & 0x08) {
        const std::uint8_t rep = g.u8(p++);
        for (int k = 0; k < rep && flags.size() < n_pts; ++k) flags.push_back(f);
      }
    }
    std::vector<double> xs(n_pts), ys(n_pts);
    int v = 0;
    for (std::size_t i = 0; i < n_pts; ++i) {
      const std::uint8_t f = flags[i];
      if (f & 0x02) {
        const int d = g.u8(p++);
        v += (f & 0x10) ? d : -d;
      } else if (!(f & 0x10)) {
        v += g.i16(p);
        p += 2;
      }
      xs[i] = v;
    }
    v = 0;
    for (std::size_t i = 0; i < n_pts; ++i) {
      const std::uint8_t f = flags[i];
      if (f & 0x04) {
        const int d = g.u8(p++);
        v += (f & 0x20) ? d : -d;
      } else if (!(f & 0x20)) {
        v += g.i16(p);
        p += 2;
      }
      ys[i] = v;
    }
    std::size_t first = 0;
    for (int c = 0; c < contours; ++c) {
      const std::size_t last = end_pts[c];
      if (last < first || last >= n_pts) break;
      std::vector<Point2> pts;
      std::vector<bool> on;
      for (std::size_t i = first; i <= last; ++i) {
        pts.push_back(apply(xs[i], ys[i]));
        on.push_back(flags[i] & 0x01);
      }
      auto poly = contour_to_polygon(pts, on);
      if (poly.size() >= 3) out.contours.push_back(std::move(poly));
      first = last + 1;
    }
    return;
  }

  // Composite glyph.
  std::size_t p = 10;
  for (;;) {
    const std::uint16_t flags = g.u16(p);
    const std::uint16_t child = g.u16(p + 2);
    p += 4;
    double dx = 0, dy = 0;
    if (flags & 0x0001) {
      dx = g.i16(p);
      dy = g.i16(p + 2);
      p += 4;
    } else {
      dx = static_cast<std::int8_t>(g.u8(p));
      dy = static_cast<std::int8_t>(g.u8(p + 1));
      p += 2;
    }
    if (!(flags & 0x0002)) dx = dy = 0;  // point-matching placement unsupported
    double a = 1, b = 0, c = 0, d = 1;
    auto f2dot14 = [&](std::size_t off) { return g.i16(off) / 16384.0; };
    if (flags & 0x0008) {
      a = d = f2dot14(p);
      p += 2;
    } else if (flags & 0x0040) {
      a = f2dot14(p);
      d = f2dot14(p + 2);
      p += 4;
    } else if (flags & 0x0080) {
      a = f2dot14(p);
      b = f2dot14(p + 2);
      c = f2dot14(p + 4);
      d = f2dot14(p + 6);
      p += 8;
    }
    // child transform then parent transform
    const double child_xf[6] = {a, b, c, d, dx, dy};
    double combined[6];
    combined[0] = xf[0] * child_xf[0] + xf[2] * child_xf[1];
    combined[1] = xf[1] * child_xf[0] + xf[3] * child_xf[1];
    combined[2] = xf[0] * child_xf[2] + xf[2] * child_xf[3];
    combined[3] = xf[1] * child_xf[2] + xf[3] * child_xf[3];
    combined[4] = xf[0] * child_xf[4] + xf[2] * child_xf[5] + xf[4];
    combined[5] = xf[1] * child_xf[4] + xf[3] * child_xf[5] + xf[5];
    append_glyph(child, combined, depth + 1, out);
    if (!(flags & 0x0020)) break;
  }
}

Outline Font::outline(char32_t code_point) const {
  const std::uint32_t gid = glyph_index(code_point);
  if (gid == 0)
    fail(ErrorKind::kMissingGlyph,
         name_ + " has no glyph for U+" + [&] {
           char buf[16];
           std::snprintf(buf, sizeof buf, "%04X",
                         static_cast<unsigned>(code_point));
           return std::string(buf);
         }());
  Outline out;
  const double identity[6] = {1, 0, 0, 1, 0, 0};
  append_glyph(gid, identity, 0, out);
  return out;
}

GlyphImage render_glyph(char32_t code_point, const Font& font, Resolution res) {
  require(res.height >= 8 && res.width >= 8, ErrorKind::kInvalidArgument,
          "render resolution must be at least 8x8");
  Outline outline = font.outline(code_point);
  GlyphImage img(res, PixelRange::kUnit8, 255.0f);
  if (outline.empty()) return img;

  double min_x = std::numeric_limits<double>::max(), min_y = min_x;
  double max_x = std::numeric_limits<double>::lowest(), max_y = max_x;
  for (const auto& c : outline.contours)
    for (const auto& p : c) {
      min_x = std::min(min_x, p.x);
      max_x = std::max(max_x, p.x);
      min_y = std::min(min_y, p.y);
      max_y = std::max(max_y, p.y);
    }
  const double inner_w = res.width - 2.0 * kMargin;
  const double inner_h = res.height - 2.0 * kMargin;
  const double bw = std::max(max_x - min_x, 1e-9);
  const double bh = std::max(max_y - min_y, 1e-9);
  double scale = std::min(inner_w, inner_h) / font.units_per_em();
  scale = std::min({scale, inner_w / bw, inner_h / bh});
  const double ox = res.width / 2.0 - scale * (min_x + max_x) / 2.0;
  const double oy = res.height / 2.0 + scale * (min_y + max_y) / 2.0;

  struct Edge {
    double x0, y0, x1, y1;
    int dir;
  };
  std::vector<Edge> edges;
  for (const auto& c : outline.contours) {
    for (std::size_t i = 0; i < c.size(); ++i) {
      const Point2& a = c[i];
      const Point2& b = c[(i + 1) % c.size()];
      // pixel space, y down
      const double ax = ox + scale * a.x, ay = oy - scale * a.y;
      const double bx = ox + scale * b.x, by = oy - scale * b.y;
      if (ay == by) continue;
      if (ay < by)
        edges.push_back({ax, ay, bx, by, 1});
      else
        edges.push_back({bx, by, ax, ay, -1});
    }
  }

  std::vector<int> hits(static_cast<std::size_t>(res.pixels()), 0);
  std::vector<std::pair<double, int>> xs;
  const int rows = res.height * kSupersample;
  for (int sy = 0; sy < rows; ++sy) {
    const double y = (sy + 0.5) / kSupersample;
    xs.clear();
    for (const auto& e : edges) {
      if (y < e.y0 || y >= e.y1) continue;
      const double t = (y - e.y0) / (e.y1 - e.y0);
      xs.emplace_back(e.x0 + t * (e.x1 - e.x0), e.dir);
    }
    std::sort(xs.begin(), xs.end());
    int winding = 0;
    for (std::size_t k = 0; k + 1 < xs.size(); ++k) {
      winding += xs[k].second;
      if (winding == 0) continue;
      // fill subsample columns whose centres fall in [xs[k], xs[k+1])
      const int c0 = std::max(
          0, static_cast<int>(std::ceil(xs[k].first * kSupersample - 0.5)));
      const int c1 = std::min(
          res.width * kSupersample - 1,
          static_cast<int>(std::ceil(xs[k + 1].first * kSupersample - 0.5)) - 1);
      for (int sx = c0; sx <= c1; ++sx)
        ++hits[(sy / kSupersample) * res.width + sx / kSupersample];
    }
  }
  constexpr double kSamples = kSupersample * kSupersample;
  for (std::size_t i = 0; i < hits.size(); ++i) {
    const double cov = std::min(1.0, hits[i] / kSamples);
    img.pixels[i] = static_cast<float>(std::round(255.0 * (1.0 - cov)));
  }
  return img;
}

GlyphImage render_glyph(char32_t code_point,
                        const std::filesystem::path& font_path,
                        Resolution res) {
  return render_glyph(code_point, Font::load(font_path), res);
}

std::u32string utf8_to_u32(const std::string& s) {
  std::u32string out;
  for (std::size_t i = 0; i < s.size();) {
    const unsigned char c = s[i];
    char32_t cp;
    int len;
    if (c < 0x80) {
      cp = c;
      len = 1;
    } else if ((c >> 5) == 0x6) {
      cp = c & 0x1F;
      len = 2;
    } else if ((c >> 4) == 0xE) {
      cp = c & 0x0F;
      len = 3;
    } else if ((c >> 3) == 0x1E) {
      cp = c & 0x07;
      len = 4;
    } else {
      fail(ErrorKind::kInvalidArgument, "invalid UTF-8 lead byte");
    }
    if (i + len > s.size())
      fail(ErrorKind::kInvalidArgument, "truncated UTF-8 sequence");
    for (int k = 1; k < len; ++k) {
      const unsigned char cc = s[i + k];
      if ((cc >> 6) != 0x2)
        fail(ErrorKind::kInvalidArgument, "invalid UTF-8 continuation byte");
      cp = (cp << 6) | (cc & 0x3F);
    }
    out.push_back(cp);
    i += len;
  }
  return out;
}

std::string u32_to_utf8(char32_t cp) {
  std::string out;
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
  return out;
}

}  // namespace callipaint
