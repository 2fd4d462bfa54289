#include "callipaint/png_io.hpp"

#include <png.h>

#include <cstring>
#include <fstream>
#include <iterator>

#include "callipaint/error.hpp"

namespace callipaint {
namespace {

struct WriteState {
  std::vector<std::uint8_t>* out;
};

void write_cb(png_structp png, png_bytep data, png_size_t len) {
  auto* st = static_cast<WriteState*>(png_get_io_ptr(png));
  st->out->insert(st->out->end(), data, data + len);
}

void flush_cb(png_structp) {}

struct ReadState {
  std::span<const std::uint8_t> in;
  std::size_t pos = 0;
};

void read_cb(png_structp png, png_bytep data, png_size_t len) {
  auto* st = static_cast<ReadState*>(png_get_io_ptr(png));
  if (st->pos + len > st->in.size()) png_error(png, "truncated PNG stream");
  std::memcpy(data, st->in.data() + st->pos, len);
  st->pos += len;
}

void error_cb(png_structp png, png_const_charp msg) {
  auto* buf = static_cast<std::string*>(png_get_error_ptr(png));
  if (buf) *buf = msg;
  png_longjmp(png, 1);
}

void warning_cb(png_structp, png_const_charp) {}

}  // namespace

std::vector<std::uint8_t> encode_png(const GrayPng& img) {
  require(static_cast<int>(img.bytes.size()) == img.resolution.pixels(),
          ErrorKind::kShapeMismatch, "PNG byte count does not match resolution");
  std::string err;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err,
                                            error_cb, warning_cb);
  require(png != nullptr, ErrorKind::kIo, "png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  std::vector<std::uint8_t> out;
  WriteState st{&out};
  std::vector<png_bytep> rows(img.resolution.height);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorKind::kFormat, "PNG encode failed: " + err);
  }
  png_set_write_fn(png, &st, write_cb, flush_cb);
  png_set_IHDR(png, info, img.resolution.width, img.resolution.height, 8,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < img.resolution.height; ++y)
    rows[y] = const_cast<png_bytep>(img.bytes.data() + y * img.resolution.width);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

GrayPng decode_png(std::span<const std::uint8_t> data) {
  require(data.size() >= 8 && png_sig_cmp(data.data(), 0, 8) == 0,
          ErrorKind::kFormat, "not a PNG stream");
  std::string err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err,
                                           error_cb, warning_cb);
  require(png != nullptr, ErrorKind::kIo, "png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  ReadState st{data, 0};
  GrayPng out;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorKind::kFormat, "PNG decode failed: " + err);
  }
  png_set_read_fn(png, &st, read_cb);
  png_read_info(png, info);
  const auto color = png_get_color_type(png, info);
  const auto depth = png_get_bit_depth(png, info);
  if (color != PNG_COLOR_TYPE_GRAY || depth > 8) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorKind::kFormat, "expected an 8-bit single-channel PNG");
  }
  if (depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  png_read_update_info(png, info);
  out.resolution.width = static_cast<int>(png_get_image_width(png, info));
  out.resolution.height = static_cast<int>(png_get_image_height(png, info));
  out.bytes.resize(static_cast<std::size_t>(out.resolution.pixels()));
  rows.resize(out.resolution.height);
  for (int y = 0; y < out.resolution.height; ++y)
    rows[y] = out.bytes.data() + y * out.resolution.width;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::kIo, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path,
                      std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorKind::kIo, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  require(out.good(), ErrorKind::kIo, "short write to " + path.string());
}

void write_png(const std::filesystem::path& path, const GrayPng& img) {
  write_file_bytes(path, encode_png(img));
}

GrayPng read_png(const std::filesystem::path& path) {
  try {
    return decode_png(read_file_bytes(path));
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

void write_image_png(const std::filesystem::path& path, const GlyphImage& img) {
  const GlyphImage u8 = img.range == PixelRange::kUnit8 ? img : to_unit8(img);
  write_png(path, GrayPng{u8.resolution, to_bytes(u8)});
}

GlyphImage read_image_png(const std::filesystem::path& path) {
  auto png = read_png(path);
  return from_bytes(png.resolution, png.bytes);
}

void write_mask_png(const std::filesystem::path& path, const Mask& mask) {
  write_png(path, GrayPng{mask.resolution, mask_to_bytes(mask)});
}

Mask read_mask_png(const std::filesystem::path& path) {
  auto png = read_png(path);
  return mask_from_bytes(png.resolution, png.bytes);
}

}  // namespace callipaint
