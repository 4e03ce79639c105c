#include "weedid/core/image.hpp"

#include <png.h>

#include <algorithm>
#include <csetjmp>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <vector>

#include "weedid/error.hpp"

namespace weedid {

namespace {

struct ReadCursor {
  std::string_view bytes;
  std::size_t offset = 0;
};

void read_callback(png_structp png, png_bytep out, png_size_t n) {
  auto* cur = static_cast<ReadCursor*>(png_get_io_ptr(png));
  if (cur->offset + n > cur->bytes.size()) png_error(png, "truncated PNG stream");
  std::memcpy(out, cur->bytes.data() + cur->offset, n);
  cur->offset += n;
}

void write_callback(png_structp png, png_bytep data, png_size_t n) {
  auto* out = static_cast<std::string*>(png_get_io_ptr(png));
  out->append(reinterpret_cast<const char*>(data), n);
}

void flush_callback(png_structp) {}

// Exceptions must not unwind through libpng's C frames, so fatal errors take
// the library's longjmp path back to the caller, which then throws. Every C++
// object touched after setjmp is declared before it.
struct ErrorSlot {
  char message[256] = "unknown error";
};

void error_callback(png_structp png, png_const_charp msg) {
  auto* slot = static_cast<ErrorSlot*>(png_get_error_ptr(png));
  std::snprintf(slot->message, sizeof slot->message, "%s", msg);
  png_longjmp(png, 1);
}

void warning_callback(png_structp, png_const_charp) {}

struct ReadGuard {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~ReadGuard() { png_destroy_read_struct(&png, info ? &info : nullptr, nullptr); }
};

struct WriteGuard {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~WriteGuard() { png_destroy_write_struct(&png, info ? &info : nullptr); }
};

}  // namespace

Raster decode_png(std::string_view bytes, int channels) {
  if (bytes.size() < 8 || png_sig_cmp(reinterpret_cast<png_const_bytep>(bytes.data()), 0, 8) != 0)
    throw Error(ErrorCode::MalformedFile, "not a PNG stream");
  ReadGuard g;
  ErrorSlot slot;
  ReadCursor cur{bytes, 0};
  std::vector<unsigned char> buf;
  std::vector<png_bytep> rows;
  g.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &slot, error_callback, warning_callback);
  if (!g.png) throw Error(ErrorCode::IoError, "png_create_read_struct failed");
  g.info = png_create_info_struct(g.png);
  if (!g.info) throw Error(ErrorCode::IoError, "png_create_info_struct failed");
  if (setjmp(png_jmpbuf(g.png))) throw Error(ErrorCode::MalformedFile, std::string("PNG: ") + slot.message);
  png_set_read_fn(g.png, &cur, read_callback);
  png_read_info(g.png, g.info);

  const auto color = png_get_color_type(g.png, g.info);
  const auto depth = png_get_bit_depth(g.png, g.info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(g.png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(g.png);
  if (png_get_valid(g.png, g.info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(g.png);
  if (depth == 16) png_set_strip_16(g.png);
  png_set_strip_alpha(g.png);
  png_read_update_info(g.png, g.info);

  const int w = static_cast<int>(png_get_image_width(g.png, g.info));
  const int h = static_cast<int>(png_get_image_height(g.png, g.info));
  const int c = png_get_channels(g.png, g.info);
  const auto stride = png_get_rowbytes(g.png, g.info);
  buf.resize(stride * static_cast<std::size_t>(h));
  rows.resize(static_cast<std::size_t>(h));
  for (int y = 0; y < h; ++y) rows[y] = buf.data() + stride * static_cast<std::size_t>(y);
  png_read_image(g.png, rows.data());

  Raster out(h, w, c);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int k = 0; k < c; ++k) out.at(y, x, k) = rows[y][x * c + k] / 255.0;
  return channels > 0 ? convert_channels(out, channels) : out;
}

std::string encode_png(const Raster& image) {
  if (image.channels != 1 && image.channels != 3)
    throw Error(ErrorCode::ShapeMismatch, "PNG export supports 1 or 3 channels");
  if (image.width <= 0 || image.height <= 0) throw Error(ErrorCode::EmptyInput, "empty image");
  WriteGuard g;
  ErrorSlot slot;
  std::string out;
  std::vector<unsigned char> row(static_cast<std::size_t>(image.width) * image.channels);
  g.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &slot, error_callback, warning_callback);
  if (!g.png) throw Error(ErrorCode::IoError, "png_create_write_struct failed");
  g.info = png_create_info_struct(g.png);
  if (!g.info) throw Error(ErrorCode::IoError, "png_create_info_struct failed");
  if (setjmp(png_jmpbuf(g.png))) throw Error(ErrorCode::IoError, std::string("PNG: ") + slot.message);
  png_set_write_fn(g.png, &out, write_callback, flush_callback);
  png_set_IHDR(g.png, g.info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
               image.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(g.png, g.info);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x)
      for (int k = 0; k < image.channels; ++k)
        row[x * image.channels + k] =
            static_cast<unsigned char>(std::lround(std::clamp(image.at(y, x, k), 0.0, 1.0) * 255.0));
    png_write_row(g.png, row.data());
  }
  png_write_end(g.png, nullptr);
  return out;
}

Raster resize_bilinear(const Raster& image, int height, int width) {
  if (height <= 0 || width <= 0) throw Error(ErrorCode::ShapeMismatch, "resize target must be positive");
  if (image.height == height && image.width == width) return image;
  Raster out(height, width, image.channels);
  const double sy = static_cast<double>(image.height) / height, sx = static_cast<double>(image.width) / width;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, image.height - 1.0);
    const int y0 = static_cast<int>(fy), y1 = std::min(y0 + 1, image.height - 1);
    const double ty = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, image.width - 1.0);
      const int x0 = static_cast<int>(fx), x1 = std::min(x0 + 1, image.width - 1);
      const double tx = fx - x0;
      for (int c = 0; c < image.channels; ++c) {
        const double top = (1 - tx) * image.at(y0, x0, c) + tx * image.at(y0, x1, c);
        const double bot = (1 - tx) * image.at(y1, x0, c) + tx * image.at(y1, x1, c);
        out.at(y, x, c) = (1 - ty) * top + ty * bot;
      }
    }
  }
  return out;
}

Raster convert_channels(const Raster& image, int channels) {
  if (channels == image.channels) return image;
  if (channels <= 0) throw Error(ErrorCode::ShapeMismatch, "channel count must be positive");
  Raster out(image.height, image.width, channels);
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x) {
      double v;
      if (image.channels >= 3)
        v = 0.299 * image.at(y, x, 0) + 0.587 * image.at(y, x, 1) + 0.114 * image.at(y, x, 2);
      else
        v = image.at(y, x, 0);
      for (int c = 0; c < channels; ++c)
        out.at(y, x, c) = (channels == image.channels || (image.channels >= 3 && channels >= 3 && c < 3))
                              ? image.at(y, x, c)
                              : v;
    }
  return out;
}

}  // namespace weedid
