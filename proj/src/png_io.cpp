// PNG reading/writing through libpng's classic API. Sample values are passed through
// untouched (no gamma, no color conversion) so 16-bit depth survives exactly.
#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <memory>

#include "pano/dataio.hpp"

namespace pano {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const fs::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw DataError("cannot open " + path.string());
  return f;
}

void on_png_error(png_structp png, png_const_charp msg) {
  auto* text = static_cast<std::string*>(png_get_error_ptr(png));
  if (text) *text = msg;
  png_longjmp(png, 1);
}

void on_png_warning(png_structp, png_const_charp) {}

}  // namespace

PngData read_png(const fs::path& path) {
  FilePtr f = open_file(path, "rb");
  png_byte sig[8];
  if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    throw DataError("not a PNG file: " + path.string());

  std::string err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, on_png_error, on_png_warning);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw DataError("libpng initialization failed");
  }
  PngData out;
  std::vector<png_bytep> rows;
  std::vector<png_byte> buffer;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("PNG decode error in " + path.string() + ": " + err);
  }
  png_init_io(png, f.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_read_update_info(png, info);

  out.width = int(png_get_image_width(png, info));
  out.height = int(png_get_image_height(png, info));
  out.channels = int(png_get_channels(png, info));
  out.bit_depth = int(png_get_bit_depth(png, info));
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  buffer.resize(rowbytes * out.height);
  rows.resize(out.height);
  for (int r = 0; r < out.height; ++r) rows[r] = buffer.data() + rowbytes * r;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  const std::size_t n = std::size_t(out.width) * out.height * out.channels;
  out.samples.resize(n);
  if (out.bit_depth == 16) {
    for (std::size_t i = 0; i < n; ++i)
      out.samples[i] = std::uint16_t((buffer[2 * i] << 8) | buffer[2 * i + 1]);  // PNG is big-endian
  } else {
    for (std::size_t i = 0; i < n; ++i) out.samples[i] = buffer[i];
  }
  return out;
}

std::pair<int, int> png_dimensions(const fs::path& path) {
  FilePtr f = open_file(path, "rb");
  std::uint8_t head[24];
  if (std::fread(head, 1, 24, f.get()) != 24 || png_sig_cmp(head, 0, 8) != 0)
    throw DataError("not a PNG file: " + path.string());
  auto be32 = [&](int off) {
    return int((head[off] << 24) | (head[off + 1] << 16) | (head[off + 2] << 8) | head[off + 3]);
  };
  return {be32(20), be32(16)};
}

void write_png(const fs::path& path, const PngData& img) {
  int color = 0;
  switch (img.channels) {
    case 1: color = PNG_COLOR_TYPE_GRAY; break;
    case 2: color = PNG_COLOR_TYPE_GRAY_ALPHA; break;
    case 3: color = PNG_COLOR_TYPE_RGB; break;
    case 4: color = PNG_COLOR_TYPE_RGB_ALPHA; break;
    default: throw InvalidInput("PNG supports 1 to 4 channels");
  }
  if (img.bit_depth != 8 && img.bit_depth != 16) throw InvalidInput("PNG bit depth must be 8 or 16");
  const std::size_t n = std::size_t(img.width) * img.height * img.channels;
  if (img.samples.size() != n) throw InvalidInput("PNG sample count mismatch");

  const int bytes = img.bit_depth / 8;
  std::vector<png_byte> buffer(n * bytes);
  for (std::size_t i = 0; i < n; ++i) {
    if (bytes == 2) {
      buffer[2 * i] = png_byte(img.samples[i] >> 8);
      buffer[2 * i + 1] = png_byte(img.samples[i] & 0xff);
    } else {
      buffer[i] = png_byte(img.samples[i]);
    }
  }
  std::vector<png_bytep> rows(img.height);
  const std::size_t rowbytes = std::size_t(img.width) * img.channels * bytes;
  for (int r = 0; r < img.height; ++r) rows[r] = buffer.data() + rowbytes * r;

  FilePtr f = open_file(path, "wb");
  std::string err;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, on_png_error, on_png_warning);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, nullptr);
    throw DataError("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("PNG encode error in " + path.string() + ": " + err);
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, png_uint_32(img.width), png_uint_32(img.height), img.bit_depth, color,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  if (std::fflush(f.get()) != 0) throw DataError("write failed: " + path.string());
}

}  // namespace pano
