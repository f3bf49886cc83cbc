#include "endocss/png_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>

#include "endocss/error.hpp"

namespace endocss {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

struct PngReader {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngReader() { png_destroy_read_struct(&png, &info, nullptr); }
};

struct PngWriter {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngWriter() { png_destroy_write_struct(&png, &info); }
};

void read_rows(png_structp png, std::vector<unsigned char>& buf, int height,
               std::size_t stride) {
  std::vector<png_bytep> rows(static_cast<std::size_t>(height));
  for (int y = 0; y < height; ++y) rows[static_cast<std::size_t>(y)] = buf.data() + y * stride;
  png_read_image(png, rows.data());
}

}  // namespace

Image read_image_png(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.string().c_str(), "rb"));
  require(fp != nullptr, "cannot open image file: ", path.string());

  PngReader r;
  r.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  r.info = png_create_info_struct(r.png);
  require(r.png && r.info, "libpng init failed");
  if (setjmp(png_jmpbuf(r.png))) fail("corrupt PNG file: ", path.string());

  png_init_io(r.png, fp.get());
  png_read_info(r.png, r.info);

  const int width = static_cast<int>(png_get_image_width(r.png, r.info));
  const int height = static_cast<int>(png_get_image_height(r.png, r.info));

  // Normalize whatever arrives to 8-bit RGB.
  png_set_expand(r.png);
  png_set_strip_16(r.png);
  png_set_strip_alpha(r.png);
  png_set_gray_to_rgb(r.png);
  png_read_update_info(r.png, r.info);
  require(png_get_channels(r.png, r.info) == 3, "unexpected channel count in ", path.string());

  std::vector<unsigned char> buf(static_cast<std::size_t>(height) * width * 3);
  read_rows(r.png, buf, height, static_cast<std::size_t>(width) * 3);
  png_read_end(r.png, nullptr);

  Image img(height, width);
  for (std::size_t i = 0; i < buf.size(); ++i) img.px[i] = static_cast<float>(buf[i]) / 255.0f;
  return img;
}

void write_image_png(const std::filesystem::path& path, const Image& image) {
  FilePtr fp(std::fopen(path.string().c_str(), "wb"));
  require(fp != nullptr, "cannot write image file: ", path.string());

  PngWriter w;
  w.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  w.info = png_create_info_struct(w.png);
  require(w.png && w.info, "libpng init failed");
  if (setjmp(png_jmpbuf(w.png))) fail("PNG write failed: ", path.string());

  png_init_io(w.png, fp.get());
  png_set_IHDR(w.png, w.info, static_cast<png_uint_32>(image.width),
               static_cast<png_uint_32>(image.height), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(w.png, w.info);

  std::vector<unsigned char> row(static_cast<std::size_t>(image.width) * 3);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        const float v = clamp01(image.at(y, x, c));
        row[static_cast<std::size_t>(x) * 3 + c] =
            static_cast<unsigned char>(std::lround(v * 255.0f));
      }
    }
    png_write_row(w.png, row.data());
  }
  png_write_end(w.png, nullptr);
}

Mask read_mask_png(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.string().c_str(), "rb"));
  require(fp != nullptr, "cannot open mask file: ", path.string());

  PngReader r;
  r.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  r.info = png_create_info_struct(r.png);
  require(r.png && r.info, "libpng init failed");
  if (setjmp(png_jmpbuf(r.png))) fail("corrupt PNG file: ", path.string());

  png_init_io(r.png, fp.get());
  png_read_info(r.png, r.info);

  const int width = static_cast<int>(png_get_image_width(r.png, r.info));
  const int height = static_cast<int>(png_get_image_height(r.png, r.info));
  const int color = png_get_color_type(r.png, r.info);
  require(color == PNG_COLOR_TYPE_GRAY,
          "mask must be single-channel grayscale PNG: ", path.string());

  png_set_expand_gray_1_2_4_to_8(r.png);
  png_set_strip_16(r.png);
  png_read_update_info(r.png, r.info);

  std::vector<unsigned char> buf(static_cast<std::size_t>(height) * width);
  read_rows(r.png, buf, height, static_cast<std::size_t>(width));
  png_read_end(r.png, nullptr);

  Mask mask(height, width);
  for (std::size_t i = 0; i < buf.size(); ++i) mask.v[i] = buf[i];
  return mask;
}

void write_mask_png(const std::filesystem::path& path, const Mask& mask) {
  FilePtr fp(std::fopen(path.string().c_str(), "wb"));
  require(fp != nullptr, "cannot write mask file: ", path.string());

  PngWriter w;
  w.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  w.info = png_create_info_struct(w.png);
  require(w.png && w.info, "libpng init failed");
  if (setjmp(png_jmpbuf(w.png))) fail("PNG write failed: ", path.string());

  png_init_io(w.png, fp.get());
  png_set_IHDR(w.png, w.info, static_cast<png_uint_32>(mask.width),
               static_cast<png_uint_32>(mask.height), 8, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(w.png, w.info);

  std::vector<unsigned char> row(static_cast<std::size_t>(mask.width));
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      const std::int32_t v = mask.at(y, x);
      require(v >= 0 && v <= 255, "mask value out of 8-bit range: ", v);
      row[static_cast<std::size_t>(x)] = static_cast<unsigned char>(v);
    }
    png_write_row(w.png, row.data());
  }
  png_write_end(w.png, nullptr);
}

}  // namespace endocss
