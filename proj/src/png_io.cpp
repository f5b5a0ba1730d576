#include "compdiff/png_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "compdiff/errors.hpp"

namespace compdiff {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

std::uint8_t encode_pixel(double v) {
  const double c = std::clamp(v, -1.0, 1.0);
  return static_cast<std::uint8_t>(std::lround((c + 1.0) / 2.0 * 255.0));
}

double decode_pixel(std::uint8_t v) { return static_cast<double>(v) / 255.0 * 2.0 - 1.0; }

RgbImage read_png_rgb(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.string().c_str(), "rb"));
  if (!fp) throw ConfigError("cannot open image '" + path.string() + "'");
  png_byte header[8] = {};
  if (std::fread(header, 1, 8, fp.get()) != 8 || png_sig_cmp(header, 0, 8) != 0) {
    throw ParseError("'" + path.string() + "' is not a PNG file");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error("libpng initialisation failed");
  }
  RgbImage img;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ParseError("corrupt PNG '" + path.string() + "'");
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const png_byte color = png_get_color_type(png, info);
  const png_byte depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  img.width = static_cast<int>(png_get_image_width(png, info));
  img.height = static_cast<int>(png_get_image_height(png, info));
  if (png_get_rowbytes(png, info) != static_cast<std::size_t>(img.width) * 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ParseError("unsupported PNG layout in '" + path.string() + "'");
  }
  img.pixels.resize(static_cast<std::size_t>(img.width) * img.height * 3);
  rows.resize(static_cast<std::size_t>(img.height));
  for (int y = 0; y < img.height; ++y) {
    rows[static_cast<std::size_t>(y)] = img.pixels.data() + static_cast<std::size_t>(y) * img.width * 3;
  }
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void write_png_rgb(const RgbImage& image, const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.string().c_str(), "wb"));
  if (!fp) throw Error("cannot open '" + path.string() + "' for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw Error("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error("failed writing PNG '" + path.string() + "'");
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width),
               static_cast<png_uint_32>(image.height), 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(static_cast<std::size_t>(image.height));
  for (int y = 0; y < image.height; ++y) {
    rows[static_cast<std::size_t>(y)] =
        const_cast<png_bytep>(image.pixels.data() + static_cast<std::size_t>(y) * image.width * 3);
  }
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

RgbImage grid_to_rgb(const ImageGrid& grid) {
  if (grid.channels() != 1 && grid.channels() != 3) {
    throw ShapeError("PNG export supports 1 or 3 channels");
  }
  RgbImage img{grid.height(), grid.width(), {}};
  img.pixels.resize(static_cast<std::size_t>(grid.height()) * grid.width() * 3);
  std::size_t k = 0;
  for (int y = 0; y < grid.height(); ++y) {
    for (int x = 0; x < grid.width(); ++x) {
      for (int c = 0; c < 3; ++c) {
        img.pixels[k++] = encode_pixel(grid.at(y, x, grid.channels() == 1 ? 0 : c));
      }
    }
  }
  return img;
}

ImageGrid rgb_to_grid(const RgbImage& image) {
  ImageGrid g(image.height, image.width, 3, 0.0, GridDomain::kData);
  auto v = g.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = decode_pixel(image.pixels[i]);
  return g;
}

void write_grid_png(const ImageGrid& grid, const std::filesystem::path& path) {
  write_png_rgb(grid_to_rgb(grid), path);
}

ImageGrid read_grid_png(const std::filesystem::path& path) { return rgb_to_grid(read_png_rgb(path)); }

ImageGrid hstack(const std::vector<ImageGrid>& grids) {
  if (grids.empty()) throw InvalidParameter("hstack of zero grids");
  const auto& first = grids.front();
  ImageGrid out(first.height(), first.width() * static_cast<int>(grids.size()), first.channels());
  for (std::size_t i = 0; i < grids.size(); ++i) {
    require_same_shape(first, grids[i], "hstack");
    for (int y = 0; y < first.height(); ++y) {
      for (int x = 0; x < first.width(); ++x) {
        for (int c = 0; c < first.channels(); ++c) {
          out.at(y, static_cast<int>(i) * first.width() + x, c) = grids[i].at(y, x, c);
        }
      }
    }
  }
  return out;
}

}  // namespace compdiff
