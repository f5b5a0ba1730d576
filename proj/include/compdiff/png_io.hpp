#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "compdiff/image_grid.hpp"

namespace compdiff {

struct RgbImage {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;  // row-major RGB triplets
};

RgbImage read_png_rgb(const std::filesystem::path& path);
void write_png_rgb(const RgbImage& image, const std::filesystem::path& path);

// v in [-1,1] is clamped and mapped to round((v + 1) / 2 * 255).
std::uint8_t encode_pixel(double v);
double decode_pixel(std::uint8_t v);

// Grids with 1 channel are replicated to gray; 3 channels map directly.
RgbImage grid_to_rgb(const ImageGrid& grid);
ImageGrid rgb_to_grid(const RgbImage& image);

void write_grid_png(const ImageGrid& grid, const std::filesystem::path& path);
ImageGrid read_grid_png(const std::filesystem::path& path);

// Horizontal strip of equally sized grids.
ImageGrid hstack(const std::vector<ImageGrid>& grids);

}  // namespace compdiff
