#include "compdiff/image_grid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "compdiff/errors.hpp"

namespace compdiff {

ImageGrid::ImageGrid(int height, int width, int channels, double fill, GridDomain domain)
    : ImageGrid(height, width, channels,
                std::vector<double>(static_cast<std::size_t>(std::max(height, 0)) *
                                        std::max(width, 0) * std::max(channels, 0),
                                    fill),
                domain) {}

ImageGrid::ImageGrid(int height, int width, int channels, std::vector<double> data,
                     GridDomain domain)
    : height_(height), width_(width), channels_(channels), data_(std::move(data)), domain_(domain) {
  if (height <= 0 || width <= 0 || channels <= 0) {
    throw InvalidParameter("ImageGrid dimensions must be positive");
  }
  if (data_.size() != static_cast<std::size_t>(height) * width * channels) {
    throw ShapeError("ImageGrid data length " + std::to_string(data_.size()) +
                     " does not match " + std::to_string(height) + "x" + std::to_string(width) +
                     "x" + std::to_string(channels));
  }
}

BinaryGrid::BinaryGrid(int height, int width, std::uint8_t fill)
    : height_(height), width_(width) {
  if (height <= 0 || width <= 0) throw InvalidParameter("BinaryGrid dimensions must be positive");
  data_.assign(static_cast<std::size_t>(height) * width, fill ? 1 : 0);
}

std::size_t BinaryGrid::count() const {
  return static_cast<std::size_t>(std::count(data_.begin(), data_.end(), std::uint8_t{1}));
}

BinaryGrid BinaryGrid::complement() const {
  BinaryGrid out = *this;
  for (auto& v : out.data_) v = v ? 0 : 1;
  return out;
}

void require_same_shape(const ImageGrid& a, const ImageGrid& b, std::string_view op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch (" + std::to_string(a.height()) + "x" +
                     std::to_string(a.width()) + "x" + std::to_string(a.channels()) + " vs " +
                     std::to_string(b.height()) + "x" + std::to_string(b.width()) + "x" +
                     std::to_string(b.channels()) + ")");
  }
}

void require_mask_shape(const ImageGrid& a, const BinaryGrid& m, std::string_view op) {
  if (a.height() != m.height() || a.width() != m.width()) {
    throw ShapeError(std::string(op) + ": mask is " + std::to_string(m.height()) + "x" +
                     std::to_string(m.width()) + ", image is " + std::to_string(a.height()) +
                     "x" + std::to_string(a.width()));
  }
}

void require_finite(const ImageGrid& g, std::string_view op, int timestep) {
  for (double v : g.values()) {
    if (!std::isfinite(v)) {
      throw NumericError("non-finite value produced by " + std::string(op) + " at timestep " +
                         std::to_string(timestep));
    }
  }
}

ImageGrid masked_blend(const ImageGrid& inside, const ImageGrid& outside, const BinaryGrid& mask) {
  require_same_shape(inside, outside, "masked_blend");
  require_mask_shape(inside, mask, "masked_blend");
  ImageGrid out(inside.height(), inside.width(), inside.channels(), 0.0, inside.domain());
  auto in = inside.values();
  auto bg = outside.values();
  auto dst = out.values();
  const auto m = mask.values();
  const std::size_t c = static_cast<std::size_t>(inside.channels());
  for (std::size_t p = 0; p < m.size(); ++p) {
    const auto& src = m[p] ? in : bg;
    for (std::size_t k = 0; k < c; ++k) dst[p * c + k] = src[p * c + k];
  }
  return out;
}

}  // namespace compdiff
