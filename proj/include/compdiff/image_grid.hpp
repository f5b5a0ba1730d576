#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace compdiff {

enum class GridDomain { kData, kDiffusion };

// H x W x C real-valued sample stored row-major with interleaved channels.
class ImageGrid {
 public:
  ImageGrid() = default;
  ImageGrid(int height, int width, int channels, double fill = 0.0,
            GridDomain domain = GridDomain::kDiffusion);
  ImageGrid(int height, int width, int channels, std::vector<double> data,
            GridDomain domain = GridDomain::kDiffusion);

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  std::size_t size() const { return data_.size(); }
  GridDomain domain() const { return domain_; }
  void set_domain(GridDomain d) { domain_ = d; }

  double& at(int y, int x, int c) { return data_[index(y, x, c)]; }
  double at(int y, int x, int c) const { return data_[index(y, x, c)]; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  bool same_shape(const ImageGrid& other) const {
    return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
  }

  bool operator==(const ImageGrid& other) const {
    return same_shape(other) && data_ == other.data_;
  }

 private:
  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
  GridDomain domain_ = GridDomain::kDiffusion;
};

// H x W grid of {0,1}.
class BinaryGrid {
 public:
  BinaryGrid() = default;
  BinaryGrid(int height, int width, std::uint8_t fill = 0);

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return data_.size(); }

  std::uint8_t& at(int y, int x) { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  std::uint8_t at(int y, int x) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  std::span<std::uint8_t> values() { return data_; }
  std::span<const std::uint8_t> values() const { return data_; }

  std::size_t count() const;
  BinaryGrid complement() const;

  bool operator==(const BinaryGrid&) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> data_;
};

void require_same_shape(const ImageGrid& a, const ImageGrid& b, std::string_view op);
void require_mask_shape(const ImageGrid& a, const BinaryGrid& m, std::string_view op);

// Throws NumericError naming the operation and timestep on the first non-finite value.
void require_finite(const ImageGrid& g, std::string_view op, int timestep);

// out = inside * m + outside * (1 - m), per pixel across channels (selection, so exact).
ImageGrid masked_blend(const ImageGrid& inside, const ImageGrid& outside, const BinaryGrid& mask);

}  // namespace compdiff
