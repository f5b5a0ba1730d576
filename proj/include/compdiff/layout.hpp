#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "compdiff/image_grid.hpp"
#include "compdiff/png_io.hpp"

namespace compdiff {

inline constexpr int kMaxSegments = 16;

// Free-form partition of the image. Ids are normalized to 1..n by first occurrence in
// row-major scan order.
class SegmentLayout {
 public:
  SegmentLayout(int height, int width, std::vector<int> ids);

  int height() const { return height_; }
  int width() const { return width_; }
  int segment_count() const { return count_; }
  int id_at(int y, int x) const { return ids_[static_cast<std::size_t>(y) * width_ + x]; }
  const std::vector<int>& ids() const { return ids_; }

  bool operator==(const SegmentLayout&) const = default;

 private:
  int height_;
  int width_;
  int count_ = 0;
  std::vector<int> ids_;
};

// Rows of whitespace-separated integers. Any integer labels are accepted.
SegmentLayout parse_layout_text(std::string_view text);
// Each distinct RGB color is one segment.
SegmentLayout parse_layout_image(const RgbImage& image);
// Dispatches on extension: .png is an image, anything else a text grid.
SegmentLayout parse_layout_file(const std::filesystem::path& path);

// Original label of each normalized id (index id - 1): the integer as written for text
// layouts, "#rrggbb" for image layouts.
std::vector<std::string> layout_file_labels(const std::filesystem::path& path);

std::string layout_to_text(const SegmentLayout& layout);
RgbImage render_layout_image(const SegmentLayout& layout);

class SegmentMaskSet {
 public:
  SegmentMaskSet() = default;
  // Validates the one-hot partition property; throws ValidationError otherwise.
  explicit SegmentMaskSet(std::vector<BinaryGrid> masks);

  std::size_t size() const { return masks_.size(); }
  int height() const { return masks_.front().height(); }
  int width() const { return masks_.front().width(); }
  const BinaryGrid& operator[](std::size_t i) const { return masks_[i]; }
  const std::vector<BinaryGrid>& masks() const { return masks_; }

  // Segment index (0-based) owning each pixel.
  std::vector<int> owner_grid() const;

 private:
  std::vector<BinaryGrid> masks_;
};

void validate_one_hot(const std::vector<BinaryGrid>& masks);

SegmentMaskSet build_masks(const SegmentLayout& layout);

// Per-segment condition. `segment` is the 1-based layout id.
struct SegmentSpec {
  int segment = 0;
  std::vector<int> tokens;
  std::optional<BinaryGrid> control;
  std::optional<ImageGrid> reference;
  std::optional<ImageGrid> scaffold;  // overrides the run-wide scaffold image

  bool operator==(const SegmentSpec&) const = default;
};

// Pixels within Chebyshev distance `radius` of a pixel owned by a different segment.
BinaryGrid boundary_band(const SegmentMaskSet& masks, int radius);

}  // namespace compdiff
