#pragma once

#include <array>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "compdiff/image_grid.hpp"
#include "compdiff/layout.hpp"
#include "compdiff/rng.hpp"

namespace compdiff {

enum class PatternKind { kStripes, kDots, kChecker, kPlain, kDiagonal, kWaves };

// Procedural stand-in for a segment description.
struct PatternToken {
  int id = 0;
  std::string name;
  PatternKind kind = PatternKind::kPlain;
  std::array<double, 3> color{};  // foreground RGB in [-1, 1]
  int period = 0;                 // pixels; 0 for plain patterns
};

class Vocabulary {
 public:
  explicit Vocabulary(std::vector<PatternToken> tokens);
  // stripes-red, dots-blue, checker-green, plain-yellow, diagonal-cyan, waves-magenta
  static Vocabulary standard();
  // First `n` entries of the standard vocabulary.
  static Vocabulary standard(int n);

  int size() const { return static_cast<int>(tokens_.size()); }
  const PatternToken& at(int id) const;
  const PatternToken& by_name(std::string_view name) const;
  const std::vector<PatternToken>& tokens() const { return tokens_; }
  std::vector<std::string> names() const;

 private:
  std::vector<PatternToken> tokens_;
};

inline constexpr double kColorJitter = 0.05;

struct PatternRender {
  ImageGrid image;     // H x W x 3 in [-1, 1]
  BinaryGrid structure;  // 1 where the pattern's foreground ink is
};

// Consumes a fixed number of draws from `rng`, so that renders are reproducible.
PatternRender render_pattern(const PatternToken& token, int height, int width, RngStream& rng);
ImageGrid gen_pattern(const PatternToken& token, int height, int width, RngStream& rng);

struct CompositeRender {
  ImageGrid image;
  BinaryGrid structure;
};

// Hard paste of each segment's pattern, segments rendered in id order from one stream.
CompositeRender render_composite(const SegmentLayout& layout,
                                 const std::map<int, PatternToken>& assignments, RngStream& rng);
ImageGrid gen_composite_ground_truth(const SegmentLayout& layout,
                                     const std::map<int, PatternToken>& assignments,
                                     RngStream& rng);

// Random free-form partition (Voronoi cells or straight splits) with `segments` ids.
SegmentLayout random_layout(int height, int width, int segments, RngStream& rng);

}  // namespace compdiff
