#include "compdiff/patterns.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "compdiff/errors.hpp"

namespace compdiff {

Vocabulary::Vocabulary(std::vector<PatternToken> tokens) : tokens_(std::move(tokens)) {
  std::set<std::string> seen;
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (tokens_[i].id != static_cast<int>(i)) throw ConfigError("token ids must be 0..n-1 in order");
    if (!seen.insert(tokens_[i].name).second) {
      throw ConfigError("duplicate token name '" + tokens_[i].name + "'");
    }
  }
}

Vocabulary Vocabulary::standard() {
  return Vocabulary({
      {0, "stripes-red", PatternKind::kStripes, {0.9, -0.8, -0.8}, 8},
      {1, "dots-blue", PatternKind::kDots, {-0.8, -0.5, 0.95}, 8},
      {2, "checker-green", PatternKind::kChecker, {-0.8, 0.85, -0.8}, 8},
      {3, "plain-yellow", PatternKind::kPlain, {0.9, 0.85, -0.8}, 0},
      {4, "diagonal-cyan", PatternKind::kDiagonal, {-0.8, 0.85, 0.9}, 8},
      {5, "waves-magenta", PatternKind::kWaves, {0.9, -0.8, 0.85}, 8},
  });
}

Vocabulary Vocabulary::standard(int n) {
  auto all = standard().tokens();
  if (n < 1 || n > static_cast<int>(all.size())) {
    throw ConfigError("standard vocabulary has " + std::to_string(all.size()) + " tokens");
  }
  all.resize(static_cast<std::size_t>(n));
  return Vocabulary(std::move(all));
}

const PatternToken& Vocabulary::at(int id) const {
  if (id < 0 || id >= size()) throw LookupError("unknown token id " + std::to_string(id));
  return tokens_[static_cast<std::size_t>(id)];
}

const PatternToken& Vocabulary::by_name(std::string_view name) const {
  for (const auto& t : tokens_) {
    if (t.name == name) return t;
  }
  throw LookupError("unknown token '" + std::string(name) + "'");
}

std::vector<std::string> Vocabulary::names() const {
  std::vector<std::string> out;
  for (const auto& t : tokens_) out.push_back(t.name);
  return out;
}

namespace {

int positive_mod(int a, int m) { return ((a % m) + m) % m; }

}  // namespace

PatternRender render_pattern(const PatternToken& token, int height, int width, RngStream& rng) {
  // Fixed draw budget: phase x, phase y, scale, three color offsets.
  const double u_px = rng.uniform();
  const double u_py = rng.uniform();
  const double u_scale = rng.uniform();
  std::array<double, 3> jitter{};
  for (auto& j : jitter) j = rng.uniform(-kColorJitter, kColorJitter);

  const int period = std::max(token.period, 1);
  const int px = static_cast<int>(u_px * period);
  const int py = static_cast<int>(u_py * period);
  std::array<double, 3> fg{};
  std::array<double, 3> bg{};
  for (int c = 0; c < 3; ++c) {
    fg[static_cast<std::size_t>(c)] = token.color[static_cast<std::size_t>(c)] + jitter[static_cast<std::size_t>(c)];
    bg[static_cast<std::size_t>(c)] = 0.2 * token.color[static_cast<std::size_t>(c)] - 0.55 +
                                      jitter[static_cast<std::size_t>(c)];
  }

  PatternRender out{ImageGrid(height, width, 3, 0.0, GridDomain::kData), BinaryGrid(height, width)};
  const int half = period / 2;
  const double dot_radius = 1.8 + 0.8 * u_scale;
  const double center = (period - 1) / 2.0;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double mix = 0.0;  // 0 = background, 1 = foreground
      switch (token.kind) {
        case PatternKind::kPlain:
          mix = 1.0;
          break;
        case PatternKind::kStripes:
          mix = positive_mod(x + px, period) < half ? 1.0 : 0.0;
          break;
        case PatternKind::kDiagonal:
          mix = positive_mod(x + y + px, period) < half ? 1.0 : 0.0;
          break;
        case PatternKind::kChecker:
          mix = ((positive_mod(x + px, period) < half) != (positive_mod(y + py, period) < half)) ? 1.0 : 0.0;
          break;
        case PatternKind::kDots: {
          const double dx = positive_mod(x + px, period) - center;
          const double dy = positive_mod(y + py, period) - center;
          mix = std::hypot(dx, dy) <= dot_radius ? 1.0 : 0.0;
          break;
        }
        case PatternKind::kWaves:
          mix = 0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * (y + py) / period);
          break;
      }
      for (int c = 0; c < 3; ++c) {
        const auto k = static_cast<std::size_t>(c);
        out.image.at(y, x, c) = bg[k] + mix * (fg[k] - bg[k]);
      }
      const bool ink = token.kind != PatternKind::kPlain && mix > 0.5;
      out.structure.at(y, x) = ink ? 1 : 0;
    }
  }
  return out;
}

ImageGrid gen_pattern(const PatternToken& token, int height, int width, RngStream& rng) {
  return render_pattern(token, height, width, rng).image;
}

CompositeRender render_composite(const SegmentLayout& layout,
                                 const std::map<int, PatternToken>& assignments, RngStream& rng) {
  for (int id = 1; id <= layout.segment_count(); ++id) {
    if (!assignments.contains(id)) {
      throw ConfigError("unassigned segment " + std::to_string(id) + " in composite layout");
    }
  }
  const int h = layout.height();
  const int w = layout.width();
  CompositeRender out{ImageGrid(h, w, 3, 0.0, GridDomain::kData), BinaryGrid(h, w)};
  for (int id = 1; id <= layout.segment_count(); ++id) {
    const PatternRender r = render_pattern(assignments.at(id), h, w, rng);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (layout.id_at(y, x) != id) continue;
        for (int c = 0; c < 3; ++c) out.image.at(y, x, c) = r.image.at(y, x, c);
        out.structure.at(y, x) = r.structure.at(y, x);
      }
    }
  }
  return out;
}

ImageGrid gen_composite_ground_truth(const SegmentLayout& layout,
                                     const std::map<int, PatternToken>& assignments,
                                     RngStream& rng) {
  return render_composite(layout, assignments, rng).image;
}

SegmentLayout random_layout(int height, int width, int segments, RngStream& rng) {
  if (segments < 1 || segments > kMaxSegments) throw InvalidParameter("segment count out of range");
  std::vector<int> ids(static_cast<std::size_t>(height) * width, 1);
  if (segments == 1) return SegmentLayout(height, width, std::move(ids));

  const bool straight = rng.uniform() < 0.3;
  const bool vertical = rng.uniform() < 0.5;
  if (straight) {
    const int extent = vertical ? width : height;
    if (segments > extent) throw InvalidParameter("too many segments for a straight split");
    std::set<int> cuts;
    while (static_cast<int>(cuts.size()) < segments - 1) cuts.insert(rng.uniform_int(1, extent - 1));
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        const int pos = vertical ? x : y;
        int id = 1;
        for (int c : cuts) id += pos >= c ? 1 : 0;
        ids[static_cast<std::size_t>(y) * width + x] = id;
      }
    }
  } else {
    std::vector<std::pair<int, int>> sites;
    while (static_cast<int>(sites.size()) < segments) {
      std::pair<int, int> s{rng.uniform_int(0, height - 1), rng.uniform_int(0, width - 1)};
      if (std::find(sites.begin(), sites.end(), s) == sites.end()) sites.push_back(s);
    }
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        int best = 0;
        int best_d = 1 << 30;
        for (std::size_t k = 0; k < sites.size(); ++k) {
          const int dy = y - sites[k].first;
          const int dx = x - sites[k].second;
          const int d = dx * dx + dy * dy;
          if (d < best_d) {
            best_d = d;
            best = static_cast<int>(k);
          }
        }
        ids[static_cast<std::size_t>(y) * width + x] = best + 1;
      }
    }
  }
  return SegmentLayout(height, width, std::move(ids));
}

}  // namespace compdiff
