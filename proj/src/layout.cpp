#include "compdiff/layout.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "compdiff/errors.hpp"

namespace compdiff {

namespace {

template <typename Key>
std::vector<int> normalize_ids(const std::vector<Key>& raw) {
  std::map<Key, int> assigned;
  std::vector<int> out;
  out.reserve(raw.size());
  for (const auto& k : raw) {
    auto it = assigned.find(k);
    if (it == assigned.end()) {
      const int next = static_cast<int>(assigned.size()) + 1;
      if (next > kMaxSegments) {
        throw ParseError("too many segments: layout has more than " + std::to_string(kMaxSegments) +
                         " distinct ids");
      }
      it = assigned.emplace(k, next).first;
    }
    out.push_back(it->second);
  }
  return out;
}

}  // namespace

SegmentLayout::SegmentLayout(int height, int width, std::vector<int> ids)
    : height_(height), width_(width) {
  if (height <= 0 || width <= 0) throw ParseError("layout is empty");
  if (ids.size() != static_cast<std::size_t>(height) * width) {
    throw ParseError("layout id grid does not match its dimensions");
  }
  ids_ = normalize_ids(ids);
  count_ = *std::max_element(ids_.begin(), ids_.end());
}

SegmentLayout parse_layout_text(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::vector<long long> values;
  int width = -1;
  int height = 0;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream row(line);
    std::vector<long long> cells;
    std::string tok;
    while (row >> tok) {
      std::size_t used = 0;
      long long v = 0;
      try {
        v = std::stoll(tok, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != tok.size()) {
        throw ParseError("layout line " + std::to_string(line_no) + ": '" + tok +
                         "' is not an integer");
      }
      cells.push_back(v);
    }
    if (cells.empty()) continue;
    if (width < 0) {
      width = static_cast<int>(cells.size());
    } else if (static_cast<int>(cells.size()) != width) {
      throw ParseError("ragged layout: line " + std::to_string(line_no) + " has " +
                       std::to_string(cells.size()) + " cells, expected " + std::to_string(width));
    }
    values.insert(values.end(), cells.begin(), cells.end());
    ++height;
  }
  if (height == 0) throw ParseError("layout is empty");
  std::vector<int> ids = normalize_ids(values);
  return SegmentLayout(height, width, std::move(ids));
}

SegmentLayout parse_layout_image(const RgbImage& image) {
  if (image.height <= 0 || image.width <= 0 || image.pixels.empty()) {
    throw ParseError("layout image is empty");
  }
  std::vector<std::array<std::uint8_t, 3>> colors;
  colors.reserve(static_cast<std::size_t>(image.height) * image.width);
  for (std::size_t i = 0; i + 2 < image.pixels.size(); i += 3) {
    colors.push_back({image.pixels[i], image.pixels[i + 1], image.pixels[i + 2]});
  }
  return SegmentLayout(image.height, image.width, normalize_ids(colors));
}

SegmentLayout parse_layout_file(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw ConfigError("layout file '" + path.string() + "' does not exist");
  }
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".png") return parse_layout_image(read_png_rgb(path));
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_layout_text(ss.str());
}

std::vector<std::string> layout_file_labels(const std::filesystem::path& path) {
  const SegmentLayout layout = parse_layout_file(path);
  std::vector<std::string> labels(static_cast<std::size_t>(layout.segment_count()));
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".png") {
    const RgbImage img = read_png_rgb(path);
    for (std::size_t p = 0; p < layout.ids().size(); ++p) {
      auto& label = labels[static_cast<std::size_t>(layout.ids()[p] - 1)];
      if (!label.empty()) continue;
      char buf[8];
      std::snprintf(buf, sizeof buf, "#%02x%02x%02x", img.pixels[3 * p], img.pixels[3 * p + 1],
                    img.pixels[3 * p + 2]);
      label = buf;
    }
  } else {
    std::ifstream in(path);
    std::string tok;
    std::size_t p = 0;
    while (in >> tok && p < layout.ids().size()) {
      auto& label = labels[static_cast<std::size_t>(layout.ids()[p++] - 1)];
      if (label.empty()) label = std::to_string(std::stoll(tok));
    }
  }
  return labels;
}

std::string layout_to_text(const SegmentLayout& layout) {
  std::string out;
  for (int y = 0; y < layout.height(); ++y) {
    for (int x = 0; x < layout.width(); ++x) {
      if (x) out += ' ';
      out += std::to_string(layout.id_at(y, x));
    }
    out += '\n';
  }
  return out;
}

RgbImage render_layout_image(const SegmentLayout& layout) {
  static constexpr std::array<std::array<std::uint8_t, 3>, kMaxSegments> kPalette{{
      {230, 25, 75},  {60, 180, 75},   {255, 225, 25}, {0, 130, 200},
      {245, 130, 48}, {145, 30, 180},  {70, 240, 240}, {240, 50, 230},
      {210, 245, 60}, {250, 190, 212}, {0, 128, 128},  {220, 190, 255},
      {170, 110, 40}, {255, 250, 200}, {128, 0, 0},    {0, 0, 128},
  }};
  RgbImage img{layout.height(), layout.width(), {}};
  img.pixels.reserve(static_cast<std::size_t>(layout.height()) * layout.width() * 3);
  for (int id : layout.ids()) {
    const auto& c = kPalette[static_cast<std::size_t>(id - 1)];
    img.pixels.insert(img.pixels.end(), c.begin(), c.end());
  }
  return img;
}

void validate_one_hot(const std::vector<BinaryGrid>& masks) {
  if (masks.empty()) throw ValidationError("mask set is empty");
  const int h = masks.front().height();
  const int w = masks.front().width();
  for (std::size_t i = 0; i < masks.size(); ++i) {
    if (masks[i].height() != h || masks[i].width() != w) {
      throw ValidationError("mask " + std::to_string(i + 1) + " has a different size");
    }
    if (masks[i].count() == 0) {
      throw ValidationError("segment " + std::to_string(i + 1) + " is empty");
    }
  }
  for (std::size_t p = 0; p < masks.front().size(); ++p) {
    int sum = 0;
    for (const auto& m : masks) sum += m.values()[p];
    if (sum != 1) {
      const int y = static_cast<int>(p) / w;
      const int x = static_cast<int>(p) % w;
      throw ValidationError("masks are not one-hot at pixel (" + std::to_string(y) + ", " +
                            std::to_string(x) + "): coverage " + std::to_string(sum));
    }
  }
}

SegmentMaskSet::SegmentMaskSet(std::vector<BinaryGrid> masks) : masks_(std::move(masks)) {
  validate_one_hot(masks_);
}

std::vector<int> SegmentMaskSet::owner_grid() const {
  std::vector<int> owner(masks_.front().size(), -1);
  for (std::size_t i = 0; i < masks_.size(); ++i) {
    const auto v = masks_[i].values();
    for (std::size_t p = 0; p < v.size(); ++p) {
      if (v[p]) owner[p] = static_cast<int>(i);
    }
  }
  return owner;
}

SegmentMaskSet build_masks(const SegmentLayout& layout) {
  std::vector<BinaryGrid> masks;
  masks.reserve(static_cast<std::size_t>(layout.segment_count()));
  for (int id = 1; id <= layout.segment_count(); ++id) {
    BinaryGrid m(layout.height(), layout.width());
    auto v = m.values();
    for (std::size_t p = 0; p < v.size(); ++p) v[p] = layout.ids()[p] == id ? 1 : 0;
    masks.push_back(std::move(m));
  }
  return SegmentMaskSet(std::move(masks));
}

BinaryGrid boundary_band(const SegmentMaskSet& masks, int radius) {
  if (radius < 1) throw InvalidParameter("boundary band radius must be >= 1");
  const int h = masks.height();
  const int w = masks.width();
  const auto owner = masks.owner_grid();
  BinaryGrid band(h, w);
  if (masks.size() < 2) return band;
  // In the band iff the (2r+1)^2 window contains a foreign owner.
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int self = owner[static_cast<std::size_t>(y) * w + x];
      const int y0 = std::max(0, y - radius), y1 = std::min(h - 1, y + radius);
      const int x0 = std::max(0, x - radius), x1 = std::min(w - 1, x + radius);
      bool hit = false;
      for (int yy = y0; yy <= y1 && !hit; ++yy) {
        for (int xx = x0; xx <= x1; ++xx) {
          if (owner[static_cast<std::size_t>(yy) * w + xx] != self) {
            hit = true;
            break;
          }
        }
      }
      band.at(y, x) = hit ? 1 : 0;
    }
  }
  return band;
}

}  // namespace compdiff
