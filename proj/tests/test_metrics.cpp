#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "compdiff/errors.hpp"
#include "compdiff/metrics.hpp"
#include "compdiff/rng.hpp"

using namespace compdiff;
namespace fs = std::filesystem;

namespace {

SegmentMaskSet halves(int h, int w) {
  std::vector<int> ids(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) ids[static_cast<std::size_t>(y) * w + x] = x < w / 2 ? 1 : 2;
  }
  return build_masks(SegmentLayout(h, w, ids));
}

PatternClassifierArch small_arch() {
  PatternClassifierArch a;
  a.height = 8;
  a.width = 8;
  a.hidden = 6;
  return a;
}

}  // namespace

TEST_CASE("noise estimate") {
  CHECK(noise_estimate(ImageGrid(16, 16, 3, 0.4)) == 0.0);
  SUBCASE("linear ramps are invisible") {
    ImageGrid ramp(16, 16, 3);
    for (int y = 0; y < 16; ++y) {
      for (int x = 0; x < 16; ++x) {
        for (int c = 0; c < 3; ++c) ramp.at(y, x, c) = 0.03 * x - 0.02 * y + 0.1 * c;
      }
    }
    CHECK(noise_estimate(ramp) == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("recovers the std of white noise") {
    RngStream rng(1, RngLane{"noise", 0, 0});
    for (double sigma : {0.05, 0.2}) {
      ImageGrid img = rng.normal_grid(256, 256, 3);
      for (double& v : img.values()) v *= sigma;
      CHECK(std::abs(noise_estimate(img) - sigma) / sigma < 0.05);
    }
  }
  CHECK_THROWS_AS(noise_estimate(ImageGrid(2, 8, 3)), InvalidParameter);
}

TEST_CASE("blending score") {
  const SegmentMaskSet m = halves(8, 8);
  SUBCASE("step edge of height 2 across the seam") {
    ImageGrid img(8, 8, 3);
    for (int y = 0; y < 8; ++y) {
      for (int x = 0; x < 8; ++x) {
        for (int c = 0; c < 3; ++c) img.at(y, x, c) = x < 4 ? -1.0 : 1.0;
      }
    }
    CHECK(blending_score(img, m, 1) == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("flat image") { CHECK(blending_score(ImageGrid(8, 8, 3, 0.3), m, 1) == 0.0); }
  SUBCASE("diagonal ramp uses both directions") {
    ImageGrid img(8, 8, 1);
    for (int y = 0; y < 8; ++y) {
      for (int x = 0; x < 8; ++x) img.at(y, x, 0) = 0.3 * x + 0.4 * y;
    }
    CHECK(blending_score(img, m, 2) == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("single segment has no band") {
    CHECK(blending_score(ImageGrid(8, 8, 3, 0.3), build_masks(SegmentLayout(8, 8, std::vector<int>(64, 1))), 1) == 0.0);
  }
  CHECK_THROWS_AS(blending_score(ImageGrid(4, 4, 3), m, 1), ShapeError);
}

TEST_CASE("pattern classifier contract") {
  const PatternClassifier clf(small_arch(), 2);
  RngStream rng(3, RngLane{"clf", 0, 0});
  const ImageGrid img = rng.normal_grid(8, 8, 3);
  const auto s = clf.score(img);
  REQUIRE(s.size() == 6);
  for (double v : s) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
  CHECK(clf.score_masked(img, BinaryGrid(8, 8, 1)) == s);
  CHECK(clf.score(img) == s);
  CHECK_THROWS_AS(clf.score(ImageGrid(4, 4, 3)), ShapeError);
  CHECK_THROWS_AS(clf.score_masked(img, BinaryGrid(8, 8, 0)), InvalidParameter);

  const fs::path path = fs::temp_directory_path() / "compdiff_test_classifier.cdif";
  persist_classifier(clf, path);
  const PatternClassifier back = load_classifier(path);
  CHECK(back.arch() == clf.arch());
  CHECK(back.score(img) == s);
  fs::remove(path);
}

TEST_CASE("fidelity scores") {
  const PatternClassifier clf(small_arch(), 4);
  RngStream rng(5, RngLane{"fid", 0, 0});
  const ImageGrid img = rng.normal_grid(8, 8, 3);
  const SegmentMaskSet m = halves(8, 8);
  const std::vector<SegmentSpec> specs = {{1, {0, 2}}, {2, {5}}};
  const auto full = clf.score(img);
  const auto left = clf.score_masked(img, m[0]);
  const auto right = clf.score_masked(img, m[1]);
  CHECK(content_fidelity(img, specs, clf) == doctest::Approx(((full[0] + full[2]) / 2 + full[5]) / 2));
  CHECK(spatial_fidelity(img, m, specs, clf) == doctest::Approx(((left[0] + left[2]) / 2 + right[5]) / 2));
  CHECK_THROWS_AS(content_fidelity(img, {{1, {6}}}, clf), ConfigError);

  const MetricsReport r = evaluate_image(img, m, specs, clf, Vocabulary::standard(), 1);
  CHECK(r.content_fidelity == doctest::Approx(content_fidelity(img, specs, clf)));
  CHECK(r.spatial_fidelity == doctest::Approx(spatial_fidelity(img, m, specs, clf)));
  CHECK(r.technical_quality == noise_estimate(img));
  CHECK(r.blending == blending_score(img, m, 1));
  REQUIRE(r.segments.size() == 2);
  CHECK(r.segments[0].tokens == std::vector<std::string>{"stripes-red", "checker-green"});
}

TEST_CASE("report json round trip") {
  MetricsReport r;
  r.content_fidelity = 0.8125;
  r.spatial_fidelity = 0.6;
  r.technical_quality = 0.01;
  r.blending = 0.3;
  r.segments = {{1, {"dots-blue"}, 0.9, 0.7}, {2, {"plain-yellow", "waves-magenta"}, 0.5, 0.25}};
  r.seed = 17;
  r.kappa = 40.0;
  r.mode = "per-segment";
  const std::string text = report_to_json(r);
  CHECK(report_from_json(text) == r);
  CHECK(text.find("\"aesthetic_quality\": null") != std::string::npos);
  CHECK_THROWS_AS(report_from_json("{\"content_fidelity\": "), ParseError);
}
