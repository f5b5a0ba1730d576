#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>

#include "compdiff/image_grid.hpp"

namespace compdiff {

// Identifies an independent random stream: (purpose, timestep, segment).
struct RngLane {
  std::string purpose;
  int timestep = 0;
  int segment = 0;
};

// Deterministic stream keyed by (seed, lane). Two streams with equal keys produce
// identical draws; streams with different keys are statistically independent.
class RngStream {
 public:
  RngStream(std::uint64_t seed, RngLane lane);

  std::uint64_t seed() const { return seed_; }
  const RngLane& lane() const { return lane_; }

  // Sibling stream with the same seed and a different lane.
  RngStream at(std::string purpose, int timestep, int segment) const {
    return RngStream(seed_, RngLane{std::move(purpose), timestep, segment});
  }
  // Child stream whose purpose is nested under this one.
  RngStream fork(const std::string& sub_purpose) const {
    return RngStream(seed_, RngLane{lane_.purpose + "/" + sub_purpose, lane_.timestep, lane_.segment});
  }

  std::uint64_t next_u64() { return engine_(); }
  // Uniform in [0, 1) with 53 bits of resolution.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Integer in [lo, hi].
  int uniform_int(int lo, int hi);
  double normal();
  void fill_normal(std::span<double> out);

  ImageGrid normal_grid(int height, int width, int channels);

 private:
  std::uint64_t seed_;
  RngLane lane_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t mix64(std::uint64_t x);

}  // namespace compdiff
