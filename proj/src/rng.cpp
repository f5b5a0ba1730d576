#include "compdiff/rng.hpp"

#include <cmath>
#include <numbers>

namespace compdiff {

std::uint64_t mix64(std::uint64_t x) {
  // splitmix64 finalizer
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t lane_key(std::uint64_t seed, const RngLane& lane) {
  std::uint64_t h = mix64(seed);
  h = mix64(h ^ fnv1a(lane.purpose));
  h = mix64(h ^ static_cast<std::uint64_t>(static_cast<std::int64_t>(lane.timestep)));
  h = mix64(h ^ (static_cast<std::uint64_t>(static_cast<std::int64_t>(lane.segment)) << 1));
  return h;
}

}  // namespace

RngStream::RngStream(std::uint64_t seed, RngLane lane)
    : seed_(seed), lane_(std::move(lane)), engine_(lane_key(seed_, lane_)) {}

double RngStream::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

int RngStream::uniform_int(int lo, int hi) {
  const auto span = static_cast<std::uint64_t>(static_cast<std::int64_t>(hi) - lo + 1);
  return lo + static_cast<int>(engine_() % span);
}

double RngStream::normal() {
  // Box-Muller; std::normal_distribution is implementation-defined.
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = 0.0;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

void RngStream::fill_normal(std::span<double> out) {
  for (auto& v : out) v = normal();
}

ImageGrid RngStream::normal_grid(int height, int width, int channels) {
  ImageGrid g(height, width, channels);
  fill_normal(g.values());
  return g;
}

}  // namespace compdiff
