#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "compdiff/image_grid.hpp"

namespace compdiff {

// Content tokens as a multi-hot vector plus an optional {0,1} control map.
// An all-zero (or empty) multi-hot is the unconditional condition.
struct Condition {
  std::vector<std::uint8_t> tokens;
  std::optional<BinaryGrid> control;

  static Condition unconditional(int vocabulary) {
    return Condition{std::vector<std::uint8_t>(static_cast<std::size_t>(vocabulary), 0), std::nullopt};
  }
  static Condition from_ids(int vocabulary, const std::vector<int>& ids);

  bool has_tokens() const;
  std::vector<int> token_ids() const;
  // Same control map, tokens dropped.
  Condition without_tokens() const;
  Condition without_control() const { return Condition{tokens, std::nullopt}; }

  bool operator==(const Condition&) const = default;
};

Condition union_condition(int vocabulary, const std::vector<Condition>& parts);

// Pure epsilon-prediction interface. Implementations must be deterministic and free of
// hidden mutable state so that calls may run concurrently.
class Denoiser {
 public:
  virtual ~Denoiser() = default;

  virtual ImageGrid predict_eps(const ImageGrid& x_t, int t, const Condition& cond) const = 0;
  virtual bool accepts_control() const = 0;
  virtual int vocabulary_size() const = 0;
};

// Checks a condition against a denoiser's declared support.
void check_condition(const Denoiser& denoiser, const Condition& cond, const ImageGrid& x);

// Classifier-free guided epsilon. The unconditional branch keeps the control map.
ImageGrid guided_eps(const Denoiser& denoiser, const ImageGrid& x_t, int t, const Condition& cond,
                     double guidance_scale);

}  // namespace compdiff
