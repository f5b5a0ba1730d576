#include "compdiff/denoiser.hpp"

#include <algorithm>
#include <string>

#include "compdiff/errors.hpp"
#include "compdiff/schedule.hpp"

namespace compdiff {

Condition Condition::from_ids(int vocabulary, const std::vector<int>& ids) {
  Condition c = unconditional(vocabulary);
  for (int id : ids) {
    if (id < 0 || id >= vocabulary) {
      throw LookupError("token id " + std::to_string(id) + " outside vocabulary of size " +
                        std::to_string(vocabulary));
    }
    c.tokens[static_cast<std::size_t>(id)] = 1;
  }
  return c;
}

bool Condition::has_tokens() const {
  return std::any_of(tokens.begin(), tokens.end(), [](std::uint8_t v) { return v != 0; });
}

std::vector<int> Condition::token_ids() const {
  std::vector<int> ids;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i]) ids.push_back(static_cast<int>(i));
  }
  return ids;
}

Condition Condition::without_tokens() const {
  return Condition{std::vector<std::uint8_t>(tokens.size(), 0), control};
}

Condition union_condition(int vocabulary, const std::vector<Condition>& parts) {
  Condition out = Condition::unconditional(vocabulary);
  for (const auto& p : parts) {
    for (int id : p.token_ids()) {
      if (id >= vocabulary) throw LookupError("token id outside vocabulary");
      out.tokens[static_cast<std::size_t>(id)] = 1;
    }
  }
  return out;
}

void check_condition(const Denoiser& denoiser, const Condition& cond, const ImageGrid& x) {
  if (!cond.tokens.empty() && static_cast<int>(cond.tokens.size()) != denoiser.vocabulary_size()) {
    throw ConfigError("condition multi-hot has length " + std::to_string(cond.tokens.size()) +
                      " but the denoiser vocabulary is " +
                      std::to_string(denoiser.vocabulary_size()));
  }
  if (cond.control) {
    if (!denoiser.accepts_control()) {
      throw CapabilityError("denoiser does not accept control maps");
    }
    if (cond.control->height() != x.height() || cond.control->width() != x.width()) {
      throw ShapeError("control map does not match the sample size");
    }
  }
}

ImageGrid guided_eps(const Denoiser& denoiser, const ImageGrid& x_t, int t, const Condition& cond,
                     double guidance_scale) {
  check_condition(denoiser, cond, x_t);
  if (guidance_scale == 1.0) return denoiser.predict_eps(x_t, t, cond);
  const ImageGrid uncond = denoiser.predict_eps(x_t, t, cond.without_tokens());
  if (guidance_scale == 0.0) return uncond;
  return cfg_combine(uncond, denoiser.predict_eps(x_t, t, cond), guidance_scale);
}

}  // namespace compdiff
