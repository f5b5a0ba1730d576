#include "compdiff/pipeline.hpp"

#include <algorithm>
#include <exception>
#include <functional>
#include <thread>

#include "compdiff/errors.hpp"

namespace compdiff {

namespace {

constexpr double kMidGray = 0.0;

// Runs fn(0..n-1), on one thread per index when `parallel` is set. The first exception wins.
void for_each_index(std::size_t n, bool parallel, const std::function<void(std::size_t)>& fn) {
  if (!parallel || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> workers;
  workers.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    workers.emplace_back([&, i] {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

// Specs reordered to mask order (spec for segment k + 1 at index k).
std::vector<const SegmentSpec*> specs_by_mask(const std::vector<SegmentSpec>& specs, std::size_t n) {
  std::vector<const SegmentSpec*> out(n, nullptr);
  for (const auto& s : specs) {
    if (s.segment < 1 || static_cast<std::size_t>(s.segment) > n) {
      throw ConfigError("segment spec id " + std::to_string(s.segment) + " not in the layout");
    }
    auto& slot = out[static_cast<std::size_t>(s.segment - 1)];
    if (slot) throw ConfigError("segment " + std::to_string(s.segment) + " specified twice");
    slot = &s;
  }
  for (std::size_t k = 0; k < n; ++k) {
    if (!out[k]) throw ConfigError("unassigned segment " + std::to_string(k + 1));
  }
  return out;
}

Condition segment_condition(const SegmentSpec& spec, const BinaryGrid& mask, int vocabulary,
                            bool with_control) {
  Condition c = Condition::from_ids(vocabulary, spec.tokens);
  if (with_control && spec.control) {
    BinaryGrid clamped = *spec.control;
    auto v = clamped.values();
    const auto m = mask.values();
    for (std::size_t p = 0; p < v.size(); ++p) v[p] = (v[p] && m[p]) ? 1 : 0;
    c.control = std::move(clamped);
  }
  return c;
}

ImageGrid mid_gray(int h, int w, int c) { return ImageGrid(h, w, c, kMidGray, GridDomain::kData); }

}  // namespace

std::string to_string(HarmonizationMode mode) {
  switch (mode) {
    case HarmonizationMode::kGlobal:
      return "global";
    case HarmonizationMode::kPerSegment:
      return "per-segment";
    case HarmonizationMode::kPerSegmentControl:
      return "per-segment-with-control";
  }
  return "?";
}

HarmonizationMode parse_harmonization_mode(const std::string& text) {
  if (text == "global") return HarmonizationMode::kGlobal;
  if (text == "per-segment") return HarmonizationMode::kPerSegment;
  if (text == "per-segment-with-control") return HarmonizationMode::kPerSegmentControl;
  throw ConfigError("unknown harmonization mode '" + text + "'");
}

void validate_request(const CompositeRequest& r) {
  if (!r.schedule || !r.denoiser) throw ConfigError("request needs a schedule and a denoiser");
  if (r.masks.size() == 0) throw ConfigError("request has no segments");
  const int V = r.denoiser->vocabulary_size();
  const auto specs = specs_by_mask(r.specs, r.masks.size());
  for (std::size_t k = 0; k < specs.size(); ++k) {
    const auto& s = *specs[k];
    if (s.tokens.empty()) {
      throw ConfigError("segment " + std::to_string(s.segment) + " has no content tokens");
    }
    for (int t : s.tokens) {
      if (t < 0 || t >= V) {
        throw ConfigError("segment " + std::to_string(s.segment) + " token id " + std::to_string(t) +
                          " outside the denoiser vocabulary");
      }
    }
    if (s.control) {
      if (!r.denoiser->accepts_control()) {
        throw CapabilityError("segment " + std::to_string(s.segment) +
                              " has a control map but the denoiser does not accept control");
      }
      if (s.control->height() != r.masks.height() || s.control->width() != r.masks.width()) {
        throw ShapeError("control map of segment " + std::to_string(s.segment) + " has the wrong size");
      }
    }
    for (const auto* img : {s.reference ? &*s.reference : nullptr, s.scaffold ? &*s.scaffold : nullptr}) {
      if (img && (img->height() != r.masks.height() || img->width() != r.masks.width())) {
        throw ShapeError("image for segment " + std::to_string(s.segment) + " has the wrong size");
      }
    }
  }
  if (r.scaffold_image &&
      (r.scaffold_image->height() != r.masks.height() || r.scaffold_image->width() != r.masks.width())) {
    throw ShapeError("scaffold image has the wrong size");
  }
  const auto& plan = r.plan;
  if (plan.scaffold_steps < 0 || plan.scaffold_steps > plan.num_steps()) {
    throw InvalidParameter("scaffold step count outside the plan");
  }
  for (std::size_t k = 0; k < plan.timesteps.size(); ++k) {
    const int t = plan.timesteps[k];
    if (t < 1 || t > r.schedule->total_steps() || (k > 0 && t >= plan.timesteps[k - 1])) {
      throw InvalidParameter("step plan timesteps must be strictly decreasing within [1, T]");
    }
  }
}

ImageGrid initial_noise(std::uint64_t seed, int height, int width, int channels) {
  RngStream rng(seed, RngLane{"init", 0, 0});
  return rng.normal_grid(height, width, channels);
}

ImageGrid merge_segments(const std::vector<ImageGrid>& latents, const SegmentMaskSet& masks) {
  if (latents.size() != masks.size() || latents.empty()) {
    throw ShapeError("merge_segments needs one latent per mask");
  }
  for (std::size_t k = 0; k < latents.size(); ++k) {
    require_same_shape(latents[0], latents[k], "merge_segments");
    require_mask_shape(latents[k], masks[k], "merge_segments");
  }
  const auto owner = masks.owner_grid();
  ImageGrid out = latents[0];
  auto dst = out.values();
  const std::size_t c = static_cast<std::size_t>(out.channels());
  for (std::size_t p = 0; p < owner.size(); ++p) {
    const auto src = latents[static_cast<std::size_t>(owner[p])].values();
    for (std::size_t k = 0; k < c; ++k) dst[p * c + k] = src[p * c + k];
  }
  return out;
}

ImageGrid guided_step(const ImageGrid& x_t, int t, int t_prev, const Condition& cond,
                      const Denoiser& denoiser, const NoiseSchedule& schedule, double guidance_scale,
                      SigmaMode sigma_mode, RngStream& rng) {
  const ImageGrid eps = guided_eps(denoiser, x_t, t, cond, guidance_scale);
  const double sigma = ddim_sigma(schedule, t, t_prev, sigma_mode);
  return ddim_step(x_t, t, t_prev, eps, sigma, rng, schedule);
}

ImageGrid step_inpaint(const ImageGrid& x_t, const ImageGrid& background, const BinaryGrid& mask, int t,
                       int t_prev, const Condition& cond, const Denoiser& denoiser,
                       const NoiseSchedule& schedule, double guidance_scale, SigmaMode sigma_mode,
                       RngStream& rng) {
  require_same_shape(x_t, background, "step_inpaint");
  require_mask_shape(x_t, mask, "step_inpaint");
  RngStream bg_rng = rng.fork("background");
  const ImageGrid noise = bg_rng.normal_grid(x_t.height(), x_t.width(), x_t.channels());
  const ImageGrid bg_t = q_sample(background, t, noise, schedule);
  const ImageGrid composed = masked_blend(x_t, bg_t, mask);
  return guided_step(composed, t, t_prev, cond, denoiser, schedule, guidance_scale, sigma_mode, rng);
}

ScaffoldResult scaffold_stage(const CompositeRequest& r) {
  validate_request(r);
  const int h = r.masks.height(), w = r.masks.width();
  const std::size_t n = r.masks.size();
  const auto specs = specs_by_mask(r.specs, n);
  const int V = r.denoiser->vocabulary_size();
  const StepPlan& plan = r.plan;
  const int k_end = plan.scaffold_steps;

  ScaffoldResult out;
  const ImageGrid x_T = initial_noise(r.seed, h, w);
  if (k_end == 0) {
    out.composite = x_T;
    out.segment_latents.assign(n, x_T);
    return out;
  }

  const ImageGrid gray = r.scaffold_image ? *r.scaffold_image : mid_gray(h, w, 3);
  // history[i][k] is segment i's latent after scaffold step k (filled only when tracing).
  std::vector<std::vector<ImageGrid>> history(n);
  std::vector<ImageGrid> latents(n, x_T);

  for_each_index(n, r.parallel, [&](std::size_t i) {
    const SegmentSpec& spec = *specs[i];
    const BinaryGrid& mask = r.masks[i];
    ImageGrid x = x_T;
    if (spec.reference) {
      const int tb = plan.boundary_timestep();
      x = tb > 0 ? q_sample(*spec.reference, tb, x_T, *r.schedule) : *spec.reference;
      if (r.trace) history[i].assign(static_cast<std::size_t>(k_end), x);
    } else {
      const bool control = spec.control.has_value();
      const Condition cond = segment_condition(spec, mask, V, control);
      const ImageGrid& scaffold = spec.scaffold ? *spec.scaffold : gray;
      for (int k = 0; k < k_end; ++k) {
        const int t = plan.timesteps[static_cast<std::size_t>(k)];
        const int t_prev = plan.prev_timestep(k);
        RngStream rng(r.seed, RngLane{"scaffold", t, static_cast<int>(i)});
        if (control) {
          x = guided_step(x, t, t_prev, cond, *r.denoiser, *r.schedule, r.guidance_scale, plan.sigma_mode, rng);
        } else {
          x = step_inpaint(x, scaffold, mask, t, t_prev, cond, *r.denoiser, *r.schedule, r.guidance_scale,
                           plan.sigma_mode, rng);
        }
        if (r.trace) history[i].push_back(x);
      }
    }
    latents[i] = std::move(x);
  });

  out.composite = merge_segments(latents, r.masks);
  if (r.trace) {
    for (int k = 0; k < k_end; ++k) {
      TraceStep step;
      step.stage = "scaffold";
      step.timestep = plan.prev_timestep(k);
      for (std::size_t i = 0; i < n; ++i) step.segments.push_back(history[i][static_cast<std::size_t>(k)]);
      step.composite = merge_segments(step.segments, r.masks);
      out.trace.steps.push_back(std::move(step));
    }
  }
  out.segment_latents = std::move(latents);
  return out;
}

CompositeResult harmonize_stage(const ImageGrid& composite_in, const CompositeRequest& r) {
  validate_request(r);
  const std::size_t n = r.masks.size();
  const auto specs = specs_by_mask(r.specs, n);
  const int V = r.denoiser->vocabulary_size();
  const StepPlan& plan = r.plan;
  const bool with_control = r.mode == HarmonizationMode::kPerSegmentControl;

  std::vector<Condition> conds;
  for (std::size_t i = 0; i < n; ++i) conds.push_back(segment_condition(*specs[i], r.masks[i], V, with_control));

  CompositeResult out;
  ImageGrid x = composite_in;
  for (int k = plan.scaffold_steps; k < plan.num_steps(); ++k) {
    const int t = plan.timesteps[static_cast<std::size_t>(k)];
    const int t_prev = plan.prev_timestep(k);
    TraceStep step;
    if (r.mode == HarmonizationMode::kGlobal) {
      RngStream rng(r.seed, RngLane{"denoise", t, 0});
      x = guided_step(x, t, t_prev, union_condition(V, conds), *r.denoiser, *r.schedule, r.guidance_scale,
                      plan.sigma_mode, rng);
    } else {
      std::vector<ImageGrid> latents(n, x);
      for_each_index(n, r.parallel, [&](std::size_t i) {
        RngStream rng(r.seed, RngLane{"denoise", t, static_cast<int>(i)});
        latents[i] = guided_step(x, t, t_prev, conds[i], *r.denoiser, *r.schedule, r.guidance_scale,
                                 plan.sigma_mode, rng);
      });
      x = merge_segments(latents, r.masks);
      if (r.trace) step.segments = std::move(latents);
    }
    if (r.trace) {
      step.stage = "harmonize";
      step.timestep = t_prev;
      step.composite = x;
      out.trace.steps.push_back(std::move(step));
    }
  }
  out.image = std::move(x);
  return out;
}

CompositeResult run_composite(const CompositeRequest& r) {
  ScaffoldResult scaffold = scaffold_stage(r);
  CompositeResult out = harmonize_stage(scaffold.composite, r);
  auto& steps = scaffold.trace.steps;
  steps.insert(steps.end(), std::make_move_iterator(out.trace.steps.begin()),
               std::make_move_iterator(out.trace.steps.end()));
  out.trace = std::move(scaffold.trace);
  return out;
}

ImageGrid run_text_to_image_baseline(const Condition& condition, const NoiseSchedule& schedule,
                                     const StepPlan& plan, const Denoiser& denoiser, double guidance_scale,
                                     std::uint64_t seed, int height, int width) {
  ImageGrid x = initial_noise(seed, height, width);
  for (int k = 0; k < plan.num_steps(); ++k) {
    const int t = plan.timesteps[static_cast<std::size_t>(k)];
    RngStream rng(seed, RngLane{"denoise", t, 0});
    x = guided_step(x, t, plan.prev_timestep(k), condition, denoiser, schedule, guidance_scale,
                    plan.sigma_mode, rng);
  }
  return x;
}

ImageGrid run_serial_inpainting_baseline(const ImageGrid& background, const SegmentMaskSet& masks,
                                         const std::vector<SegmentSpec>& specs, const NoiseSchedule& schedule,
                                         const StepPlan& plan, const Denoiser& denoiser,
                                         double guidance_scale, std::uint64_t seed) {
  if (specs.empty()) return background;
  const auto ordered = specs_by_mask(specs, masks.size());
  const int V = denoiser.vocabulary_size();
  const ImageGrid x_T = initial_noise(seed, background.height(), background.width(), background.channels());
  ImageGrid bg = background;
  for (std::size_t i = 0; i < ordered.size(); ++i) {
    const Condition cond = segment_condition(*ordered[i], masks[i], V, true);
    ImageGrid x = x_T;
    for (int k = 0; k < plan.num_steps(); ++k) {
      const int t = plan.timesteps[static_cast<std::size_t>(k)];
      RngStream rng(seed, RngLane{"denoise", t, static_cast<int>(i)});
      x = step_inpaint(x, bg, masks[i], t, plan.prev_timestep(k), cond, denoiser, schedule, guidance_scale,
                       plan.sigma_mode, rng);
    }
    bg = std::move(x);
  }
  return bg;
}

}  // namespace compdiff
