#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "compdiff/denoiser.hpp"
#include "compdiff/layout.hpp"
#include "compdiff/schedule.hpp"

namespace compdiff {

enum class HarmonizationMode { kGlobal, kPerSegment, kPerSegmentControl };

std::string to_string(HarmonizationMode mode);
HarmonizationMode parse_harmonization_mode(const std::string& text);

struct CompositeRequest {
  const NoiseSchedule* schedule = nullptr;
  StepPlan plan;
  const Denoiser* denoiser = nullptr;
  SegmentMaskSet masks;
  std::vector<SegmentSpec> specs;         // one per mask, any order
  std::optional<ImageGrid> scaffold_image;  // default: mid-gray
  HarmonizationMode mode = HarmonizationMode::kPerSegment;
  double guidance_scale = 3.0;
  std::uint64_t seed = 0;
  bool parallel = false;  // per-segment work on worker threads
  bool trace = false;
};

struct TraceStep {
  std::string stage;  // "scaffold" or "harmonize"
  int timestep = 0;   // timestep reached by this step
  std::vector<ImageGrid> segments;  // per-segment latents (empty in global mode)
  ImageGrid composite;
};

struct TraceRecord {
  std::vector<TraceStep> steps;
};

struct ScaffoldResult {
  ImageGrid composite;
  std::vector<ImageGrid> segment_latents;  // pre-merge, in mask order
  TraceRecord trace;
};

struct CompositeResult {
  ImageGrid image;
  TraceRecord trace;
};

// Throws ConfigError / CapabilityError on inconsistent requests.
void validate_request(const CompositeRequest& request);

// Shared initial noise for a run.
ImageGrid initial_noise(std::uint64_t seed, int height, int width, int channels = 3);

ImageGrid merge_segments(const std::vector<ImageGrid>& latents, const SegmentMaskSet& masks);

// One classifier-free guided DDIM step t -> t_prev.
ImageGrid guided_step(const ImageGrid& x_t, int t, int t_prev, const Condition& cond,
                      const Denoiser& denoiser, const NoiseSchedule& schedule,
                      double guidance_scale, SigmaMode sigma_mode, RngStream& rng);

// Replaces the complement of `mask` with the background q-sampled to t, then takes one guided step.
ImageGrid step_inpaint(const ImageGrid& x_t, const ImageGrid& background, const BinaryGrid& mask,
                       int t, int t_prev, const Condition& cond, const Denoiser& denoiser,
                       const NoiseSchedule& schedule, double guidance_scale, SigmaMode sigma_mode,
                       RngStream& rng);

ScaffoldResult scaffold_stage(const CompositeRequest& request);
CompositeResult harmonize_stage(const ImageGrid& composite_in, const CompositeRequest& request);
CompositeResult run_composite(const CompositeRequest& request);

ImageGrid run_text_to_image_baseline(const Condition& condition, const NoiseSchedule& schedule,
                                     const StepPlan& plan, const Denoiser& denoiser,
                                     double guidance_scale, std::uint64_t seed, int height,
                                     int width);

// Inpaints segments one after another in the given spec order.
ImageGrid run_serial_inpainting_baseline(const ImageGrid& background, const SegmentMaskSet& masks,
                                         const std::vector<SegmentSpec>& specs,
                                         const NoiseSchedule& schedule, const StepPlan& plan,
                                         const Denoiser& denoiser, double guidance_scale,
                                         std::uint64_t seed);

}  // namespace compdiff
