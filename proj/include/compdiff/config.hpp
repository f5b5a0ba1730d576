#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "compdiff/layout.hpp"
#include "compdiff/metrics.hpp"
#include "compdiff/patterns.hpp"
#include "compdiff/pipeline.hpp"
#include "compdiff/schedule.hpp"
#include "compdiff/toy_denoiser.hpp"

namespace compdiff {

struct SegmentEntry {
  std::string label;  // as written in the layout: integer text, or "#rrggbb" for image layouts
  std::vector<std::string> tokens;
  std::optional<std::filesystem::path> control;
  std::optional<std::filesystem::path> reference;
  std::optional<std::filesystem::path> scaffold;
};

struct RunConfig {
  std::vector<std::string> vocabulary;

  int total_steps = 1000;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  int num_steps = 50;
  SigmaMode sigma_mode = SigmaMode::kDeterministic;

  double kappa = 40.0;
  double guidance_scale = 3.0;
  std::uint64_t seed = 0;

  std::optional<std::filesystem::path> layout;
  std::vector<SegmentEntry> segments;
  std::optional<std::filesystem::path> scaffold_image;  // empty: mid-gray
  HarmonizationMode mode = HarmonizationMode::kPerSegment;
  int band_radius = 1;
  bool parallel = false;

  std::filesystem::path denoiser_path = "models/denoiser.cdif";
  std::filesystem::path classifier_path = "models/classifier.cdif";
  std::filesystem::path output_dir = "out";

  DatasetConfig dataset;
  DenoiserTrainOptions denoiser_training;
  ClassifierTrainOptions classifier_training;

  std::vector<double> ablation_kappas{0, 20, 40, 60, 80, 100};
  std::vector<std::uint64_t> ablation_seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  std::vector<std::uint64_t> compare_seeds{0, 1, 2, 3, 4};
};

// Parses JSON text. Relative paths resolve against `base_dir`. Layout-related keys are
// validated (file existence, id coverage) whenever a layout is given.
RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);

// Every field with defaults filled and absolute paths; loading it reproduces the config.
std::string resolved_config_json(const RunConfig& cfg);

Vocabulary config_vocabulary(const RunConfig& cfg);
NoiseSchedule config_schedule(const RunConfig& cfg);
StepPlan config_plan(const RunConfig& cfg, const NoiseSchedule& schedule, double kappa);

// Layout, masks and per-segment specs with normalized ids and loaded images.
struct Scene {
  SegmentLayout layout;
  SegmentMaskSet masks;
  std::vector<SegmentSpec> specs;
  std::optional<ImageGrid> scaffold_image;
};

Scene load_scene(const RunConfig& cfg);

// Control maps: PNG (luma > 127 is ink) or a text grid of 0/1.
BinaryGrid load_control_map(const std::filesystem::path& path);

CompositeRequest make_request(const RunConfig& cfg, const Scene& scene, const NoiseSchedule& schedule,
                              const Denoiser& denoiser, double kappa, std::uint64_t seed);

}  // namespace compdiff
