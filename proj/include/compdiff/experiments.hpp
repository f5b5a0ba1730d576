#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "compdiff/config.hpp"
#include "compdiff/metrics.hpp"

namespace compdiff {

// Spearman rank correlation with average ranks for ties. Zero when either input is constant.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

struct MeanScores {
  double content_fidelity = 0.0;
  double spatial_fidelity = 0.0;
  double technical_quality = 0.0;
  double blending = 0.0;
};

MeanScores mean_scores(const std::vector<MetricsReport>& reports);

// Everything a generation run needs besides the config itself.
struct RunContext {
  const RunConfig* config = nullptr;
  const Scene* scene = nullptr;
  const NoiseSchedule* schedule = nullptr;
  const Denoiser* denoiser = nullptr;
  const PatternClassifier* classifier = nullptr;
  const Vocabulary* vocabulary = nullptr;
};

ImageGrid generate_composite(const RunContext& ctx, double kappa, std::uint64_t seed);
ImageGrid generate_text_to_image(const RunContext& ctx, std::uint64_t seed);
ImageGrid generate_serial(const RunContext& ctx, std::uint64_t seed);
MetricsReport evaluate(const RunContext& ctx, const ImageGrid& image, std::uint64_t seed, double kappa,
                       const std::string& mode);

struct AblationRow {
  double kappa = 0.0;
  std::uint64_t seed = 0;
  MetricsReport report;
};

struct AblationTable {
  std::vector<AblationRow> raw;
  std::vector<double> kappas;
  std::vector<MeanScores> means;  // one per kappa
  double spearman_blending = 0.0;      // over the per-kappa means
  double spearman_blending_raw = 0.0;  // over every raw row
};

AblationTable ablate_kappa(const RunContext& ctx, const std::vector<double>& kappas,
                           const std::vector<std::uint64_t>& seeds);
std::string ablation_to_json(const AblationTable& table);

struct ComparisonTable {
  std::vector<std::uint64_t> seeds;
  std::vector<MetricsReport> composite, text_to_image, serial;
  MeanScores composite_mean, text_to_image_mean, serial_mean;
};

ComparisonTable compare_methods(const RunContext& ctx, const std::vector<std::uint64_t>& seeds);
std::string comparison_to_json(const ComparisonTable& table);

}  // namespace compdiff
