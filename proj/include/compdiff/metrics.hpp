#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "compdiff/image_grid.hpp"
#include "compdiff/layout.hpp"
#include "compdiff/nn.hpp"
#include "compdiff/toy_denoiser.hpp"

namespace compdiff {

struct PatternClassifierArch {
  int height = 32;
  int width = 32;
  int vocabulary = 6;
  int hidden = 24;

  bool operator==(const PatternClassifierArch&) const = default;
};

// Multi-label pattern scorer: dilated conv features, masked mean+max pooling, linear, sigmoid.
class PatternClassifier {
 public:
  PatternClassifier(PatternClassifierArch arch, std::uint64_t init_seed);
  explicit PatternClassifier(const TensorTable& tensors);

  const PatternClassifierArch& arch() const { return arch_; }
  int vocabulary_size() const { return arch_.vocabulary; }

  // Per-token scores in [0, 1] over the whole image.
  std::vector<double> score(const ImageGrid& image) const;
  // Per-token scores with pooling restricted to the mask.
  std::vector<double> score_masked(const ImageGrid& image, const BinaryGrid& mask) const;

  TensorTable tensors() const;
  nn::ParamSet& params() { return params_; }

  // Forward once, then one BCE term per (mask, target) pair. Gradients accumulate.
  // Returns the summed loss.
  double train_sample(const ImageGrid& image, const std::vector<BinaryGrid>& masks,
                      const std::vector<std::vector<float>>& targets);

 private:
  struct Features;
  void build(std::uint64_t init_seed);
  void features(const ImageGrid& image, Features& f) const;
  std::vector<float> pool(const Features& f, const BinaryGrid& mask, std::vector<int>* argmax) const;

  PatternClassifierArch arch_;
  nn::ParamSet params_;
  std::vector<nn::Conv3x3> convs_;
  nn::Linear head_;
};

void persist_classifier(const PatternClassifier& classifier, const std::filesystem::path& path);
PatternClassifier load_classifier(const std::filesystem::path& path);

struct ClassifierTrainOptions {
  int epochs = 4;
  int batch_size = 16;
  double learning_rate = 2e-3;
  double max_noise = 0.25;  // augmentation std drawn uniformly in [0, max_noise]
  double required_accuracy = 0.95;
  int holdout_samples = 300;
  std::uint64_t seed = 13;
  PatternClassifierArch arch;
};

struct ClassifierTrainResult {
  TensorTable tensors;
  double holdout_accuracy = 0.0;
};

// Trains on the procedural dataset (full-image and per-segment targets). Throws TrainingError
// when held-out per-token accuracy stays below the requirement.
ClassifierTrainResult train_classifier(const DatasetConfig& dataset,
                                       const ClassifierTrainOptions& options,
                                       const TrainLog& log = {});

// Per-token accuracy (threshold 0.5) over full-image and per-segment targets.
double classifier_accuracy(const PatternClassifier& classifier,
                           const std::vector<TrainingSample>& samples);

// Mean over segments of the full-image score of each segment's tokens.
double content_fidelity(const ImageGrid& image, const std::vector<SegmentSpec>& specs,
                        const PatternClassifier& classifier);
// Mean over segments of the masked-region score of each segment's tokens.
double spatial_fidelity(const ImageGrid& image, const SegmentMaskSet& masks,
                        const std::vector<SegmentSpec>& specs, const PatternClassifier& classifier);

// Laplacian residual noise estimate, averaged over channels.
double noise_estimate(const ImageGrid& image);

// Mean channel-averaged gradient magnitude over the boundary band; 0 for an empty band.
double blending_score(const ImageGrid& image, const SegmentMaskSet& masks, int radius);

struct SegmentScore {
  int segment = 0;
  std::vector<std::string> tokens;
  double content = 0.0;
  double spatial = 0.0;

  bool operator==(const SegmentScore&) const = default;
};

struct MetricsReport {
  double content_fidelity = 0.0;
  double spatial_fidelity = 0.0;
  double technical_quality = 0.0;
  double blending = 0.0;
  std::vector<SegmentScore> segments;
  std::uint64_t seed = 0;
  double kappa = 0.0;
  std::string mode;

  bool operator==(const MetricsReport&) const = default;
};

MetricsReport evaluate_image(const ImageGrid& image, const SegmentMaskSet& masks,
                             const std::vector<SegmentSpec>& specs,
                             const PatternClassifier& classifier, const Vocabulary& vocabulary,
                             int band_radius);

std::string report_to_json(const MetricsReport& report);
MetricsReport report_from_json(const std::string& text);

}  // namespace compdiff
