#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "compdiff/denoiser.hpp"
#include "compdiff/nn.hpp"
#include "compdiff/patterns.hpp"
#include "compdiff/schedule.hpp"
#include "compdiff/tensor_file.hpp"

namespace compdiff {

// Procedural training set description.
struct DatasetConfig {
  std::vector<std::string> vocabulary;  // token names from the standard vocabulary, in id order
  int height = 32;
  int width = 32;
  int samples_per_token = 160;
  int composite_samples = 960;
  int max_segments = 4;
  std::uint64_t seed = 7;

  Vocabulary make_vocabulary() const;
  static DatasetConfig defaults();
};

// JSON object with optional keys vocabulary, image_size, samples_per_token, composite_samples,
// max_segments, seed. `where` prefixes error messages.
DatasetConfig parse_dataset_config(const std::string& text, const std::string& where);
DatasetConfig load_dataset_config(const std::filesystem::path& path);
void save_dataset_config(const DatasetConfig& cfg, const std::filesystem::path& path);

struct TrainingSample {
  ImageGrid image;  // H x W x 3 in [-1, 1]
  BinaryGrid structure;
  std::vector<std::uint8_t> tokens;
  SegmentLayout layout;  // single segment for plain renders
  std::vector<int> segment_tokens;  // token id per segment (index = id - 1)
};

// Single-pattern renders for every token followed by random multi-segment composites.
std::vector<TrainingSample> generate_dataset(const DatasetConfig& cfg);

struct ToyDenoiserArch {
  int height = 32;
  int width = 32;
  int vocabulary = 6;
  int hidden = 32;
  int embed = 64;
  int time_features = 32;
  bool accepts_control = true;

  bool operator==(const ToyDenoiserArch&) const = default;
};

struct ToyDenoiserWeights {
  ToyDenoiserArch arch;
  double cond_dropout = 0.0;
  TensorTable tensors;  // parameters only

  bool operator==(const ToyDenoiserWeights&) const = default;
};

void persist_weights(const ToyDenoiserWeights& weights, const std::filesystem::path& path);
ToyDenoiserWeights load_weights(const std::filesystem::path& path);

// Conv epsilon-predictor: dilated residual 3x3 stack with FiLM conditioning from a sinusoidal
// timestep embedding and a linear token multi-hot embedding. A control map enters as an extra
// input channel (+1 ink / -1 no ink / 0 absent).
class ToyDenoiser final : public Denoiser {
 public:
  ToyDenoiser(ToyDenoiserArch arch, std::uint64_t init_seed);
  explicit ToyDenoiser(const ToyDenoiserWeights& weights);

  ImageGrid predict_eps(const ImageGrid& x_t, int t, const Condition& cond) const override;
  bool accepts_control() const override { return arch_.accepts_control; }
  int vocabulary_size() const override { return arch_.vocabulary; }

  const ToyDenoiserArch& arch() const { return arch_; }
  ToyDenoiserWeights weights(double cond_dropout = 0.0) const;

  // One sample: forward, squared-error loss, backward (gradients accumulate). Returns loss.
  double train_sample(std::span<const float> input, int t, std::span<const float> token_multihot,
                      std::span<const float> target);
  nn::ParamSet& params() { return params_; }

  int input_channels() const { return 3 + (arch_.accepts_control ? 1 : 0); }

 private:
  struct Layer {
    nn::Conv3x3 conv;
    nn::Linear film;
  };
  struct Cache;

  void build(std::uint64_t init_seed);
  void forward(std::span<const float> input, int t, std::span<const float> tokens, Cache& cache,
               std::vector<float>& out) const;
  void backward(const Cache& cache, std::span<const float> dout);

  ToyDenoiserArch arch_;
  nn::ParamSet params_;
  nn::Linear emb1_;
  nn::Linear emb2_;
  std::vector<Layer> layers_;  // layers_[0] is the input conv
  nn::Conv3x3 conv_out_;
};

struct DenoiserTrainOptions {
  int epochs = 20;
  int batch_size = 16;
  double learning_rate = 2e-3;
  double cond_dropout = 0.15;
  double control_probability = 0.5;
  std::uint64_t seed = 11;
  ToyDenoiserArch arch;  // vocabulary/size overwritten from the dataset config
};

using TrainLog = std::function<void(int step, double loss)>;

ToyDenoiserWeights train_toy_denoiser(const DatasetConfig& dataset, const NoiseSchedule& schedule,
                                      const DenoiserTrainOptions& options,
                                      const TrainLog& log = {});

// Lower-level entry: train on explicit samples for a fixed number of optimizer steps.
// Returns per-step mean losses.
std::vector<double> train_denoiser_steps(ToyDenoiser& model, const std::vector<TrainingSample>& data,
                                         const NoiseSchedule& schedule,
                                         const DenoiserTrainOptions& options, int steps,
                                         const TrainLog& log = {});

}  // namespace compdiff
