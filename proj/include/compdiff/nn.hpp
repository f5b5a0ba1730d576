#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "compdiff/rng.hpp"
#include "compdiff/tensor_file.hpp"

// Minimal single-sample convolutional toolkit with hand-written backward passes.
// Activations are channel-major (C x H x W) float buffers.
namespace compdiff::nn {

struct Param {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> value;
  std::vector<float> grad;
  std::vector<float> adam_m;
  std::vector<float> adam_v;
};

class ParamSet {
 public:
  // He-style normal init with the given std; std == 0 gives zeros.
  int add(std::string name, std::vector<std::uint32_t> dims, double init_std, RngStream& rng);

  Param& operator[](int i) { return params_[static_cast<std::size_t>(i)]; }
  const Param& operator[](int i) const { return params_[static_cast<std::size_t>(i)]; }
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;

  void zero_grad();
  void export_to(TensorTable& table) const;
  // Shapes must match exactly.
  void import_from(const TensorTable& table);

 private:
  std::vector<Param> params_;
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double grad_clip = 1.0;  // global L2 norm; <= 0 disables
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}
  // grad_scale multiplies every gradient (e.g. 1/batch). Returns the pre-clip grad norm.
  double step(ParamSet& params, double grad_scale, double lr_factor = 1.0);

 private:
  AdamConfig cfg_;
  long long t_ = 0;
};

struct Conv3x3 {
  int in = 0;
  int out = 0;
  int dilation = 1;
  int weight = -1;  // [out, in, 3, 3]
  int bias = -1;    // [out]

  static Conv3x3 create(ParamSet& ps, const std::string& name, int in, int out, int dilation,
                        RngStream& rng, double gain = 1.0);
};

struct Linear {
  int in = 0;
  int out = 0;
  int weight = -1;  // [out, in]
  int bias = -1;    // [out]

  static Linear create(ParamSet& ps, const std::string& name, int in, int out, RngStream& rng,
                       double gain = 1.0);
};

// Same-padded dilated 3x3 convolution. `cols` receives the im2col buffer for backward.
void conv_forward(const ParamSet& ps, const Conv3x3& conv, std::span<const float> x, int h, int w,
                  std::vector<float>& cols, std::vector<float>& y);
// Accumulates parameter gradients; writes dx when non-empty.
void conv_backward(ParamSet& ps, const Conv3x3& conv, const std::vector<float>& cols,
                   std::span<const float> dy, int h, int w, std::span<float> dx);

void linear_forward(const ParamSet& ps, const Linear& lin, std::span<const float> x,
                    std::span<float> y);
void linear_backward(ParamSet& ps, const Linear& lin, std::span<const float> x,
                     std::span<const float> dy, std::span<float> dx);

inline float sigmoid(float z) { return 1.0f / (1.0f + std::exp(-z)); }
inline float silu(float z) { return z * sigmoid(z); }
inline float silu_grad(float z) {
  const float s = sigmoid(z);
  return s * (1.0f + z * (1.0f - s));
}

// Sinusoidal embedding of an integer timestep into `dim` (even) features.
void timestep_features(int t, std::span<float> out);

}  // namespace compdiff::nn
