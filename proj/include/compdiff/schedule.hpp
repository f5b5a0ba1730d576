#pragma once

#include <vector>

#include "compdiff/image_grid.hpp"
#include "compdiff/rng.hpp"

namespace compdiff {

// Variance schedule over timesteps 1..T. Index 0 is the clean state (alpha_bar = 1).
class NoiseSchedule {
 public:
  // betas[i] is the variance of timestep i + 1.
  explicit NoiseSchedule(std::vector<double> betas);

  int total_steps() const { return static_cast<int>(betas_.size()) - 1; }
  double beta(int t) const { return betas_.at(check(t)); }
  double alpha(int t) const { return alphas_.at(check(t)); }
  double alpha_bar(int t) const { return alpha_bars_.at(check(t)); }

  const std::vector<double>& betas() const { return betas_; }
  const std::vector<double>& alpha_bars() const { return alpha_bars_; }

 private:
  int check(int t) const;

  std::vector<double> betas_;
  std::vector<double> alphas_;
  std::vector<double> alpha_bars_;
};

NoiseSchedule make_linear_schedule(int total_steps, double beta_start, double beta_end);

enum class SigmaMode { kDeterministic, kDdpmMatched };

struct StepPlan {
  std::vector<int> timesteps;  // strictly decreasing, entries in [1, T]
  int scaffold_steps = 0;
  SigmaMode sigma_mode = SigmaMode::kDeterministic;

  int num_steps() const { return static_cast<int>(timesteps.size()); }
  // Target timestep of step k; 0 after the last step.
  int prev_timestep(int k) const {
    return k + 1 < num_steps() ? timesteps[static_cast<std::size_t>(k) + 1] : 0;
  }
  // Timestep at which the scaffolding stage hands over to harmonization.
  int boundary_timestep() const {
    return scaffold_steps < num_steps() ? timesteps[static_cast<std::size_t>(scaffold_steps)] : 0;
  }
};

StepPlan make_step_plan(const NoiseSchedule& schedule, int num_steps, double kappa_percent,
                        SigmaMode sigma_mode = SigmaMode::kDeterministic);

// round(kappa / 100 * num_steps), validated.
int scaffold_step_count(int num_steps, double kappa_percent);

ImageGrid q_sample(const ImageGrid& x0, int t, const ImageGrid& eps, const NoiseSchedule& schedule);

ImageGrid predict_x0(const ImageGrid& x_t, int t, const ImageGrid& eps_hat,
                     const NoiseSchedule& schedule);

// sigma_t for a DDIM transition t -> t_prev under the given mode (eta = 1 for kDdpmMatched).
double ddim_sigma(const NoiseSchedule& schedule, int t, int t_prev, SigmaMode mode);

// One DDIM update. With sigma_t == 0 no randomness is consumed.
ImageGrid ddim_step(const ImageGrid& x_t, int t, int t_prev, const ImageGrid& eps_hat,
                    double sigma_t, RngStream& rng, const NoiseSchedule& schedule);

enum class DdpmNoise { kSample, kSuppress };

// Ancestral DDPM update with sigma_t^2 = beta_t, and sigma forced to 0 at t = 1.
ImageGrid ddpm_step(const ImageGrid& x_t, int t, const ImageGrid& eps_hat, RngStream& rng,
                    const NoiseSchedule& schedule, DdpmNoise noise = DdpmNoise::kSample);

// Classifier-free guidance: uncond + s * (cond - uncond).
ImageGrid cfg_combine(const ImageGrid& eps_uncond, const ImageGrid& eps_cond, double scale);

}  // namespace compdiff
