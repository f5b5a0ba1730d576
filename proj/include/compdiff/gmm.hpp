#pragma once

#include <vector>

#include "compdiff/denoiser.hpp"
#include "compdiff/image_grid.hpp"
#include "compdiff/rng.hpp"
#include "compdiff/schedule.hpp"

namespace compdiff {

// Isotropic Gaussian mixture over grids: sum_k w_k N(mu_k, s_k^2 I).
struct GaussianMixtureModel {
  std::vector<double> weights;
  std::vector<ImageGrid> means;
  std::vector<double> stds;

  // Checks normalization (1e-9), positive stds and consistent mean shapes.
  void validate() const;
  std::size_t components() const { return weights.size(); }

  static GaussianMixtureModel standard_normal(int height, int width, int channels);

  ImageGrid sample(RngStream& rng) const;
};

// Exact posterior-mean epsilon for data drawn from `gmm`, computed in the log domain.
ImageGrid analytic_eps(const ImageGrid& x_t, int t, const GaussianMixtureModel& gmm,
                       const NoiseSchedule& schedule);

// Posterior mean E[x0 | x_t] with explicit a = sqrt(alpha_bar), b = sqrt(1 - alpha_bar).
ImageGrid gmm_posterior_mean(const ImageGrid& x_t, double a, double b,
                             const GaussianMixtureModel& gmm);

// Exact denoiser for mixture data. The unconditional distribution is `base`; a token
// condition selects the equal-weight union of the per-token mixtures.
class AnalyticDenoiser final : public Denoiser {
 public:
  AnalyticDenoiser(NoiseSchedule schedule, GaussianMixtureModel base,
                   std::vector<GaussianMixtureModel> per_token = {});

  ImageGrid predict_eps(const ImageGrid& x_t, int t, const Condition& cond) const override;
  bool accepts_control() const override { return false; }
  int vocabulary_size() const override { return static_cast<int>(per_token_.size()); }

  GaussianMixtureModel mixture_for(const Condition& cond) const;

 private:
  NoiseSchedule schedule_;
  GaussianMixtureModel base_;
  std::vector<GaussianMixtureModel> per_token_;
};

}  // namespace compdiff
