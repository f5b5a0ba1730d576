#include "compdiff/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "compdiff/errors.hpp"

namespace compdiff {

void GaussianMixtureModel::validate() const {
  if (weights.empty()) throw InvalidParameter("mixture has no components");
  if (means.size() != weights.size() || stds.size() != weights.size()) {
    throw ShapeError("mixture component arrays differ in length");
  }
  double total = 0.0;
  for (double w : weights) {
    if (!(w > 0.0)) throw InvalidParameter("mixture weights must be positive");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) throw InvalidParameter("mixture weights do not sum to 1");
  for (std::size_t k = 0; k < stds.size(); ++k) {
    if (!(stds[k] > 0.0)) throw InvalidParameter("mixture stds must be positive");
    require_same_shape(means.front(), means[k], "GaussianMixtureModel");
  }
}

GaussianMixtureModel GaussianMixtureModel::standard_normal(int height, int width, int channels) {
  return GaussianMixtureModel{{1.0}, {ImageGrid(height, width, channels, 0.0)}, {1.0}};
}

ImageGrid GaussianMixtureModel::sample(RngStream& rng) const {
  const double u = rng.uniform();
  std::size_t k = 0;
  double acc = weights[0];
  while (u >= acc && k + 1 < weights.size()) acc += weights[++k];
  const auto& mu = means[k];
  ImageGrid out(mu.height(), mu.width(), mu.channels());
  auto dst = out.values();
  auto m = mu.values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = m[i] + stds[k] * rng.normal();
  return out;
}

ImageGrid gmm_posterior_mean(const ImageGrid& x_t, double a, double b,
                             const GaussianMixtureModel& gmm) {
  gmm.validate();
  require_same_shape(x_t, gmm.means.front(), "gmm_posterior_mean");
  const std::size_t K = gmm.components();
  const double dim = static_cast<double>(x_t.size());
  const auto x = x_t.values();

  std::vector<double> log_r(K);
  for (std::size_t k = 0; k < K; ++k) {
    const double var = a * a * gmm.stds[k] * gmm.stds[k] + b * b;
    const auto mu = gmm.means[k].values();
    double sq = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double d = x[i] - a * mu[i];
      sq += d * d;
    }
    log_r[k] = std::log(gmm.weights[k]) - 0.5 * dim * std::log(2.0 * std::numbers::pi * var) -
               0.5 * sq / var;
  }
  const double peak = *std::max_element(log_r.begin(), log_r.end());
  double norm = 0.0;
  for (auto& v : log_r) {
    v = std::exp(v - peak);
    norm += v;
  }

  ImageGrid mean(x_t.height(), x_t.width(), x_t.channels(), 0.0);
  auto out = mean.values();
  for (std::size_t k = 0; k < K; ++k) {
    const double r = log_r[k] / norm;
    if (r == 0.0) continue;
    const double s2 = gmm.stds[k] * gmm.stds[k];
    const double gain = a * s2 / (a * a * s2 + b * b);
    const auto mu = gmm.means[k].values();
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] += r * (mu[i] + gain * (x[i] - a * mu[i]));
    }
  }
  return mean;
}

ImageGrid analytic_eps(const ImageGrid& x_t, int t, const GaussianMixtureModel& gmm,
                       const NoiseSchedule& schedule) {
  if (t < 1) throw InvalidParameter("analytic_eps requires t >= 1");
  const double ab = schedule.alpha_bar(t);
  const double a = std::sqrt(ab);
  const double b = std::sqrt(1.0 - ab);
  if (b == 0.0) throw InvalidParameter("analytic_eps undefined where alpha_bar(t) == 1");
  const ImageGrid x0 = gmm_posterior_mean(x_t, a, b, gmm);
  ImageGrid eps(x_t.height(), x_t.width(), x_t.channels());
  auto dst = eps.values();
  auto x = x_t.values();
  auto m = x0.values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = (x[i] - a * m[i]) / b;
  require_finite(eps, "analytic_eps", t);
  return eps;
}

AnalyticDenoiser::AnalyticDenoiser(NoiseSchedule schedule, GaussianMixtureModel base,
                                   std::vector<GaussianMixtureModel> per_token)
    : schedule_(std::move(schedule)), base_(std::move(base)), per_token_(std::move(per_token)) {
  base_.validate();
  for (const auto& g : per_token_) {
    g.validate();
    require_same_shape(base_.means.front(), g.means.front(), "AnalyticDenoiser");
  }
}

GaussianMixtureModel AnalyticDenoiser::mixture_for(const Condition& cond) const {
  const auto ids = cond.token_ids();
  if (ids.empty()) return base_;
  if (ids.size() == 1) return per_token_.at(static_cast<std::size_t>(ids.front()));
  GaussianMixtureModel merged;
  const double share = 1.0 / static_cast<double>(ids.size());
  for (int id : ids) {
    const auto& g = per_token_.at(static_cast<std::size_t>(id));
    for (std::size_t k = 0; k < g.components(); ++k) {
      merged.weights.push_back(share * g.weights[k]);
      merged.means.push_back(g.means[k]);
      merged.stds.push_back(g.stds[k]);
    }
  }
  // renormalize against accumulated rounding
  const double total = std::accumulate(merged.weights.begin(), merged.weights.end(), 0.0);
  for (auto& w : merged.weights) w /= total;
  return merged;
}

ImageGrid AnalyticDenoiser::predict_eps(const ImageGrid& x_t, int t, const Condition& cond) const {
  check_condition(*this, cond, x_t);
  return analytic_eps(x_t, t, mixture_for(cond), schedule_);
}

}  // namespace compdiff
