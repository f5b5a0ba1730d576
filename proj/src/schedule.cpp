#include "compdiff/schedule.hpp"

#include <cmath>
#include <string>

#include "compdiff/errors.hpp"

namespace compdiff {

NoiseSchedule::NoiseSchedule(std::vector<double> betas) {
  if (betas.empty()) throw InvalidParameter("schedule needs at least one timestep");
  betas_.reserve(betas.size() + 1);
  alphas_.reserve(betas.size() + 1);
  alpha_bars_.reserve(betas.size() + 1);
  betas_.push_back(0.0);
  alphas_.push_back(1.0);
  alpha_bars_.push_back(1.0);
  for (std::size_t i = 0; i < betas.size(); ++i) {
    const double b = betas[i];
    if (!(b > 0.0 && b < 1.0)) {
      throw InvalidParameter("beta at timestep " + std::to_string(i + 1) + " outside (0,1)");
    }
    betas_.push_back(b);
    alphas_.push_back(1.0 - b);
    alpha_bars_.push_back(alpha_bars_.back() * (1.0 - b));
  }
}

int NoiseSchedule::check(int t) const {
  if (t < 0 || t > total_steps()) {
    throw InvalidParameter("timestep " + std::to_string(t) + " outside [0, " +
                           std::to_string(total_steps()) + "]");
  }
  return t;
}

NoiseSchedule make_linear_schedule(int total_steps, double beta_start, double beta_end) {
  if (total_steps < 1) throw InvalidParameter("T must be >= 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw InvalidParameter("linear schedule requires 0 < beta_start <= beta_end < 1");
  }
  std::vector<double> betas(static_cast<std::size_t>(total_steps));
  for (int i = 0; i < total_steps; ++i) {
    const double frac = total_steps == 1 ? 0.0 : static_cast<double>(i) / (total_steps - 1);
    betas[static_cast<std::size_t>(i)] = beta_start + (beta_end - beta_start) * frac;
  }
  return NoiseSchedule(std::move(betas));
}

int scaffold_step_count(int num_steps, double kappa_percent) {
  if (!(kappa_percent >= 0.0 && kappa_percent <= 100.0)) {
    throw InvalidParameter("kappa must lie in [0, 100], got " + std::to_string(kappa_percent));
  }
  return static_cast<int>(std::lround(kappa_percent / 100.0 * num_steps));
}

StepPlan make_step_plan(const NoiseSchedule& schedule, int num_steps, double kappa_percent,
                        SigmaMode sigma_mode) {
  const int T = schedule.total_steps();
  if (num_steps < 1) throw InvalidParameter("num_steps must be >= 1");
  if (num_steps > T) {
    throw InvalidParameter("num_steps " + std::to_string(num_steps) + " exceeds T=" +
                           std::to_string(T));
  }
  StepPlan plan;
  plan.sigma_mode = sigma_mode;
  plan.timesteps.resize(static_cast<std::size_t>(num_steps));
  // Evenly spaced from T down to 1 inclusive; spacing >= 1 keeps rounding strictly monotone.
  for (int k = 0; k < num_steps; ++k) {
    const double pos =
        num_steps == 1 ? T : T - static_cast<double>(k) * (T - 1) / (num_steps - 1);
    plan.timesteps[static_cast<std::size_t>(k)] = static_cast<int>(std::lround(pos));
  }
  plan.scaffold_steps = scaffold_step_count(num_steps, kappa_percent);
  return plan;
}

ImageGrid q_sample(const ImageGrid& x0, int t, const ImageGrid& eps, const NoiseSchedule& schedule) {
  require_same_shape(x0, eps, "q_sample");
  if (t < 1) throw InvalidParameter("q_sample requires t >= 1");
  const double ab = schedule.alpha_bar(t);
  const double a = std::sqrt(ab);
  const double b = std::sqrt(1.0 - ab);
  ImageGrid out(x0.height(), x0.width(), x0.channels());
  auto dst = out.values();
  auto src = x0.values();
  auto e = eps.values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = a * src[i] + b * e[i];
  require_finite(out, "q_sample", t);
  return out;
}

ImageGrid predict_x0(const ImageGrid& x_t, int t, const ImageGrid& eps_hat,
                     const NoiseSchedule& schedule) {
  require_same_shape(x_t, eps_hat, "predict_x0");
  const double ab = schedule.alpha_bar(t);
  const double a = std::sqrt(ab);
  const double b = std::sqrt(1.0 - ab);
  ImageGrid out(x_t.height(), x_t.width(), x_t.channels());
  auto dst = out.values();
  auto x = x_t.values();
  auto e = eps_hat.values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = x[i] / a - b * e[i] / a;
  require_finite(out, "predict_x0", t);
  return out;
}

double ddim_sigma(const NoiseSchedule& schedule, int t, int t_prev, SigmaMode mode) {
  if (mode == SigmaMode::kDeterministic) return 0.0;
  const double ab_t = schedule.alpha_bar(t);
  const double ab_prev = schedule.alpha_bar(t_prev);
  const double var = (1.0 - ab_prev) / (1.0 - ab_t) * (1.0 - ab_t / ab_prev);
  return std::sqrt(std::max(var, 0.0));
}

ImageGrid ddim_step(const ImageGrid& x_t, int t, int t_prev, const ImageGrid& eps_hat,
                    double sigma_t, RngStream& rng, const NoiseSchedule& schedule) {
  require_same_shape(x_t, eps_hat, "ddim_step");
  if (t_prev >= t) throw InvalidParameter("ddim_step requires t_prev < t");
  if (sigma_t < 0.0) throw InvalidParameter("ddim_step requires sigma_t >= 0");
  const double ab_prev = schedule.alpha_bar(t_prev);
  const double dir_var = 1.0 - ab_prev - sigma_t * sigma_t;
  if (dir_var < 0.0) {
    // tolerate rounding at the ddpm-matched bound
    if (dir_var < -1e-12) {
      throw InvalidParameter("ddim_step: sigma_t^2 exceeds 1 - alpha_bar(t_prev) at t=" +
                             std::to_string(t));
    }
  }
  const ImageGrid x0_hat = predict_x0(x_t, t, eps_hat, schedule);
  const double a_prev = std::sqrt(ab_prev);
  const double dir = std::sqrt(std::max(dir_var, 0.0));
  ImageGrid out(x_t.height(), x_t.width(), x_t.channels());
  auto dst = out.values();
  auto x0 = x0_hat.values();
  auto e = eps_hat.values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = a_prev * x0[i] + dir * e[i];
  if (sigma_t > 0.0) {
    for (auto& v : dst) v += sigma_t * rng.normal();
  }
  require_finite(out, "ddim_step", t);
  return out;
}

ImageGrid ddpm_step(const ImageGrid& x_t, int t, const ImageGrid& eps_hat, RngStream& rng,
                    const NoiseSchedule& schedule, DdpmNoise noise) {
  require_same_shape(x_t, eps_hat, "ddpm_step");
  if (t < 1 || t > schedule.total_steps()) {
    throw InvalidParameter("ddpm_step: timestep " + std::to_string(t) + " out of range");
  }
  const double alpha = schedule.alpha(t);
  const double beta = schedule.beta(t);
  const double coef = beta / std::sqrt(1.0 - schedule.alpha_bar(t));
  const double inv_sqrt_alpha = 1.0 / std::sqrt(alpha);
  const double sigma = (t == 1 || noise == DdpmNoise::kSuppress) ? 0.0 : std::sqrt(beta);
  ImageGrid out(x_t.height(), x_t.width(), x_t.channels());
  auto dst = out.values();
  auto x = x_t.values();
  auto e = eps_hat.values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = inv_sqrt_alpha * (x[i] - coef * e[i]);
  if (sigma > 0.0) {
    for (auto& v : dst) v += sigma * rng.normal();
  }
  require_finite(out, "ddpm_step", t);
  return out;
}

ImageGrid cfg_combine(const ImageGrid& eps_uncond, const ImageGrid& eps_cond, double scale) {
  require_same_shape(eps_uncond, eps_cond, "cfg_combine");
  // u + (c - u) is not always exactly c in floating point.
  if (scale == 1.0) return eps_cond;
  ImageGrid out(eps_uncond.height(), eps_uncond.width(), eps_uncond.channels());
  auto dst = out.values();
  auto u = eps_uncond.values();
  auto c = eps_cond.values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = u[i] + scale * (c[i] - u[i]);
  return out;
}

}  // namespace compdiff
