#include "compdiff/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "json.hpp"

#include "compdiff/errors.hpp"

namespace compdiff {

using nlohmann::json;

namespace {

std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

json scores_json(const MeanScores& m) {
  return {{"content_fidelity", m.content_fidelity},
          {"spatial_fidelity", m.spatial_fidelity},
          {"technical_quality", m.technical_quality},
          {"blending", m.blending}};
}

json report_json(const MetricsReport& r) { return json::parse(report_to_json(r)); }

}  // namespace

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw ShapeError("spearman needs equal-length inputs");
  if (x.size() < 2) throw InvalidParameter("spearman needs at least two points");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

MeanScores mean_scores(const std::vector<MetricsReport>& reports) {
  MeanScores m;
  if (reports.empty()) return m;
  for (const auto& r : reports) {
    m.content_fidelity += r.content_fidelity;
    m.spatial_fidelity += r.spatial_fidelity;
    m.technical_quality += r.technical_quality;
    m.blending += r.blending;
  }
  const double n = static_cast<double>(reports.size());
  m.content_fidelity /= n;
  m.spatial_fidelity /= n;
  m.technical_quality /= n;
  m.blending /= n;
  return m;
}

ImageGrid generate_composite(const RunContext& ctx, double kappa, std::uint64_t seed) {
  const CompositeRequest req = make_request(*ctx.config, *ctx.scene, *ctx.schedule, *ctx.denoiser, kappa, seed);
  return run_composite(req).image;
}

ImageGrid generate_text_to_image(const RunContext& ctx, std::uint64_t seed) {
  const int V = ctx.denoiser->vocabulary_size();
  std::vector<Condition> parts;
  for (const auto& s : ctx.scene->specs) parts.push_back(Condition::from_ids(V, s.tokens));
  const StepPlan plan = config_plan(*ctx.config, *ctx.schedule, 0.0);
  return run_text_to_image_baseline(union_condition(V, parts), *ctx.schedule, plan, *ctx.denoiser,
                                    ctx.config->guidance_scale, seed, ctx.scene->layout.height(),
                                    ctx.scene->layout.width());
}

ImageGrid generate_serial(const RunContext& ctx, std::uint64_t seed) {
  const int h = ctx.scene->layout.height(), w = ctx.scene->layout.width();
  const ImageGrid background =
      ctx.scene->scaffold_image ? *ctx.scene->scaffold_image : ImageGrid(h, w, 3, 0.0, GridDomain::kData);
  const StepPlan plan = config_plan(*ctx.config, *ctx.schedule, 0.0);
  return run_serial_inpainting_baseline(background, ctx.scene->masks, ctx.scene->specs, *ctx.schedule, plan,
                                        *ctx.denoiser, ctx.config->guidance_scale, seed);
}

MetricsReport evaluate(const RunContext& ctx, const ImageGrid& image, std::uint64_t seed, double kappa,
                       const std::string& mode) {
  MetricsReport r = evaluate_image(image, ctx.scene->masks, ctx.scene->specs, *ctx.classifier, *ctx.vocabulary,
                                   ctx.config->band_radius);
  r.seed = seed;
  r.kappa = kappa;
  r.mode = mode;
  return r;
}

AblationTable ablate_kappa(const RunContext& ctx, const std::vector<double>& kappas,
                           const std::vector<std::uint64_t>& seeds) {
  if (kappas.empty()) throw InvalidParameter("ablate_kappa: empty kappa list");
  if (seeds.empty()) throw InvalidParameter("ablate_kappa: empty seed list");
  AblationTable t;
  t.kappas = kappas;
  const std::string mode = to_string(ctx.config->mode);
  std::vector<double> raw_k, raw_b, mean_b;
  for (double kappa : kappas) {
    std::vector<MetricsReport> reports;
    for (std::uint64_t seed : seeds) {
      const ImageGrid img = generate_composite(ctx, kappa, seed);
      MetricsReport r = evaluate(ctx, img, seed, kappa, mode);
      raw_k.push_back(kappa);
      raw_b.push_back(r.blending);
      reports.push_back(r);
      t.raw.push_back({kappa, seed, std::move(r)});
    }
    t.means.push_back(mean_scores(reports));
    mean_b.push_back(t.means.back().blending);
  }
  if (kappas.size() >= 2) t.spearman_blending = spearman(kappas, mean_b);
  if (raw_k.size() >= 2) t.spearman_blending_raw = spearman(raw_k, raw_b);
  return t;
}

std::string ablation_to_json(const AblationTable& t) {
  json rows = json::array();
  for (std::size_t i = 0; i < t.kappas.size(); ++i) {
    json row = scores_json(t.means[i]);
    row["kappa"] = t.kappas[i];
    rows.push_back(row);
  }
  json raw = json::array();
  for (const auto& r : t.raw) raw.push_back(report_json(r.report));
  json j = {{"rows", rows},
            {"spearman_kappa_blending", t.spearman_blending},
            {"spearman_kappa_blending_raw", t.spearman_blending_raw},
            {"raw", raw}};
  return j.dump(2) + "\n";
}

ComparisonTable compare_methods(const RunContext& ctx, const std::vector<std::uint64_t>& seeds) {
  if (seeds.empty()) throw InvalidParameter("compare_methods: empty seed list");
  ComparisonTable t;
  t.seeds = seeds;
  const double kappa = ctx.config->kappa;
  for (std::uint64_t seed : seeds) {
    t.composite.push_back(evaluate(ctx, generate_composite(ctx, kappa, seed), seed, kappa, "composite"));
    t.text_to_image.push_back(evaluate(ctx, generate_text_to_image(ctx, seed), seed, 0.0, "text-to-image"));
    t.serial.push_back(evaluate(ctx, generate_serial(ctx, seed), seed, 0.0, "serial-inpainting"));
  }
  t.composite_mean = mean_scores(t.composite);
  t.text_to_image_mean = mean_scores(t.text_to_image);
  t.serial_mean = mean_scores(t.serial);
  return t;
}

std::string comparison_to_json(const ComparisonTable& t) {
  auto list = [](const std::vector<MetricsReport>& v) {
    json a = json::array();
    for (const auto& r : v) a.push_back(report_json(r));
    return a;
  };
  json j = {{"seeds", t.seeds},
            {"mean",
             {{"composite", scores_json(t.composite_mean)},
              {"text_to_image", scores_json(t.text_to_image_mean)},
              {"serial_inpainting", scores_json(t.serial_mean)}}},
            {"composite", list(t.composite)},
            {"text_to_image", list(t.text_to_image)},
            {"serial_inpainting", list(t.serial)}};
  return j.dump(2) + "\n";
}

}  // namespace compdiff
