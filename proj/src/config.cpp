#include "compdiff/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "compdiff/errors.hpp"
#include "compdiff/png_io.hpp"

namespace compdiff {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

template <typename T>
T get_as(const json& v, const std::string& path) {
  try {
    return v.get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path.lexically_normal() : (base / path).lexically_normal();
}

fs::path existing(const fs::path& base, const json& v, const std::string& key_path) {
  const fs::path p = resolve(base, get_as<std::string>(v, key_path));
  if (!fs::exists(p)) throw ConfigError(key_path + ": file '" + p.string() + "' does not exist");
  return p;
}

void reject_unknown(const json& obj, const std::set<std::string>& known, const std::string& where) {
  if (!obj.is_object()) throw ValidationError(where + ": expected an object");
  for (const auto& [key, value] : obj.items()) {
    if (!known.contains(key)) {
      throw ConfigError((where.empty() ? "" : where + ".") + key + ": unknown key");
    }
  }
}

std::string sigma_mode_name(SigmaMode m) {
  return m == SigmaMode::kDeterministic ? "deterministic" : "ddpm-matched";
}

SigmaMode parse_sigma_mode(const std::string& s, const std::string& path) {
  if (s == "deterministic") return SigmaMode::kDeterministic;
  if (s == "ddpm-matched") return SigmaMode::kDdpmMatched;
  throw ValidationError(path + ": expected 'deterministic' or 'ddpm-matched'");
}

void parse_denoiser_training(const json& j, DenoiserTrainOptions& o) {
  reject_unknown(j, {"epochs", "batch_size", "learning_rate", "cond_dropout", "control_probability", "seed", "hidden"},
                 "denoiser_training");
  const std::string w = "denoiser_training.";
  if (j.contains("epochs")) o.epochs = get_as<int>(j["epochs"], w + "epochs");
  if (j.contains("batch_size")) o.batch_size = get_as<int>(j["batch_size"], w + "batch_size");
  if (j.contains("learning_rate")) o.learning_rate = get_as<double>(j["learning_rate"], w + "learning_rate");
  if (j.contains("cond_dropout")) o.cond_dropout = get_as<double>(j["cond_dropout"], w + "cond_dropout");
  if (j.contains("control_probability")) {
    o.control_probability = get_as<double>(j["control_probability"], w + "control_probability");
  }
  if (j.contains("seed")) o.seed = get_as<std::uint64_t>(j["seed"], w + "seed");
  if (j.contains("hidden")) o.arch.hidden = get_as<int>(j["hidden"], w + "hidden");
  if (o.epochs < 1) throw ValidationError(w + "epochs: must be >= 1");
  if (o.batch_size < 1) throw ValidationError(w + "batch_size: must be >= 1");
  if (o.cond_dropout < 0.0 || o.cond_dropout > 1.0) throw ValidationError(w + "cond_dropout: must lie in [0, 1]");
}

void parse_classifier_training(const json& j, ClassifierTrainOptions& o) {
  reject_unknown(j, {"epochs", "batch_size", "learning_rate", "max_noise", "seed", "hidden", "holdout_samples"},
                 "classifier_training");
  const std::string w = "classifier_training.";
  if (j.contains("epochs")) o.epochs = get_as<int>(j["epochs"], w + "epochs");
  if (j.contains("batch_size")) o.batch_size = get_as<int>(j["batch_size"], w + "batch_size");
  if (j.contains("learning_rate")) o.learning_rate = get_as<double>(j["learning_rate"], w + "learning_rate");
  if (j.contains("max_noise")) o.max_noise = get_as<double>(j["max_noise"], w + "max_noise");
  if (j.contains("seed")) o.seed = get_as<std::uint64_t>(j["seed"], w + "seed");
  if (j.contains("hidden")) o.arch.hidden = get_as<int>(j["hidden"], w + "hidden");
  if (j.contains("holdout_samples")) o.holdout_samples = get_as<int>(j["holdout_samples"], w + "holdout_samples");
  if (o.epochs < 1) throw ValidationError(w + "epochs: must be >= 1");
  if (o.batch_size < 1) throw ValidationError(w + "batch_size: must be >= 1");
}

}  // namespace

RunConfig parse_run_config(const std::string& text, const fs::path& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  reject_unknown(j,
                 {"vocabulary", "schedule", "sampler", "kappa", "guidance_scale", "seed", "layout", "segments",
                  "scaffold_image", "harmonization", "band_radius", "parallel", "models", "output_dir", "dataset",
                  "denoiser_training", "classifier_training", "ablation", "compare"},
                 "");
  RunConfig cfg;
  cfg.vocabulary = Vocabulary::standard().names();
  if (j.contains("vocabulary")) cfg.vocabulary = get_as<std::vector<std::string>>(j["vocabulary"], "vocabulary");
  Vocabulary vocab = Vocabulary::standard();
  try {
    vocab = config_vocabulary(cfg);
  } catch (const LookupError& e) {
    throw ValidationError(std::string("vocabulary: ") + e.what());
  }

  if (j.contains("schedule")) {
    const auto& s = j["schedule"];
    reject_unknown(s, {"T", "beta_start", "beta_end"}, "schedule");
    if (s.contains("T")) cfg.total_steps = get_as<int>(s["T"], "schedule.T");
    if (s.contains("beta_start")) cfg.beta_start = get_as<double>(s["beta_start"], "schedule.beta_start");
    if (s.contains("beta_end")) cfg.beta_end = get_as<double>(s["beta_end"], "schedule.beta_end");
  }
  if (cfg.total_steps < 1) throw ValidationError("schedule.T: must be >= 1");
  if (!(cfg.beta_start > 0.0 && cfg.beta_start <= cfg.beta_end && cfg.beta_end < 1.0)) {
    throw ValidationError("schedule: need 0 < beta_start <= beta_end < 1");
  }
  if (j.contains("sampler")) {
    const auto& s = j["sampler"];
    reject_unknown(s, {"num_steps", "sigma_mode"}, "sampler");
    if (s.contains("num_steps")) cfg.num_steps = get_as<int>(s["num_steps"], "sampler.num_steps");
    if (s.contains("sigma_mode")) {
      cfg.sigma_mode = parse_sigma_mode(get_as<std::string>(s["sigma_mode"], "sampler.sigma_mode"), "sampler.sigma_mode");
    }
  }
  if (cfg.num_steps < 1 || cfg.num_steps > cfg.total_steps) {
    throw ValidationError("sampler.num_steps: must lie in [1, schedule.T]");
  }
  if (j.contains("kappa")) cfg.kappa = get_as<double>(j["kappa"], "kappa");
  if (!(cfg.kappa >= 0.0 && cfg.kappa <= 100.0)) throw ValidationError("kappa: must lie in [0, 100]");
  if (j.contains("guidance_scale")) cfg.guidance_scale = get_as<double>(j["guidance_scale"], "guidance_scale");
  if (j.contains("seed")) cfg.seed = get_as<std::uint64_t>(j["seed"], "seed");
  if (j.contains("harmonization")) {
    try {
      cfg.mode = parse_harmonization_mode(get_as<std::string>(j["harmonization"], "harmonization"));
    } catch (const ConfigError& e) {
      throw ValidationError(std::string("harmonization: ") + e.what());
    }
  }
  if (j.contains("band_radius")) cfg.band_radius = get_as<int>(j["band_radius"], "band_radius");
  if (cfg.band_radius < 1) throw ValidationError("band_radius: must be >= 1");
  if (j.contains("parallel")) cfg.parallel = get_as<bool>(j["parallel"], "parallel");

  if (j.contains("models")) {
    const auto& m = j["models"];
    reject_unknown(m, {"denoiser", "classifier"}, "models");
    if (m.contains("denoiser")) cfg.denoiser_path = resolve(base_dir, get_as<std::string>(m["denoiser"], "models.denoiser"));
    if (m.contains("classifier")) {
      cfg.classifier_path = resolve(base_dir, get_as<std::string>(m["classifier"], "models.classifier"));
    }
  }
  if (cfg.denoiser_path.is_relative()) cfg.denoiser_path = resolve(base_dir, cfg.denoiser_path.string());
  if (cfg.classifier_path.is_relative()) cfg.classifier_path = resolve(base_dir, cfg.classifier_path.string());
  cfg.output_dir = resolve(base_dir, j.contains("output_dir") ? get_as<std::string>(j["output_dir"], "output_dir")
                                                                : cfg.output_dir.string());

  if (j.contains("dataset")) {
    if (j["dataset"].contains("vocabulary")) {
      throw ConfigError("dataset.vocabulary: unknown key (set the top-level vocabulary)");
    }
    cfg.dataset = parse_dataset_config(j["dataset"].dump(), "dataset");
  } else {
    cfg.dataset = DatasetConfig::defaults();
  }
  cfg.dataset.vocabulary = cfg.vocabulary;
  if (j.contains("denoiser_training")) parse_denoiser_training(j["denoiser_training"], cfg.denoiser_training);
  if (j.contains("classifier_training")) parse_classifier_training(j["classifier_training"], cfg.classifier_training);

  if (j.contains("ablation")) {
    const auto& a = j["ablation"];
    reject_unknown(a, {"kappas", "seeds"}, "ablation");
    if (a.contains("kappas")) cfg.ablation_kappas = get_as<std::vector<double>>(a["kappas"], "ablation.kappas");
    if (a.contains("seeds")) cfg.ablation_seeds = get_as<std::vector<std::uint64_t>>(a["seeds"], "ablation.seeds");
    for (double k : cfg.ablation_kappas) {
      if (!(k >= 0.0 && k <= 100.0)) throw ValidationError("ablation.kappas: entries must lie in [0, 100]");
    }
  }
  if (j.contains("compare")) {
    const auto& c = j["compare"];
    reject_unknown(c, {"seeds"}, "compare");
    if (c.contains("seeds")) cfg.compare_seeds = get_as<std::vector<std::uint64_t>>(c["seeds"], "compare.seeds");
  }

  if (j.contains("scaffold_image")) {
    const auto s = get_as<std::string>(j["scaffold_image"], "scaffold_image");
    if (s != "gray") cfg.scaffold_image = existing(base_dir, j["scaffold_image"], "scaffold_image");
  }

  if (j.contains("segments")) {
    const auto& segs = j["segments"];
    if (!segs.is_object()) throw ValidationError("segments: expected an object keyed by layout id");
    for (const auto& [label, body] : segs.items()) {
      const std::string where = "segments." + label;
      SegmentEntry e;
      e.label = label;
      reject_unknown(body, {"tokens", "control", "reference", "scaffold"}, where);
      if (!body.contains("tokens")) throw ValidationError(where + ".tokens: required");
      if (body["tokens"].is_string()) {
        e.tokens = {body["tokens"].get<std::string>()};
      } else {
        e.tokens = get_as<std::vector<std::string>>(body["tokens"], where + ".tokens");
      }
      if (e.tokens.empty()) throw ValidationError(where + ".tokens: must not be empty");
      for (std::size_t k = 0; k < e.tokens.size(); ++k) {
        try {
          vocab.by_name(e.tokens[k]);
        } catch (const LookupError&) {
          throw ValidationError(where + ".tokens[" + std::to_string(k) + "]: unknown token '" + e.tokens[k] + "'");
        }
      }
      if (body.contains("control")) e.control = existing(base_dir, body["control"], where + ".control");
      if (body.contains("reference")) e.reference = existing(base_dir, body["reference"], where + ".reference");
      if (body.contains("scaffold")) e.scaffold = existing(base_dir, body["scaffold"], where + ".scaffold");
      cfg.segments.push_back(std::move(e));
    }
  }

  if (j.contains("layout")) {
    cfg.layout = existing(base_dir, j["layout"], "layout");
    const auto labels = layout_file_labels(*cfg.layout);
    for (const auto& label : labels) {
      const bool found = std::any_of(cfg.segments.begin(), cfg.segments.end(),
                                     [&](const SegmentEntry& e) { return e.label == label; });
      if (!found) throw ValidationError("segments: unassigned segment " + label + " (present in the layout)");
    }
    for (const auto& e : cfg.segments) {
      if (std::find(labels.begin(), labels.end(), e.label) == labels.end()) {
        throw ValidationError("segments." + e.label + ": id not present in the layout");
      }
    }
  } else if (!cfg.segments.empty()) {
    throw ValidationError("segments: given without a layout");
  }
  return cfg;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config file '" + path.string() + "' does not exist or is unreadable");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str(), fs::absolute(path).parent_path());
}

std::string resolved_config_json(const RunConfig& cfg) {
  json segments = json::object();
  for (const auto& e : cfg.segments) {
    json s = {{"tokens", e.tokens}};
    if (e.control) s["control"] = e.control->string();
    if (e.reference) s["reference"] = e.reference->string();
    if (e.scaffold) s["scaffold"] = e.scaffold->string();
    segments[e.label] = s;
  }
  const auto& d = cfg.dataset;
  const auto& dt = cfg.denoiser_training;
  const auto& ct = cfg.classifier_training;
  json j = {
      {"vocabulary", cfg.vocabulary},
      {"schedule", {{"T", cfg.total_steps}, {"beta_start", cfg.beta_start}, {"beta_end", cfg.beta_end}}},
      {"sampler", {{"num_steps", cfg.num_steps}, {"sigma_mode", sigma_mode_name(cfg.sigma_mode)}}},
      {"kappa", cfg.kappa},
      {"guidance_scale", cfg.guidance_scale},
      {"seed", cfg.seed},
      {"segments", segments},
      {"scaffold_image", cfg.scaffold_image ? cfg.scaffold_image->string() : std::string("gray")},
      {"harmonization", to_string(cfg.mode)},
      {"band_radius", cfg.band_radius},
      {"parallel", cfg.parallel},
      {"models", {{"denoiser", cfg.denoiser_path.string()}, {"classifier", cfg.classifier_path.string()}}},
      {"output_dir", cfg.output_dir.string()},
      {"dataset",
       {{"image_size", {d.height, d.width}},
        {"samples_per_token", d.samples_per_token},
        {"composite_samples", d.composite_samples},
        {"max_segments", d.max_segments},
        {"seed", d.seed}}},
      {"denoiser_training",
       {{"epochs", dt.epochs},
        {"batch_size", dt.batch_size},
        {"learning_rate", dt.learning_rate},
        {"cond_dropout", dt.cond_dropout},
        {"control_probability", dt.control_probability},
        {"seed", dt.seed},
        {"hidden", dt.arch.hidden}}},
      {"classifier_training",
       {{"epochs", ct.epochs},
        {"batch_size", ct.batch_size},
        {"learning_rate", ct.learning_rate},
        {"max_noise", ct.max_noise},
        {"seed", ct.seed},
        {"hidden", ct.arch.hidden},
        {"holdout_samples", ct.holdout_samples}}},
      {"ablation", {{"kappas", cfg.ablation_kappas}, {"seeds", cfg.ablation_seeds}}},
      {"compare", {{"seeds", cfg.compare_seeds}}},
  };
  if (cfg.layout) j["layout"] = cfg.layout->string();
  return j.dump(2) + "\n";
}

Vocabulary config_vocabulary(const RunConfig& cfg) {
  DatasetConfig d;
  d.vocabulary = cfg.vocabulary;
  return d.make_vocabulary();
}

NoiseSchedule config_schedule(const RunConfig& cfg) {
  return make_linear_schedule(cfg.total_steps, cfg.beta_start, cfg.beta_end);
}

StepPlan config_plan(const RunConfig& cfg, const NoiseSchedule& schedule, double kappa) {
  return make_step_plan(schedule, cfg.num_steps, kappa, cfg.sigma_mode);
}

BinaryGrid load_control_map(const fs::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".png") {
    const RgbImage img = read_png_rgb(path);
    BinaryGrid g(img.height, img.width);
    auto v = g.values();
    for (std::size_t p = 0; p < v.size(); ++p) {
      const int luma = (299 * img.pixels[3 * p] + 587 * img.pixels[3 * p + 1] + 114 * img.pixels[3 * p + 2]) / 1000;
      v[p] = luma > 127 ? 1 : 0;
    }
    return g;
  }
  std::ifstream in(path);
  std::vector<std::vector<int>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream row(line);
    std::vector<int> cells;
    int v = 0;
    while (row >> v) {
      if (v != 0 && v != 1) throw ParseError("control map '" + path.string() + "' must contain only 0 and 1");
      cells.push_back(v);
    }
    if (!cells.empty()) rows.push_back(std::move(cells));
  }
  if (rows.empty()) throw ParseError("control map '" + path.string() + "' is empty");
  BinaryGrid g(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()));
  for (std::size_t y = 0; y < rows.size(); ++y) {
    if (rows[y].size() != rows[0].size()) throw ParseError("control map '" + path.string() + "' is ragged");
    for (std::size_t x = 0; x < rows[y].size(); ++x) {
      g.at(static_cast<int>(y), static_cast<int>(x)) = static_cast<std::uint8_t>(rows[y][x]);
    }
  }
  return g;
}

Scene load_scene(const RunConfig& cfg) {
  if (!cfg.layout) throw ConfigError("layout: required for this command");
  const Vocabulary vocab = config_vocabulary(cfg);
  const auto labels = layout_file_labels(*cfg.layout);
  Scene scene{parse_layout_file(*cfg.layout), {}, {}, std::nullopt};
  scene.masks = build_masks(scene.layout);
  const int h = scene.layout.height(), w = scene.layout.width();
  auto check_size = [&](int hh, int ww, const std::string& what) {
    if (hh != h || ww != w) {
      throw ValidationError(what + ": size " + std::to_string(hh) + "x" + std::to_string(ww) +
                            " does not match the layout " + std::to_string(h) + "x" + std::to_string(w));
    }
  };
  for (std::size_t id = 1; id <= labels.size(); ++id) {
    const auto it = std::find_if(cfg.segments.begin(), cfg.segments.end(),
                                 [&](const SegmentEntry& e) { return e.label == labels[id - 1]; });
    if (it == cfg.segments.end()) throw ValidationError("segments: unassigned segment " + labels[id - 1]);
    const std::string where = "segments." + it->label;
    SegmentSpec spec;
    spec.segment = static_cast<int>(id);
    for (const auto& name : it->tokens) spec.tokens.push_back(vocab.by_name(name).id);
    if (it->control) {
      spec.control = load_control_map(*it->control);
      check_size(spec.control->height(), spec.control->width(), where + ".control");
    }
    if (it->reference) {
      spec.reference = read_grid_png(*it->reference);
      check_size(spec.reference->height(), spec.reference->width(), where + ".reference");
    }
    if (it->scaffold) {
      spec.scaffold = read_grid_png(*it->scaffold);
      check_size(spec.scaffold->height(), spec.scaffold->width(), where + ".scaffold");
    }
    scene.specs.push_back(std::move(spec));
  }
  if (cfg.scaffold_image) {
    scene.scaffold_image = read_grid_png(*cfg.scaffold_image);
    check_size(scene.scaffold_image->height(), scene.scaffold_image->width(), "scaffold_image");
  }
  return scene;
}

CompositeRequest make_request(const RunConfig& cfg, const Scene& scene, const NoiseSchedule& schedule,
                              const Denoiser& denoiser, double kappa, std::uint64_t seed) {
  CompositeRequest r;
  r.schedule = &schedule;
  r.plan = config_plan(cfg, schedule, kappa);
  r.denoiser = &denoiser;
  r.masks = scene.masks;
  r.specs = scene.specs;
  r.scaffold_image = scene.scaffold_image;
  r.mode = cfg.mode;
  r.guidance_scale = cfg.guidance_scale;
  r.seed = seed;
  r.parallel = cfg.parallel;
  return r;
}

}  // namespace compdiff
