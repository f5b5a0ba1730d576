#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "compdiff/config.hpp"
#include "compdiff/errors.hpp"
#include "compdiff/experiments.hpp"
#include "compdiff/png_io.hpp"

namespace fs = std::filesystem;
using namespace compdiff;

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<double> kappa;
  std::optional<std::string> out;
  bool trace = false;
  bool quiet = false;
  std::string image;  // eval only
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "Run configuration (JSON)")->required();
  cmd->add_option("--seed", f.seed, "Override the run seed");
  cmd->add_option("--kappa", f.kappa, "Override the scaffolding factor (percent)");
  cmd->add_option("--out", f.out, "Override the output directory");
  cmd->add_flag("--trace", f.trace, "Dump per-step snapshots as PNG strips");
  cmd->add_flag("--quiet", f.quiet, "Suppress progress output");
}

class Session {
 public:
  explicit Session(const CommonFlags& f) : flags_(f), cfg_(load_run_config(f.config)) {
    if (f.seed) cfg_.seed = *f.seed;
    if (f.kappa) {
      if (!(*f.kappa >= 0.0 && *f.kappa <= 100.0)) throw ValidationError("--kappa: must lie in [0, 100]");
      cfg_.kappa = *f.kappa;
    }
    if (f.out) cfg_.output_dir = fs::absolute(*f.out);
    fs::create_directories(cfg_.output_dir);
    write_text(cfg_.output_dir / "resolved_config.json", resolved_config_json(cfg_));
  }

  const RunConfig& cfg() const { return cfg_; }
  const fs::path& out() const { return cfg_.output_dir; }

  void log(const std::string& msg) const {
    if (!flags_.quiet) std::cerr << msg << "\n";
  }

  static void write_text(const fs::path& path, const std::string& text) {
    std::ofstream o(path, std::ios::binary);
    if (!o) throw Error("cannot write '" + path.string() + "'");
    o << text;
  }

  // Lazily loaded models and scene.
  RunContext context(bool need_classifier) {
    if (!schedule_) schedule_.emplace(config_schedule(cfg_));
    if (!vocab_) vocab_.emplace(config_vocabulary(cfg_));
    if (!scene_) scene_.emplace(load_scene(cfg_));
    if (!denoiser_) {
      require_file(cfg_.denoiser_path, "models.denoiser", "train-denoiser");
      denoiser_.emplace(load_weights(cfg_.denoiser_path));
      if (denoiser_->vocabulary_size() != vocab_->size()) {
        throw ConfigError("models.denoiser: vocabulary size " + std::to_string(denoiser_->vocabulary_size()) +
                          " does not match the config vocabulary (" + std::to_string(vocab_->size()) + ")");
      }
    }
    if (need_classifier && !classifier_) {
      require_file(cfg_.classifier_path, "models.classifier", "train-classifier");
      classifier_.emplace(load_classifier(cfg_.classifier_path));
      if (classifier_->vocabulary_size() != vocab_->size()) {
        throw ConfigError("models.classifier: vocabulary size does not match the config vocabulary");
      }
    }
    return RunContext{&cfg_, &*scene_, &*schedule_, &*denoiser_, classifier_ ? &*classifier_ : nullptr, &*vocab_};
  }

  bool classifier_available() const { return fs::exists(cfg_.classifier_path); }

 private:
  static void require_file(const fs::path& p, const std::string& key, const std::string& cmd) {
    if (!fs::exists(p)) {
      throw ConfigError(key + ": '" + p.string() + "' does not exist (run '" + cmd + "' first)");
    }
  }

  CommonFlags flags_;
  RunConfig cfg_;
  std::optional<NoiseSchedule> schedule_;
  std::optional<Vocabulary> vocab_;
  std::optional<Scene> scene_;
  std::optional<ToyDenoiser> denoiser_;
  std::optional<PatternClassifier> classifier_;
};

void write_report_if_possible(Session& s, const RunContext& ctx, const ImageGrid& img, const fs::path& path,
                              double kappa, const std::string& mode) {
  if (!ctx.classifier) {
    s.log("no classifier at '" + s.cfg().classifier_path.string() + "'; skipping metrics report");
    return;
  }
  const MetricsReport r = evaluate(ctx, img, s.cfg().seed, kappa, mode);
  Session::write_text(path, report_to_json(r));
  s.log("content " + std::to_string(r.content_fidelity) + "  spatial " + std::to_string(r.spatial_fidelity) +
        "  noise " + std::to_string(r.technical_quality) + "  blending " + std::to_string(r.blending));
}

int cmd_gen_dataset(const CommonFlags& f) {
  Session s(f);
  const auto data = generate_dataset(s.cfg().dataset);
  const fs::path dir = s.out() / "dataset";
  fs::create_directories(dir);
  const Vocabulary vocab = config_vocabulary(s.cfg());
  nlohmann::json manifest = nlohmann::json::array();
  for (std::size_t i = 0; i < data.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "sample_%05zu.png", i);
    write_grid_png(data[i].image, dir / name);
    std::vector<std::string> tokens;
    for (int t : data[i].segment_tokens) tokens.push_back(vocab.at(t).name);
    manifest.push_back({{"image", name}, {"segment_tokens", tokens}, {"layout", layout_to_text(data[i].layout)}});
  }
  Session::write_text(dir / "manifest.json", manifest.dump(1) + "\n");
  s.log("wrote " + std::to_string(data.size()) + " samples to " + dir.string());
  return 0;
}

int cmd_train_denoiser(const CommonFlags& f) {
  Session s(f);
  const NoiseSchedule schedule = config_schedule(s.cfg());
  std::ofstream loss_log(s.out() / "denoiser_loss.csv");
  loss_log << "step,loss\n";
  const auto log = [&](int step, double loss) {
    loss_log << step << "," << loss << "\n";
    if (step % 100 == 0) s.log("step " + std::to_string(step) + "  loss " + std::to_string(loss));
  };
  const ToyDenoiserWeights w = train_toy_denoiser(s.cfg().dataset, schedule, s.cfg().denoiser_training, log);
  fs::create_directories(s.cfg().denoiser_path.parent_path());
  persist_weights(w, s.cfg().denoiser_path);
  s.log("saved denoiser to " + s.cfg().denoiser_path.string());
  return 0;
}

int cmd_train_classifier(const CommonFlags& f) {
  Session s(f);
  const auto log = [&](int step, double loss) {
    if (step % 100 == 0) s.log("step " + std::to_string(step) + "  loss " + std::to_string(loss));
  };
  const ClassifierTrainResult r = train_classifier(s.cfg().dataset, s.cfg().classifier_training, log);
  fs::create_directories(s.cfg().classifier_path.parent_path());
  save_tensor_table(r.tensors, s.cfg().classifier_path);
  s.log("held-out accuracy " + std::to_string(r.holdout_accuracy));
  s.log("saved classifier to " + s.cfg().classifier_path.string());
  return 0;
}

void dump_trace(const TraceRecord& trace, const fs::path& dir) {
  fs::create_directories(dir);
  std::vector<ImageGrid> composites;
  for (std::size_t k = 0; k < trace.steps.size(); ++k) {
    const auto& step = trace.steps[k];
    std::vector<ImageGrid> row = step.segments;
    row.push_back(step.composite);
    char name[48];
    std::snprintf(name, sizeof name, "step_%03zu_%s_t%04d.png", k, step.stage.c_str(), step.timestep);
    write_grid_png(hstack(row), dir / name);
    composites.push_back(step.composite);
  }
  if (!composites.empty()) write_grid_png(hstack(composites), dir / "composites.png");
}

int cmd_generate(const CommonFlags& f) {
  Session s(f);
  RunContext ctx = s.context(s.classifier_available());
  CompositeRequest req = make_request(s.cfg(), *ctx.scene, *ctx.schedule, *ctx.denoiser, s.cfg().kappa, s.cfg().seed);
  req.trace = f.trace;
  const CompositeResult res = run_composite(req);
  write_grid_png(res.image, s.out() / "composite.png");
  if (f.trace) dump_trace(res.trace, s.out() / "trace");
  write_report_if_possible(s, ctx, res.image, s.out() / "report.json", s.cfg().kappa, to_string(s.cfg().mode));
  s.log("wrote " + (s.out() / "composite.png").string());
  return 0;
}

int cmd_baseline(const CommonFlags& f, bool serial) {
  Session s(f);
  RunContext ctx = s.context(s.classifier_available());
  const ImageGrid img = serial ? generate_serial(ctx, s.cfg().seed) : generate_text_to_image(ctx, s.cfg().seed);
  const std::string stem = serial ? "serial" : "t2i";
  write_grid_png(img, s.out() / (stem + ".png"));
  write_report_if_possible(s, ctx, img, s.out() / (stem + "_report.json"), 0.0,
                           serial ? "serial-inpainting" : "text-to-image");
  s.log("wrote " + (s.out() / (stem + ".png")).string());
  return 0;
}

int cmd_ablate(const CommonFlags& f) {
  Session s(f);
  RunContext ctx = s.context(true);
  std::vector<double> kappas = s.cfg().ablation_kappas;
  std::vector<std::uint64_t> seeds = s.cfg().ablation_seeds;
  if (f.kappa) kappas = {*f.kappa};
  if (f.seed) seeds = {*f.seed};
  const AblationTable t = ablate_kappa(ctx, kappas, seeds);
  Session::write_text(s.out() / "ablation.json", ablation_to_json(t));
  for (std::size_t i = 0; i < t.kappas.size(); ++i) {
    const auto& m = t.means[i];
    std::printf("kappa %6.1f  content %.4f  spatial %.4f  noise %.4f  blending %.4f\n", t.kappas[i],
                m.content_fidelity, m.spatial_fidelity, m.technical_quality, m.blending);
  }
  std::printf("spearman(kappa, blending) = %.4f over means, %.4f over raw rows\n", t.spearman_blending,
              t.spearman_blending_raw);
  return 0;
}

int cmd_eval(const CommonFlags& f) {
  Session s(f);
  RunContext ctx = s.context(true);
  const ImageGrid img = read_grid_png(f.image);
  const MetricsReport r = evaluate(ctx, img, s.cfg().seed, s.cfg().kappa, "eval");
  Session::write_text(s.out() / "eval_report.json", report_to_json(r));
  std::cout << report_to_json(r);
  return 0;
}

int cmd_compare(const CommonFlags& f) {
  Session s(f);
  RunContext ctx = s.context(true);
  std::vector<std::uint64_t> seeds = s.cfg().compare_seeds;
  if (f.seed) seeds = {*f.seed};
  const ComparisonTable t = compare_methods(ctx, seeds);
  Session::write_text(s.out() / "comparison.json", comparison_to_json(t));
  auto line = [](const char* name, const MeanScores& m) {
    std::printf("%-18s content %.4f  spatial %.4f  noise %.4f  blending %.4f\n", name, m.content_fidelity,
                m.spatial_fidelity, m.technical_quality, m.blending);
  };
  line("composite", t.composite_mean);
  line("text-to-image", t.text_to_image_mean);
  line("serial-inpainting", t.serial_mean);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Composite diffusion on a procedural toy domain"};
  app.require_subcommand(1);
  CommonFlags f;

  auto* gen_dataset = app.add_subcommand("gen-dataset", "Render the procedural training set");
  auto* train_den = app.add_subcommand("train-denoiser", "Train the toy epsilon-predictor");
  auto* train_cls = app.add_subcommand("train-classifier", "Train the metric pattern classifier");
  auto* generate = app.add_subcommand("generate", "Run scaffolding + harmonization");
  auto* baseline = app.add_subcommand("baseline", "Run a baseline method");
  baseline->require_subcommand(1);
  auto* t2i = baseline->add_subcommand("t2i", "Text-to-image under the union condition");
  auto* serial = baseline->add_subcommand("serial", "Serial inpainting, one segment at a time");
  auto* ablate = app.add_subcommand("ablate-kappa", "Sweep the scaffolding factor");
  auto* eval = app.add_subcommand("eval", "Score an existing image");
  auto* compare = app.add_subcommand("compare", "Composite vs both baselines over seeds");
  for (auto* c : {gen_dataset, train_den, train_cls, generate, t2i, serial, ablate, eval, compare}) add_common(c, f);
  eval->add_option("--image", f.image, "PNG to score")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*gen_dataset) return cmd_gen_dataset(f);
    if (*train_den) return cmd_train_denoiser(f);
    if (*train_cls) return cmd_train_classifier(f);
    if (*generate) return cmd_generate(f);
    if (*t2i) return cmd_baseline(f, false);
    if (*serial) return cmd_baseline(f, true);
    if (*ablate) return cmd_ablate(f);
    if (*eval) return cmd_eval(f);
    if (*compare) return cmd_compare(f);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
