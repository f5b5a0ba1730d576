#include "compdiff/toy_denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "compdiff/errors.hpp"

namespace compdiff {

using nlohmann::json;

namespace {

constexpr int kDilations[] = {1, 2, 4, 8, 1};
constexpr float kModelTagDenoiser = 1.0f;

std::vector<float> to_chw(const ImageGrid& g) {
  const int h = g.height(), w = g.width(), c = g.channels();
  std::vector<float> out(static_cast<std::size_t>(h) * w * c);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int k = 0; k < c; ++k) {
        out[(static_cast<std::size_t>(k) * h + y) * w + x] = static_cast<float>(g.at(y, x, k));
      }
    }
  }
  return out;
}

void append_control(std::vector<float>& chw, const BinaryGrid* control, int h, int w) {
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  const std::size_t base = chw.size();
  chw.resize(base + hw, 0.0f);
  if (!control) return;
  const auto v = control->values();
  for (std::size_t p = 0; p < hw; ++p) chw[base + p] = v[p] ? 1.0f : -1.0f;
}

}  // namespace

// ---------------------------------------------------------------------------- dataset

Vocabulary DatasetConfig::make_vocabulary() const {
  const auto standard = Vocabulary::standard();
  std::vector<PatternToken> tokens;
  for (const auto& name : vocabulary) {
    PatternToken t = standard.by_name(name);
    t.id = static_cast<int>(tokens.size());
    tokens.push_back(t);
  }
  if (tokens.empty()) throw ConfigError("dataset vocabulary is empty");
  return Vocabulary(std::move(tokens));
}

DatasetConfig DatasetConfig::defaults() {
  DatasetConfig cfg;
  cfg.vocabulary = Vocabulary::standard().names();
  return cfg;
}

DatasetConfig parse_dataset_config(const std::string& text, const std::string& where) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(where + ": " + e.what());
  }
  if (!j.is_object()) throw ParseError(where + ": expected an object");
  DatasetConfig cfg = DatasetConfig::defaults();
  for (const auto& [key, value] : j.items()) {
    const std::string path = where + "." + key;
    try {
      if (key == "vocabulary") {
        cfg.vocabulary = value.get<std::vector<std::string>>();
      } else if (key == "image_size") {
        const auto hw = value.get<std::vector<int>>();
        if (hw.size() != 2) throw ValidationError(path + ": expected [height, width]");
        cfg.height = hw[0];
        cfg.width = hw[1];
      } else if (key == "samples_per_token") {
        cfg.samples_per_token = value.get<int>();
      } else if (key == "composite_samples") {
        cfg.composite_samples = value.get<int>();
      } else if (key == "max_segments") {
        cfg.max_segments = value.get<int>();
      } else if (key == "seed") {
        cfg.seed = value.get<std::uint64_t>();
      } else {
        throw ConfigError(path + ": unknown key");
      }
    } catch (const json::exception& e) {
      throw ValidationError(path + ": " + e.what());
    }
  }
  if (cfg.height < 3 || cfg.width < 3) throw ValidationError(where + ".image_size: too small");
  if (cfg.samples_per_token < 1) throw ValidationError(where + ".samples_per_token: must be >= 1");
  if (cfg.composite_samples < 0) throw ValidationError(where + ".composite_samples: must be >= 0");
  if (cfg.max_segments < 2 || cfg.max_segments > kMaxSegments) {
    throw ValidationError(where + ".max_segments: must lie in [2, 16]");
  }
  try {
    cfg.make_vocabulary();
  } catch (const LookupError& e) {
    throw ValidationError(where + ".vocabulary: " + e.what());
  }
  return cfg;
}

DatasetConfig load_dataset_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open dataset config '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_dataset_config(buf.str(), path.filename().string());
}

void save_dataset_config(const DatasetConfig& cfg, const std::filesystem::path& path) {
  json j = {{"vocabulary", cfg.vocabulary},
            {"image_size", {cfg.height, cfg.width}},
            {"samples_per_token", cfg.samples_per_token},
            {"composite_samples", cfg.composite_samples},
            {"max_segments", cfg.max_segments},
            {"seed", cfg.seed}};
  std::ofstream out(path);
  out << j.dump(2) << "\n";
}

std::vector<TrainingSample> generate_dataset(const DatasetConfig& cfg) {
  const Vocabulary vocab = cfg.make_vocabulary();
  const int V = vocab.size();
  std::vector<TrainingSample> data;
  data.reserve(static_cast<std::size_t>(V * cfg.samples_per_token + cfg.composite_samples));
  const SegmentLayout whole(cfg.height, cfg.width,
                            std::vector<int>(static_cast<std::size_t>(cfg.height) * cfg.width, 1));
  for (int tok = 0; tok < V; ++tok) {
    for (int i = 0; i < cfg.samples_per_token; ++i) {
      RngStream rng(cfg.seed, RngLane{"dataset/single", i, tok});
      PatternRender r = render_pattern(vocab.at(tok), cfg.height, cfg.width, rng);
      std::vector<std::uint8_t> multihot(static_cast<std::size_t>(V), 0);
      multihot[static_cast<std::size_t>(tok)] = 1;
      data.push_back({std::move(r.image), std::move(r.structure), std::move(multihot), whole, {tok}});
    }
  }
  const int max_seg = std::min(cfg.max_segments, V);
  for (int i = 0; i < cfg.composite_samples && max_seg >= 2; ++i) {
    RngStream rng(cfg.seed, RngLane{"dataset/composite", i, 0});
    const int n = rng.uniform_int(2, max_seg);
    SegmentLayout layout = random_layout(cfg.height, cfg.width, n, rng);
    std::vector<int> pool(static_cast<std::size_t>(V));
    std::iota(pool.begin(), pool.end(), 0);
    for (int k = 0; k < n; ++k) {
      const int j = rng.uniform_int(k, V - 1);
      std::swap(pool[static_cast<std::size_t>(k)], pool[static_cast<std::size_t>(j)]);
    }
    std::map<int, PatternToken> assign;
    std::vector<std::uint8_t> multihot(static_cast<std::size_t>(V), 0);
    std::vector<int> seg_tokens;
    for (int k = 0; k < n; ++k) {
      const int tok = pool[static_cast<std::size_t>(k)];
      assign[k + 1] = vocab.at(tok);
      multihot[static_cast<std::size_t>(tok)] = 1;
      seg_tokens.push_back(tok);
    }
    CompositeRender r = render_composite(layout, assign, rng);
    data.push_back({std::move(r.image), std::move(r.structure), std::move(multihot), std::move(layout),
                    std::move(seg_tokens)});
  }
  return data;
}

// ---------------------------------------------------------------------------- weights file

void persist_weights(const ToyDenoiserWeights& weights, const std::filesystem::path& path) {
  TensorTable table = weights.tensors;
  const auto& a = weights.arch;
  table.put("meta.model", {1}, {kModelTagDenoiser});
  table.put("meta.arch", {7},
            {static_cast<float>(a.height), static_cast<float>(a.width),
             static_cast<float>(a.vocabulary), static_cast<float>(a.hidden),
             static_cast<float>(a.embed), static_cast<float>(a.time_features),
             a.accepts_control ? 1.0f : 0.0f});
  table.put("meta.cond_dropout", {1}, {static_cast<float>(weights.cond_dropout)});
  save_tensor_table(table, path);
}

ToyDenoiserWeights load_weights(const std::filesystem::path& path) {
  const TensorTable table = load_tensor_table(path);
  const auto* model = table.find("meta.model");
  if (!model || model->data.size() != 1 || model->data[0] != kModelTagDenoiser) {
    throw FormatError("'" + path.string() + "' does not hold denoiser weights");
  }
  const auto& arch = table.get("meta.arch");
  if (arch.data.size() != 7) throw FormatError("malformed meta.arch");
  ToyDenoiserWeights w;
  w.arch.height = static_cast<int>(arch.data[0]);
  w.arch.width = static_cast<int>(arch.data[1]);
  w.arch.vocabulary = static_cast<int>(arch.data[2]);
  w.arch.hidden = static_cast<int>(arch.data[3]);
  w.arch.embed = static_cast<int>(arch.data[4]);
  w.arch.time_features = static_cast<int>(arch.data[5]);
  w.arch.accepts_control = arch.data[6] != 0.0f;
  w.cond_dropout = table.get("meta.cond_dropout").data.at(0);
  for (const auto& t : table.tensors()) {
    if (t.name.rfind("meta.", 0) == 0) continue;
    w.tensors.put(t.name, t.dims, t.data);
  }
  return w;
}

// ---------------------------------------------------------------------------- model

struct ToyDenoiser::Cache {
  std::vector<float> emb_in, e1_pre, e1, e_pre, e;
  struct LayerCache {
    std::vector<float> cols, u, film, z, a;
  };
  std::vector<LayerCache> layers;
  std::vector<std::vector<float>> h;  // h[l] is the output of layer l
  std::vector<float> out_cols;
};

ToyDenoiser::ToyDenoiser(ToyDenoiserArch arch, std::uint64_t init_seed) : arch_(arch) {
  build(init_seed);
}

ToyDenoiser::ToyDenoiser(const ToyDenoiserWeights& weights) : arch_(weights.arch) {
  build(0);
  params_.import_from(weights.tensors);
}

void ToyDenoiser::build(std::uint64_t init_seed) {
  if (arch_.height < 1 || arch_.width < 1 || arch_.vocabulary < 0 || arch_.hidden < 1 ||
      arch_.embed < 1 || arch_.time_features < 2 || arch_.time_features % 2 != 0) {
    throw InvalidParameter("invalid toy denoiser architecture");
  }
  RngStream rng(init_seed, RngLane{"init/denoiser", 0, 0});
  emb1_ = nn::Linear::create(params_, "embed.0", arch_.time_features + arch_.vocabulary, arch_.embed, rng);
  emb2_ = nn::Linear::create(params_, "embed.1", arch_.embed, arch_.embed, rng);
  const int n_layers = static_cast<int>(std::size(kDilations));
  for (int l = 0; l < n_layers; ++l) {
    Layer layer;
    const int in = l == 0 ? input_channels() : arch_.hidden;
    const std::string name = "block." + std::to_string(l);
    layer.conv = nn::Conv3x3::create(params_, name + ".conv", in, arch_.hidden, kDilations[l], rng,
                                     l == 0 ? 1.0 : 0.5);
    layer.film = nn::Linear::create(params_, name + ".film", arch_.embed, 2 * arch_.hidden, rng, 0.1);
    layers_.push_back(layer);
  }
  conv_out_ = nn::Conv3x3::create(params_, "out.conv", arch_.hidden, 3, 1, rng, 0.1);
}

ToyDenoiserWeights ToyDenoiser::weights(double cond_dropout) const {
  ToyDenoiserWeights w;
  w.arch = arch_;
  w.cond_dropout = static_cast<float>(cond_dropout);  // stored at file precision
  params_.export_to(w.tensors);
  return w;
}

void ToyDenoiser::forward(std::span<const float> input, int t, std::span<const float> tokens,
                          Cache& cache, std::vector<float>& out) const {
  const int h = arch_.height, w = arch_.width, C = arch_.hidden;
  const std::size_t hw = static_cast<std::size_t>(h) * w;

  cache.emb_in.assign(static_cast<std::size_t>(arch_.time_features + arch_.vocabulary), 0.0f);
  nn::timestep_features(t, std::span<float>(cache.emb_in.data(), static_cast<std::size_t>(arch_.time_features)));
  std::copy(tokens.begin(), tokens.end(), cache.emb_in.begin() + arch_.time_features);
  cache.e1_pre.resize(static_cast<std::size_t>(arch_.embed));
  nn::linear_forward(params_, emb1_, cache.emb_in, cache.e1_pre);
  cache.e1.resize(cache.e1_pre.size());
  for (std::size_t i = 0; i < cache.e1.size(); ++i) cache.e1[i] = nn::silu(cache.e1_pre[i]);
  cache.e_pre.resize(static_cast<std::size_t>(arch_.embed));
  nn::linear_forward(params_, emb2_, cache.e1, cache.e_pre);
  cache.e.resize(cache.e_pre.size());
  for (std::size_t i = 0; i < cache.e.size(); ++i) cache.e[i] = nn::silu(cache.e_pre[i]);

  cache.layers.resize(layers_.size());
  cache.h.resize(layers_.size());
  std::span<const float> x = input;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    auto& lc = cache.layers[l];
    nn::conv_forward(params_, layers_[l].conv, x, h, w, lc.cols, lc.u);
    lc.film.resize(static_cast<std::size_t>(2 * C));
    nn::linear_forward(params_, layers_[l].film, cache.e, lc.film);
    lc.z.resize(lc.u.size());
    lc.a.resize(lc.u.size());
    for (int c = 0; c < C; ++c) {
      const float gain = 1.0f + lc.film[static_cast<std::size_t>(c)];
      const float shift = lc.film[static_cast<std::size_t>(C + c)];
      const std::size_t base = static_cast<std::size_t>(c) * hw;
      for (std::size_t p = 0; p < hw; ++p) {
        const float z = lc.u[base + p] * gain + shift;
        lc.z[base + p] = z;
        lc.a[base + p] = nn::silu(z);
      }
    }
    auto& hl = cache.h[l];
    if (l == 0) {
      hl = lc.a;
    } else {
      const auto& prev = cache.h[l - 1];
      hl.resize(prev.size());
      for (std::size_t i = 0; i < hl.size(); ++i) hl[i] = prev[i] + lc.a[i];
    }
    x = hl;
  }
  nn::conv_forward(params_, conv_out_, cache.h.back(), h, w, cache.out_cols, out);
}

void ToyDenoiser::backward(const Cache& cache, std::span<const float> dout) {
  const int h = arch_.height, w = arch_.width, C = arch_.hidden;
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  std::vector<float> dh(static_cast<std::size_t>(C) * hw);
  nn::conv_backward(params_, conv_out_, cache.out_cols, dout, h, w, dh);

  std::vector<float> de(static_cast<std::size_t>(arch_.embed), 0.0f);
  std::vector<float> de_part(de.size());
  std::vector<float> dz(dh.size());
  std::vector<float> dfilm(static_cast<std::size_t>(2 * C));
  std::vector<float> dx(dh.size());

  for (std::size_t li = layers_.size(); li-- > 0;) {
    const auto& lc = cache.layers[li];
    // dh is the gradient w.r.t. h[li]; the residual branch contributes da = dh.
    std::fill(dfilm.begin(), dfilm.end(), 0.0f);
    for (int c = 0; c < C; ++c) {
      const float gain = 1.0f + lc.film[static_cast<std::size_t>(c)];
      const std::size_t base = static_cast<std::size_t>(c) * hw;
      float dgain = 0.0f, dshift = 0.0f;
      for (std::size_t p = 0; p < hw; ++p) {
        const float g = dh[base + p] * nn::silu_grad(lc.z[base + p]);
        dgain += g * lc.u[base + p];
        dshift += g;
        dz[base + p] = g * gain;  // du
      }
      dfilm[static_cast<std::size_t>(c)] = dgain;
      dfilm[static_cast<std::size_t>(C + c)] = dshift;
    }
    nn::linear_backward(params_, layers_[li].film, cache.e, dfilm, de_part);
    for (std::size_t i = 0; i < de.size(); ++i) de[i] += de_part[i];
    if (li == 0) {
      nn::conv_backward(params_, layers_[li].conv, lc.cols, dz, h, w, {});
    } else {
      nn::conv_backward(params_, layers_[li].conv, lc.cols, dz, h, w, dx);
      for (std::size_t i = 0; i < dh.size(); ++i) dh[i] += dx[i];
    }
  }

  std::vector<float> de_pre(de.size());
  for (std::size_t i = 0; i < de.size(); ++i) de_pre[i] = de[i] * nn::silu_grad(cache.e_pre[i]);
  std::vector<float> de1(de.size());
  nn::linear_backward(params_, emb2_, cache.e1, de_pre, de1);
  for (std::size_t i = 0; i < de1.size(); ++i) de1[i] *= nn::silu_grad(cache.e1_pre[i]);
  nn::linear_backward(params_, emb1_, cache.emb_in, de1, {});
}

ImageGrid ToyDenoiser::predict_eps(const ImageGrid& x_t, int t, const Condition& cond) const {
  if (x_t.height() != arch_.height || x_t.width() != arch_.width || x_t.channels() != 3) {
    throw ShapeError("toy denoiser expects " + std::to_string(arch_.height) + "x" +
                     std::to_string(arch_.width) + "x3 input");
  }
  check_condition(*this, cond, x_t);
  std::vector<float> input = to_chw(x_t);
  if (arch_.accepts_control) {
    append_control(input, cond.control ? &*cond.control : nullptr, arch_.height, arch_.width);
  }
  std::vector<float> tokens(static_cast<std::size_t>(arch_.vocabulary), 0.0f);
  for (std::size_t i = 0; i < cond.tokens.size(); ++i) tokens[i] = cond.tokens[i] ? 1.0f : 0.0f;

  thread_local Cache cache;  // scratch reuse; every buffer is fully rewritten by forward()
  std::vector<float> out;
  forward(input, t, tokens, cache, out);

  ImageGrid eps(arch_.height, arch_.width, 3);
  const std::size_t hw = static_cast<std::size_t>(arch_.height) * arch_.width;
  for (int y = 0; y < arch_.height; ++y) {
    for (int x = 0; x < arch_.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        eps.at(y, x, c) = out[static_cast<std::size_t>(c) * hw + static_cast<std::size_t>(y) * arch_.width + x];
      }
    }
  }
  require_finite(eps, "toy denoiser", t);
  return eps;
}

double ToyDenoiser::train_sample(std::span<const float> input, int t,
                                 std::span<const float> token_multihot,
                                 std::span<const float> target) {
  thread_local Cache cache;
  std::vector<float> out;
  forward(input, t, token_multihot, cache, out);
  std::vector<float> dout(out.size());
  double loss = 0.0;
  const double inv_n = 1.0 / static_cast<double>(out.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double d = static_cast<double>(out[i]) - target[i];
    loss += d * d;
    dout[i] = static_cast<float>(2.0 * d * inv_n);
  }
  backward(cache, dout);
  return loss * inv_n;
}

// ---------------------------------------------------------------------------- training

std::vector<double> train_denoiser_steps(ToyDenoiser& model, const std::vector<TrainingSample>& data,
                                         const NoiseSchedule& schedule,
                                         const DenoiserTrainOptions& options, int steps,
                                         const TrainLog& log) {
  if (data.empty()) throw InvalidParameter("empty training set");
  if (options.batch_size < 1) throw InvalidParameter("batch_size must be >= 1");
  const auto& arch = model.arch();
  const int T = schedule.total_steps();
  const std::size_t N = data.size();
  const std::size_t per_epoch = (N + options.batch_size - 1) / options.batch_size;

  nn::Adam adam(nn::AdamConfig{options.learning_rate});
  std::vector<std::size_t> order(N);
  std::vector<double> losses;
  losses.reserve(static_cast<std::size_t>(steps));
  std::vector<float> tokens(static_cast<std::size_t>(arch.vocabulary));

  for (int step = 0; step < steps; ++step) {
    const int epoch = static_cast<int>(static_cast<std::size_t>(step) / per_epoch);
    const std::size_t slot = static_cast<std::size_t>(step) % per_epoch;
    if (slot == 0) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      RngStream shuf(options.seed, RngLane{"train/shuffle", epoch, 0});
      for (std::size_t i = N; i > 1; --i) {
        const auto j = static_cast<std::size_t>(shuf.uniform_int(0, static_cast<int>(i) - 1));
        std::swap(order[i - 1], order[j]);
      }
    }
    model.params().zero_grad();
    double loss_sum = 0.0;
    int count = 0;
    for (int b = 0; b < options.batch_size; ++b) {
      const std::size_t pos = slot * options.batch_size + b;
      if (pos >= N) break;
      const auto& sample = data[order[pos]];
      RngStream rng(options.seed, RngLane{"train/sample", step, b});
      const int t = rng.uniform_int(1, T);
      ImageGrid eps = rng.normal_grid(arch.height, arch.width, 3);
      const bool drop = rng.uniform() < options.cond_dropout;
      const bool with_control = rng.uniform() < options.control_probability;
      const ImageGrid x_t = q_sample(sample.image, t, eps, schedule);
      std::vector<float> input = to_chw(x_t);
      if (arch.accepts_control) {
        append_control(input, with_control ? &sample.structure : nullptr, arch.height, arch.width);
      }
      for (std::size_t i = 0; i < tokens.size(); ++i) {
        tokens[i] = (!drop && sample.tokens[i]) ? 1.0f : 0.0f;
      }
      const std::vector<float> target = to_chw(eps);
      loss_sum += model.train_sample(input, t, tokens, target);
      ++count;
    }
    const double loss = loss_sum / count;
    if (!std::isfinite(loss)) {
      throw TrainingError("denoiser training diverged (non-finite loss) at step " + std::to_string(step));
    }
    // cosine decay to 10% of the base rate
    const double progress = steps > 1 ? static_cast<double>(step) / (steps - 1) : 0.0;
    const double lr_factor = 0.1 + 0.9 * 0.5 * (1.0 + std::cos(progress * 3.141592653589793));
    const double norm = adam.step(model.params(), 1.0 / count, lr_factor);
    if (!std::isfinite(norm)) {
      throw TrainingError("denoiser training diverged (non-finite gradient) at step " + std::to_string(step));
    }
    losses.push_back(loss);
    if (log) log(step, loss);
  }
  return losses;
}

ToyDenoiserWeights train_toy_denoiser(const DatasetConfig& dataset, const NoiseSchedule& schedule,
                                      const DenoiserTrainOptions& options, const TrainLog& log) {
  if (options.epochs < 1) throw InvalidParameter("epochs must be >= 1");
  const auto data = generate_dataset(dataset);
  ToyDenoiserArch arch = options.arch;
  arch.height = dataset.height;
  arch.width = dataset.width;
  arch.vocabulary = static_cast<int>(dataset.vocabulary.size());
  ToyDenoiser model(arch, options.seed);
  const std::size_t per_epoch = (data.size() + options.batch_size - 1) / options.batch_size;
  const int steps = static_cast<int>(per_epoch) * options.epochs;
  train_denoiser_steps(model, data, schedule, options, steps, log);
  return model.weights(options.cond_dropout);
}

}  // namespace compdiff
