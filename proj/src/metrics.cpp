#include "compdiff/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "json.hpp"

#include "compdiff/errors.hpp"

namespace compdiff {

using nlohmann::json;

namespace {

constexpr int kClassifierDilations[] = {1, 2, 4};
constexpr float kModelTagClassifier = 2.0f;

double mean_token_score(const std::vector<double>& scores, const std::vector<int>& tokens) {
  if (tokens.empty()) return 0.0;
  double s = 0.0;
  for (int t : tokens) s += scores[static_cast<std::size_t>(t)];
  return s / static_cast<double>(tokens.size());
}

void check_tokens(const std::vector<SegmentSpec>& specs, int vocabulary) {
  for (const auto& spec : specs) {
    for (int t : spec.tokens) {
      if (t < 0 || t >= vocabulary) {
        throw ConfigError("segment " + std::to_string(spec.segment) + " token id " +
                          std::to_string(t) + " outside the classifier vocabulary");
      }
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------- classifier

struct PatternClassifier::Features {
  std::vector<std::vector<float>> cols, z, a;
};

PatternClassifier::PatternClassifier(PatternClassifierArch arch, std::uint64_t init_seed) : arch_(arch) {
  build(init_seed);
}

PatternClassifier::PatternClassifier(const TensorTable& tensors) {
  const auto& meta = tensors.get("meta.arch");
  if (meta.data.size() != 4) throw FormatError("malformed classifier meta.arch");
  arch_.height = static_cast<int>(meta.data[0]);
  arch_.width = static_cast<int>(meta.data[1]);
  arch_.vocabulary = static_cast<int>(meta.data[2]);
  arch_.hidden = static_cast<int>(meta.data[3]);
  build(0);
  params_.import_from(tensors);
}

void PatternClassifier::build(std::uint64_t init_seed) {
  if (arch_.height < 1 || arch_.width < 1 || arch_.vocabulary < 1 || arch_.hidden < 1) {
    throw InvalidParameter("invalid classifier architecture");
  }
  RngStream rng(init_seed, RngLane{"init/classifier", 0, 0});
  int in = 3;
  for (std::size_t l = 0; l < std::size(kClassifierDilations); ++l) {
    convs_.push_back(nn::Conv3x3::create(params_, "conv." + std::to_string(l), in, arch_.hidden,
                                         kClassifierDilations[l], rng));
    in = arch_.hidden;
  }
  head_ = nn::Linear::create(params_, "head", 2 * arch_.hidden, arch_.vocabulary, rng);
}

TensorTable PatternClassifier::tensors() const {
  TensorTable t;
  params_.export_to(t);
  t.put("meta.model", {1}, {kModelTagClassifier});
  t.put("meta.arch", {4},
        {static_cast<float>(arch_.height), static_cast<float>(arch_.width),
         static_cast<float>(arch_.vocabulary), static_cast<float>(arch_.hidden)});
  return t;
}

void PatternClassifier::features(const ImageGrid& image, Features& f) const {
  if (image.height() != arch_.height || image.width() != arch_.width || image.channels() != 3) {
    throw ShapeError("classifier expects " + std::to_string(arch_.height) + "x" +
                     std::to_string(arch_.width) + "x3 input");
  }
  const int h = arch_.height, w = arch_.width;
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  std::vector<float> x(3 * hw);
  for (int y = 0; y < h; ++y) {
    for (int xx = 0; xx < w; ++xx) {
      for (int c = 0; c < 3; ++c) {
        x[static_cast<std::size_t>(c) * hw + static_cast<std::size_t>(y) * w + xx] =
            static_cast<float>(image.at(y, xx, c));
      }
    }
  }
  f.cols.resize(convs_.size());
  f.z.resize(convs_.size());
  f.a.resize(convs_.size());
  for (std::size_t l = 0; l < convs_.size(); ++l) {
    nn::conv_forward(params_, convs_[l], l == 0 ? std::span<const float>(x) : f.a[l - 1], h, w,
                     f.cols[l], f.z[l]);
    f.a[l].resize(f.z[l].size());
    for (std::size_t i = 0; i < f.z[l].size(); ++i) f.a[l][i] = nn::silu(f.z[l][i]);
  }
}

std::vector<float> PatternClassifier::pool(const Features& f, const BinaryGrid& mask,
                                           std::vector<int>* argmax) const {
  if (mask.height() != arch_.height || mask.width() != arch_.width) {
    throw ShapeError("classifier mask does not match the image size");
  }
  const std::size_t hw = static_cast<std::size_t>(arch_.height) * arch_.width;
  const auto m = mask.values();
  const std::size_t count = mask.count();
  if (count == 0) throw InvalidParameter("classifier mask is empty");
  const int C = arch_.hidden;
  const auto& a = f.a.back();
  std::vector<float> pooled(static_cast<std::size_t>(2 * C));
  if (argmax) argmax->assign(static_cast<std::size_t>(C), -1);
  for (int c = 0; c < C; ++c) {
    const float* row = a.data() + static_cast<std::size_t>(c) * hw;
    double sum = 0.0;
    float best = -std::numeric_limits<float>::infinity();
    int best_p = -1;
    for (std::size_t p = 0; p < hw; ++p) {
      if (!m[p]) continue;
      sum += row[p];
      if (row[p] > best) {
        best = row[p];
        best_p = static_cast<int>(p);
      }
    }
    pooled[static_cast<std::size_t>(c)] = static_cast<float>(sum / static_cast<double>(count));
    pooled[static_cast<std::size_t>(C + c)] = best;
    if (argmax) (*argmax)[static_cast<std::size_t>(c)] = best_p;
  }
  return pooled;
}

std::vector<double> PatternClassifier::score_masked(const ImageGrid& image, const BinaryGrid& mask) const {
  thread_local Features f;
  features(image, f);
  const std::vector<float> pooled = pool(f, mask, nullptr);
  std::vector<float> logits(static_cast<std::size_t>(arch_.vocabulary));
  nn::linear_forward(params_, head_, pooled, logits);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = nn::sigmoid(logits[i]);
  return out;
}

std::vector<double> PatternClassifier::score(const ImageGrid& image) const {
  return score_masked(image, BinaryGrid(image.height(), image.width(), 1));
}

double PatternClassifier::train_sample(const ImageGrid& image, const std::vector<BinaryGrid>& masks,
                                       const std::vector<std::vector<float>>& targets) {
  thread_local Features f;
  features(image, f);
  const int C = arch_.hidden;
  const std::size_t hw = static_cast<std::size_t>(arch_.height) * arch_.width;
  std::vector<float> da(f.a.back().size(), 0.0f);
  std::vector<float> logits(static_cast<std::size_t>(arch_.vocabulary));
  std::vector<float> dlogits(logits.size());
  std::vector<float> dpooled(static_cast<std::size_t>(2 * C));
  std::vector<int> argmax;
  double loss = 0.0;
  for (std::size_t k = 0; k < masks.size(); ++k) {
    const std::vector<float> pooled = pool(f, masks[k], &argmax);
    nn::linear_forward(params_, head_, pooled, logits);
    for (std::size_t i = 0; i < logits.size(); ++i) {
      const double z = logits[i];
      const double y = targets[k][i];
      // numerically stable BCE with logits
      loss += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
      dlogits[i] = static_cast<float>(nn::sigmoid(logits[i]) - y);
    }
    nn::linear_backward(params_, head_, pooled, dlogits, dpooled);
    const auto m = masks[k].values();
    const float inv = 1.0f / static_cast<float>(masks[k].count());
    for (int c = 0; c < C; ++c) {
      float* row = da.data() + static_cast<std::size_t>(c) * hw;
      const float g = dpooled[static_cast<std::size_t>(c)] * inv;
      for (std::size_t p = 0; p < hw; ++p) {
        if (m[p]) row[p] += g;
      }
      row[argmax[static_cast<std::size_t>(c)]] += dpooled[static_cast<std::size_t>(C + c)];
    }
  }
  std::vector<float> dz(da.size());
  for (std::size_t l = convs_.size(); l-- > 0;) {
    for (std::size_t i = 0; i < dz.size(); ++i) dz[i] = da[i] * nn::silu_grad(f.z[l][i]);
    nn::conv_backward(params_, convs_[l], f.cols[l], dz, arch_.height, arch_.width,
                      l == 0 ? std::span<float>() : std::span<float>(da));
  }
  return loss;
}

void persist_classifier(const PatternClassifier& classifier, const std::filesystem::path& path) {
  save_tensor_table(classifier.tensors(), path);
}

PatternClassifier load_classifier(const std::filesystem::path& path) {
  const TensorTable table = load_tensor_table(path);
  const auto* model = table.find("meta.model");
  if (!model || model->data.size() != 1 || model->data[0] != kModelTagClassifier) {
    throw FormatError("'" + path.string() + "' does not hold classifier weights");
  }
  return PatternClassifier(table);
}

namespace {

struct LabeledMasks {
  std::vector<BinaryGrid> masks;
  std::vector<std::vector<float>> targets;
};

LabeledMasks label_sample(const TrainingSample& s, int vocabulary) {
  LabeledMasks out;
  const int h = s.image.height(), w = s.image.width();
  out.masks.emplace_back(h, w, 1);
  out.targets.emplace_back(s.tokens.begin(), s.tokens.end());
  if (s.layout.segment_count() > 1) {
    const SegmentMaskSet masks = build_masks(s.layout);
    for (std::size_t k = 0; k < masks.size(); ++k) {
      std::vector<float> target(static_cast<std::size_t>(vocabulary), 0.0f);
      target[static_cast<std::size_t>(s.segment_tokens[k])] = 1.0f;
      out.masks.push_back(masks[k]);
      out.targets.push_back(std::move(target));
    }
  }
  return out;
}

}  // namespace

double classifier_accuracy(const PatternClassifier& classifier, const std::vector<TrainingSample>& samples) {
  std::size_t correct = 0, total = 0;
  for (const auto& s : samples) {
    const LabeledMasks lm = label_sample(s, classifier.vocabulary_size());
    for (std::size_t k = 0; k < lm.masks.size(); ++k) {
      const auto scores = classifier.score_masked(s.image, lm.masks[k]);
      for (std::size_t i = 0; i < scores.size(); ++i) {
        correct += (scores[i] >= 0.5) == (lm.targets[k][i] > 0.5f) ? 1 : 0;
        ++total;
      }
    }
  }
  return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
}

ClassifierTrainResult train_classifier(const DatasetConfig& dataset, const ClassifierTrainOptions& options,
                                       const TrainLog& log) {
  if (options.epochs < 1) throw InvalidParameter("epochs must be >= 1");
  if (options.batch_size < 1) throw InvalidParameter("batch_size must be >= 1");
  const auto data = generate_dataset(dataset);
  PatternClassifierArch arch = options.arch;
  arch.height = dataset.height;
  arch.width = dataset.width;
  arch.vocabulary = static_cast<int>(dataset.vocabulary.size());
  PatternClassifier model(arch, options.seed);

  std::vector<LabeledMasks> labels;
  labels.reserve(data.size());
  for (const auto& s : data) labels.push_back(label_sample(s, arch.vocabulary));

  const std::size_t N = data.size();
  const std::size_t per_epoch = (N + options.batch_size - 1) / options.batch_size;
  const int steps = static_cast<int>(per_epoch) * options.epochs;
  nn::Adam adam(nn::AdamConfig{options.learning_rate});
  std::vector<std::size_t> order(N);
  for (int step = 0; step < steps; ++step) {
    const int epoch = static_cast<int>(static_cast<std::size_t>(step) / per_epoch);
    const std::size_t slot = static_cast<std::size_t>(step) % per_epoch;
    if (slot == 0) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      RngStream shuf(options.seed, RngLane{"classifier/shuffle", epoch, 0});
      for (std::size_t i = N; i > 1; --i) {
        const auto j = static_cast<std::size_t>(shuf.uniform_int(0, static_cast<int>(i) - 1));
        std::swap(order[i - 1], order[j]);
      }
    }
    model.params().zero_grad();
    double loss = 0.0;
    int terms = 0;
    for (int b = 0; b < options.batch_size; ++b) {
      const std::size_t pos = slot * options.batch_size + b;
      if (pos >= N) break;
      const std::size_t idx = order[pos];
      RngStream rng(options.seed, RngLane{"classifier/sample", step, b});
      const double sigma = rng.uniform() * options.max_noise;
      ImageGrid noisy = data[idx].image;
      for (auto& v : noisy.values()) v += sigma * rng.normal();
      loss += model.train_sample(noisy, labels[idx].masks, labels[idx].targets);
      terms += static_cast<int>(labels[idx].masks.size());
    }
    loss /= terms;
    if (!std::isfinite(loss)) {
      throw TrainingError("classifier training diverged (non-finite loss) at step " + std::to_string(step));
    }
    const double progress = steps > 1 ? static_cast<double>(step) / (steps - 1) : 0.0;
    const double lr_factor = 0.1 + 0.9 * 0.5 * (1.0 + std::cos(progress * std::numbers::pi));
    adam.step(model.params(), 1.0 / terms, lr_factor);
    if (log) log(step, loss);
  }

  DatasetConfig holdout = dataset;
  holdout.seed = mix64(dataset.seed ^ 0x686f6c646f7574ULL);
  holdout.samples_per_token = std::max(1, options.holdout_samples / (2 * arch.vocabulary));
  holdout.composite_samples = options.holdout_samples / 2;
  ClassifierTrainResult result;
  result.holdout_accuracy = classifier_accuracy(model, generate_dataset(holdout));
  if (result.holdout_accuracy < options.required_accuracy) {
    throw TrainingError("classifier held-out accuracy " + std::to_string(result.holdout_accuracy) +
                        " below required " + std::to_string(options.required_accuracy));
  }
  result.tensors = model.tensors();
  return result;
}

// ---------------------------------------------------------------------------- scores

double content_fidelity(const ImageGrid& image, const std::vector<SegmentSpec>& specs,
                        const PatternClassifier& classifier) {
  check_tokens(specs, classifier.vocabulary_size());
  if (specs.empty()) return 0.0;
  const auto scores = classifier.score(image);
  double s = 0.0;
  for (const auto& spec : specs) s += mean_token_score(scores, spec.tokens);
  return s / static_cast<double>(specs.size());
}

double spatial_fidelity(const ImageGrid& image, const SegmentMaskSet& masks,
                        const std::vector<SegmentSpec>& specs, const PatternClassifier& classifier) {
  check_tokens(specs, classifier.vocabulary_size());
  if (specs.empty()) return 0.0;
  double s = 0.0;
  for (const auto& spec : specs) {
    if (spec.segment < 1 || spec.segment > static_cast<int>(masks.size())) {
      throw ConfigError("segment id " + std::to_string(spec.segment) + " not in the mask set");
    }
    const auto scores = classifier.score_masked(image, masks[static_cast<std::size_t>(spec.segment - 1)]);
    s += mean_token_score(scores, spec.tokens);
  }
  return s / static_cast<double>(specs.size());
}

double noise_estimate(const ImageGrid& image) {
  const int h = image.height(), w = image.width(), C = image.channels();
  if (h < 3 || w < 3) throw InvalidParameter("noise_estimate needs at least a 3x3 image");
  static constexpr int kKernel[3][3] = {{1, -2, 1}, {-2, 4, -2}, {1, -2, 1}};
  double total = 0.0;
  for (int c = 0; c < C; ++c) {
    double sum = 0.0;
    for (int y = 1; y < h - 1; ++y) {
      for (int x = 1; x < w - 1; ++x) {
        double r = 0.0;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) r += kKernel[dy + 1][dx + 1] * image.at(y + dy, x + dx, c);
        }
        sum += std::abs(r);
      }
    }
    const double mean_abs = sum / (static_cast<double>(h - 2) * (w - 2));
    total += std::sqrt(std::numbers::pi / 2.0) * mean_abs / 6.0;
  }
  return total / C;
}

double blending_score(const ImageGrid& image, const SegmentMaskSet& masks, int radius) {
  require_mask_shape(image, masks[0], "blending_score");
  const BinaryGrid band = boundary_band(masks, radius);
  const std::size_t n = band.count();
  if (n == 0) return 0.0;
  const int h = image.height(), w = image.width(), C = image.channels();
  // Central differences inside, one-sided at the border.
  auto diff = [&](int y, int x, int c, bool along_x) {
    const int len = along_x ? w : h;
    const int pos = along_x ? x : y;
    if (len < 2) return 0.0;
    auto v = [&](int p) { return along_x ? image.at(y, p, c) : image.at(p, x, c); };
    if (pos == 0) return v(1) - v(0);
    if (pos == len - 1) return v(len - 1) - v(len - 2);
    return (v(pos + 1) - v(pos - 1)) / 2.0;
  };
  double sum = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!band.at(y, x)) continue;
      double g = 0.0;
      for (int c = 0; c < C; ++c) g += std::hypot(diff(y, x, c, true), diff(y, x, c, false));
      sum += g / C;
    }
  }
  return sum / static_cast<double>(n);
}

// ---------------------------------------------------------------------------- report

MetricsReport evaluate_image(const ImageGrid& image, const SegmentMaskSet& masks,
                             const std::vector<SegmentSpec>& specs, const PatternClassifier& classifier,
                             const Vocabulary& vocabulary, int band_radius) {
  check_tokens(specs, classifier.vocabulary_size());
  MetricsReport r;
  const auto full = classifier.score(image);
  for (const auto& spec : specs) {
    SegmentScore row;
    row.segment = spec.segment;
    for (int t : spec.tokens) row.tokens.push_back(vocabulary.at(t).name);
    row.content = mean_token_score(full, spec.tokens);
    const auto masked = classifier.score_masked(image, masks[static_cast<std::size_t>(spec.segment - 1)]);
    row.spatial = mean_token_score(masked, spec.tokens);
    r.segments.push_back(std::move(row));
  }
  if (!specs.empty()) {
    for (const auto& row : r.segments) {
      r.content_fidelity += row.content;
      r.spatial_fidelity += row.spatial;
    }
    r.content_fidelity /= static_cast<double>(specs.size());
    r.spatial_fidelity /= static_cast<double>(specs.size());
  }
  r.technical_quality = noise_estimate(image);
  r.blending = blending_score(image, masks, band_radius);
  return r;
}

std::string report_to_json(const MetricsReport& r) {
  json segments = json::array();
  for (const auto& s : r.segments) {
    segments.push_back({{"segment", s.segment}, {"tokens", s.tokens}, {"content", s.content}, {"spatial", s.spatial}});
  }
  json j = {{"content_fidelity", r.content_fidelity},
            {"spatial_fidelity", r.spatial_fidelity},
            {"technical_quality", r.technical_quality},
            {"blending", r.blending},
            {"aesthetic_quality", nullptr},
            {"human_preference", nullptr},
            {"segments", segments},
            {"metadata", {{"seed", r.seed}, {"kappa", r.kappa}, {"mode", r.mode}}}};
  return j.dump(2) + "\n";
}

MetricsReport report_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    MetricsReport r;
    r.content_fidelity = j.at("content_fidelity").get<double>();
    r.spatial_fidelity = j.at("spatial_fidelity").get<double>();
    r.technical_quality = j.at("technical_quality").get<double>();
    r.blending = j.at("blending").get<double>();
    for (const auto& s : j.at("segments")) {
      r.segments.push_back({s.at("segment").get<int>(), s.at("tokens").get<std::vector<std::string>>(),
                            s.at("content").get<double>(), s.at("spatial").get<double>()});
    }
    const auto& meta = j.at("metadata");
    r.seed = meta.at("seed").get<std::uint64_t>();
    r.kappa = meta.at("kappa").get<double>();
    r.mode = meta.at("mode").get<std::string>();
    return r;
  } catch (const json::exception& e) {
    throw ParseError(std::string("metrics report: ") + e.what());
  }
}

}  // namespace compdiff
