#include "doctest.h"

#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>

#include "compdiff/errors.hpp"
#include "compdiff/gmm.hpp"
#include "compdiff/patterns.hpp"
#include "compdiff/tensor_file.hpp"
#include "compdiff/toy_denoiser.hpp"

using namespace compdiff;
namespace fs = std::filesystem;

namespace {

ImageGrid grid_of(std::vector<double> v) {
  const int n = static_cast<int>(v.size());
  return ImageGrid(1, n, 1, std::move(v));
}

// Brute-force E[x0 | x_t] by quadrature over x0 on a regular grid (1 or 2 pixels).
std::vector<double> quadrature_posterior_mean(const std::vector<double>& xt, double a, double b,
                                              const GaussianMixtureModel& gmm) {
  const int dim = static_cast<int>(xt.size());
  const int n = dim == 1 ? 200001 : 1601;
  const double lo = -7.0, hi = 7.0, h = (hi - lo) / (n - 1);
  auto prior = [&](const std::vector<double>& x) {
    double p = 0.0;
    for (std::size_t k = 0; k < gmm.components(); ++k) {
      double q = 0.0;
      for (int d = 0; d < dim; ++d) {
        const double z = (x[static_cast<std::size_t>(d)] - gmm.means[k].values()[static_cast<std::size_t>(d)]) / gmm.stds[k];
        q += z * z;
      }
      p += gmm.weights[k] * std::exp(-0.5 * q) / std::pow(gmm.stds[k], dim);
    }
    return p;
  };
  auto likelihood = [&](const std::vector<double>& x) {
    double q = 0.0;
    for (int d = 0; d < dim; ++d) {
      const double z = (xt[static_cast<std::size_t>(d)] - a * x[static_cast<std::size_t>(d)]) / b;
      q += z * z;
    }
    return std::exp(-0.5 * q);
  };
  std::vector<double> num(static_cast<std::size_t>(dim), 0.0);
  double den = 0.0;
  std::vector<double> x(static_cast<std::size_t>(dim));
  const int n2 = dim == 1 ? 1 : n;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n2; ++j) {
      x[0] = lo + i * h;
      if (dim == 2) x[1] = lo + j * h;
      const double w = prior(x) * likelihood(x);
      den += w;
      for (int d = 0; d < dim; ++d) num[static_cast<std::size_t>(d)] += w * x[static_cast<std::size_t>(d)];
    }
  }
  for (auto& v : num) v /= den;
  return num;
}

}  // namespace

TEST_CASE("analytic epsilon closed forms") {
  // alpha_bar(1) = 0.25
  const NoiseSchedule s({0.75});
  SUBCASE("standard normal data") {
    const auto gmm = GaussianMixtureModel::standard_normal(1, 1, 1);
    const double e = analytic_eps(grid_of({2.0}), 1, gmm, s).at(0, 0, 0);
    CHECK(std::abs(e - 1.7320508075688772) < 1e-12);
  }
  SUBCASE("point mass") {
    GaussianMixtureModel gmm{{1.0}, {grid_of({0.7})}, {1e-9}};
    const double a = 0.5, b = std::sqrt(0.75);
    CHECK(analytic_eps(grid_of({1.3}), 1, gmm, s).at(0, 0, 0) == doctest::Approx((1.3 - a * 0.7) / b).epsilon(1e-9));
  }
  SUBCASE("symmetric pair at the midpoint equals the even mix of component answers") {
    GaussianMixtureModel gmm{{0.5, 0.5}, {grid_of({1.0}), grid_of({-1.0})}, {0.5, 0.5}};
    const double a = 0.5, b2 = 0.75;
    auto component_eps = [&](double mu, double sd) {
      const double m = mu + a * sd * sd / (a * a * sd * sd + b2) * (0.0 - a * mu);
      return (0.0 - a * m) / std::sqrt(b2);
    };
    const double expected = 0.5 * component_eps(1.0, 0.5) + 0.5 * component_eps(-1.0, 0.5);
    CHECK(analytic_eps(grid_of({0.0}), 1, gmm, s).at(0, 0, 0) == doctest::Approx(expected).epsilon(1e-12));
  }
  SUBCASE("b = 0 is rejected") {
    const NoiseSchedule clean({1e-20});
    CHECK_THROWS_AS(analytic_eps(grid_of({0.0}), 1, GaussianMixtureModel::standard_normal(1, 1, 1), clean),
                    InvalidParameter);
  }
  SUBCASE("weights must normalize") {
    GaussianMixtureModel bad{{0.5, 0.4}, {grid_of({1.0}), grid_of({-1.0})}, {0.5, 0.5}};
    CHECK_THROWS_AS(bad.validate(), InvalidParameter);
  }
}

TEST_CASE("analytic epsilon matches quadrature of the posterior") {
  const auto sched = make_linear_schedule(1000, 1e-4, 0.02);
  struct Case {
    GaussianMixtureModel gmm;
    std::vector<double> xt;
    int t;
  };
  std::vector<Case> cases = {
      {{{0.5, 0.5}, {grid_of({1.0}), grid_of({-1.0})}, {0.5, 0.5}}, {0.3}, 700},
      {{{0.2, 0.5, 0.3}, {grid_of({1.0}), grid_of({-1.0}), grid_of({0.2})}, {0.3, 0.6, 0.4}}, {-0.7}, 400},
      {{{0.3, 0.7}, {grid_of({0.8, -0.4}), grid_of({-0.6, 0.5})}, {0.4, 0.7}}, {0.2, -0.9}, 250},
      {{{0.4, 0.35, 0.25}, {grid_of({0.8, 0.1}), grid_of({-0.6, 0.5}), grid_of({0.0, -1.0})}, {0.5, 0.3, 0.6}},
       {1.1, 0.4},
       600},
  };
  for (const auto& c : cases) {
    const double ab = sched.alpha_bar(c.t);
    const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
    const auto mean = quadrature_posterior_mean(c.xt, a, b, c.gmm);
    const ImageGrid eps = analytic_eps(grid_of(c.xt), c.t, c.gmm, sched);
    for (std::size_t d = 0; d < c.xt.size(); ++d) {
      const double expected = (c.xt[d] - a * mean[d]) / b;
      CHECK(std::abs(eps.values()[d] - expected) < 1e-4);
    }
  }
}

TEST_CASE("analytic denoiser conditioning") {
  const auto s = make_linear_schedule(100, 1e-4, 0.02);
  std::vector<GaussianMixtureModel> tokens = {
      {{1.0}, {grid_of({1.0, 1.0})}, {0.2}},
      {{1.0}, {grid_of({-1.0, -1.0})}, {0.2}},
  };
  AnalyticDenoiser den(s, GaussianMixtureModel::standard_normal(1, 2, 1), tokens);
  const ImageGrid x = grid_of({0.1, -0.2});
  CHECK(den.vocabulary_size() == 2);
  CHECK(den.predict_eps(x, 50, Condition::unconditional(2)) == den.predict_eps(x, 50, Condition::unconditional(2)));
  CHECK_FALSE(den.predict_eps(x, 50, Condition::from_ids(2, {0})) == den.predict_eps(x, 50, Condition::unconditional(2)));
  const auto both = den.mixture_for(Condition::from_ids(2, {0, 1}));
  CHECK(both.components() == 2);
  CHECK(both.weights[0] == doctest::Approx(0.5));
  Condition with_control = Condition::from_ids(2, {0});
  with_control.control = BinaryGrid(1, 2, 1);
  CHECK_THROWS_AS(den.predict_eps(x, 50, with_control), CapabilityError);
  CHECK_THROWS_AS(den.predict_eps(x, 50, Condition::unconditional(3)), ConfigError);
}

TEST_CASE("pattern generator") {
  const Vocabulary vocab = Vocabulary::standard();
  CHECK(vocab.size() == 6);
  CHECK_THROWS_AS(vocab.by_name("stripes-purple"), LookupError);
  CHECK_THROWS_AS(vocab.at(6), LookupError);

  SUBCASE("plain is constant within jitter of its color") {
    const auto& tok = vocab.by_name("plain-yellow");
    RngStream rng(3, RngLane{"pattern", 0, 0});
    const ImageGrid img = gen_pattern(tok, 32, 32, rng);
    for (int c = 0; c < 3; ++c) {
      const double v0 = img.at(0, 0, c);
      CHECK(std::abs(v0 - tok.color[static_cast<std::size_t>(c)]) <= kColorJitter + 1e-12);
      for (int y = 0; y < 32; ++y) {
        for (int x = 0; x < 32; ++x) CHECK(img.at(y, x, c) == v0);
      }
    }
  }
  SUBCASE("deterministic") {
    for (const auto& tok : vocab.tokens()) {
      RngStream a(11, RngLane{"pattern", 1, tok.id});
      RngStream b(11, RngLane{"pattern", 1, tok.id});
      CHECK(gen_pattern(tok, 32, 32, a) == gen_pattern(tok, 32, 32, b));
    }
  }
  SUBCASE("stripe period shows up as the dominant row frequency") {
    const auto& tok = vocab.by_name("stripes-red");
    RngStream rng(4, RngLane{"pattern", 2, 0});
    const ImageGrid img = gen_pattern(tok, 32, 32, rng);
    const int n = 32;
    double mean = 0.0;
    for (int x = 0; x < n; ++x) mean += img.at(5, x, 0);
    mean /= n;
    int best_k = 0;
    double best = -1.0;
    for (int k = 1; k <= n / 2; ++k) {
      std::complex<double> acc = 0.0;
      for (int x = 0; x < n; ++x) acc += (img.at(5, x, 0) - mean) * std::polar(1.0, -2.0 * M_PI * k * x / n);
      if (std::abs(acc) > best) {
        best = std::abs(acc);
        best_k = k;
      }
    }
    CHECK(n / best_k == tok.period);
  }
  SUBCASE("values stay in the data range") {
    for (const auto& tok : vocab.tokens()) {
      RngStream rng(9, RngLane{"range", 0, tok.id});
      const ImageGrid img = gen_pattern(tok, 16, 16, rng);
      for (double v : img.values()) {
        CHECK(v >= -1.0);
        CHECK(v <= 1.0);
      }
    }
  }
}

TEST_CASE("composite ground truth") {
  const Vocabulary vocab = Vocabulary::standard();
  SUBCASE("single segment equals a single render") {
    const SegmentLayout whole(16, 16, std::vector<int>(256, 1));
    RngStream a(2, RngLane{"gt", 0, 0});
    RngStream b(2, RngLane{"gt", 0, 0});
    CHECK(gen_composite_ground_truth(whole, {{1, vocab.at(2)}}, a) == gen_pattern(vocab.at(2), 16, 16, b));
  }
  SUBCASE("half planes paste the per-segment renders") {
    std::vector<int> ids(256);
    for (int y = 0; y < 16; ++y) {
      for (int x = 0; x < 16; ++x) ids[static_cast<std::size_t>(y * 16 + x)] = x < 8 ? 1 : 2;
    }
    const SegmentLayout half(16, 16, ids);
    RngStream a(6, RngLane{"gt", 0, 0});
    const ImageGrid comp = gen_composite_ground_truth(half, {{1, vocab.at(0)}, {2, vocab.at(1)}}, a);
    RngStream b(6, RngLane{"gt", 0, 0});
    const ImageGrid left = gen_pattern(vocab.at(0), 16, 16, b);
    const ImageGrid right = gen_pattern(vocab.at(1), 16, 16, b);
    for (int y = 0; y < 16; ++y) {
      for (int x = 0; x < 16; ++x) {
        for (int c = 0; c < 3; ++c) CHECK(comp.at(y, x, c) == (x < 8 ? left : right).at(y, x, c));
      }
    }
    RngStream c(6, RngLane{"gt", 0, 0});
    CHECK(gen_composite_ground_truth(half, {{1, vocab.at(0)}, {2, vocab.at(1)}}, c) == comp);
    RngStream d(6, RngLane{"gt", 0, 0});
    CHECK_THROWS_AS(gen_composite_ground_truth(half, {{1, vocab.at(0)}}, d), ConfigError);
  }
}

TEST_CASE("tensor file format") {
  TensorTable t;
  t.put("a", {2, 3}, {1, 2, 3, 4, 5, 6});
  t.put("b.weight", {1}, {-0.25f});
  const auto bytes = encode_tensor_table(t);
  CHECK(decode_tensor_table(bytes) == t);

  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(decode_tensor_table(bad_magic), BadMagicError);
  CHECK_THROWS_AS(decode_tensor_table(encode_tensor_table(t, kTensorFileVersion + 1)), VersionError);
  auto cut = bytes;
  cut.resize(cut.size() - 3);
  CHECK_THROWS_AS(decode_tensor_table(cut), TruncatedFileError);
  CHECK_THROWS_AS(t.put("nan", {1}, {NAN}), NumericError);
  CHECK_THROWS_AS(t.put("dims", {2}, {1.0f}), ShapeError);
}

TEST_CASE("toy denoiser contract") {
  ToyDenoiserArch arch;
  arch.height = 12;
  arch.width = 12;
  arch.hidden = 8;
  arch.embed = 16;
  arch.time_features = 8;
  ToyDenoiser model(arch, 3);
  RngStream rng(1, RngLane{"toy", 0, 0});
  const ImageGrid x = rng.normal_grid(12, 12, 3);
  Condition cond = Condition::from_ids(6, {2});
  SUBCASE("pure and shape preserving") {
    const ImageGrid e1 = model.predict_eps(x, 400, cond);
    const ImageGrid e2 = model.predict_eps(x, 400, cond);
    CHECK(e1 == e2);
    CHECK(e1.same_shape(x));
  }
  SUBCASE("control channel is wired in") {
    Condition with = cond;
    with.control = BinaryGrid(12, 12, 1);
    CHECK_FALSE(model.predict_eps(x, 400, with) == model.predict_eps(x, 400, cond));
    with.control = BinaryGrid(5, 5, 1);
    CHECK_THROWS_AS(model.predict_eps(x, 400, with), ShapeError);
  }
  SUBCASE("input validation") {
    CHECK_THROWS_AS(model.predict_eps(ImageGrid(8, 8, 3), 400, cond), ShapeError);
    CHECK_THROWS_AS(model.predict_eps(x, 400, Condition::unconditional(5)), ConfigError);
  }
  SUBCASE("same seed gives identical weights") {
    CHECK(ToyDenoiser(arch, 3).weights() == model.weights());
    CHECK_FALSE(ToyDenoiser(arch, 4).weights() == model.weights());
  }
}

TEST_CASE("toy denoiser persistence") {
  ToyDenoiserArch arch;
  arch.height = 8;
  arch.width = 8;
  arch.hidden = 6;
  ToyDenoiser model(arch, 5);
  const auto w = model.weights(0.15);
  const fs::path path = fs::temp_directory_path() / "compdiff_test_weights.cdif";
  persist_weights(w, path);
  const auto back = load_weights(path);
  CHECK(back == w);
  const ToyDenoiser reloaded(back);
  RngStream rng(2, RngLane{"persist", 0, 0});
  const ImageGrid x = rng.normal_grid(8, 8, 3);
  CHECK(reloaded.predict_eps(x, 10, Condition::from_ids(6, {1})) == model.predict_eps(x, 10, Condition::from_ids(6, {1})));

  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.put('Z');
  }
  CHECK_THROWS_AS(load_weights(path), BadMagicError);
  fs::remove(path);
}

TEST_CASE("toy denoiser training") {
  const auto sched = make_linear_schedule(1000, 1e-4, 0.02);
  DatasetConfig data_cfg = DatasetConfig::defaults();
  data_cfg.height = 8;
  data_cfg.width = 8;
  data_cfg.samples_per_token = 2;
  data_cfg.composite_samples = 4;
  DenoiserTrainOptions opt;
  opt.arch.hidden = 6;
  opt.arch.embed = 16;
  opt.batch_size = 4;
  opt.epochs = 0;
  CHECK_THROWS_AS(train_toy_denoiser(data_cfg, sched, opt), InvalidParameter);

  opt.epochs = 1;
  const auto w1 = train_toy_denoiser(data_cfg, sched, opt);
  const auto w2 = train_toy_denoiser(data_cfg, sched, opt);
  CHECK(w1 == w2);
  CHECK(w1.cond_dropout == doctest::Approx(opt.cond_dropout));

  SUBCASE("overfits a single image") {
    auto data = generate_dataset(data_cfg);
    data.erase(data.begin() + 1, data.end());
    ToyDenoiserArch arch = opt.arch;
    arch.height = 8;
    arch.width = 8;
    ToyDenoiser model(arch, 1);
    DenoiserTrainOptions o = opt;
    o.batch_size = 1;
    o.cond_dropout = 0.0;
    o.control_probability = 0.0;
    o.learning_rate = 3e-3;
    // Fixed timestep and noise: use a one-step schedule so the target never changes.
    const NoiseSchedule fixed({0.5});
    const auto losses = train_denoiser_steps(model, data, fixed, o, 500);
    double head = 0.0, tail = 0.0;
    for (int i = 0; i < 10; ++i) {
      head += losses[static_cast<std::size_t>(i)];
      tail += losses[losses.size() - 1 - static_cast<std::size_t>(i)];
    }
    CHECK(tail < 0.1 * head);
  }
}
