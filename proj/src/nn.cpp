#include "compdiff/nn.hpp"

#include <Eigen/Core>
#include <cmath>

#include "compdiff/errors.hpp"

namespace compdiff::nn {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;
using CMapVec = Eigen::Map<const Eigen::VectorXf>;
using MapVec = Eigen::Map<Eigen::VectorXf>;

std::size_t product(const std::vector<std::uint32_t>& dims) {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

}  // namespace

int ParamSet::add(std::string name, std::vector<std::uint32_t> dims, double init_std,
                  RngStream& rng) {
  Param p;
  p.name = std::move(name);
  const std::size_t n = product(dims);
  p.dims = std::move(dims);
  p.value.resize(n, 0.0f);
  if (init_std > 0.0) {
    for (auto& v : p.value) v = static_cast<float>(init_std * rng.normal());
  }
  p.grad.assign(n, 0.0f);
  p.adam_m.assign(n, 0.0f);
  p.adam_v.assign(n, 0.0f);
  params_.push_back(std::move(p));
  return static_cast<int>(params_.size()) - 1;
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParamSet::zero_grad() {
  for (auto& p : params_) std::fill(p.grad.begin(), p.grad.end(), 0.0f);
}

void ParamSet::export_to(TensorTable& table) const {
  for (const auto& p : params_) table.put(p.name, p.dims, p.value);
}

void ParamSet::import_from(const TensorTable& table) {
  for (auto& p : params_) {
    const auto& t = table.get(p.name);
    if (t.dims != p.dims) throw ShapeError("tensor '" + p.name + "' has unexpected dims");
    p.value = t.data;
  }
}

double Adam::step(ParamSet& params, double grad_scale, double lr_factor) {
  double sq = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (float g : params[static_cast<int>(i)].grad) sq += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(sq) * grad_scale;
  if (!std::isfinite(norm)) return norm;
  double scale = grad_scale;
  if (cfg_.grad_clip > 0.0 && norm > cfg_.grad_clip) scale *= cfg_.grad_clip / norm;

  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  const double lr = cfg_.learning_rate * lr_factor;
  const auto b1 = static_cast<float>(cfg_.beta1);
  const auto b2 = static_cast<float>(cfg_.beta2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[static_cast<int>(i)];
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const float g = static_cast<float>(p.grad[k] * scale);
      p.adam_m[k] = b1 * p.adam_m[k] + (1.0f - b1) * g;
      p.adam_v[k] = b2 * p.adam_v[k] + (1.0f - b2) * g * g;
      const double mhat = p.adam_m[k] / bc1;
      const double vhat = p.adam_v[k] / bc2;
      p.value[k] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + cfg_.epsilon));
    }
  }
  return norm;
}

Conv3x3 Conv3x3::create(ParamSet& ps, const std::string& name, int in, int out, int dilation,
                        RngStream& rng, double gain) {
  Conv3x3 c;
  c.in = in;
  c.out = out;
  c.dilation = dilation;
  const double std = gain * std::sqrt(2.0 / (9.0 * in));
  c.weight = ps.add(name + ".weight",
                    {static_cast<std::uint32_t>(out), static_cast<std::uint32_t>(in), 3, 3}, std, rng);
  c.bias = ps.add(name + ".bias", {static_cast<std::uint32_t>(out)}, 0.0, rng);
  return c;
}

Linear Linear::create(ParamSet& ps, const std::string& name, int in, int out, RngStream& rng,
                      double gain) {
  Linear l;
  l.in = in;
  l.out = out;
  const double std = gain * std::sqrt(1.0 / in);
  l.weight = ps.add(name + ".weight", {static_cast<std::uint32_t>(out), static_cast<std::uint32_t>(in)},
                    std, rng);
  l.bias = ps.add(name + ".bias", {static_cast<std::uint32_t>(out)}, 0.0, rng);
  return l;
}

namespace {

void im2col(std::span<const float> x, int channels, int h, int w, int d, std::vector<float>& cols) {
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  cols.assign(static_cast<std::size_t>(channels) * 9 * hw, 0.0f);
  for (int c = 0; c < channels; ++c) {
    const float* src = x.data() + static_cast<std::size_t>(c) * hw;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        float* row = cols.data() + (static_cast<std::size_t>(c) * 9 + ky * 3 + kx) * hw;
        const int oy = (ky - 1) * d;
        const int ox = (kx - 1) * d;
        for (int y = 0; y < h; ++y) {
          const int sy = y + oy;
          if (sy < 0 || sy >= h) continue;
          const int x0 = std::max(0, -ox);
          const int x1 = std::min(w, w - ox);
          for (int xx = x0; xx < x1; ++xx) {
            row[static_cast<std::size_t>(y) * w + xx] = src[static_cast<std::size_t>(sy) * w + xx + ox];
          }
        }
      }
    }
  }
}

void col2im_add(const RowMat& dcols, int channels, int h, int w, int d, std::span<float> dx) {
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  for (int c = 0; c < channels; ++c) {
    float* dst = dx.data() + static_cast<std::size_t>(c) * hw;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const float* row = dcols.data() + (static_cast<std::size_t>(c) * 9 + ky * 3 + kx) * hw;
        const int oy = (ky - 1) * d;
        const int ox = (kx - 1) * d;
        for (int y = 0; y < h; ++y) {
          const int sy = y + oy;
          if (sy < 0 || sy >= h) continue;
          const int x0 = std::max(0, -ox);
          const int x1 = std::min(w, w - ox);
          for (int xx = x0; xx < x1; ++xx) {
            dst[static_cast<std::size_t>(sy) * w + xx + ox] += row[static_cast<std::size_t>(y) * w + xx];
          }
        }
      }
    }
  }
}

}  // namespace

void conv_forward(const ParamSet& ps, const Conv3x3& conv, std::span<const float> x, int h, int w,
                  std::vector<float>& cols, std::vector<float>& y) {
  const int hw = h * w;
  im2col(x, conv.in, h, w, conv.dilation, cols);
  y.resize(static_cast<std::size_t>(conv.out) * hw);
  CMapMat wmat(ps[conv.weight].value.data(), conv.out, conv.in * 9);
  CMapMat cmat(cols.data(), conv.in * 9, hw);
  MapMat ymat(y.data(), conv.out, hw);
  ymat.noalias() = wmat * cmat;
  const auto& b = ps[conv.bias].value;
  for (int o = 0; o < conv.out; ++o) ymat.row(o).array() += b[static_cast<std::size_t>(o)];
}

void conv_backward(ParamSet& ps, const Conv3x3& conv, const std::vector<float>& cols,
                   std::span<const float> dy, int h, int w, std::span<float> dx) {
  const int hw = h * w;
  CMapMat dymat(dy.data(), conv.out, hw);
  CMapMat cmat(cols.data(), conv.in * 9, hw);
  MapMat dw(ps[conv.weight].grad.data(), conv.out, conv.in * 9);
  dw.noalias() += dymat * cmat.transpose();
  auto& db = ps[conv.bias].grad;
  // Plain loop: Eigen's vectorized sum peels by address alignment, which breaks run-to-run equality.
  for (int o = 0; o < conv.out; ++o) {
    const float* row = dy.data() + static_cast<std::size_t>(o) * hw;
    float acc = 0.0f;
    for (int p = 0; p < hw; ++p) acc += row[p];
    db[static_cast<std::size_t>(o)] += acc;
  }
  if (!dx.empty()) {
    CMapMat wmat(ps[conv.weight].value.data(), conv.out, conv.in * 9);
    thread_local RowMat dcols;
    dcols.noalias() = wmat.transpose() * dymat;
    std::fill(dx.begin(), dx.end(), 0.0f);
    col2im_add(dcols, conv.in, h, w, conv.dilation, dx);
  }
}

void linear_forward(const ParamSet& ps, const Linear& lin, std::span<const float> x,
                    std::span<float> y) {
  CMapMat wmat(ps[lin.weight].value.data(), lin.out, lin.in);
  CMapVec xv(x.data(), lin.in);
  MapVec yv(y.data(), lin.out);
  yv.noalias() = wmat * xv;
  yv += CMapVec(ps[lin.bias].value.data(), lin.out);
}

void linear_backward(ParamSet& ps, const Linear& lin, std::span<const float> x,
                     std::span<const float> dy, std::span<float> dx) {
  CMapVec dyv(dy.data(), lin.out);
  CMapVec xv(x.data(), lin.in);
  MapMat dw(ps[lin.weight].grad.data(), lin.out, lin.in);
  dw.noalias() += dyv * xv.transpose();
  MapVec(ps[lin.bias].grad.data(), lin.out) += dyv;
  if (!dx.empty()) {
    CMapMat wmat(ps[lin.weight].value.data(), lin.out, lin.in);
    MapVec(dx.data(), lin.in).noalias() = wmat.transpose() * dyv;
  }
}

void timestep_features(int t, std::span<float> out) {
  const std::size_t half = out.size() / 2;
  for (std::size_t i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
    const double arg = static_cast<double>(t) * freq;
    out[i] = static_cast<float>(std::sin(arg));
    out[half + i] = static_cast<float>(std::cos(arg));
  }
}

}  // namespace compdiff::nn
