#pragma once

// Dense kernels shared by the denoiser and the classifier. Feature maps are
// C x H x W row-major; parameters live in one flat buffer addressed by
// offsets so that optimisers, serialisation and gradient checks can treat
// them as a single vector.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "callipaint/params.hpp"
#include "callipaint/rng.hpp"

namespace callipaint::nn {

template <typename Real>
using RowMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Real>
using MatMap = Eigen::Map<RowMat<Real>>;
template <typename Real>
using ConstMatMap = Eigen::Map<const RowMat<Real>>;
template <typename Real>
using VecMap = Eigen::Map<Eigen::Matrix<Real, Eigen::Dynamic, 1>>;
template <typename Real>
using ConstVecMap = Eigen::Map<const Eigen::Matrix<Real, Eigen::Dynamic, 1>>;

template <typename Real>
struct FMap {
  int c = 0, h = 0, w = 0;
  std::vector<Real> data;

  FMap() = default;
  FMap(int c_, int h_, int w_) : c(c_), h(h_), w(w_), data(std::size_t(c_) * h_ * w_, Real(0)) {}
  int hw() const { return h * w; }
  Real* channel(int ch) { return data.data() + std::size_t(ch) * hw(); }
  const Real* channel(int ch) const { return data.data() + std::size_t(ch) * hw(); }
};

enum class Init { kZero, kOne, kFanInUniform, kUnitUniform };

struct PendingInit {
  std::size_t tensor;
  Init init;
  int fan_in;
};

class LayoutBuilder {
 public:
  std::size_t add(const std::string& name, std::vector<std::int64_t> shape,
                  Init init, int fan_in = 1) {
    std::size_t n = 1;
    for (auto d : shape) n *= static_cast<std::size_t>(d);
    tensors.push_back({name, std::move(shape), total, n});
    inits.push_back({tensors.size() - 1, init, fan_in});
    const std::size_t off = total;
    total += n;
    return off;
  }

  std::vector<TensorInfo> tensors;
  std::vector<PendingInit> inits;
  std::size_t total = 0;
};

// Fills a freshly laid-out store; each tensor draws from its own substream.
inline ParamStore materialize(const LayoutBuilder& lb, std::uint64_t seed,
                              const std::string& stream_prefix) {
  ParamStore store;
  store.tensors = lb.tensors;
  store.values.assign(lb.total, 0.0f);
  for (const auto& pi : lb.inits) {
    const auto& t = store.tensors[pi.tensor];
    Rng rng = Rng::substream(seed, stream_prefix + t.name);
    float* v = store.values.data() + t.offset;
    switch (pi.init) {
      case Init::kZero:
        break;
      case Init::kOne:
        std::fill(v, v + t.size, 1.0f);
        break;
      case Init::kFanInUniform: {
        const double bound = 1.0 / std::sqrt(static_cast<double>(pi.fan_in));
        for (std::size_t i = 0; i < t.size; ++i)
          v[i] = static_cast<float>((2.0 * rng.uniform() - 1.0) * bound);
        break;
      }
      case Init::kUnitUniform:
        for (std::size_t i = 0; i < t.size; ++i)
          v[i] = static_cast<float>(2.0 * rng.uniform() - 1.0);
        break;
    }
  }
  return store;
}

struct ConvP {
  std::size_t w = 0, b = 0;
  int cin = 0, cout = 0, k = 3;
};

struct LinP {
  std::size_t w = 0, b = 0;
  int in = 0, out = 0;
};

struct GNP {
  std::size_t g = 0, b = 0;
  int c = 0, groups = 1;
};

inline ConvP add_conv(LayoutBuilder& lb, const std::string& name, int cin,
                      int cout, int k, bool zero = false) {
  ConvP p;
  p.cin = cin;
  p.cout = cout;
  p.k = k;
  const int fan_in = cin * k * k;
  p.w = lb.add(name + ".weight", {cout, cin, k, k},
               zero ? Init::kZero : Init::kFanInUniform, fan_in);
  p.b = lb.add(name + ".bias", {cout}, Init::kZero);
  return p;
}

inline LinP add_linear(LayoutBuilder& lb, const std::string& name, int in,
                       int out) {
  LinP p;
  p.in = in;
  p.out = out;
  p.w = lb.add(name + ".weight", {out, in}, Init::kFanInUniform, in);
  p.b = lb.add(name + ".bias", {out}, Init::kZero);
  return p;
}

inline GNP add_groupnorm(LayoutBuilder& lb, const std::string& name, int c,
                         int groups) {
  GNP p;
  p.c = c;
  p.groups = groups;
  p.g = lb.add(name + ".scale", {c}, Init::kOne);
  p.b = lb.add(name + ".offset", {c}, Init::kZero);
  return p;
}

template <typename Real>
inline Real sigmoid(Real x) {
  return Real(1) / (Real(1) + std::exp(-x));
}

template <typename Real>
void silu_forward(const std::vector<Real>& x, std::vector<Real>& y) {
  y.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * sigmoid(x[i]);
}

// dx = dy * silu'(x), in place on dy.
template <typename Real>
void silu_backward(const std::vector<Real>& x, std::vector<Real>& dy) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    const Real s = sigmoid(x[i]);
    dy[i] *= s * (Real(1) + x[i] * (Real(1) - s));
  }
}

template <typename Real>
void im2col(const FMap<Real>& x, int k, std::vector<Real>& col) {
  const int pad = k / 2;
  const int hw = x.hw();
  col.assign(std::size_t(x.c) * k * k * hw, Real(0));
  for (int ci = 0; ci < x.c; ++ci) {
    const Real* src = x.channel(ci);
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        Real* dst = col.data() + (std::size_t(ci * k + ky) * k + kx) * hw;
        for (int y = 0; y < x.h; ++y) {
          const int sy = y + ky - pad;
          if (sy < 0 || sy >= x.h) continue;
          for (int xx = 0; xx < x.w; ++xx) {
            const int sx = xx + kx - pad;
            if (sx < 0 || sx >= x.w) continue;
            dst[y * x.w + xx] = src[sy * x.w + sx];
          }
        }
      }
  }
}

template <typename Real>
void col2im_add(const std::vector<Real>& col, int k, FMap<Real>& dx) {
  const int pad = k / 2;
  const int hw = dx.hw();
  for (int ci = 0; ci < dx.c; ++ci) {
    Real* dst = dx.channel(ci);
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const Real* src = col.data() + (std::size_t(ci * k + ky) * k + kx) * hw;
        for (int y = 0; y < dx.h; ++y) {
          const int sy = y + ky - pad;
          if (sy < 0 || sy >= dx.h) continue;
          for (int xx = 0; xx < dx.w; ++xx) {
            const int sx = xx + kx - pad;
            if (sx < 0 || sx >= dx.w) continue;
            dst[sy * dx.w + sx] += src[y * dx.w + xx];
          }
        }
      }
  }
}

// Same-padded stride-1 convolution.
template <typename Real>
FMap<Real> conv_forward(const ConvP& p, const Real* theta, const FMap<Real>& x) {
  FMap<Real> y(p.cout, x.h, x.w);
  const int hw = x.hw();
  ConstMatMap<Real> W(theta + p.w, p.cout, p.cin * p.k * p.k);
  MatMap<Real> Y(y.data.data(), p.cout, hw);
  if (p.k == 1) {
    ConstMatMap<Real> X(x.data.data(), p.cin, hw);
    Y.noalias() = W * X;
  } else {
    std::vector<Real> col;
    im2col(x, p.k, col);
    ConstMatMap<Real> C(col.data(), p.cin * p.k * p.k, hw);
    Y.noalias() = W * C;
  }
  ConstVecMap<Real> b(theta + p.b, p.cout);
  Y.colwise() += b;
  return y;
}

// Accumulates parameter gradients; returns dx (empty when want_dx is false).
template <typename Real>
FMap<Real> conv_backward(const ConvP& p, const Real* theta, const FMap<Real>& x,
                         const FMap<Real>& dy, Real* grad, bool want_dx = true) {
  const int hw = x.hw();
  const int kk = p.cin * p.k * p.k;
  ConstMatMap<Real> W(theta + p.w, p.cout, kk);
  ConstMatMap<Real> DY(dy.data.data(), p.cout, hw);
  MatMap<Real> DW(grad + p.w, p.cout, kk);
  for (int o = 0; o < p.cout; ++o) {
    const Real* row = dy.data.data() + std::size_t(o) * hw;
    Real acc = 0;
    for (int i = 0; i < hw; ++i) acc += row[i];
    grad[p.b + o] += acc;
  }
  FMap<Real> dx;
  if (p.k == 1) {
    ConstMatMap<Real> X(x.data.data(), p.cin, hw);
    DW.noalias() += DY * X.transpose();
    if (want_dx) {
      dx = FMap<Real>(x.c, x.h, x.w);
      MatMap<Real> DX(dx.data.data(), p.cin, hw);
      DX.noalias() = W.transpose() * DY;
    }
    return dx;
  }
  std::vector<Real> col;
  im2col(x, p.k, col);
  ConstMatMap<Real> C(col.data(), kk, hw);
  DW.noalias() += DY * C.transpose();
  if (want_dx) {
    MatMap<Real> DC(col.data(), kk, hw);
    DC.noalias() = W.transpose() * DY;
    dx = FMap<Real>(x.c, x.h, x.w);
    col2im_add(col, p.k, dx);
  }
  return dx;
}

template <typename Real>
struct GNCache {
  std::vector<Real> xhat;
  std::vector<Real> rstd;  // per group
};

constexpr double kGroupNormEps = 1e-5;

template <typename Real>
FMap<Real> groupnorm_forward(const GNP& p, const Real* theta,
                             const FMap<Real>& x, GNCache<Real>& cache) {
  FMap<Real> y(x.c, x.h, x.w);
  const int cg = x.c / p.groups;
  const std::size_t n = std::size_t(cg) * x.hw();
  cache.xhat.resize(x.data.size());
  cache.rstd.resize(p.groups);
  for (int g = 0; g < p.groups; ++g) {
    const std::size_t base = std::size_t(g) * n;
    double mean = 0;
    for (std::size_t i = 0; i < n; ++i) mean += x.data[base + i];
    mean /= double(n);
    double var = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = x.data[base + i] - mean;
      var += d * d;
    }
    var /= double(n);
    const Real rstd = Real(1.0 / std::sqrt(var + kGroupNormEps));
    cache.rstd[g] = rstd;
    for (std::size_t i = 0; i < n; ++i)
      cache.xhat[base + i] = (x.data[base + i] - Real(mean)) * rstd;
  }
  const int hw = x.hw();
  for (int c = 0; c < x.c; ++c) {
    const Real gam = theta[p.g + c], bet = theta[p.b + c];
    const Real* xh = cache.xhat.data() + std::size_t(c) * hw;
    Real* out = y.channel(c);
    for (int i = 0; i < hw; ++i) out[i] = gam * xh[i] + bet;
  }
  return y;
}

template <typename Real>
FMap<Real> groupnorm_backward(const GNP& p, const Real* theta,
                              const GNCache<Real>& cache, const FMap<Real>& dy,
                              Real* grad) {
  FMap<Real> dx(dy.c, dy.h, dy.w);
  const int hw = dy.hw();
  const int cg = dy.c / p.groups;
  std::vector<Real> dxhat(dy.data.size());
  for (int c = 0; c < dy.c; ++c) {
    const Real gam = theta[p.g + c];
    const Real* d = dy.channel(c);
    const Real* xh = cache.xhat.data() + std::size_t(c) * hw;
    Real sg = 0, sb = 0;
    for (int i = 0; i < hw; ++i) {
      sg += d[i] * xh[i];
      sb += d[i];
      dxhat[std::size_t(c) * hw + i] = d[i] * gam;
    }
    grad[p.g + c] += sg;
    grad[p.b + c] += sb;
  }
  const std::size_t n = std::size_t(cg) * hw;
  for (int g = 0; g < p.groups; ++g) {
    const std::size_t base = std::size_t(g) * n;
    Real m1 = 0, m2 = 0;
    for (std::size_t i = 0; i < n; ++i) {
      m1 += dxhat[base + i];
      m2 += dxhat[base + i] * cache.xhat[base + i];
    }
    m1 /= Real(n);
    m2 /= Real(n);
    const Real rstd = cache.rstd[g];
    for (std::size_t i = 0; i < n; ++i)
      dx.data[base + i] =
          rstd * (dxhat[base + i] - m1 - cache.xhat[base + i] * m2);
  }
  return dx;
}

template <typename Real>
std::vector<Real> linear_forward(const LinP& p, const Real* theta,
                                 const std::vector<Real>& x) {
  std::vector<Real> y(p.out);
  ConstMatMap<Real> W(theta + p.w, p.out, p.in);
  VecMap<Real>(y.data(), p.out).noalias() =
      W * ConstVecMap<Real>(x.data(), p.in) + ConstVecMap<Real>(theta + p.b, p.out);
  return y;
}

template <typename Real>
std::vector<Real> linear_backward(const LinP& p, const Real* theta,
                                  const std::vector<Real>& x,
                                  const std::vector<Real>& dy, Real* grad) {
  ConstMatMap<Real> W(theta + p.w, p.out, p.in);
  ConstVecMap<Real> DY(dy.data(), p.out);
  MatMap<Real>(grad + p.w, p.out, p.in).noalias() +=
      DY * ConstVecMap<Real>(x.data(), p.in).transpose();
  VecMap<Real>(grad + p.b, p.out) += DY;
  std::vector<Real> dx(p.in);
  VecMap<Real>(dx.data(), p.in).noalias() = W.transpose() * DY;
  return dx;
}

template <typename Real>
FMap<Real> avgpool2(const FMap<Real>& x) {
  FMap<Real> y(x.c, x.h / 2, x.w / 2);
  for (int c = 0; c < x.c; ++c) {
    const Real* s = x.channel(c);
    Real* d = y.channel(c);
    for (int yy = 0; yy < y.h; ++yy)
      for (int xx = 0; xx < y.w; ++xx)
        d[yy * y.w + xx] =
            Real(0.25) * (s[(2 * yy) * x.w + 2 * xx] + s[(2 * yy) * x.w + 2 * xx + 1] +
                          s[(2 * yy + 1) * x.w + 2 * xx] +
                          s[(2 * yy + 1) * x.w + 2 * xx + 1]);
  }
  return y;
}

template <typename Real>
FMap<Real> avgpool2_backward(const FMap<Real>& dy) {
  FMap<Real> dx(dy.c, dy.h * 2, dy.w * 2);
  for (int c = 0; c < dy.c; ++c) {
    const Real* s = dy.channel(c);
    Real* d = dx.channel(c);
    for (int y = 0; y < dx.h; ++y)
      for (int x = 0; x < dx.w; ++x)
        d[y * dx.w + x] = Real(0.25) * s[(y / 2) * dy.w + x / 2];
  }
  return dx;
}

template <typename Real>
FMap<Real> upsample2(const FMap<Real>& x) {
  FMap<Real> y(x.c, x.h * 2, x.w * 2);
  for (int c = 0; c < x.c; ++c) {
    const Real* s = x.channel(c);
    Real* d = y.channel(c);
    for (int yy = 0; yy < y.h; ++yy)
      for (int xx = 0; xx < y.w; ++xx) d[yy * y.w + xx] = s[(yy / 2) * x.w + xx / 2];
  }
  return y;
}

template <typename Real>
FMap<Real> upsample2_backward(const FMap<Real>& dy) {
  FMap<Real> dx(dy.c, dy.h / 2, dy.w / 2);
  for (int c = 0; c < dy.c; ++c) {
    const Real* s = dy.channel(c);
    Real* d = dx.channel(c);
    for (int y = 0; y < dy.h; ++y)
      for (int x = 0; x < dy.w; ++x) d[(y / 2) * dx.w + x / 2] += s[y * dy.w + x];
  }
  return dx;
}

template <typename Real>
FMap<Real> concat_channels(const FMap<Real>& a, const FMap<Real>& b) {
  FMap<Real> y(a.c + b.c, a.h, a.w);
  std::copy(a.data.begin(), a.data.end(), y.data.begin());
  std::copy(b.data.begin(), b.data.end(), y.data.begin() + a.data.size());
  return y;
}

template <typename Real>
void split_channels(const FMap<Real>& dy, int ca, FMap<Real>& da, FMap<Real>& db) {
  da = FMap<Real>(ca, dy.h, dy.w);
  db = FMap<Real>(dy.c - ca, dy.h, dy.w);
  std::copy(dy.data.begin(), dy.data.begin() + da.data.size(), da.data.begin());
  std::copy(dy.data.begin() + da.data.size(), dy.data.end(), db.data.begin());
}

}  // namespace callipaint::nn
