#include "callipaint/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>

#include "callipaint/error.hpp"
#include "callipaint/rng.hpp"
#include "nn_kernels.hpp"

namespace callipaint {

using nn::ConvP;
using nn::FMap;
using nn::GNP;
using nn::LinP;

struct ResP {
  GNP gn1;
  ConvP conv1;
  LinP temb;
  GNP gn2;
  ConvP conv2;
  std::optional<ConvP> skip;
};

struct UNetLayout {
  ConvP conv_in;
  std::size_t emb_character = 0, emb_script = 0, emb_style = 0;
  LinP time1, time2;
  std::vector<ResP> down;
  ResP mid;
  std::vector<ResP> up;  // indexed by level
  GNP norm_out;
  ConvP conv_out;
  int time_dim = 0;
  nn::LayoutBuilder builder;
};

namespace {

ResP add_res(nn::LayoutBuilder& lb, const std::string& name, int cin, int cout,
             int temb, int groups) {
  ResP r;
  r.gn1 = nn::add_groupnorm(lb, name + ".norm1", cin, groups);
  r.conv1 = nn::add_conv(lb, name + ".conv1", cin, cout, 3);
  r.temb = nn::add_linear(lb, name + ".time_proj", temb, cout);
  r.gn2 = nn::add_groupnorm(lb, name + ".norm2", cout, groups);
  r.conv2 = nn::add_conv(lb, name + ".conv2", cout, cout, 3);
  if (cin != cout) r.skip = nn::add_conv(lb, name + ".skip", cin, cout, 1);
  return r;
}

std::shared_ptr<UNetLayout> build_layout(const DenoiserConfig& cfg) {
  cfg.validate();
  auto L = std::make_shared<UNetLayout>();
  auto& lb = L->builder;
  const int C = cfg.base_channels;
  const int D = cfg.time_embed_dim;
  const int G = cfg.groups;
  L->time_dim = D;
  L->conv_in = nn::add_conv(lb, "conv_in", 1, C, 3);
  L->emb_character = lb.add("embed.character", {cfg.vocab_character, D},
                            nn::Init::kUnitUniform);
  L->emb_script =
      lb.add("embed.script", {cfg.vocab_script, D}, nn::Init::kUnitUniform);
  L->emb_style =
      lb.add("embed.style", {cfg.vocab_style, D}, nn::Init::kUnitUniform);
  L->time1 = nn::add_linear(lb, "time.fc1", D, D);
  L->time2 = nn::add_linear(lb, "time.fc2", D, D);
  int ch = C;
  std::vector<int> level_ch;
  for (int l = 0; l < cfg.levels(); ++l) {
    const int out = C * cfg.channel_mults[l];
    L->down.push_back(add_res(lb, "down" + std::to_string(l), ch, out, D, G));
    level_ch.push_back(out);
    ch = out;
  }
  L->mid = add_res(lb, "mid", ch, ch, D, G);
  L->up.resize(cfg.levels());
  for (int l = cfg.levels() - 1; l >= 0; --l) {
    L->up[l] = add_res(lb, "up" + std::to_string(l), ch + level_ch[l],
                       level_ch[l], D, G);
    ch = level_ch[l];
  }
  L->norm_out = nn::add_groupnorm(lb, "norm_out", ch, G);
  L->conv_out = nn::add_conv(lb, "conv_out", ch, 1, 3, /*zero=*/true);
  return L;
}

template <typename Real>
struct ResTape {
  FMap<Real> x;
  nn::GNCache<Real> gn1;
  FMap<Real> n1, s1, c1;
  nn::GNCache<Real> gn2;
  FMap<Real> n2, s2;
};

template <typename Real>
struct Tape {
  FMap<Real> input;
  std::vector<Real> e0, h1, a1, h2, temb;
  ResTape<Real> mid;
  std::vector<ResTape<Real>> down, up;
  std::vector<int> up_split;  // channels of h before concatenation
  nn::GNCache<Real> gn_out;
  FMap<Real> n_out, s_out;
};

template <typename Real>
void silu_map(const FMap<Real>& x, FMap<Real>& y) {
  y.c = x.c;
  y.h = x.h;
  y.w = x.w;
  nn::silu_forward(x.data, y.data);
}

template <typename Real>
FMap<Real> res_forward(const ResP& p, const Real* th, const FMap<Real>& x,
                       const std::vector<Real>& temb, ResTape<Real>& tp) {
  tp.x = x;
  tp.n1 = nn::groupnorm_forward(p.gn1, th, x, tp.gn1);
  silu_map(tp.n1, tp.s1);
  tp.c1 = nn::conv_forward(p.conv1, th, tp.s1);
  const auto proj = nn::linear_forward(p.temb, th, temb);
  const int hw = tp.c1.hw();
  for (int c = 0; c < tp.c1.c; ++c) {
    Real* d = tp.c1.channel(c);
    for (int i = 0; i < hw; ++i) d[i] += proj[c];
  }
  tp.n2 = nn::groupnorm_forward(p.gn2, th, tp.c1, tp.gn2);
  silu_map(tp.n2, tp.s2);
  FMap<Real> out = nn::conv_forward(p.conv2, th, tp.s2);
  if (p.skip) {
    const FMap<Real> s = nn::conv_forward(*p.skip, th, x);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += s.data[i];
  } else {
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += x.data[i];
  }
  return out;
}

template <typename Real>
FMap<Real> res_backward(const ResP& p, const Real* th, const ResTape<Real>& tp,
                        const std::vector<Real>& temb, const FMap<Real>& dout,
                        Real* grad, std::vector<Real>& dtemb) {
  FMap<Real> ds2 = nn::conv_backward(p.conv2, th, tp.s2, dout, grad);
  nn::silu_backward(tp.n2.data, ds2.data);
  FMap<Real> dc1 = nn::groupnorm_backward(p.gn2, th, tp.gn2, ds2, grad);
  std::vector<Real> dproj(dc1.c, Real(0));
  const int hw = dc1.hw();
  for (int c = 0; c < dc1.c; ++c) {
    const Real* d = dc1.channel(c);
    Real s = 0;
    for (int i = 0; i < hw; ++i) s += d[i];
    dproj[c] = s;
  }
  const auto dt = nn::linear_backward(p.temb, th, temb, dproj, grad);
  for (std::size_t i = 0; i < dt.size(); ++i) dtemb[i] += dt[i];
  FMap<Real> ds1 = nn::conv_backward(p.conv1, th, tp.s1, dc1, grad);
  nn::silu_backward(tp.n1.data, ds1.data);
  FMap<Real> dx = nn::groupnorm_backward(p.gn1, th, tp.gn1, ds1, grad);
  if (p.skip) {
    const FMap<Real> dsk = nn::conv_backward(*p.skip, th, tp.x, dout, grad);
    for (std::size_t i = 0; i < dx.data.size(); ++i) dx.data[i] += dsk.data[i];
  } else {
    for (std::size_t i = 0; i < dx.data.size(); ++i) dx.data[i] += dout.data[i];
  }
  return dx;
}

template <typename Real>
std::vector<Real> condition_vector(const UNetLayout& L, const Real* th, int t,
                                   const ConditionLabel& cond) {
  const int D = L.time_dim;
  const auto sin = timestep_embedding(t, D);
  std::vector<Real> e(D);
  const Real* ec = th + L.emb_character + std::size_t(cond.character) * D;
  const Real* es = th + L.emb_script + std::size_t(cond.script) * D;
  const Real* ey = th + L.emb_style + std::size_t(cond.style) * D;
  for (int i = 0; i < D; ++i) e[i] = Real(sin[i]) + ec[i] + es[i] + ey[i];
  return e;
}

template <typename Real>
FMap<Real> unet_forward(const UNetLayout& L, const DenoiserConfig& cfg,
                        const Real* th, std::span<const Real> x, int t,
                        const ConditionLabel& cond, Tape<Real>& tp) {
  tp.e0 = condition_vector(L, th, t, cond);
  tp.h1 = nn::linear_forward(L.time1, th, tp.e0);
  nn::silu_forward(tp.h1, tp.a1);
  tp.h2 = nn::linear_forward(L.time2, th, tp.a1);
  nn::silu_forward(tp.h2, tp.temb);

  tp.input = FMap<Real>(1, cfg.resolution.height, cfg.resolution.width);
  std::copy(x.begin(), x.end(), tp.input.data.begin());
  FMap<Real> h = nn::conv_forward(L.conv_in, th, tp.input);
  const int levels = cfg.levels();
  tp.down.resize(levels);
  tp.up.resize(levels);
  tp.up_split.resize(levels);
  std::vector<FMap<Real>> skips(levels);
  for (int l = 0; l < levels; ++l) {
    h = res_forward(L.down[l], th, h, tp.temb, tp.down[l]);
    skips[l] = h;
    if (l + 1 < levels) h = nn::avgpool2(h);
  }
  h = res_forward(L.mid, th, h, tp.temb, tp.mid);
  for (int l = levels - 1; l >= 0; --l) {
    tp.up_split[l] = h.c;
    h = nn::concat_channels(h, skips[l]);
    h = res_forward(L.up[l], th, h, tp.temb, tp.up[l]);
    if (l > 0) h = nn::upsample2(h);
  }
  tp.n_out = nn::groupnorm_forward(L.norm_out, th, h, tp.gn_out);
  silu_map(tp.n_out, tp.s_out);
  return nn::conv_forward(L.conv_out, th, tp.s_out);
}

template <typename Real>
void unet_backward(const UNetLayout& L, const DenoiserConfig& cfg,
                   const Real* th, const Tape<Real>& tp, const ConditionLabel& cond,
                   const FMap<Real>& dout, Real* grad) {
  const int levels = cfg.levels();
  std::vector<Real> dtemb(L.time_dim, Real(0));
  FMap<Real> dh = nn::conv_backward(L.conv_out, th, tp.s_out, dout, grad);
  nn::silu_backward(tp.n_out.data, dh.data);
  dh = nn::groupnorm_backward(L.norm_out, th, tp.gn_out, dh, grad);
  std::vector<FMap<Real>> dskips(levels);
  for (int l = 0; l < levels; ++l) {
    if (l > 0) dh = nn::upsample2_backward(dh);
    FMap<Real> dcat = res_backward(L.up[l], th, tp.up[l], tp.temb, dh, grad, dtemb);
    nn::split_channels(dcat, tp.up_split[l], dh, dskips[l]);
  }
  dh = res_backward(L.mid, th, tp.mid, tp.temb, dh, grad, dtemb);
  for (int l = levels - 1; l >= 0; --l) {
    if (l + 1 < levels) dh = nn::avgpool2_backward(dh);
    for (std::size_t i = 0; i < dh.data.size(); ++i) dh.data[i] += dskips[l].data[i];
    dh = res_backward(L.down[l], th, tp.down[l], tp.temb, dh, grad, dtemb);
  }
  nn::conv_backward(L.conv_in, th, tp.input, dh, grad, /*want_dx=*/false);

  nn::silu_backward(tp.h2, dtemb);
  auto da1 = nn::linear_backward(L.time2, th, tp.a1, dtemb, grad);
  nn::silu_backward(tp.h1, da1);
  auto de0 = nn::linear_backward(L.time1, th, tp.e0, da1, grad);
  const int D = L.time_dim;
  Real* gc = grad + L.emb_character + std::size_t(cond.character) * D;
  Real* gs = grad + L.emb_script + std::size_t(cond.script) * D;
  Real* gy = grad + L.emb_style + std::size_t(cond.style) * D;
  for (int i = 0; i < D; ++i) {
    gc[i] += de0[i];
    gs[i] += de0[i];
    gy[i] += de0[i];
  }
}

void check_inputs(const DenoiserParams& params, std::size_t theta_size,
                  std::size_t x_size, int t, const ConditionLabel& cond) {
  const auto& cfg = params.config();
  require(theta_size == params.param_count(), ErrorKind::kShapeMismatch,
          "parameter buffer size does not match the layout");
  require(static_cast<int>(x_size) == cfg.resolution.pixels(),
          ErrorKind::kShapeMismatch,
          "input does not match model resolution " + to_string(cfg.resolution));
  require(t >= 1, ErrorKind::kOutOfRange, "timestep must be >= 1");
  require(cond.character >= 0 && cond.character < cfg.vocab_character &&
              cond.script >= 0 && cond.script < cfg.vocab_script &&
              cond.style >= 0 && cond.style < cfg.vocab_style,
          ErrorKind::kOutOfRange, "condition id out of vocabulary bounds");
}

}  // namespace

void DenoiserConfig::validate() const {
  require(resolution.height > 0 && resolution.width > 0,
          ErrorKind::kInvalidArgument, "resolution must be positive");
  require(!channel_mults.empty(), ErrorKind::kInvalidArgument,
          "at least one U-Net level is required");
  const int div = 1 << (levels() - 1);
  require(resolution.height % div == 0 && resolution.width % div == 0,
          ErrorKind::kInvalidArgument,
          "resolution must be divisible by 2^(levels-1) = " + std::to_string(div));
  require(base_channels > 0 && time_embed_dim > 0 && time_embed_dim % 2 == 0,
          ErrorKind::kInvalidArgument,
          "base_channels must be > 0 and time_embed_dim even and > 0");
  require(vocab_character > 0 && vocab_script > 0 && vocab_style > 0,
          ErrorKind::kInvalidArgument, "vocabulary sizes must be > 0");
  require(groups > 0, ErrorKind::kInvalidArgument, "groups must be > 0");
  int prev = base_channels;
  std::vector<int> chans{base_channels};
  for (int m : channel_mults) {
    require(m > 0, ErrorKind::kInvalidArgument, "channel multipliers must be > 0");
    chans.push_back(base_channels * m);
  }
  // concatenated widths on the way up
  prev = base_channels * channel_mults.back();
  for (int l = levels() - 1; l >= 0; --l) {
    chans.push_back(prev + base_channels * channel_mults[l]);
    prev = base_channels * channel_mults[l];
  }
  for (int c : chans)
    require(c % groups == 0, ErrorKind::kInvalidArgument,
            "channel count " + std::to_string(c) +
                " not divisible by normalisation groups");
}

DenoiserParams::DenoiserParams(DenoiserConfig config, ParamStore store)
    : config_(std::move(config)), store_(std::move(store)) {
  auto layout = build_layout(config_);
  require(store_.tensors.size() == layout->builder.tensors.size() &&
              store_.values.size() == layout->builder.total,
          ErrorKind::kShapeMismatch,
          "parameter tensors inconsistent with denoiser config");
  for (std::size_t i = 0; i < store_.tensors.size(); ++i) {
    const auto& a = store_.tensors[i];
    const auto& b = layout->builder.tensors[i];
    require(a.name == b.name && a.shape == b.shape && a.offset == b.offset,
            ErrorKind::kShapeMismatch,
            "tensor '" + a.name + "' inconsistent with denoiser config");
  }
  layout_ = std::move(layout);
}

std::vector<TensorInfo> denoiser_tensor_layout(const DenoiserConfig& config) {
  return build_layout(config)->builder.tensors;
}

DenoiserParams init_params(const DenoiserConfig& config, std::uint64_t seed) {
  auto layout = build_layout(config);
  ParamStore store = nn::materialize(layout->builder, seed, "denoiser.init.");
  return DenoiserParams(config, std::move(store));
}

std::vector<double> timestep_embedding(int t, int dim) {
  std::vector<double> out(dim);
  const int half = dim / 2;
  for (int i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * i / half);
    out[i] = std::sin(t * freq);
    out[i + half] = std::cos(t * freq);
  }
  return out;
}

std::vector<float> embed_condition(const DenoiserParams& params,
                                   const ConditionLabel& cond) {
  const auto& cfg = params.config();
  require(cond.character >= 0 && cond.character < cfg.vocab_character,
          ErrorKind::kOutOfRange, "character id out of vocabulary bounds");
  require(cond.script >= 0 && cond.script < cfg.vocab_script,
          ErrorKind::kOutOfRange, "script id out of vocabulary bounds");
  require(cond.style >= 0 && cond.style < cfg.vocab_style,
          ErrorKind::kOutOfRange, "style id out of vocabulary bounds");
  const auto& L = params.layout();
  const int D = cfg.time_embed_dim;
  const float* th = params.store().values.data();
  std::vector<float> e(D);
  for (int i = 0; i < D; ++i)
    e[i] = th[L.emb_character + std::size_t(cond.character) * D + i] +
           th[L.emb_script + std::size_t(cond.script) * D + i] +
           th[L.emb_style + std::size_t(cond.style) * D + i];
  return e;
}

template <typename Real>
std::vector<Real> predict_noise_raw(const DenoiserParams& params,
                                    std::span<const Real> theta,
                                    std::span<const Real> x_t, int t,
                                    const ConditionLabel& cond) {
  check_inputs(params, theta.size(), x_t.size(), t, cond);
  for (Real v : x_t)
    require(std::isfinite(static_cast<double>(v)), ErrorKind::kNonFinite,
            "non-finite denoiser input");
  Tape<Real> tape;
  FMap<Real> out = unet_forward(params.layout(), params.config(), theta.data(),
                                x_t, t, cond, tape);
  return std::move(out.data);
}

std::vector<float> predict_noise(const DenoiserParams& params,
                                 const GlyphImage& x_t, int t,
                                 const ConditionLabel& cond) {
  return predict_noise_raw<float>(params, params.store().values, x_t.pixels, t,
                                  cond);
}

template <typename Real>
LossAndGrad<Real> eps_mse_loss(const DenoiserParams& params,
                               std::span<const Real> theta,
                               const std::vector<NoisedExample<Real>>& batch) {
  require(!batch.empty(), ErrorKind::kInvalidArgument, "empty batch");
  const auto& cfg = params.config();
  const std::size_t npix = cfg.resolution.pixels();
  const Real scale = Real(1) / Real(batch.size() * npix);
  LossAndGrad<Real> out;
  out.grad.assign(theta.size(), Real(0));
  double loss = 0;
  for (const auto& ex : batch) {
    check_inputs(params, theta.size(), ex.x_t.size(), ex.t, ex.cond);
    require(ex.target.size() == npix, ErrorKind::kShapeMismatch,
            "target noise does not match model resolution");
    Tape<Real> tape;
    FMap<Real> pred = unet_forward(params.layout(), cfg, theta.data(),
                                   std::span<const Real>(ex.x_t), ex.t, ex.cond, tape);
    FMap<Real> dpred(1, cfg.resolution.height, cfg.resolution.width);
    for (std::size_t i = 0; i < npix; ++i) {
      const Real diff = ex.target[i] - pred.data[i];
      loss += double(diff) * double(diff);
      dpred.data[i] = Real(-2) * diff * scale;
    }
    unet_backward(params.layout(), cfg, theta.data(), tape, ex.cond, dpred,
                  out.grad.data());
  }
  out.loss = Real(loss / double(batch.size() * npix));
  require(std::isfinite(static_cast<double>(out.loss)), ErrorKind::kNonFinite,
          "non-finite training loss");
  return out;
}

template LossAndGrad<float> eps_mse_loss<float>(
    const DenoiserParams&, std::span<const float>,
    const std::vector<NoisedExample<float>>&);
template LossAndGrad<double> eps_mse_loss<double>(
    const DenoiserParams&, std::span<const double>,
    const std::vector<NoisedExample<double>>&);
template std::vector<float> predict_noise_raw<float>(
    const DenoiserParams&, std::span<const float>, std::span<const float>, int,
    const ConditionLabel&);
template std::vector<double> predict_noise_raw<double>(
    const DenoiserParams&, std::span<const double>, std::span<const double>,
    int, const ConditionLabel&);

}  // namespace callipaint
