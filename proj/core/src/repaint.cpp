#include "callipaint/repaint.hpp"

#include <chrono>
#include <cmath>

#include "callipaint/error.hpp"
#include "callipaint/rng.hpp"

namespace callipaint {

void InpaintConfig::validate(int steps) const {
  require(jump_len >= 1 && jump_len <= steps, ErrorKind::kInvalidArgument,
          "jump_len must lie in [1, T]");
  require(steps % jump_len == 0, ErrorKind::kInvalidArgument,
          "T = " + std::to_string(steps) + " is not divisible by jump_len = " +
              std::to_string(jump_len));
  require(n_resample >= 1, ErrorKind::kInvalidArgument, "n_resample must be >= 1");
}

std::string PlanAction::label() const {
  if (kind == Kind::kDenoise) return "D" + std::to_string(t);
  return "J" + std::to_string(from) + "->" + std::to_string(to);
}

TimePlan build_time_plan(int steps, int jump_len, int n_resample) {
  InpaintConfig cfg;
  cfg.jump_len = jump_len;
  cfg.n_resample = n_resample;
  cfg.validate(steps);
  TimePlan plan;
  plan.reserve(static_cast<std::size_t>(steps) * n_resample +
               (steps / jump_len) * (n_resample - 1));
  for (int top = steps; top > 0; top -= jump_len) {
    for (int rep = 0; rep < n_resample; ++rep) {
      for (int t = top; t > top - jump_len; --t)
        plan.push_back(PlanAction::denoise(t));
      if (rep + 1 < n_resample)
        plan.push_back(PlanAction::jump(top - jump_len, top));
    }
  }
  return plan;
}

std::size_t count_denoise(const TimePlan& plan) {
  std::size_t n = 0;
  for (const auto& a : plan) n += a.kind == PlanAction::Kind::kDenoise;
  return n;
}

std::size_t count_jumps(const TimePlan& plan) {
  return plan.size() - count_denoise(plan);
}

std::vector<float> known_sample(std::span<const float> x0_cond, int t,
                                const NoiseSchedule& schedule,
                                std::span<const float> eps) {
  schedule.check_step(t, 0);
  require(x0_cond.size() == eps.size(), ErrorKind::kShapeMismatch,
          "known_sample: noise shape differs from image shape");
  if (t == 0) return {x0_cond.begin(), x0_cond.end()};
  return q_sample(x0_cond, t, eps, schedule);
}

std::vector<float> combine(const Mask& mask, std::span<const float> known,
                           std::span<const float> unknown) {
  require(mask.bits.size() == known.size() && known.size() == unknown.size(),
          ErrorKind::kShapeMismatch, "combine: mask and images differ in shape");
  std::vector<float> out(known.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = mask.bits[i] ? unknown[i] : known[i];
  return out;
}

std::vector<float> jump_forward_with_noise(
    std::span<const float> x, int from, int to, const NoiseSchedule& schedule,
    const std::vector<std::vector<float>>& noise) {
  require(from >= 0 && from <= to, ErrorKind::kInvalidArgument,
          "jump_forward: target step precedes source step");
  require(to <= schedule.steps(), ErrorKind::kOutOfRange,
          "jump_forward: target step " + std::to_string(to) + " exceeds T");
  require(noise.size() == static_cast<std::size_t>(to - from),
          ErrorKind::kShapeMismatch, "jump_forward: one noise vector per substep");
  std::vector<float> cur(x.begin(), x.end());
  for (int s = from; s < to; ++s) {
    const auto& eps = noise[s - from];
    require(eps.size() == cur.size(), ErrorKind::kShapeMismatch,
            "jump_forward: noise shape mismatch");
    const double a = std::sqrt(schedule.alpha(s + 1));
    const double b = std::sqrt(schedule.beta(s + 1));
    for (std::size_t i = 0; i < cur.size(); ++i)
      cur[i] = static_cast<float>(a * cur[i] + b * eps[i]);
  }
  return cur;
}

std::vector<float> jump_forward(std::span<const float> x, int from, int to,
                                const NoiseSchedule& schedule,
                                std::uint64_t rng_seed) {
  require(from >= 0 && from <= to && to <= schedule.steps(),
          ErrorKind::kOutOfRange, "jump_forward: invalid step range");
  Rng rng(rng_seed);
  std::vector<std::vector<float>> noise;
  for (int s = from; s < to; ++s) noise.push_back(rng.normal_vector(x.size()));
  return jump_forward_with_noise(x, from, to, schedule, noise);
}

InpaintResult inpaint(const DenoiserParams& params, const GlyphImage& image_cond,
                      const Mask& mask, const ConditionLabel& cond,
                      const NoiseSchedule& schedule, const InpaintConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  const Resolution res = params.config().resolution;
  require(image_cond.range == PixelRange::kModel, ErrorKind::kInvalidArgument,
          "inpaint: condition image must be in model range");
  require(image_cond.resolution == res, ErrorKind::kShapeMismatch,
          "inpaint: condition image resolution " + to_string(image_cond.resolution) +
              " differs from model resolution " + to_string(res));
  require(mask.resolution == res, ErrorKind::kShapeMismatch,
          "inpaint: mask resolution differs from model resolution");
  mask.validate();
  config.validate(schedule.steps());

  const int T = schedule.steps();
  const std::size_t n = res.pixels();
  const std::uint64_t seed = config.seed;
  InpaintResult out;
  out.plan = build_time_plan(T, config.jump_len, config.n_resample);
  auto& trace = out.trace;
  trace.seed = seed;
  trace.condition = cond;

  Rng init = Rng::substream(seed, streams::kInitNoise);
  std::vector<float> x = init.normal_vector(n);
  if (config.trace.stride > 0) {
    trace.states.push_back(x);
    trace.state_labels.push_back("init");
  }
  std::vector<std::uint64_t> visits(T + 1, 0);
  std::uint64_t jumps = 0;
  const auto& cpx = image_cond.pixels;
  for (std::size_t k = 0; k < out.plan.size(); ++k) {
    const auto& action = out.plan[k];
    if (action.kind == PlanAction::Kind::kDenoise) {
      const int t = action.t;
      const std::uint64_t visit_index = static_cast<std::uint64_t>(t) +
                                        static_cast<std::uint64_t>(T) * visits[t];
      std::vector<float> z;
      std::optional<std::span<const float>> zs;
      if (t > 1) {
        z = Rng::substream(seed, streams::kStepNoise, visit_index).normal_vector(n);
        zs = std::span<const float>(z);
      }
      const auto unknown = ddpm_step(params, x, t, cond, schedule, zs);
      std::vector<float> known;
      if (t - 1 == 0) {
        known = cpx;
      } else {
        const auto eps =
            Rng::substream(seed, streams::kKnownNoise, visit_index).normal_vector(n);
        known = known_sample(cpx, t - 1, schedule, eps);
      }
      x = combine(mask, known, unknown);
      ++visits[t];
      trace.t_visited.push_back(t);
      ++trace.denoise_steps;
    } else {
      x = jump_forward(x, action.from, action.to, schedule,
                       mix_seed(seed, streams::kJumpNoise, jumps++));
    }
    for (float v : x)
      require(std::isfinite(v), ErrorKind::kNonFinite,
              "non-finite state at action " + action.label() + " (seed " +
                  std::to_string(seed) + ")");
    trace.actions.push_back(action.label());
    if (config.trace.stride > 0 &&
        ((k + 1) % config.trace.stride == 0 || k + 1 == out.plan.size())) {
      trace.states.push_back(x);
      trace.state_labels.push_back(action.label());
    }
  }
  // Stamp the known region so that unmasked pixels equal the condition.
  x = combine(mask, cpx, x);
  out.image = clamp_model(GlyphImage(res, PixelRange::kModel, std::move(x)));
  for (std::size_t i = 0; i < n; ++i)
    if (!mask.bits[i]) out.image.pixels[i] = cpx[i];
  trace.elapsed_ms = std::chrono::duration<double, std::milli>(
                         std::chrono::steady_clock::now() - start)
                         .count();
  return out;
}

double boundary_discrepancy(const GlyphImage& image, const Mask& mask) {
  require(image.resolution == mask.resolution, ErrorKind::kShapeMismatch,
          "boundary_discrepancy: resolution mismatch");
  const int H = image.height(), W = image.width();
  double sum = 0;
  std::size_t pairs = 0;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      if (x + 1 < W && mask.at(y, x) != mask.at(y, x + 1)) {
        const double d = image.at(y, x) - image.at(y, x + 1);
        sum += d * d;
        ++pairs;
      }
      if (y + 1 < H && mask.at(y, x) != mask.at(y + 1, x)) {
        const double d = image.at(y, x) - image.at(y + 1, x);
        sum += d * d;
        ++pairs;
      }
    }
  return pairs ? sum / pairs : 0.0;
}

}  // namespace callipaint
