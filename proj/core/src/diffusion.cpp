#include "callipaint/diffusion.hpp"

#include <chrono>
#include <cmath>

#include "callipaint/error.hpp"
#include "callipaint/rng.hpp"

namespace callipaint {

void NoiseSchedule::check_step(int t, int lo) const {
  require(t >= lo && t <= steps_, ErrorKind::kOutOfRange,
          "timestep " + std::to_string(t) + " outside [" + std::to_string(lo) +
              ", " + std::to_string(steps_) + "]");
}

NoiseSchedule make_schedule(int steps, double beta_start, double beta_end) {
  require(steps >= 1, ErrorKind::kInvalidArgument, "schedule needs T >= 1");
  require(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0,
          ErrorKind::kInvalidArgument,
          "schedule bounds must satisfy 0 < beta_start <= beta_end < 1");
  NoiseSchedule s;
  s.steps_ = steps;
  s.id_ = {steps, beta_start, beta_end};
  s.beta_.assign(steps + 1, 0.0);
  s.alpha_.assign(steps + 1, 1.0);
  s.alpha_bar_.assign(steps + 1, 1.0);
  s.posterior_var_.assign(steps + 1, 0.0);
  for (int t = 1; t <= steps; ++t) {
    s.beta_[t] = steps == 1 ? beta_start
                            : beta_start + (beta_end - beta_start) *
                                               (t - 1) / (steps - 1.0);
    s.alpha_[t] = 1.0 - s.beta_[t];
    s.alpha_bar_[t] = s.alpha_bar_[t - 1] * s.alpha_[t];
    s.posterior_var_[t] = s.beta_[t] * (1.0 - s.alpha_bar_[t - 1]) /
                          (1.0 - s.alpha_bar_[t]);
  }
  return s;
}

std::vector<float> q_sample(std::span<const float> x0, int t,
                            std::span<const float> eps,
                            const NoiseSchedule& schedule) {
  schedule.check_step(t);
  require(x0.size() == eps.size(), ErrorKind::kShapeMismatch,
          "q_sample: noise shape differs from image shape");
  const double a = std::sqrt(schedule.alpha_bar(t));
  const double b = std::sqrt(1.0 - schedule.alpha_bar(t));
  std::vector<float> out(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i)
    out[i] = static_cast<float>(a * x0[i] + b * eps[i]);
  return out;
}

LossAndGrad<float> training_loss(const DenoiserParams& params,
                                 const std::vector<Example>& batch,
                                 const NoiseSchedule& schedule,
                                 std::uint64_t seed) {
  require(!batch.empty(), ErrorKind::kInvalidArgument, "empty batch");
  Rng t_rng = Rng::substream(seed, streams::kLossTimestep);
  std::vector<NoisedExample<float>> items;
  items.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& ex = batch[i];
    require(ex.image.range == PixelRange::kModel, ErrorKind::kInvalidArgument,
            "training images must be in model range");
    const int t = static_cast<int>(t_rng.uniform_int(1, schedule.steps()));
    Rng e_rng = Rng::substream(seed, streams::kLossNoise, i);
    auto eps = e_rng.normal_vector(ex.image.pixels.size());
    auto x_t = q_sample(ex.image.pixels, t, eps, schedule);
    items.push_back({std::move(x_t), t, ex.label, std::move(eps)});
  }
  return eps_mse_loss<float>(params, params.store().values, items);
}

std::vector<float> ddpm_step_from_eps(std::span<const float> x_t,
                                      std::span<const float> eps_hat, int t,
                                      const NoiseSchedule& schedule,
                                      std::optional<std::span<const float>> z) {
  schedule.check_step(t);
  require(t == 1 || z.has_value(), ErrorKind::kInvalidArgument,
          "ddpm_step: noise z is required for t > 1");
  require(t > 1 || !z.has_value(), ErrorKind::kInvalidArgument,
          "ddpm_step: noise z must not be supplied at t = 1");
  require(eps_hat.size() == x_t.size() && (!z || z->size() == x_t.size()),
          ErrorKind::kShapeMismatch, "ddpm_step: shape mismatch");
  const double inv_sqrt_alpha = 1.0 / std::sqrt(schedule.alpha(t));
  const double coef = schedule.beta(t) / std::sqrt(1.0 - schedule.alpha_bar(t));
  const double sigma = std::sqrt(schedule.posterior_variance(t));
  std::vector<float> out(x_t.size());
  for (std::size_t i = 0; i < x_t.size(); ++i) {
    double mu = inv_sqrt_alpha * (x_t[i] - coef * eps_hat[i]);
    if (z) mu += sigma * (*z)[i];
    out[i] = static_cast<float>(mu);
  }
  return out;
}

std::vector<float> ddpm_step(const DenoiserParams& params,
                             std::span<const float> x_t, int t,
                             const ConditionLabel& cond,
                             const NoiseSchedule& schedule,
                             std::optional<std::span<const float>> z) {
  schedule.check_step(t);
  const auto eps_hat =
      predict_noise_raw<float>(params, params.store().values, x_t, t, cond);
  return ddpm_step_from_eps(x_t, eps_hat, t, schedule, z);
}

SampleResult sample(const DenoiserParams& params, const ConditionLabel& cond,
                    const NoiseSchedule& schedule, std::uint64_t seed,
                    const TraceOptions& trace_opts) {
  const auto start = std::chrono::steady_clock::now();
  const Resolution res = params.config().resolution;
  const std::size_t n = res.pixels();
  SampleResult out;
  auto& trace = out.trace;
  trace.seed = seed;
  trace.condition = cond;

  Rng init = Rng::substream(seed, streams::kInitNoise);
  std::vector<float> x = init.normal_vector(n);
  if (trace_opts.stride > 0) {
    trace.states.push_back(x);
    trace.state_labels.push_back("init");
  }
  const int T = schedule.steps();
  for (int t = T; t >= 1; --t) {
    std::vector<float> z;
    std::optional<std::span<const float>> zs;
    if (t > 1) {
      Rng zr = Rng::substream(seed, streams::kStepNoise, static_cast<std::uint64_t>(t));
      z = zr.normal_vector(n);
      zs = std::span<const float>(z);
    }
    x = ddpm_step(params, x, t, cond, schedule, zs);
    for (float v : x)
      require(std::isfinite(v), ErrorKind::kNonFinite,
              "non-finite state at t=" + std::to_string(t) +
                  " (seed " + std::to_string(seed) + ")");
    trace.actions.push_back("D" + std::to_string(t));
    trace.t_visited.push_back(t);
    ++trace.denoise_steps;
    const int k = T - t + 1;
    if (trace_opts.stride > 0 && (k % trace_opts.stride == 0 || t == 1)) {
      trace.states.push_back(x);
      trace.state_labels.push_back("D" + std::to_string(t));
    }
  }
  out.image = clamp_model(GlyphImage(res, PixelRange::kModel, std::move(x)));
  trace.elapsed_ms = std::chrono::duration<double, std::milli>(
                         std::chrono::steady_clock::now() - start)
                         .count();
  return out;
}

}  // namespace callipaint
