#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "callipaint/corpus.hpp"
#include "callipaint/denoiser.hpp"
#include "callipaint/image.hpp"

namespace callipaint {

// Identifies a linear schedule in checkpoints and API calls.
struct ScheduleId {
  int steps = 200;
  double beta_start = 1e-4;
  double beta_end = 0.02;

  friend bool operator==(const ScheduleId&, const ScheduleId&) = default;
};

// Linear-beta schedule tables, 1-based in t with alpha_bar(0) = 1.
class NoiseSchedule {
 public:
  NoiseSchedule() = default;

  int steps() const { return steps_; }
  const ScheduleId& id() const { return id_; }

  double beta(int t) const { return beta_.at(t); }
  double alpha(int t) const { return alpha_.at(t); }
  // Defined for t in [0, T].
  double alpha_bar(int t) const { return alpha_bar_.at(t); }
  // beta(t) * (1 - alpha_bar(t-1)) / (1 - alpha_bar(t)); exactly 0 at t = 1.
  double posterior_variance(int t) const { return posterior_var_.at(t); }

  void check_step(int t, int lo = 1) const;

 private:
  friend NoiseSchedule make_schedule(int, double, double);
  int steps_ = 0;
  ScheduleId id_;
  std::vector<double> beta_, alpha_, alpha_bar_, posterior_var_;
};

NoiseSchedule make_schedule(int steps, double beta_start, double beta_end);
inline NoiseSchedule make_schedule(const ScheduleId& id) {
  return make_schedule(id.steps, id.beta_start, id.beta_end);
}

// Named substreams shared by the plain sampler and the inpainting scheduler.
namespace streams {
constexpr const char* kInitNoise = "sample.init";
constexpr const char* kStepNoise = "sample.z";
constexpr const char* kKnownNoise = "repaint.known";
constexpr const char* kJumpNoise = "repaint.jump";
constexpr const char* kLossTimestep = "loss.t";
constexpr const char* kLossNoise = "loss.eps";
}  // namespace streams

// sqrt(abar_t) x0 + sqrt(1 - abar_t) eps.
std::vector<float> q_sample(std::span<const float> x0, int t,
                            std::span<const float> eps,
                            const NoiseSchedule& schedule);

// Draws t ~ U{1..T} and eps ~ N(0, I) per item from `seed` and returns the
// epsilon-MSE loss with its gradient.
LossAndGrad<float> training_loss(const DenoiserParams& params,
                                 const std::vector<Example>& batch,
                                 const NoiseSchedule& schedule,
                                 std::uint64_t seed);

// Ancestral step: z is required for t > 1 and forbidden at t = 1.
std::vector<float> ddpm_step(const DenoiserParams& params,
                             std::span<const float> x_t, int t,
                             const ConditionLabel& cond,
                             const NoiseSchedule& schedule,
                             std::optional<std::span<const float>> z);

// Same step with a precomputed noise prediction.
std::vector<float> ddpm_step_from_eps(std::span<const float> x_t,
                                      std::span<const float> eps_hat, int t,
                                      const NoiseSchedule& schedule,
                                      std::optional<std::span<const float>> z);

struct TraceOptions {
  int stride = 0;  // 0 keeps no intermediate states
};

struct SampleTrace {
  std::uint64_t seed = 0;
  ConditionLabel condition;
  std::vector<std::string> actions;  // "D<t>" or "J<from>-><to>"
  std::vector<int> t_visited;        // timestep of every Denoise action
  std::vector<std::vector<float>> states;
  std::vector<std::string> state_labels;
  int denoise_steps = 0;
  double elapsed_ms = 0.0;
};

struct SampleResult {
  GlyphImage image;  // model range, clamped
  SampleTrace trace;
};

// x_T ~ N(0, I), then ddpm_step for t = T..1; clamp at the very end.
SampleResult sample(const DenoiserParams& params, const ConditionLabel& cond,
                    const NoiseSchedule& schedule, std::uint64_t seed,
                    const TraceOptions& trace = {});

}  // namespace callipaint
