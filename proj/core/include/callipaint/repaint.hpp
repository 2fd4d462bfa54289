#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "callipaint/diffusion.hpp"

namespace callipaint {

struct InpaintConfig {
  int jump_len = 10;
  int n_resample = 5;
  std::uint64_t seed = 0;
  TraceOptions trace;

  // Requires 1 <= j <= T, T divisible by j, r >= 1.
  void validate(int steps) const;
};

struct PlanAction {
  enum class Kind { kDenoise, kJump };
  Kind kind = Kind::kDenoise;
  int t = 0;     // Denoise: step being undone (x_t -> x_{t-1})
  int from = 0;  // Jump: x_from -> x_to
  int to = 0;

  static PlanAction denoise(int t) { return {Kind::kDenoise, t, 0, 0}; }
  static PlanAction jump(int from, int to) { return {Kind::kJump, 0, from, to}; }
  std::string label() const;

  friend bool operator==(const PlanAction&, const PlanAction&) = default;
};

using TimePlan = std::vector<PlanAction>;

// Descends T..1 in blocks of j; every block is executed r times with a
// jump of j back to the block top between repetitions.
TimePlan build_time_plan(int steps, int jump_len, int n_resample);

std::size_t count_denoise(const TimePlan& plan);
std::size_t count_jumps(const TimePlan& plan);

// q(x_t | x0) for t >= 1; the condition image itself at t = 0.
std::vector<float> known_sample(std::span<const float> x0_cond, int t,
                                const NoiseSchedule& schedule,
                                std::span<const float> eps);

// (1 - m) * known + m * unknown, by selection.
std::vector<float> combine(const Mask& mask, std::span<const float> known,
                           std::span<const float> unknown);

// x_{s+1} = sqrt(alpha_{s+1}) x_s + sqrt(beta_{s+1}) eps_s for s = from..to-1,
// with eps_s drawn in order from `rng_seed`.
std::vector<float> jump_forward(std::span<const float> x, int from, int to,
                                const NoiseSchedule& schedule,
                                std::uint64_t rng_seed);

// Same kernel with caller-supplied noise, one vector per substep.
std::vector<float> jump_forward_with_noise(
    std::span<const float> x, int from, int to, const NoiseSchedule& schedule,
    const std::vector<std::vector<float>>& noise);

struct InpaintResult {
  GlyphImage image;  // model range, clamped; equals image_cond where m = 0
  SampleTrace trace;
  TimePlan plan;
};

InpaintResult inpaint(const DenoiserParams& params, const GlyphImage& image_cond,
                      const Mask& mask, const ConditionLabel& cond,
                      const NoiseSchedule& schedule, const InpaintConfig& config);

// Mean squared difference over 4-neighbour pixel pairs that straddle the
// mask boundary. Zero when the mask is empty or full.
double boundary_discrepancy(const GlyphImage& image, const Mask& mask);

}  // namespace callipaint
