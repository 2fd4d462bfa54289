#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "callipaint/corpus.hpp"
#include "callipaint/image.hpp"
#include "callipaint/params.hpp"

namespace callipaint {

struct DenoiserConfig {
  Resolution resolution{32, 32};
  int base_channels = 32;
  std::vector<int> channel_mults{1, 2, 4};
  int time_embed_dim = 128;
  int vocab_character = 1;
  int vocab_script = 1;
  int vocab_style = 1;
  int groups = 8;

  int levels() const { return static_cast<int>(channel_mults.size()); }
  // Throws kInvalidArgument on shape divisibility or size violations.
  void validate() const;

  friend bool operator==(const DenoiserConfig&, const DenoiserConfig&) = default;
};

struct UNetLayout;  // offsets of every layer inside the flat parameter buffer

// Parameters of the conditional epsilon-prediction U-Net.
class DenoiserParams {
 public:
  DenoiserParams() = default;
  DenoiserParams(DenoiserConfig config, ParamStore store);

  const DenoiserConfig& config() const { return config_; }
  const ParamStore& store() const { return store_; }
  ParamStore& store() { return store_; }
  std::size_t param_count() const { return store_.count(); }
  const UNetLayout& layout() const { return *layout_; }

  friend bool operator==(const DenoiserParams& a, const DenoiserParams& b) {
    return a.config_ == b.config_ && a.store_ == b.store_;
  }

 private:
  DenoiserConfig config_;
  ParamStore store_;
  std::shared_ptr<const UNetLayout> layout_;
};

// Tensor names/shapes/initialisers for a config, in parameter order.
std::vector<TensorInfo> denoiser_tensor_layout(const DenoiserConfig& config);

// Fan-in uniform weights, zero biases, unit norm scales, zero output conv.
DenoiserParams init_params(const DenoiserConfig& config, std::uint64_t seed);

// e_char[c] + e_script[s] + e_style[y].
std::vector<float> embed_condition(const DenoiserParams& params,
                                   const ConditionLabel& cond);

// Sinusoidal timestep embedding of even dimension `dim`.
std::vector<double> timestep_embedding(int t, int dim);

// Predicted noise for one noisy image (model range), H*W values.
std::vector<float> predict_noise(const DenoiserParams& params,
                                 const GlyphImage& x_t, int t,
                                 const ConditionLabel& cond);

// One training example: noisy input, its timestep, condition and the noise
// the network must predict.
template <typename Real>
struct NoisedExample {
  std::vector<Real> x_t;
  int t = 1;
  ConditionLabel cond;
  std::vector<Real> target;
};

template <typename Real>
struct LossAndGrad {
  Real loss = 0;
  std::vector<Real> grad;  // same layout as the parameter buffer
};

// Mean over batch and pixels of (target - eps_hat)^2 and its gradient with
// respect to every parameter. `theta` is the flat parameter buffer in the
// precision the computation should run in.
template <typename Real>
LossAndGrad<Real> eps_mse_loss(const DenoiserParams& params,
                               std::span<const Real> theta,
                               const std::vector<NoisedExample<Real>>& batch);

template <typename Real>
std::vector<Real> predict_noise_raw(const DenoiserParams& params,
                                    std::span<const Real> theta,
                                    std::span<const Real> x_t, int t,
                                    const ConditionLabel& cond);

extern template LossAndGrad<float> eps_mse_loss<float>(
    const DenoiserParams&, std::span<const float>,
    const std::vector<NoisedExample<float>>&);
extern template LossAndGrad<double> eps_mse_loss<double>(
    const DenoiserParams&, std::span<const double>,
    const std::vector<NoisedExample<double>>&);
extern template std::vector<float> predict_noise_raw<float>(
    const DenoiserParams&, std::span<const float>, std::span<const float>, int,
    const ConditionLabel&);
extern template std::vector<double> predict_noise_raw<double>(
    const DenoiserParams&, std::span<const double>, std::span<const double>,
    int, const ConditionLabel&);

}  // namespace callipaint
