#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "callipaint/checkpoint.hpp"
#include "callipaint/corpus.hpp"
#include "callipaint/denoiser.hpp"
#include "callipaint/diffusion.hpp"

namespace callipaint {

struct TrainConfig {
  double lr = 1e-3;
  int batch = 8;
  long steps = 1000;
  std::uint64_t seed = 0;
  int log_every = 10;   // loss recorded every k steps
  int loss_tail = 200;  // recorded losses kept in the checkpoint
};

struct TrainProgress {
  long step = 0;
  double loss = 0.0;
};

using TrainCallback = std::function<void(const TrainProgress&)>;

// Epsilon-MSE training with Adam. Batches are drawn from a seeded
// permutation per epoch; a non-finite loss aborts with kNonFinite.
Checkpoint train(DenoiserParams params, const std::vector<Example>& dataset,
                 const NoiseSchedule& schedule, const Vocabularies& vocab,
                 const TrainConfig& config, const TrainCallback& on_log = {});

// Continues from an existing checkpoint; the step counter carries over.
Checkpoint train(const Checkpoint& start, const std::vector<Example>& dataset,
                 const TrainConfig& config, const TrainCallback& on_log = {});

}  // namespace callipaint
