#include "callipaint/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "callipaint/error.hpp"
#include "callipaint/rng.hpp"

namespace callipaint {
namespace {

Checkpoint run(DenoiserParams params, CheckpointMeta meta,
               const std::vector<Example>& dataset, const TrainConfig& config,
               const TrainCallback& on_log) {
  require(!dataset.empty(), ErrorKind::kInvalidArgument, "training dataset is empty");
  require(config.batch >= 1 && config.steps >= 0 && config.log_every >= 1,
          ErrorKind::kInvalidArgument, "invalid training configuration");
  for (const auto& ex : dataset) meta.vocab.check(ex.label);
  const NoiseSchedule schedule = make_schedule(meta.schedule);
  Adam adam(params.param_count(), AdamConfig{config.lr});
  std::vector<std::size_t> order(dataset.size());
  std::size_t cursor = order.size();
  std::uint64_t epoch = 0;
  Rng shuffle_rng = Rng::substream(config.seed, "train.shuffle");
  std::vector<Example> batch;
  for (long step = 0; step < config.steps; ++step) {
    batch.clear();
    while (static_cast<int>(batch.size()) < config.batch) {
      if (cursor == order.size()) {
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), shuffle_rng.engine());
        cursor = 0;
        ++epoch;
      }
      batch.push_back(dataset[order[cursor++]]);
    }
    const auto lg = training_loss(params, batch, schedule,
                                  mix_seed(config.seed, "train.step",
                                           static_cast<std::uint64_t>(step)));
    require(std::isfinite(lg.loss), ErrorKind::kNonFinite,
            "non-finite loss at step " + std::to_string(meta.step + 1));
    adam.step(params.store().values, lg.grad);
    ++meta.step;
    if ((step + 1) % config.log_every == 0 || step == 0) {
      meta.loss_tail.push_back(lg.loss);
      if (static_cast<int>(meta.loss_tail.size()) > config.loss_tail)
        meta.loss_tail.erase(meta.loss_tail.begin());
      if (on_log) on_log({meta.step, lg.loss});
    }
  }
  require(params.store().all_finite(), ErrorKind::kNonFinite,
          "training produced non-finite parameters");
  return Checkpoint{std::move(params), std::move(meta)};
}

}  // namespace

Checkpoint train(DenoiserParams params, const std::vector<Example>& dataset,
                 const NoiseSchedule& schedule, const Vocabularies& vocab,
                 const TrainConfig& config, const TrainCallback& on_log) {
  const auto& cfg = params.config();
  require(static_cast<int>(vocab.character.size()) == cfg.vocab_character &&
              static_cast<int>(vocab.script.size()) == cfg.vocab_script &&
              static_cast<int>(vocab.style.size()) == cfg.vocab_style,
          ErrorKind::kVocabulary, "vocabulary sizes differ from denoiser config");
  CheckpointMeta meta;
  meta.schedule = schedule.id();
  meta.vocab = vocab;
  return run(std::move(params), std::move(meta), dataset, config, on_log);
}

Checkpoint train(const Checkpoint& start, const std::vector<Example>& dataset,
                 const TrainConfig& config, const TrainCallback& on_log) {
  return run(start.params, start.meta, dataset, config, on_log);
}

}  // namespace callipaint
