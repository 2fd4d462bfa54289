#include <benchmark/benchmark.h>

#include <callipaint/denoiser.hpp>
#include <callipaint/diffusion.hpp>
#include <callipaint/repaint.hpp>
#include <callipaint/rng.hpp>

using namespace callipaint;

namespace {

DenoiserConfig config_for(int side, int base) {
  DenoiserConfig c;
  c.resolution = {side, side};
  c.base_channels = base;
  c.vocab_character = 16;
  c.vocab_script = 3;
  c.vocab_style = 8;
  return c;
}

DenoiserParams params_for(int side, int base) {
  auto p = init_params(config_for(side, base), 1);
  Rng rng(2);
  for (auto& v : p.store().values) v += float(0.02 * rng.normal());
  return p;
}

std::vector<Example> batch_for(const DenoiserConfig& c, int n) {
  std::vector<Example> out;
  Rng rng(3);
  for (int i = 0; i < n; ++i) {
    Example ex;
    ex.image = GlyphImage(c.resolution, PixelRange::kModel, 1.0f);
    for (auto& v : ex.image.pixels) v = rng.uniform() < 0.2 ? -1.0f : 1.0f;
    ex.label = {i % c.vocab_character, i % c.vocab_script, i % c.vocab_style};
    out.push_back(std::move(ex));
  }
  return out;
}

void BM_PredictNoise(benchmark::State& state) {
  const int side = int(state.range(0)), base = int(state.range(1));
  const auto p = params_for(side, base);
  Rng rng(4);
  const auto x = rng.normal_vector(std::size_t(side) * side);
  GlyphImage img({side, side}, PixelRange::kModel);
  img.pixels = x;
  for (auto _ : state) benchmark::DoNotOptimize(predict_noise(p, img, 100, {1, 1, 1}));
  state.counters["params"] = double(p.param_count());
}
BENCHMARK(BM_PredictNoise)->Args({16, 16})->Args({32, 16})->Args({32, 32})
    ->Unit(benchmark::kMillisecond);

void BM_TrainingLoss(benchmark::State& state) {
  const int batch = int(state.range(0));
  const auto p = params_for(32, 32);
  const auto data = batch_for(p.config(), batch);
  const auto s = make_schedule(200, 1e-4, 0.02);
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(training_loss(p, data, s, ++seed));
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_TrainingLoss)->Arg(1)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_Inpaint(benchmark::State& state) {
  const int steps = int(state.range(0)), r = int(state.range(1));
  const auto p = params_for(16, 16);
  const auto s = make_schedule(steps, 1e-4, 0.02);
  const auto image = batch_for(p.config(), 1)[0].image;
  Mask mask(p.config().resolution);
  for (int y = 4; y < 12; ++y)
    for (int x = 4; x < 12; ++x) mask.at(y, x) = 1;
  InpaintConfig ic;
  ic.jump_len = 10;
  ic.n_resample = r;
  for (auto _ : state) {
    ic.seed++;
    benchmark::DoNotOptimize(inpaint(p, image, mask, {0, 0, 0}, s, ic));
  }
  state.counters["denoise_steps"] = double(steps * r);
}
BENCHMARK(BM_Inpaint)->Args({50, 1})->Args({50, 5})->Unit(benchmark::kMillisecond);

void BM_TimePlan(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(build_time_plan(1000, 10, 10));
}
BENCHMARK(BM_TimePlan);

}  // namespace

BENCHMARK_MAIN();
