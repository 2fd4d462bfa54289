#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <callipaint/corpus.hpp>
#include <callipaint/denoiser.hpp>
#include <callipaint/diffusion.hpp>
#include <callipaint/image.hpp>
#include <callipaint/rng.hpp>

namespace fixtures {

using namespace callipaint;

// 8x8, two levels, a few hundred parameters.
inline DenoiserConfig probe_config() {
  DenoiserConfig c;
  c.resolution = {8, 8};
  c.base_channels = 2;
  c.channel_mults = {1, 2};
  c.time_embed_dim = 4;
  c.groups = 2;
  c.vocab_character = 3;
  c.vocab_script = 2;
  c.vocab_style = 2;
  return c;
}

inline Vocabularies probe_vocab() {
  return {{"a", "b", "c"}, {"regular", "cursive"}, {"s0", "s1"}};
}

// Fresh params with every value jittered, so the zero output layer and the
// zero biases stop hiding gradients.
inline DenoiserParams jittered(const DenoiserConfig& cfg, std::uint64_t seed,
                               double scale = 0.3) {
  auto p = init_params(cfg, seed);
  Rng rng(mix_seed(seed, "test.jitter"));
  for (auto& v : p.store().values) v += float(scale * (2.0 * rng.uniform() - 1.0));
  return p;
}

inline GlyphImage random_model_image(Resolution res, std::uint64_t seed) {
  Rng rng(seed);
  GlyphImage img(res, PixelRange::kModel);
  for (auto& v : img.pixels) v = float(rng.uniform_int(0, 255)) / 127.5f - 1.0f;
  return img;
}

inline std::vector<Example> random_dataset(const DenoiserConfig& cfg, int n,
                                           std::uint64_t seed) {
  std::vector<Example> out;
  Rng rng(seed);
  for (int i = 0; i < n; ++i) {
    Example ex;
    ex.image = random_model_image(cfg.resolution, rng.next_u64());
    ex.label = {int(rng.uniform_int(0, cfg.vocab_character - 1)),
                int(rng.uniform_int(0, cfg.vocab_script - 1)),
                int(rng.uniform_int(0, cfg.vocab_style - 1))};
    ex.entry = std::size_t(i);
    out.push_back(std::move(ex));
  }
  return out;
}

inline Mask random_bits(Resolution res, std::uint64_t seed, double p = 0.5) {
  Rng rng(seed);
  Mask m(res);
  for (auto& b : m.bits) b = rng.uniform() < p;
  return m;
}

inline std::filesystem::path font_dir() { return CALLIPAINT_FONT_DIR; }
inline std::filesystem::path font(const std::string& file) { return font_dir() / file; }

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("callipaint_" + tag + "_" + std::to_string(std::random_device{}()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

}  // namespace fixtures
