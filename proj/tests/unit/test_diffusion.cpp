#include <doctest.h>

#include <cmath>
#include <numeric>

#include <callipaint/diffusion.hpp>
#include <callipaint/error.hpp>
#include <callipaint/rng.hpp>

#include "fixtures.hpp"

using namespace callipaint;

namespace {

struct Moments {
  double mean = 0, var = 0;
};

Moments moments(const std::vector<float>& v) {
  Moments m;
  for (float x : v) m.mean += x;
  m.mean /= double(v.size());
  for (float x : v) m.var += (x - m.mean) * (x - m.mean);
  m.var /= double(v.size() - 1);
  return m;
}

}  // namespace

TEST_CASE("T=4 schedule table") {
  const auto s = make_schedule(4, 0.1, 0.4);
  const double beta[] = {0.1, 0.2, 0.3, 0.4};
  const double abar[] = {0.9, 0.72, 0.504, 0.3024};
  CHECK(s.alpha_bar(0) == 1.0);
  for (int t = 1; t <= 4; ++t) {
    CHECK(std::abs(s.beta(t) - beta[t - 1]) < 1e-12);
    CHECK(std::abs(s.alpha(t) - (1 - beta[t - 1])) < 1e-12);
    CHECK(std::abs(s.alpha_bar(t) - abar[t - 1]) < 1e-12);
  }
  CHECK(s.posterior_variance(1) == 0.0);
  CHECK(std::abs(s.posterior_variance(2) - 0.2 * 0.1 / 0.28) < 1e-12);
}

TEST_CASE("single step schedule") {
  const auto s = make_schedule(1, 0.1, 0.1);
  CHECK(std::abs(s.alpha_bar(1) - 0.9) < 1e-12);
  CHECK(s.posterior_variance(1) == 0.0);
}

TEST_CASE("default schedule endpoint") {
  const auto s = make_schedule(200, 1e-4, 0.02);
  CHECK(std::abs(s.alpha_bar(200) - 0.13218275425061793) < 1e-6);
  CHECK(s.beta(1) == 1e-4);
  CHECK(std::abs(s.beta(200) - 0.02) < 1e-15);
}

TEST_CASE("alpha_bar is strictly decreasing and posterior variance is bounded") {
  for (int T : {1, 2, 4, 10, 50, 200, 1000})
    for (auto [b0, b1] : {std::pair{1e-4, 0.02}, std::pair{0.1, 0.4}, std::pair{0.05, 0.05},
                          std::pair{1e-5, 0.05}}) {
      const auto s = make_schedule(T, b0, b1);
      for (int t = 1; t <= T; ++t) {
        CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));
        CHECK(s.alpha_bar(t) > 0.0);
        CHECK(s.posterior_variance(t) >= 0.0);
        CHECK(s.posterior_variance(t) <= s.beta(t) + 1e-15);
      }
    }
}

TEST_CASE("schedule validation") {
  CHECK_THROWS_AS(make_schedule(0, 1e-4, 0.02), Error);
  CHECK_THROWS_AS(make_schedule(10, 0.0, 0.02), Error);
  CHECK_THROWS_AS(make_schedule(10, 0.3, 0.2), Error);
  CHECK_THROWS_AS(make_schedule(10, 0.1, 1.0), Error);
  const auto s = make_schedule(4, 0.1, 0.4);
  CHECK_THROWS_AS(s.check_step(0), Error);
  CHECK_THROWS_AS(s.check_step(5), Error);
}

TEST_CASE("q_sample branches") {
  const auto s = make_schedule(4, 0.1, 0.4);
  const std::vector<float> x0{1, 1, -0.5}, zero(3, 0.0f), ones(3, 1.0f);
  const auto a = q_sample(x0, 3, zero, s);
  for (int i = 0; i < 3; ++i) CHECK(a[i] == doctest::Approx(std::sqrt(0.504) * x0[i]));
  const auto b = q_sample(zero, 3, x0, s);
  for (int i = 0; i < 3; ++i) CHECK(b[i] == doctest::Approx(std::sqrt(1 - 0.504) * x0[i]));
  const auto c = q_sample(ones, 2, ones, s);
  for (float v : c) CHECK(std::abs(v - 1.3776783996367752) < 1e-6);
  CHECK_THROWS_AS(q_sample(x0, 2, std::vector<float>(2), s), Error);
}

TEST_CASE("forward process statistics") {
  const auto s = make_schedule(200, 1e-4, 0.02);
  const std::size_t n = 100000;
  for (int t : {1, 50, 200}) {
    const std::vector<float> x0(n, 0.7f);
    const auto eps = Rng(t).normal_vector(n);
    const auto m = moments(q_sample(x0, t, eps, s));
    CHECK(std::abs(m.mean - std::sqrt(s.alpha_bar(t)) * 0.7) < 1e-2);
    CHECK(std::abs(m.var - (1 - s.alpha_bar(t))) < 1e-2);
  }
}

TEST_CASE("ddpm_step closed forms") {
  const auto s = make_schedule(4, 0.1, 0.4);
  const std::vector<float> x(5, 1.0f), half(5, 0.5f), ones(5, 1.0f), zero(5, 0.0f);
  SUBCASE("scalar oracle at t=2") {
    const auto out = ddpm_step_from_eps(x, half, 2, s, std::span<const float>(ones));
    for (float v : out) CHECK(std::abs(v - 1.17400666698019) < 1e-6);
  }
  SUBCASE("zero prediction and zero noise divides by sqrt(alpha)") {
    const auto out = ddpm_step_from_eps(x, zero, 3, s, std::span<const float>(zero));
    for (float v : out) CHECK(v == doctest::Approx(1.0 / std::sqrt(0.7)));
  }
  SUBCASE("t=1 takes no noise") {
    const auto out = ddpm_step_from_eps(x, zero, 1, s, std::nullopt);
    for (float v : out) CHECK(v == doctest::Approx(1.0 / std::sqrt(0.9)));
    CHECK_THROWS_AS(ddpm_step_from_eps(x, zero, 1, s, std::span<const float>(ones)), Error);
    CHECK_THROWS_AS(ddpm_step_from_eps(x, zero, 2, s, std::nullopt), Error);
  }
}

TEST_CASE("ddpm_step through a fresh network equals the zero-prediction step") {
  const auto cfg = fixtures::probe_config();
  const auto p = init_params(cfg, 1);
  const auto s = make_schedule(4, 0.1, 0.4);
  const auto x = fixtures::random_model_image(cfg.resolution, 2).pixels;
  const auto z = Rng(3).normal_vector(x.size());
  const std::vector<float> zero(x.size(), 0.0f);
  CHECK(ddpm_step(p, x, 2, {0, 0, 0}, s, std::span<const float>(z)) ==
        ddpm_step_from_eps(x, zero, 2, s, std::span<const float>(z)));
}

TEST_CASE("sampling is deterministic and traced") {
  const auto cfg = fixtures::probe_config();
  const auto p = fixtures::jittered(cfg, 4);
  const auto s = make_schedule(20, 1e-3, 0.2);
  const auto a = sample(p, {1, 0, 1}, s, 77, {1});
  const auto b = sample(p, {1, 0, 1}, s, 77);
  CHECK(a.image == b.image);
  CHECK(a.image.range == PixelRange::kModel);
  CHECK(a.trace.denoise_steps == 20);
  CHECK(a.trace.actions.size() == 20);
  CHECK(a.trace.actions.front() == "D20");
  CHECK(a.trace.actions.back() == "D1");
  REQUIRE(a.trace.states.size() == 21);
  GlyphImage last(cfg.resolution, PixelRange::kModel, a.trace.states.back());
  CHECK(clamp_model(last) == a.image);
  CHECK(sample(p, {1, 0, 1}, s, 78).image != a.image);
  for (float v : a.image.pixels) {
    CHECK(v >= -1.0f);
    CHECK(v <= 1.0f);
  }
}
