#include <doctest.h>

#include <cmath>

#include <callipaint/error.hpp>
#include <callipaint/repaint.hpp>
#include <callipaint/rng.hpp>

#include "fixtures.hpp"
#include "oracles.hpp"

using namespace callipaint;

namespace {

std::vector<std::string> labels(const TimePlan& plan) {
  std::vector<std::string> out;
  for (const auto& a : plan) out.push_back(a.label());
  return out;
}

}  // namespace

TEST_CASE("hand-enumerated plans") {
  CHECK(labels(build_time_plan(4, 4, 1)) == std::vector<std::string>{"D4", "D3", "D2", "D1"});
  CHECK(labels(build_time_plan(4, 2, 2)) ==
        std::vector<std::string>{"D4", "D3", "J2->4", "D4", "D3", "D2", "D1", "J0->2", "D2",
                                 "D1"});
}

TEST_CASE("plan laws against the block simulation") {
  for (int T = 1; T <= 40; ++T)
    for (int j = 1; j <= T; ++j) {
      if (T % j) continue;
      for (int r = 1; r <= 4; ++r) {
        CAPTURE(T);
        CAPTURE(j);
        CAPTURE(r);
        const auto plan = build_time_plan(T, j, r);
        CHECK(labels(plan) == oracles::simulate_plan(T, j, r));
        CHECK(count_denoise(plan) == std::size_t(T * r));
        CHECK(count_jumps(plan) == std::size_t((T / j) * (r - 1)));
        CHECK(plan.front() == PlanAction::denoise(T));
        CHECK(plan.back() == PlanAction::denoise(1));
        for (std::size_t i = 0; i < plan.size(); ++i) {
          if (plan[i].kind != PlanAction::Kind::kJump) continue;
          CHECK(plan[i].to - plan[i].from == j);
          REQUIRE(i + j < plan.size());
          for (int k = 0; k < j; ++k)
            CHECK(plan[i + 1 + k] == PlanAction::denoise(plan[i].to - k));
        }
      }
    }
}

TEST_CASE("plan validation") {
  CHECK_THROWS_AS(build_time_plan(10, 3, 1), Error);
  CHECK_THROWS_AS(build_time_plan(10, 20, 1), Error);
  CHECK_THROWS_AS(build_time_plan(10, 0, 1), Error);
  CHECK_THROWS_AS(build_time_plan(10, 5, 0), Error);
}

TEST_CASE("known branch") {
  const auto s = make_schedule(4, 0.1, 0.4);
  const std::vector<float> x0{0.25f, -1.0f, 1.0f}, zero(3, 0.0f);
  CHECK(known_sample(x0, 0, s, zero) == x0);
  const auto k3 = known_sample(x0, 3, s, zero);
  for (int i = 0; i < 3; ++i) CHECK(k3[i] == doctest::Approx(std::sqrt(0.504) * x0[i]));
  const auto eps = Rng(1).normal_vector(3);
  CHECK(known_sample(x0, 2, s, eps) == q_sample(x0, 2, eps, s));
}

TEST_CASE("combine selects by mask") {
  const Resolution r{4, 4};
  std::vector<float> known(16), unknown(16);
  for (int i = 0; i < 16; ++i) {
    known[i] = float(i);
    unknown[i] = float(-i - 1);
  }
  CHECK(combine(Mask::zeros(r), known, unknown) == known);
  CHECK(combine(Mask::ones(r), known, unknown) == unknown);
  Mask checker(r);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) checker.at(y, x) = (x + y) % 2;
  const auto out = combine(checker, known, unknown);
  for (int i = 0; i < 16; ++i) CHECK(out[i] == (checker.bits[i] ? unknown[i] : known[i]));
  CHECK_THROWS_AS(combine(Mask::zeros({2, 2}), known, unknown), Error);
}

TEST_CASE("jump forward closed forms") {
  const auto s = make_schedule(200, 1e-4, 0.02);
  const std::vector<float> x{0.5f, -0.25f};
  CHECK(jump_forward(x, 30, 30, s, 1) == x);
  std::vector<std::vector<float>> zeros(10, std::vector<float>(2, 0.0f));
  const auto y = jump_forward_with_noise(x, 30, 40, s, zeros);
  double prod = 1;
  for (int t = 31; t <= 40; ++t) prod *= std::sqrt(s.alpha(t));
  CHECK(y[0] == doctest::Approx(prod * 0.5).epsilon(1e-6));
  CHECK(y[1] == doctest::Approx(prod * -0.25).epsilon(1e-6));
  CHECK_THROWS_AS(jump_forward(x, 195, 205, s, 1), Error);
}

TEST_CASE("jump forward variance matches the compounded kernel") {
  // From a fixed x_t: mean sqrt(abar[t+j]/abar[t]) x_t, variance
  // 1 - abar[t+j]/abar[t].
  const auto s = make_schedule(200, 1e-4, 0.02);
  const std::size_t n = 100000;
  for (auto [from, to] : {std::pair{0, 10}, std::pair{90, 100}, std::pair{150, 200}}) {
    const std::vector<float> x(n, 0.8f);
    const auto y = jump_forward(x, from, to, s, std::uint64_t(from) + 7);
    double mean = 0, var = 0;
    for (float v : y) mean += v;
    mean /= double(n);
    for (float v : y) var += (v - mean) * (v - mean);
    var /= double(n - 1);
    const double ratio = s.alpha_bar(to) / s.alpha_bar(from);
    CHECK(std::abs(mean - std::sqrt(ratio) * 0.8) < 1e-2);
    CHECK(std::abs(var - (1 - ratio)) < 1e-2);
  }
}

TEST_CASE("jump from zero composes to q_sample statistics") {
  const auto s = make_schedule(200, 1e-4, 0.02);
  const std::size_t n = 100000;
  const std::vector<float> x(n, -0.6f);
  const auto y = jump_forward(x, 0, 2, s, 3);
  double mean = 0, var = 0;
  for (float v : y) mean += v;
  mean /= double(n);
  for (float v : y) var += (v - mean) * (v - mean);
  var /= double(n - 1);
  CHECK(std::abs(mean - std::sqrt(s.alpha_bar(2)) * -0.6) < 2e-2);
  CHECK(std::abs(var - (1 - s.alpha_bar(2))) < 2e-2);
}

TEST_CASE("all-ones mask with r=1, j=T is plain sampling") {
  const auto cfg = fixtures::probe_config();
  const auto p = fixtures::jittered(cfg, 8);
  const auto s = make_schedule(40, 1e-3, 0.1);
  const auto cond_img = fixtures::random_model_image(cfg.resolution, 5);
  for (std::uint64_t seed : {0ull, 1ull, 123456789ull}) {
    InpaintConfig ic;
    ic.jump_len = 40;
    ic.n_resample = 1;
    ic.seed = seed;
    const auto a = inpaint(p, cond_img, Mask::ones(cfg.resolution), {2, 1, 0}, s, ic);
    const auto b = sample(p, {2, 1, 0}, s, seed);
    CHECK(a.image == b.image);
  }
}

TEST_CASE("empty mask returns the condition image") {
  const auto cfg = fixtures::probe_config();
  const auto p = fixtures::jittered(cfg, 8);
  const auto s = make_schedule(20, 1e-3, 0.1);
  const auto cond_img = fixtures::random_model_image(cfg.resolution, 6);
  InpaintConfig ic;
  ic.jump_len = 5;
  ic.n_resample = 2;
  const auto out = inpaint(p, cond_img, Mask::zeros(cfg.resolution), {0, 0, 0}, s, ic);
  CHECK(out.image == cond_img);
}

TEST_CASE("unmasked pixels are preserved bit for bit") {
  const auto cfg = fixtures::probe_config();
  const auto p = fixtures::jittered(cfg, 9);
  const auto s = make_schedule(20, 1e-3, 0.1);
  Rng rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    const auto img = fixtures::random_model_image(cfg.resolution, rng.next_u64());
    const auto mask = fixtures::random_bits(cfg.resolution, rng.next_u64(), 0.4);
    const ConditionLabel cond{int(rng.uniform_int(0, 2)), int(rng.uniform_int(0, 1)),
                              int(rng.uniform_int(0, 1))};
    InpaintConfig ic;
    ic.jump_len = 5;
    ic.n_resample = int(rng.uniform_int(1, 3));
    ic.seed = rng.next_u64();
    const auto out = inpaint(p, img, mask, cond, s, ic);
    for (std::size_t i = 0; i < mask.bits.size(); ++i)
      if (!mask.bits[i]) CHECK(out.image.pixels[i] == img.pixels[i]);
    CHECK(out.trace.denoise_steps == 20 * ic.n_resample);
  }
}

TEST_CASE("different conditions agree outside the mask and differ inside") {
  const auto cfg = fixtures::probe_config();
  const auto p = fixtures::jittered(cfg, 10);
  const auto s = make_schedule(20, 1e-3, 0.1);
  const auto img = fixtures::random_model_image(cfg.resolution, 1);
  Mask m(cfg.resolution);
  for (int y = 2; y < 6; ++y)
    for (int x = 2; x < 6; ++x) m.at(y, x) = 1;
  InpaintConfig ic;
  ic.jump_len = 10;
  ic.n_resample = 2;
  ic.seed = 5;
  const auto a = inpaint(p, img, m, {0, 0, 0}, s, ic);
  const auto b = inpaint(p, img, m, {2, 1, 1}, s, ic);
  bool inside_differs = false;
  for (std::size_t i = 0; i < m.bits.size(); ++i) {
    if (m.bits[i])
      inside_differs |= a.image.pixels[i] != b.image.pixels[i];
    else
      CHECK(a.image.pixels[i] == b.image.pixels[i]);
  }
  CHECK(inside_differs);
}

TEST_CASE("inpaint trace and determinism") {
  const auto cfg = fixtures::probe_config();
  const auto p = fixtures::jittered(cfg, 11);
  const auto s = make_schedule(20, 1e-3, 0.1);
  const auto img = fixtures::random_model_image(cfg.resolution, 2);
  const auto m = fixtures::random_bits(cfg.resolution, 3);
  InpaintConfig ic;
  ic.jump_len = 5;
  ic.n_resample = 3;
  ic.seed = 42;
  const auto a = inpaint(p, img, m, {1, 1, 1}, s, ic);
  const auto b = inpaint(p, img, m, {1, 1, 1}, s, ic);
  CHECK(a.image == b.image);
  CHECK(a.plan == build_time_plan(20, 5, 3));
  CHECK(a.trace.actions == labels(a.plan));
  CHECK(a.trace.denoise_steps == 60);
  ic.seed = 43;
  CHECK(inpaint(p, img, m, {1, 1, 1}, s, ic).image != a.image);
}

TEST_CASE("inpaint input validation") {
  const auto cfg = fixtures::probe_config();
  const auto p = init_params(cfg, 1);
  const auto s = make_schedule(20, 1e-3, 0.1);
  const auto img = fixtures::random_model_image(cfg.resolution, 2);
  InpaintConfig ic;
  ic.jump_len = 5;
  ic.n_resample = 1;
  CHECK_THROWS_AS(inpaint(p, img, Mask::zeros({4, 4}), {0, 0, 0}, s, ic), Error);
  CHECK_THROWS_AS(inpaint(p, to_unit8(img), Mask::zeros(cfg.resolution), {0, 0, 0}, s, ic),
                  Error);
  ic.jump_len = 3;
  CHECK_THROWS_AS(inpaint(p, img, Mask::zeros(cfg.resolution), {0, 0, 0}, s, ic), Error);
}

TEST_CASE("boundary discrepancy") {
  const Resolution r{4, 4};
  GlyphImage img(r, PixelRange::kModel, 0.0f);
  Mask m(r);
  CHECK(boundary_discrepancy(img, m) == 0.0);
  CHECK(boundary_discrepancy(img, Mask::ones(r)) == 0.0);
  for (int y = 0; y < 4; ++y) {
    m.at(y, 0) = 1;
    img.at(y, 0) = 1.0f;
  }
  // four horizontal straddling pairs, each with squared difference 1
  CHECK(boundary_discrepancy(img, m) == 1.0);
}
