// Acceptance suite: one PASS/FAIL line per criterion, exit 1 if any fails.
//
//   acceptance --work-dir DIR [--only NAME]...
//
// The slow criteria render the desk corpus and train a classifier and a
// generator under DIR. Generator checkpoints are written every chunk and
// reused on the next run, so an interrupted run resumes where it stopped.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <callipaint/base64.hpp>
#include <callipaint/checkpoint.hpp>
#include <callipaint/classifier.hpp>
#include <callipaint/corpus.hpp>
#include <callipaint/diffusion.hpp>
#include <callipaint/error.hpp>
#include <callipaint/eval.hpp>
#include <callipaint/png_io.hpp>
#include <callipaint/repaint.hpp>
#include <callipaint/service.hpp>
#include <callipaint/survey.hpp>
#include <callipaint/train.hpp>

#include "fixtures.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace callipaint;
using nlohmann::json;

namespace {

// Tolerances and sizes.
constexpr double kScheduleTol = 1e-12;
constexpr int kForwardDraws = 100000;
constexpr double kForwardTol = 1e-2;
constexpr int kGradCoords = 60;
constexpr double kGradStep = 1e-3;
constexpr double kGradTol = 1e-3;
constexpr int kOracleSeeds = 3;
constexpr int kPreservationTuples = 100;
constexpr int kPlanMaxT = 40;
constexpr int kPlanMaxR = 4;
constexpr double kClassifierFloor = 0.9;
constexpr long kDeskSteps = 20000;
constexpr long kDeskChunk = 5000;
constexpr int kCompareN = 100;
constexpr double kCompareCoverage = 0.375;
constexpr double kDeltaFloor = -0.05;
constexpr int kPValueMaxN = 12;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void note(const std::string& s) { std::cerr << "  .. " << s << std::endl; }

// --- fast criteria -------------------------------------------------------

Outcome schedule_closed_forms() {
  const auto s = make_schedule(4, 0.1, 0.4);
  const double expect[] = {0.9, 0.72, 0.504, 0.3024};
  double err = 0;
  for (int t = 1; t <= 4; ++t) err = std::max(err, std::abs(s.alpha_bar(t) - expect[t - 1]));
  const ScheduleId configs[] = {{4, 0.1, 0.4},      {200, 1e-4, 0.02}, {1000, 1e-4, 0.02},
                                {50, 1e-3, 0.2},    {10, 0.01, 0.5},   {1000, 1e-5, 0.05},
                                {1, 0.3, 0.3},      {300, 0.02, 0.02}};
  int monotone = 0;
  for (const auto& id : configs) {
    const auto sc = make_schedule(id);
    bool ok = sc.alpha_bar(0) == 1.0;
    for (int t = 1; t <= sc.steps(); ++t) ok = ok && sc.alpha_bar(t) < sc.alpha_bar(t - 1);
    monotone += ok;
  }
  const int n = int(std::size(configs));
  return {err <= kScheduleTol && monotone == n,
          "max |abar - expected| = " + fmt("%.3g", err) + ", strictly decreasing in " +
              std::to_string(monotone) + "/" + std::to_string(n) + " configs"};
}

Outcome forward_statistics() {
  const auto s = make_schedule(200, 1e-4, 0.02);
  const std::vector<float> x0{-1.0f, -0.5f, 0.0f, 0.5f, 1.0f};
  double worst = 0;
  for (int t : {1, 50, 200}) {
    std::vector<double> sum(x0.size(), 0), sq(x0.size(), 0);
    Rng rng = Rng::substream(17, "acceptance.forward", t);
    for (int d = 0; d < kForwardDraws; ++d) {
      const auto eps = rng.normal_vector(x0.size());
      const auto xt = q_sample(x0, t, eps, s);
      for (std::size_t i = 0; i < x0.size(); ++i) {
        sum[i] += xt[i];
        sq[i] += double(xt[i]) * xt[i];
      }
    }
    for (std::size_t i = 0; i < x0.size(); ++i) {
      const double mean = sum[i] / kForwardDraws;
      const double var = sq[i] / kForwardDraws - mean * mean;
      worst = std::max({worst, std::abs(mean - std::sqrt(s.alpha_bar(t)) * x0[i]),
                        std::abs(var - (1.0 - s.alpha_bar(t)))});
    }
  }
  return {worst <= kForwardTol, "max deviation " + fmt("%.4f", worst) + " over 10^5 draws"};
}

Outcome gradient_check() {
  const auto cfg = fixtures::probe_config();
  const auto params = fixtures::jittered(cfg, 21);
  const auto batch = fixtures::random_dataset(cfg, 3, 22);
  const auto noised = oracles::noised_batch(batch, make_schedule(200, 1e-4, 0.02), 23);
  const auto r = oracles::gradient_check(params, noised, kGradCoords, kGradStep, kGradTol, 24);
  return {r.failed == 0 && r.probed >= 50,
          std::to_string(r.probed - r.failed) + "/" + std::to_string(r.probed) +
              " coordinates, max relative error " + fmt("%.2e", r.max_rel)};
}

Outcome oracle_equivalence() {
  DenoiserConfig cfg;
  cfg.vocab_character = 3;
  cfg.vocab_script = 2;
  cfg.vocab_style = 2;
  const auto params = fixtures::jittered(cfg, 31, 0.05);
  const auto s = make_schedule(200, 1e-4, 0.02);
  const auto blank = GlyphImage(cfg.resolution, PixelRange::kModel, 1.0f);
  int same = 0;
  for (int k = 0; k < kOracleSeeds; ++k) {
    const std::uint64_t seed = 1000 + k;
    const ConditionLabel cond{k % 3, k % 2, (k + 1) % 2};
    InpaintConfig ic;
    ic.jump_len = s.steps();
    ic.n_resample = 1;
    ic.seed = seed;
    const auto a = inpaint(params, blank, Mask::ones(cfg.resolution), cond, s, ic);
    const auto b = sample(params, cond, s, seed);
    same += a.image.pixels == b.image.pixels && a.trace.t_visited == b.trace.t_visited;
  }
  return {same == kOracleSeeds, std::to_string(same) + "/" + std::to_string(kOracleSeeds) +
                                    " seeds bit-identical at T=200, 32x32"};
}

Outcome unmasked_preservation() {
  const auto cfg = fixtures::probe_config();
  const auto params = fixtures::jittered(cfg, 41);
  const auto s = make_schedule(200, 1e-4, 0.02);
  const int divisors[] = {1, 2, 4, 5, 8, 10, 20, 25, 40, 50, 100, 200};
  Rng rng = Rng::substream(42, "acceptance.preservation");
  int ok = 0;
  long checked = 0;
  for (int i = 0; i < kPreservationTuples; ++i) {
    const auto image = fixtures::random_model_image(cfg.resolution, rng.next_u64());
    const auto mask = fixtures::random_bits(cfg.resolution, rng.next_u64(), rng.uniform());
    const ConditionLabel cond{int(rng.uniform_int(0, 2)), int(rng.uniform_int(0, 1)),
                              int(rng.uniform_int(0, 1))};
    InpaintConfig ic;
    ic.jump_len = divisors[rng.uniform_int(0, std::size(divisors) - 1)];
    ic.n_resample = int(rng.uniform_int(1, 3));
    ic.seed = rng.next_u64();
    const auto r = inpaint(params, image, mask, cond, s, ic);
    bool kept = true;
    for (std::size_t p = 0; p < mask.bits.size(); ++p)
      if (!mask.bits[p]) {
        ++checked;
        kept = kept && r.image.pixels[p] == image.pixels[p];
      }
    ok += kept;
  }
  return {ok == kPreservationTuples,
          std::to_string(ok) + "/" + std::to_string(kPreservationTuples) + " tuples, " +
              std::to_string(checked) + " unmasked pixels compared"};
}

Outcome time_plan_laws() {
  int cases = 0, bad = 0;
  for (int T = 1; T <= kPlanMaxT; ++T)
    for (int j = 1; j <= T; ++j) {
      if (T % j) continue;
      for (int r = 1; r <= kPlanMaxR; ++r) {
        ++cases;
        const auto plan = build_time_plan(T, j, r);
        std::vector<std::string> labels;
        for (const auto& a : plan) labels.push_back(a.label());
        const bool ok = count_denoise(plan) == std::size_t(T * r) &&
                        count_jumps(plan) == std::size_t((T / j) * (r - 1)) &&
                        labels == oracles::simulate_plan(T, j, r);
        bad += !ok;
      }
    }
  return {bad == 0, std::to_string(cases - bad) + "/" + std::to_string(cases) +
                        " (T, j, r) plans match the block simulation"};
}

Outcome p_value_oracle() {
  int cases = 0, bad = 0;
  for (int k : {2, 4})
    for (int n = 1; n <= kPValueMaxN; ++n) {
      const auto counts = oracles::enumerate_correct_counts(n, k);
      SurveyKey key;
      key.k = k;
      for (int i = 0; i < n; ++i) key.questions["q" + std::to_string(100 + i)] = {1, i % k};
      for (int c = 0; c <= n; ++c) {
        std::vector<SurveyResponse> resp;
        int i = 0;
        for (const auto& [id, e] : key.questions) {
          resp.push_back({id, i < c ? e.correct : (e.correct + 1) % k, "r", ""});
          ++i;
        }
        const auto sc = score_survey(key, resp);
        ++cases;
        bad += !(sc.type1.correct == c && sc.type1.p_value == oracles::enumerated_p_value(counts, c));
      }
    }
  return {bad == 0, std::to_string(cases - bad) + "/" + std::to_string(cases) +
                        " (n, k, correct) cases equal exhaustive enumeration"};
}

Outcome checkpoint_and_api() {
  std::vector<std::string> failures;
  Checkpoint c;
  DenoiserConfig dc;
  dc.vocab_character = 3;
  dc.vocab_script = 2;
  dc.vocab_style = 2;
  c.params = fixtures::jittered(dc, 51, 0.05);
  c.meta.step = 7;
  c.meta.loss_tail = {1.0, 0.5};
  c.meta.vocab = fixtures::probe_vocab();
  const auto bytes = serialize_checkpoint(c);
  const auto back = parse_checkpoint(bytes);
  if (!(back == c) || serialize_checkpoint(back) != bytes) failures.push_back("round trip");

  Checkpoint probe;
  probe.params = fixtures::jittered(fixtures::probe_config(), 52);
  probe.meta.vocab = fixtures::probe_vocab();
  const InferenceService svc(probe);
  const Resolution res{8, 8};
  const auto img = to_bytes(to_unit8(fixtures::random_model_image(res, 53)));
  std::vector<std::uint8_t> empty(64, 0), square(64, 0);
  for (int y = 2; y < 6; ++y)
    for (int x = 2; x < 6; ++x) square[y * 8 + x] = 255;
  auto request = [&](const std::vector<std::uint8_t>& mask, int r) {
    return json{{"image", base64_encode(encode_png({res, img}))},
                {"mask", base64_encode(encode_png({res, mask}))},
                {"character", "b"}, {"script", "cursive"}, {"style", "s1"},
                {"jump_len", 10}, {"n_resample", r}, {"seed", 99}}.dump();
  };
  const auto id = svc.handle_inpaint(request(empty, 2));
  if (id.status != 200 ||
      decode_png(base64_decode(json::parse(id.body)["image"].get<std::string>())).bytes != img)
    failures.push_back("identity mask");
  const auto a = svc.handle_inpaint(request(square, 3));
  const auto b = svc.handle_inpaint(request(square, 3));
  if (a.status != 200 || json::parse(a.body)["image"] != json::parse(b.body)["image"])
    failures.push_back("seed reproducibility");
  if (a.status == 200 && json::parse(a.body)["steps"] != 200 * 3) failures.push_back("T*r steps");
  const json sreq{{"character", "a"}, {"script", "regular"}, {"style", "s0"}, {"seed", 5}};
  const auto s1 = json::parse(svc.handle_sample(sreq.dump()).body);
  const auto s2 = json::parse(svc.handle_sample(sreq.dump()).body);
  if (s1["image"] != s2["image"] || s1["steps"] != 200)
    failures.push_back("sample contract");
  std::string detail = "round trip, identity mask, seeded reproducibility, steps = T*r";
  if (!failures.empty()) {
    detail = "failed:";
    for (const auto& f : failures) detail += " " + f + ";";
  }
  return {failures.empty(), detail};
}

// --- slow criteria on the desk corpus ------------------------------------

struct Desk {
  fs::path dir;
  Manifest manifest;
  std::vector<Example> train, val;
  std::optional<Classifier> classifier;
  std::optional<Checkpoint> generator;

  explicit Desk(fs::path d) : dir(std::move(d)) {}

  void corpus() {
    if (!manifest.entries.empty()) return;
    const auto spec = load_corpus_spec(fs::path(CALLIPAINT_SOURCE_DIR) / "assets/corpus/desk.json");
    manifest = build_manifest(spec, dir / "corpus");
    train = load_dataset(manifest, Split::kTrain);
    val = load_dataset(manifest, Split::kVal);
    note("desk corpus: " + std::to_string(manifest.vocab.character.size()) + " characters, " +
         std::to_string(manifest.vocab.style.size()) + " fonts, " + std::to_string(train.size()) +
         " train / " + std::to_string(val.size()) + " val");
  }

  const Classifier& clf() {
    if (classifier) return *classifier;
    corpus();
    const auto t0 = std::chrono::steady_clock::now();
    ClassifierTrainConfig tc;
    tc.seed = 1;
    classifier = train_classifier(train, val, manifest.vocab, tc);
    save_classifier(*classifier, dir / "classifier.bin");
    note("classifier trained in " + fmt("%.0f", seconds_since(t0)) + " s");
    return *classifier;
  }

  fs::path chunk_path(long step) const {
    return dir / ("generator_" + std::to_string(step) + ".ckpt");
  }

  const Checkpoint& gen() {
    if (generator) return *generator;
    corpus();
    long have = 0;
    for (long s = kDeskChunk; s <= kDeskSteps; s += kDeskChunk)
      if (fs::exists(chunk_path(s))) have = s;
    Checkpoint ck;
    if (have > 0) {
      ck = load_checkpoint(chunk_path(have));
      note("resuming generator from step " + std::to_string(have));
    } else {
      DenoiserConfig cfg;
      cfg.resolution = manifest.resolution;
      cfg.vocab_character = int(manifest.vocab.character.size());
      cfg.vocab_script = int(manifest.vocab.script.size());
      cfg.vocab_style = int(manifest.vocab.style.size());
      TrainConfig tc;
      tc.steps = 0;
      ck = callipaint::train(init_params(cfg, 1), train, make_schedule(ScheduleId{}),
                             manifest.vocab, tc);
    }
    while (ck.meta.step < kDeskSteps) {
      const auto t0 = std::chrono::steady_clock::now();
      TrainConfig tc;
      tc.steps = kDeskChunk;
      tc.log_every = 500;
      tc.seed = 100 + std::uint64_t(ck.meta.step / kDeskChunk);
      ck = callipaint::train(ck, train, tc, [](const TrainProgress& p) {
        note("step " + std::to_string(p.step) + " loss " + fmt("%.4f", p.loss));
      });
      save_checkpoint(ck, chunk_path(ck.meta.step));
      note("chunk to step " + std::to_string(ck.meta.step) + " took " +
           fmt("%.0f", seconds_since(t0)) + " s");
    }
    generator = std::move(ck);
    return *generator;
  }
};

Outcome classifier_floors(Desk& desk) {
  const auto& c = desk.clf();
  return {c.val_script_accuracy >= kClassifierFloor && c.val_character_accuracy >= kClassifierFloor,
          "val script " + fmt("%.3f", c.val_script_accuracy) + ", character " +
              fmt("%.3f", c.val_character_accuracy) + " on " + std::to_string(desk.val.size()) +
              " images (floor " + fmt("%.2f", kClassifierFloor) + ")"};
}

Outcome directional_compare(Desk& desk) {
  const auto& clf = desk.clf();
  const auto& gen = desk.gen();
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = compare_inpaint_vs_generate(
      gen, clf, desk.val, mask_spec_for_coverage(kCompareCoverage), kCompareN, 7, {},
      [](std::size_t done, std::size_t total) {
        if (done % 20 == 0) note("compare " + std::to_string(done) + "/" + std::to_string(total));
      });
  std::ofstream(desk.dir / "compare.json") << compare_to_json(r);
  const bool coverage_ok = r.mean_mask_coverage >= 0.25 && r.mean_mask_coverage <= 0.5;
  return {r.n >= kCompareN && coverage_ok && r.delta >= kDeltaFloor,
          "n=" + std::to_string(r.n) + ", coverage " + fmt("%.3f", r.mean_mask_coverage) +
              ", acc_inpaint " + fmt("%.3f", r.acc_inpaint) + ", acc_generate " +
              fmt("%.3f", r.acc_generate) + ", delta " + fmt("%+.3f", r.delta) + " (floor " +
              fmt("%+.2f", kDeltaFloor) + ", " + std::to_string(gen.meta.step) + " steps, " +
              fmt("%.0f", seconds_since(t0)) + " s)"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance suite"};
  std::string work_dir = (fs::temp_directory_path() / "callipaint_acceptance").string();
  std::vector<std::string> only;
  app.add_option("--work-dir", work_dir, "Directory for the desk corpus and trained models");
  app.add_option("--only", only, "Run only the named criteria");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(work_dir);

  Desk desk(work_dir);
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"schedule_closed_forms", schedule_closed_forms},
      {"forward_statistics", forward_statistics},
      {"gradient_check", gradient_check},
      {"oracle_equivalence", oracle_equivalence},
      {"unmasked_preservation", unmasked_preservation},
      {"time_plan_laws", time_plan_laws},
      {"p_value_oracle", p_value_oracle},
      {"checkpoint_api_contracts", checkpoint_and_api},
      {"classifier_floors", [&] { return classifier_floors(desk); }},
      {"directional_compare", [&] { return directional_compare(desk); }},
  };
  const std::set<std::string> selected(only.begin(), only.end());

  int passed = 0, run = 0;
  for (const auto& [name, fn] : criteria) {
    if (!selected.empty() && !selected.count(name)) continue;
    ++run;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    passed += o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << " ["
              << fmt("%.1f", seconds_since(t0)) << " s]" << std::endl;
  }
  std::cout << passed << "/" << run << " criteria passed" << std::endl;
  return passed == run ? 0 : 1;
}
