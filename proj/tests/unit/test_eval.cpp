#include <doctest.h>

#include <cmath>

#include <json.hpp>

#include <callipaint/error.hpp>
#include <callipaint/eval.hpp>

#include "fixtures.hpp"

using namespace callipaint;

namespace {

struct Rig {
  Checkpoint gen;
  Classifier clf;
  std::vector<Example> val;
};

Rig make_rig() {
  Rig r;
  const auto cfg = fixtures::probe_config();
  r.gen.params = fixtures::jittered(cfg, 3);
  r.gen.meta.schedule = {10, 1e-3, 0.2};
  r.gen.meta.vocab = fixtures::probe_vocab();
  r.val = fixtures::random_dataset(cfg, 12, 5);
  // make every character and script appear for the classifier
  for (int i = 0; i < 6; ++i) r.val[i].label = {i % 3, i % 2, i % 2};
  ClassifierConfig arch;
  arch.resolution = cfg.resolution;
  arch.channels1 = 3;
  arch.channels2 = 4;
  ClassifierTrainConfig tc;
  tc.epochs = 20;
  tc.lr = 1e-2;
  r.clf = train_classifier(r.val, r.val, r.gen.meta.vocab, tc, arch);
  return r;
}

}  // namespace

TEST_CASE("total row is the sample-weighted mean") {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<EvalRow> rows;
    long n = 0;
    double s = 0, c = 0;
    for (int i = 0; i < int(rng.uniform_int(1, 5)); ++i) {
      EvalRow r{"s" + std::to_string(i), long(rng.uniform_int(1, 40)), rng.uniform(),
                rng.uniform()};
      n += r.n;
      s += r.n * r.script_accuracy;
      c += r.n * r.character_accuracy;
      rows.push_back(r);
    }
    const auto t = aggregate_rows(rows);
    CHECK(t.n == n);
    CHECK(t.script_accuracy == doctest::Approx(s / n).epsilon(1e-12));
    CHECK(t.character_accuracy == doctest::Approx(c / n).epsilon(1e-12));
  }
  CHECK(aggregate_rows({}).n == 0);
}

TEST_CASE("empty masks reproduce gold-image accuracy") {
  const auto rig = make_rig();
  const MaskSpec none{0, 0, 0.25, 0.5};
  const auto gold = evaluate_classifier(rig.clf, rig.val);
  const auto rep = eval_inpainting(rig.gen, rig.clf, rig.val, none, 2, 7);
  CHECK(rep.mean_mask_coverage == 0.0);
  CHECK(rep.total.n == 24);
  CHECK(rep.total.script_accuracy == doctest::Approx(gold.script).epsilon(1e-12));
  CHECK(rep.total.character_accuracy == doctest::Approx(gold.character).epsilon(1e-12));
  CHECK(rep.total == aggregate_rows(rep.rows));

  const auto cmp = compare_inpaint_vs_generate(rig.gen, rig.clf, rig.val, none, 12, 7);
  CHECK(cmp.acc_inpaint == doctest::Approx(gold.character).epsilon(1e-12));
  CHECK(cmp.delta == doctest::Approx(cmp.acc_inpaint - cmp.acc_generate));
}

TEST_CASE("masked evaluation is deterministic and reported") {
  const auto rig = make_rig();
  const MaskSpec spec{1, 2, 0.25, 0.5};
  EvalOptions opt{5, 2};
  std::size_t calls = 0;
  const auto a = eval_inpainting(rig.gen, rig.clf, rig.val, spec, 1, 3, opt,
                                 [&](std::size_t done, std::size_t total) {
                                   CHECK(total == 12);
                                   calls = done;
                                 });
  CHECK(calls == 12);
  const auto b = eval_inpainting(rig.gen, rig.clf, rig.val, spec, 1, 3, opt);
  CHECK(a.rows == b.rows);
  CHECK(a.mean_mask_coverage > 0.0);
  CHECK(a.jump_len == 5);
  CHECK(a.model_id == rig.gen.model_id());

  const auto text = render_report_text(a);
  CHECK(text.find("Total") != std::string::npos);
  CHECK(text.find("Script Character") != std::string::npos);
  CHECK(text.find("0.98") != std::string::npos);
  const auto j = nlohmann::json::parse(report_to_json(a));
  CHECK(j["total"]["n"] == 12);
  CHECK(j["total_rule"] == "sample-weighted");
  CHECK(j["rows"].size() == a.rows.size());

  const auto c = compare_inpaint_vs_generate(rig.gen, rig.clf, rig.val, spec, 5, 3, opt);
  CHECK(c.n == 5);
  const auto cj = nlohmann::json::parse(compare_to_json(c));
  CHECK(cj["reference"]["delta"] == doctest::Approx(0.10));
}

TEST_CASE("incompatible generator and classifier are refused") {
  auto rig = make_rig();
  auto gen = rig.gen;
  gen.meta.vocab.character[0] = "z";
  CHECK_THROWS_AS(eval_inpainting(gen, rig.clf, rig.val, {}, 1, 0), Error);
  CHECK_THROWS_AS(eval_inpainting(rig.gen, rig.clf, {}, {}, 1, 0), Error);
  CHECK_THROWS_AS(compare_inpaint_vs_generate(rig.gen, rig.clf, rig.val, {}, 0, 0), Error);
}

TEST_CASE("coverage mask spec") {
  const auto s = mask_spec_for_coverage(0.25);
  CHECK(s.min_rects == 1);
  CHECK(s.max_rects == 1);
  CHECK(random_mask(1, s, {32, 32}).coverage() == 0.25);
  CHECK(random_mask(1, mask_spec_for_coverage(0.0), {32, 32}).coverage() == 0.0);
  CHECK_THROWS_AS(mask_spec_for_coverage(1.5), Error);
}
