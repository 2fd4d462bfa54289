#include "callipaint/eval.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "callipaint/error.hpp"
#include "callipaint/repaint.hpp"
#include "callipaint/rng.hpp"

namespace callipaint {
namespace {

void check_compatible(const Checkpoint& gen, const Classifier& clf,
                      const std::vector<Example>& val) {
  const auto& a = gen.meta.vocab;
  const auto& b = clf.vocab();
  require(a.character == b.character, ErrorKind::kVocabulary,
          "character vocabularies of generator and classifier differ");
  require(a.script == b.script, ErrorKind::kVocabulary,
          "script vocabularies of generator and classifier differ");
  require(gen.params.config().resolution == clf.config().resolution,
          ErrorKind::kShapeMismatch, "generator and classifier resolutions differ");
  require(!val.empty(), ErrorKind::kInvalidArgument, "empty evaluation set");
  for (const auto& ex : val) a.check(ex.label);
}

std::string fixed(double v, int prec = 3) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

std::string describe_mask(const MaskSpec& m) {
  std::ostringstream o;
  o << m.min_rects << '-' << m.max_rects << " rects, side " << fixed(m.min_frac, 2)
    << '-' << fixed(m.max_frac, 2);
  return o.str();
}

// Inpaints one item; an empty mask returns the gold image untouched.
GlyphImage inpaint_item(const Checkpoint& gen, const NoiseSchedule& schedule,
                        const Example& ex, const Mask& mask, std::uint64_t seed,
                        const EvalOptions& options) {
  if (mask.coverage() == 0.0) return ex.image;
  InpaintConfig cfg;
  cfg.jump_len = options.jump_len;
  cfg.n_resample = options.n_resample;
  cfg.seed = seed;
  return inpaint(gen.params, ex.image, mask, ex.label, schedule, cfg).image;
}

}  // namespace

EvalRow aggregate_rows(const std::vector<EvalRow>& rows) {
  EvalRow total;
  total.script = "Total";
  double s = 0, c = 0;
  for (const auto& r : rows) {
    total.n += r.n;
    s += double(r.n) * r.script_accuracy;
    c += double(r.n) * r.character_accuracy;
  }
  if (total.n > 0) {
    total.script_accuracy = s / double(total.n);
    total.character_accuracy = c / double(total.n);
  }
  return total;
}

std::string classifier_id(const Classifier& clf) {
  std::uint64_t h = 1469598103934665603ull;
  const auto* p = reinterpret_cast<const std::uint8_t*>(clf.store().values.data());
  for (std::size_t i = 0; i < clf.store().values.size() * sizeof(float); ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

MaskSpec mask_spec_for_coverage(double fraction) {
  require(fraction >= 0.0 && fraction <= 1.0, ErrorKind::kInvalidArgument,
          "coverage must lie in [0, 1]");
  const double side = std::sqrt(fraction);
  return MaskSpec{1, 1, side, side};
}

EvalReport eval_inpainting(const Checkpoint& generator, const Classifier& classifier,
                           const std::vector<Example>& val, const MaskSpec& mask,
                           int n_per_cell, std::uint64_t seed,
                           const EvalOptions& options, const EvalProgress& progress) {
  check_compatible(generator, classifier, val);
  require(n_per_cell >= 1, ErrorKind::kInvalidArgument, "n_per_cell must be at least 1");
  const auto schedule = make_schedule(generator.meta.schedule);
  const auto& scripts = generator.meta.vocab.script;
  std::vector<long> n(scripts.size(), 0), sc(scripts.size(), 0), cc(scripts.size(), 0);
  const std::size_t total = val.size() * std::size_t(n_per_cell);
  double coverage = 0;
  std::size_t done = 0;
  for (std::size_t i = 0; i < val.size(); ++i) {
    const auto& ex = val[i];
    for (int k = 0; k < n_per_cell; ++k) {
      const std::uint64_t idx = i * std::uint64_t(n_per_cell) + k;
      const Mask m = random_mask(mix_seed(seed, "eval.mask", idx), mask,
                                 ex.image.resolution);
      coverage += m.coverage();
      const GlyphImage out = inpaint_item(generator, schedule, ex, m,
                                          mix_seed(seed, "eval.inpaint", idx), options);
      const auto p = classify(classifier, out);
      const int s = ex.label.script;
      ++n[s];
      sc[s] += p.script_argmax() == ex.label.script;
      cc[s] += p.character_argmax() == ex.label.character;
      if (progress) progress(++done, total);
    }
  }
  EvalReport report;
  for (std::size_t s = 0; s < scripts.size(); ++s) {
    if (n[s] == 0) continue;
    report.rows.push_back({scripts[s], n[s], double(sc[s]) / double(n[s]),
                           double(cc[s]) / double(n[s])});
  }
  report.total = aggregate_rows(report.rows);
  report.mask = mask;
  report.mean_mask_coverage = coverage / double(total);
  report.n_per_cell = n_per_cell;
  report.jump_len = options.jump_len;
  report.n_resample = options.n_resample;
  report.seed = seed;
  report.model_id = generator.model_id();
  report.classifier_id = classifier_id(classifier);
  return report;
}

std::string render_report_text(const EvalReport& r) {
  constexpr std::size_t kLabel = 12, kCell = 20;
  std::vector<EvalRow> cols = r.rows;
  cols.push_back(r.total);
  std::string l1 = pad("", kLabel), l2 = pad("", kLabel), l3 = pad("inpainted", kLabel),
              l4 = pad("samples", kLabel);
  for (const auto& c : cols) {
    l1 += "| " + pad(c.script, kCell);
    l2 += "| " + pad("Script Character", kCell);
    l3 += "| " + pad(pad(fixed(c.script_accuracy), 7) + fixed(c.character_accuracy), kCell);
    l4 += "| " + pad(std::to_string(c.n), kCell);
  }
  std::ostringstream o;
  o << l1 << '\n' << l2 << '\n' << l3 << '\n' << l4 << '\n';
  o << "\nmask: " << describe_mask(r.mask) << ", mean coverage "
    << fixed(r.mean_mask_coverage) << "; per item: " << r.n_per_cell
    << "; jump_len " << r.jump_len << ", n_resample " << r.n_resample << "; seed "
    << r.seed << '\n';
  o << "model " << r.model_id << ", classifier " << r.classifier_id
    << "; Total is sample-weighted across scripts\n";
  o << "published reference (full-scale model, different classifier): Total Script 0.98, "
       "Character 0.95\n";
  return o.str();
}

std::string report_to_json(const EvalReport& r) {
  auto row = [](const EvalRow& x) {
    return nlohmann::ordered_json{{"script", x.script},
                                  {"n", x.n},
                                  {"script_accuracy", x.script_accuracy},
                                  {"character_accuracy", x.character_accuracy}};
  };
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& x : r.rows) rows.push_back(row(x));
  nlohmann::ordered_json j;
  j["rows"] = rows;
  j["total"] = row(r.total);
  j["total_rule"] = "sample-weighted";
  j["mask"] = {{"min_rects", r.mask.min_rects},
               {"max_rects", r.mask.max_rects},
               {"min_frac", r.mask.min_frac},
               {"max_frac", r.mask.max_frac},
               {"mean_coverage", r.mean_mask_coverage}};
  j["n_per_cell"] = r.n_per_cell;
  j["jump_len"] = r.jump_len;
  j["n_resample"] = r.n_resample;
  j["seed"] = r.seed;
  j["model_id"] = r.model_id;
  j["classifier_id"] = r.classifier_id;
  j["reference"] = {{"note", "published full-scale model, different classifier"},
                    {"script_accuracy", 0.98},
                    {"character_accuracy", 0.95}};
  return j.dump(2) + "\n";
}

CompareResult compare_inpaint_vs_generate(const Checkpoint& generator,
                                          const Classifier& classifier,
                                          const std::vector<Example>& val,
                                          const MaskSpec& mask, int n,
                                          std::uint64_t seed,
                                          const EvalOptions& options,
                                          const EvalProgress& progress) {
  check_compatible(generator, classifier, val);
  require(n >= 1, ErrorKind::kInvalidArgument, "n must be at least 1");
  const auto schedule = make_schedule(generator.meta.schedule);
  CompareResult r;
  r.n = n;
  long ci = 0, cg = 0, si = 0, sg = 0;
  double coverage = 0;
  for (int i = 0; i < n; ++i) {
    const auto& ex = val[std::size_t(i) % val.size()];
    const Mask m = random_mask(mix_seed(seed, "eval.mask", i), mask, ex.image.resolution);
    coverage += m.coverage();
    const auto pin = classify(
        classifier, inpaint_item(generator, schedule, ex, m,
                                 mix_seed(seed, "eval.inpaint", i), options));
    const auto gen = sample(generator.params, ex.label, schedule,
                            mix_seed(seed, "eval.generate", i));
    const auto pgen = classify(classifier, gen.image);
    ci += pin.character_argmax() == ex.label.character;
    si += pin.script_argmax() == ex.label.script;
    cg += pgen.character_argmax() == ex.label.character;
    sg += pgen.script_argmax() == ex.label.script;
    if (progress) progress(std::size_t(i) + 1, std::size_t(n));
  }
  r.acc_inpaint = double(ci) / n;
  r.acc_generate = double(cg) / n;
  r.delta = r.acc_inpaint - r.acc_generate;
  r.script_acc_inpaint = double(si) / n;
  r.script_acc_generate = double(sg) / n;
  r.mean_mask_coverage = coverage / n;
  return r;
}

std::string compare_to_json(const CompareResult& r) {
  nlohmann::ordered_json j{{"n", r.n},
                           {"acc_inpaint", r.acc_inpaint},
                           {"acc_generate", r.acc_generate},
                           {"delta", r.delta},
                           {"script_acc_inpaint", r.script_acc_inpaint},
                           {"script_acc_generate", r.script_acc_generate},
                           {"mean_mask_coverage", r.mean_mask_coverage},
                           {"reference", {{"acc_inpaint", 0.95},
                                          {"acc_generate", 0.85},
                                          {"delta", 0.10}}}};
  return j.dump(2) + "\n";
}

}  // namespace callipaint
