// callipaint: corpus building, training, sampling, inpainting, evaluation,
// survey tooling and the HTTP service behind one binary.
#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "callipaint/checkpoint.hpp"
#include "callipaint/classifier.hpp"
#include "callipaint/corpus.hpp"
#include "callipaint/error.hpp"
#include "callipaint/eval.hpp"
#include "callipaint/png_io.hpp"
#include "callipaint/repaint.hpp"
#include "callipaint/rng.hpp"
#include "callipaint/service.hpp"
#include "callipaint/survey.hpp"
#include "callipaint/train.hpp"

namespace fs = std::filesystem;
using namespace callipaint;

namespace {

// Flag combinations CLI11 cannot express; reported with exit code 1.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Condition {
  std::string character, script, style;

  void add(CLI::App* app) {
    app->add_option("--character", character, "Character name from the vocabulary")
        ->required();
    app->add_option("--script", script, "Script name from the vocabulary")->required();
    app->add_option("--style", style, "Style name from the vocabulary")->required();
  }
  ConditionLabel resolve(const Vocabularies& v) const {
    return v.resolve(character, script, style);
  }
};

struct MaskFlags {
  int min_rects = 1, max_rects = 3;
  double min_frac = 0.25, max_frac = 0.5;
  double coverage = -1.0;

  void add(CLI::App* app) {
    app->add_option("--mask-min-rects", min_rects, "Fewest rectangles per random mask")
        ->capture_default_str();
    app->add_option("--mask-max-rects", max_rects, "Most rectangles per random mask")
        ->capture_default_str();
    app->add_option("--mask-min-frac", min_frac, "Smallest rectangle side, fraction of image")
        ->capture_default_str();
    app->add_option("--mask-max-frac", max_frac, "Largest rectangle side, fraction of image")
        ->capture_default_str();
    app->add_option("--coverage", coverage,
                    "Use one square covering this fraction of the image instead "
                    "(0 disables masking)");
  }
  MaskSpec spec() const {
    if (coverage >= 0.0) return mask_spec_for_coverage(coverage);
    return MaskSpec{min_rects, max_rects, min_frac, max_frac};
  }
};

struct ResampleFlags {
  int jump_len = 10;
  int n_resample = 5;

  void add(CLI::App* app) {
    app->add_option("--jump-len", jump_len, "RePaint jump length j")->capture_default_str();
    app->add_option("--n-resample", n_resample, "RePaint resample count r")
        ->capture_default_str();
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_file_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

std::string file_label(const std::string& action) {
  std::string out;
  for (char c : action) {
    if (c == '-') out += "-to";
    else if (c != '>') out += c;
  }
  return out;
}

void export_trace(const fs::path& dir, const SampleTrace& trace, Resolution res,
                  const TimePlan* plan) {
  fs::create_directories(dir);
  nlohmann::ordered_json states = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < trace.states.size(); ++i) {
    char name[96];
    std::snprintf(name, sizeof name, "t%04zu_%s.png", i,
                  file_label(trace.state_labels[i]).c_str());
    GlyphImage img{res, PixelRange::kModel, trace.states[i]};
    write_image_png(dir / name, clamp_model(img));
    states.push_back({{"file", name}, {"action", trace.state_labels[i]}});
  }
  nlohmann::ordered_json j;
  j["seed"] = trace.seed;
  j["condition"] = {{"character", trace.condition.character},
                    {"script", trace.condition.script},
                    {"style", trace.condition.style}};
  j["denoise_steps"] = trace.denoise_steps;
  j["elapsed_ms"] = trace.elapsed_ms;
  j["states"] = states;
  if (plan) {
    nlohmann::ordered_json actions = nlohmann::ordered_json::array();
    for (const auto& a : *plan) actions.push_back(a.label());
    j["plan"] = actions;
  }
  write_text(dir / "plan.json", j.dump(2) + "\n");
}

std::vector<Example> load_split(const Manifest& m, Split split, std::size_t limit) {
  auto data = load_dataset(m, split);
  if (limit > 0 && data.size() > limit) data.resize(limit);
  if (data.empty())
    throw UsageError(std::string("manifest has no ") + to_string(split) + " examples");
  return data;
}

void progress_line(std::size_t done, std::size_t total, std::chrono::steady_clock::time_point t0) {
  const double s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cerr << "\r  " << done << "/" << total << "  " << fmt("%.0f", s) << "s" << std::flush;
  if (done == total) std::cerr << "\n";
}

std::vector<int> parse_mults(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      out.push_back(std::stoi(tok));
    } catch (const std::exception&) {
      throw UsageError("--channel-mults expects comma-separated integers, got '" + s + "'");
    }
  }
  if (out.empty()) throw UsageError("--channel-mults is empty");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "callipaint: text-conditioned glyph diffusion with RePaint-style inpainting.\n"
      "File formats: glyph images and masks are 8-bit grayscale PNGs (masks: 255 = "
      "regenerate, 0 = keep); checkpoints use the CPKT binary format; manifests are "
      "JSON lines.",
      "callipaint"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  std::uint64_t seed = 0;
  auto add_seed = [&](CLI::App* sub) {
    sub->add_option("--seed", seed, "Root seed for every random draw")->capture_default_str();
  };

  // render-corpus
  auto* rc = app.add_subcommand("render-corpus",
                                "Render a font corpus into PNGs plus manifest.jsonl.\n"
                                "Spec JSON: {\"characters\": \"...\", \"fonts\": [{\"path\", "
                                "\"script\", \"style\"}], \"val_fraction\", \"seed\", "
                                "\"height\", \"width\"}; font paths resolve against the spec "
                                "file's directory.");
  std::string rc_spec, rc_out;
  double rc_val = -1;
  rc->add_option("--spec", rc_spec, "Corpus spec JSON")->required()->check(CLI::ExistingFile);
  rc->add_option("--out", rc_out, "Output directory")->required();
  rc->add_option("--val-fraction", rc_val, "Override the spec's validation fraction");
  add_seed(rc);

  // train
  auto* tr = app.add_subcommand("train", "Train (or resume) the conditional denoiser.");
  std::string tr_manifest, tr_out, tr_resume, tr_log, tr_mults = "1,2,4";
  TrainConfig tcfg;
  DenoiserConfig dcfg;
  ScheduleId sched;
  tr->add_option("--manifest", tr_manifest, "Corpus manifest.jsonl")->required()
      ->check(CLI::ExistingFile);
  tr->add_option("--out", tr_out, "Checkpoint to write")->required();
  tr->add_option("--resume", tr_resume, "Continue from this checkpoint")
      ->check(CLI::ExistingFile);
  tr->add_option("--steps", tcfg.steps, "Optimizer steps")->capture_default_str();
  tr->add_option("--batch", tcfg.batch, "Batch size")->capture_default_str();
  tr->add_option("--lr", tcfg.lr, "Adam learning rate")->capture_default_str();
  tr->add_option("--log-every", tcfg.log_every, "Loss logging interval")
      ->capture_default_str();
  tr->add_option("--loss-log", tr_log, "Write step,loss CSV here");
  tr->add_option("--base-channels", dcfg.base_channels, "U-Net base width")
      ->capture_default_str();
  tr->add_option("--channel-mults", tr_mults, "Per-level channel multipliers")
      ->capture_default_str();
  tr->add_option("--time-embed-dim", dcfg.time_embed_dim, "Time/condition embedding width")
      ->capture_default_str();
  tr->add_option("--groups", dcfg.groups, "GroupNorm groups")->capture_default_str();
  tr->add_option("--timesteps", sched.steps, "Diffusion steps T")->capture_default_str();
  tr->add_option("--beta-start", sched.beta_start, "beta_1")->capture_default_str();
  tr->add_option("--beta-end", sched.beta_end, "beta_T")->capture_default_str();
  add_seed(tr);

  // sample
  auto* sa = app.add_subcommand("sample", "Generate a glyph from pure noise.");
  std::string sa_ckpt, sa_out, sa_trace;
  int trace_stride = 1;
  Condition sa_cond;
  sa->add_option("--checkpoint", sa_ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  sa->add_option("--out", sa_out, "Output PNG")->required();
  sa_cond.add(sa);
  sa->add_option("--trace-dir", sa_trace, "Export intermediate states and plan.json here");
  sa->add_option("--trace-stride", trace_stride, "Keep every n-th state")
      ->capture_default_str();
  add_seed(sa);

  // inpaint
  auto* ip = app.add_subcommand(
      "inpaint",
      "Regenerate the masked region of an image (mask PNG: 255 = regenerate, 0 = keep).");
  std::string ip_ckpt, ip_image, ip_mask, ip_out, ip_trace, ip_mask_out;
  bool ip_random_mask = false;
  Condition ip_cond;
  ResampleFlags ip_rs;
  MaskFlags ip_mf;
  ip->add_option("--checkpoint", ip_ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  ip->add_option("--image", ip_image, "Condition image PNG")->required()
      ->check(CLI::ExistingFile);
  auto* ip_mask_opt =
      ip->add_option("--mask", ip_mask, "Mask PNG")->check(CLI::ExistingFile);
  auto* ip_rand_opt =
      ip->add_flag("--random-mask", ip_random_mask, "Draw a random mask from --seed instead");
  ip_mask_opt->excludes(ip_rand_opt);
  ip->add_option("--mask-out", ip_mask_out, "Save the mask that was used");
  ip->add_option("--out", ip_out, "Output PNG")->required();
  ip_cond.add(ip);
  ip_rs.add(ip);
  ip_mf.add(ip);
  ip->add_option("--trace-dir", ip_trace, "Export intermediate states and plan.json here");
  ip->add_option("--trace-stride", trace_stride, "Keep every n-th state")
      ->capture_default_str();
  add_seed(ip);

  // compose
  auto* co = app.add_subcommand(
      "compose",
      "Paste the masked part of a patch glyph onto a base glyph (radical swap). "
      "Optionally write a seam mask for a follow-up inpaint.");
  std::string co_base, co_patch, co_mask, co_out, co_seam;
  int co_seam_width = 2;
  co->add_option("--base", co_base, "Base glyph PNG")->required()->check(CLI::ExistingFile);
  co->add_option("--patch", co_patch, "Patch glyph PNG")->required()->check(CLI::ExistingFile);
  co->add_option("--patch-mask", co_mask, "Mask PNG selecting the patch region")->required()
      ->check(CLI::ExistingFile);
  co->add_option("--out", co_out, "Composed condition image PNG")->required();
  co->add_option("--seam-mask-out", co_seam, "Write a mask covering the patch boundary");
  co->add_option("--seam-width", co_seam_width, "Seam half-width in pixels")
      ->capture_default_str();

  // train-classifier
  auto* tc = app.add_subcommand("train-classifier",
                                "Train the script/character evaluation classifier.");
  std::string tc_manifest, tc_out;
  ClassifierTrainConfig ccfg;
  tc->add_option("--manifest", tc_manifest, "Corpus manifest.jsonl")->required()
      ->check(CLI::ExistingFile);
  tc->add_option("--out", tc_out, "Classifier file to write")->required();
  tc->add_option("--epochs", ccfg.epochs, "Training epochs")->capture_default_str();
  tc->add_option("--lr", ccfg.lr, "Adam learning rate")->capture_default_str();
  tc->add_option("--batch", ccfg.batch, "Batch size")->capture_default_str();
  add_seed(tc);

  // eval
  auto* ev = app.add_subcommand(
      "eval", "Random-mask inpainting accuracy per script (text table + JSON).");
  std::string ev_ckpt, ev_clf, ev_manifest, ev_text, ev_json;
  int ev_per_cell = 1;
  std::size_t ev_limit = 0;
  MaskFlags ev_mf;
  ResampleFlags ev_rs;
  ev->add_option("--checkpoint", ev_ckpt, "Generator checkpoint")->required()
      ->check(CLI::ExistingFile);
  ev->add_option("--classifier", ev_clf, "Classifier file")->required()
      ->check(CLI::ExistingFile);
  ev->add_option("--manifest", ev_manifest, "Corpus manifest (val split is used)")
      ->required()->check(CLI::ExistingFile);
  ev->add_option("--n-per-cell", ev_per_cell, "Masked inpaints per val item")
      ->capture_default_str();
  ev->add_option("--limit", ev_limit, "Use at most this many val items (0 = all)");
  ev->add_option("--out-text", ev_text, "Write the text table here");
  ev->add_option("--out-json", ev_json, "Write the JSON report here");
  ev_mf.add(ev);
  ev_rs.add(ev);
  add_seed(ev);

  // compare
  auto* cp = app.add_subcommand(
      "compare", "Character accuracy of masked inpainting vs. full generation.");
  std::string cp_ckpt, cp_clf, cp_manifest, cp_json;
  int cp_n = 100;
  MaskFlags cp_mf;
  ResampleFlags cp_rs;
  cp->add_option("--checkpoint", cp_ckpt, "Generator checkpoint")->required()
      ->check(CLI::ExistingFile);
  cp->add_option("--classifier", cp_clf, "Classifier file")->required()
      ->check(CLI::ExistingFile);
  cp->add_option("--manifest", cp_manifest, "Corpus manifest (val split is used)")
      ->required()->check(CLI::ExistingFile);
  cp->add_option("--n", cp_n, "Samples per arm")->capture_default_str();
  cp->add_option("--out-json", cp_json, "Write the result JSON here");
  cp_mf.add(cp);
  cp_rs.add(cp);
  add_seed(cp);

  // survey-make
  auto* sm = app.add_subcommand(
      "survey-make",
      "Build a find-the-genuine / find-the-fake survey from gold and inpainted glyphs.\n"
      "Writes <out>/qNNN/<A..>.png and <out>/questions.json; the answer key goes to --key.");
  std::string sm_ckpt, sm_manifest, sm_out, sm_key;
  int sm_n = 10, sm_k = 4, sm_pool = 0;
  MaskFlags sm_mf;
  ResampleFlags sm_rs;
  sm->add_option("--checkpoint", sm_ckpt, "Generator checkpoint")->required()
      ->check(CLI::ExistingFile);
  sm->add_option("--manifest", sm_manifest, "Corpus manifest (val split is used)")
      ->required()->check(CLI::ExistingFile);
  sm->add_option("--out", sm_out, "Bundle directory")->required();
  sm->add_option("--key", sm_key, "Answer key JSON (outside the bundle)")->required();
  sm->add_option("--n-per-type", sm_n, "Questions of each type")->capture_default_str();
  sm->add_option("--k", sm_k, "Options per question")->capture_default_str();
  sm->add_option("--fake-pool", sm_pool, "Inpainted images to generate (default: k + 2)");
  sm_mf.add(sm);
  sm_rs.add(sm);
  add_seed(sm);

  // survey-score
  auto* ss = app.add_subcommand(
      "survey-score",
      "Score survey responses. CSV rows: question_id,choice[,respondent[,group]]; "
      "choice is an option letter or a 0-based index.");
  std::string ss_key, ss_resp, ss_json;
  ss->add_option("--key", ss_key, "Answer key JSON")->required()->check(CLI::ExistingFile);
  ss->add_option("--responses", ss_resp, "Responses CSV")->required()
      ->check(CLI::ExistingFile);
  ss->add_option("--out-json", ss_json, "Write the score JSON here");

  // serve
  auto* sv = app.add_subcommand(
      "serve",
      "HTTP service: GET /api/v1/health, GET /api/v1/conditions, POST /api/v1/sample, "
      "POST /api/v1/inpaint. Flags override CALLIPAINT_CHECKPOINT, CALLIPAINT_BIND, "
      "CALLIPAINT_WORKERS and CALLIPAINT_MAX_PENDING.");
  std::string sv_ckpt, sv_bind;
  int sv_workers = 0, sv_pending = -1;
  sv->add_option("--checkpoint", sv_ckpt, "Checkpoint to serve");
  sv->add_option("--bind", sv_bind, "host:port (default 127.0.0.1:8080)");
  sv->add_option("--workers", sv_workers, "Concurrent generations (default 2)");
  sv->add_option("--max-pending", sv_pending, "Queued requests before 429 (default 16)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    const auto t0 = std::chrono::steady_clock::now();
    auto progress = [&](std::size_t d, std::size_t t) { progress_line(d, t, t0); };

    if (rc->parsed()) {
      CorpusSpec spec = load_corpus_spec(rc_spec);
      if (rc->count("--seed")) spec.seed = seed;
      if (rc_val >= 0) spec.val_fraction = rc_val;
      const auto m = build_manifest(spec, rc_out);
      std::cout << "rendered " << m.entries.size() << " glyphs (" << m.count(Split::kTrain)
                << " train, " << m.count(Split::kVal) << " val) into " << rc_out << "\n"
                << "vocabulary: " << m.vocab.character.size() << " characters, "
                << m.vocab.script.size() << " scripts, " << m.vocab.style.size()
                << " styles\n";
    } else if (tr->parsed()) {
      const auto m = load_manifest(tr_manifest);
      const auto data = load_dataset(m, Split::kTrain);
      tcfg.seed = seed;
      std::ofstream log;
      if (!tr_log.empty()) {
        log.open(tr_log);
        if (!log) throw UsageError("cannot open " + tr_log);
        log << "step,loss\n";
      }
      auto on_log = [&](const TrainProgress& p) {
        std::cerr << "step " << p.step << "  loss " << fmt("%.5f", p.loss) << "\n";
        if (log) log << p.step << ',' << p.loss << '\n' << std::flush;
      };
      Checkpoint out;
      if (!tr_resume.empty()) {
        const auto start = load_checkpoint(tr_resume);
        if (!(start.meta.vocab == m.vocab))
          fail(ErrorKind::kVocabulary, "checkpoint vocabulary differs from the manifest's");
        out = train(start, data, tcfg, on_log);
      } else {
        dcfg.resolution = m.resolution;
        dcfg.channel_mults = parse_mults(tr_mults);
        dcfg.vocab_character = int(m.vocab.character.size());
        dcfg.vocab_script = int(m.vocab.script.size());
        dcfg.vocab_style = int(m.vocab.style.size());
        auto params = init_params(dcfg, mix_seed(seed, "train.init", 0));
        std::cerr << "parameters: " << params.param_count() << "\n";
        out = train(std::move(params), data, make_schedule(sched), m.vocab, tcfg, on_log);
      }
      save_checkpoint(out, tr_out);
      std::cout << "saved " << tr_out << " at step " << out.meta.step << " (model "
                << out.model_id() << ")\n";
    } else if (sa->parsed()) {
      const auto ckpt = load_checkpoint(sa_ckpt);
      const auto cond = sa_cond.resolve(ckpt.meta.vocab);
      TraceOptions topt;
      if (!sa_trace.empty()) topt.stride = trace_stride;
      const auto r = sample(ckpt.params, cond, make_schedule(ckpt.meta.schedule), seed, topt);
      write_image_png(sa_out, r.image);
      if (!sa_trace.empty())
        export_trace(sa_trace, r.trace, r.image.resolution, nullptr);
      std::cout << "wrote " << sa_out << " (" << r.trace.denoise_steps << " steps, "
                << fmt("%.0f", r.trace.elapsed_ms) << " ms, seed " << seed << ")\n";
    } else if (ip->parsed()) {
      if (ip_mask.empty() && !ip_random_mask)
        throw UsageError("inpaint needs --mask or --random-mask");
      const auto ckpt = load_checkpoint(ip_ckpt);
      const auto cond = ip_cond.resolve(ckpt.meta.vocab);
      const auto image = to_model(read_image_png(ip_image));
      const Mask mask = ip_random_mask
                            ? random_mask(mix_seed(seed, "cli.mask", 0), ip_mf.spec(),
                                          image.resolution)
                            : read_mask_png(ip_mask);
      if (!ip_mask_out.empty()) write_mask_png(ip_mask_out, mask);
      InpaintConfig icfg;
      icfg.jump_len = ip_rs.jump_len;
      icfg.n_resample = ip_rs.n_resample;
      icfg.seed = seed;
      if (!ip_trace.empty()) icfg.trace.stride = trace_stride;
      const auto r =
          inpaint(ckpt.params, image, mask, cond, make_schedule(ckpt.meta.schedule), icfg);
      write_image_png(ip_out, r.image);
      if (!ip_trace.empty()) export_trace(ip_trace, r.trace, r.image.resolution, &r.plan);
      std::cout << "wrote " << ip_out << " (mask coverage " << fmt("%.3f", mask.coverage())
                << ", " << r.trace.denoise_steps << " denoise steps, "
                << fmt("%.0f", r.trace.elapsed_ms) << " ms, seed " << seed << ")\n";
    } else if (co->parsed()) {
      const auto base = read_image_png(co_base);
      const auto patch = read_image_png(co_patch);
      const auto pmask = read_mask_png(co_mask);
      if (co_seam_width < 0) throw UsageError("--seam-width must be non-negative");
      write_image_png(co_out, compose_condition_image(base, patch, pmask));
      if (!co_seam.empty()) {
        Mask seam = Mask::zeros(pmask.resolution);
        const int h = pmask.resolution.height, w = pmask.resolution.width;
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x) {
            bool edge = false;
            for (int dy = -co_seam_width; dy <= co_seam_width && !edge; ++dy)
              for (int dx = -co_seam_width; dx <= co_seam_width && !edge; ++dx) {
                const int yy = y + dy, xx = x + dx;
                if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                edge = pmask.at(yy, xx) != pmask.at(y, x);
              }
            seam.at(y, x) = edge ? 1 : 0;
          }
        write_mask_png(co_seam, seam);
      }
      std::cout << "wrote " << co_out << "\n";
    } else if (tc->parsed()) {
      const auto m = load_manifest(tc_manifest);
      const auto train_set = load_dataset(m, Split::kTrain);
      const auto val_set = load_dataset(m, Split::kVal);
      ccfg.seed = seed;
      const auto clf = train_classifier(train_set, val_set, m.vocab, ccfg);
      save_classifier(clf, tc_out);
      std::cout << "saved " << tc_out << "; final train loss "
                << fmt("%.4f", clf.final_loss) << "; val script accuracy "
                << fmt("%.3f", clf.val_script_accuracy) << ", character accuracy "
                << fmt("%.3f", clf.val_character_accuracy) << " (" << val_set.size()
                << " val images)\n";
    } else if (ev->parsed()) {
      const auto ckpt = load_checkpoint(ev_ckpt);
      const auto clf = load_classifier(ev_clf);
      const auto val = load_split(load_manifest(ev_manifest), Split::kVal, ev_limit);
      const auto report =
          eval_inpainting(ckpt, clf, val, ev_mf.spec(), ev_per_cell, seed,
                          EvalOptions{ev_rs.jump_len, ev_rs.n_resample}, progress);
      const auto text = render_report_text(report);
      std::cout << text;
      if (!ev_text.empty()) write_text(ev_text, text);
      if (!ev_json.empty()) write_text(ev_json, report_to_json(report));
    } else if (cp->parsed()) {
      const auto ckpt = load_checkpoint(cp_ckpt);
      const auto clf = load_classifier(cp_clf);
      const auto val = load_split(load_manifest(cp_manifest), Split::kVal, 0);
      const auto r = compare_inpaint_vs_generate(ckpt, clf, val, cp_mf.spec(), cp_n, seed,
                                                 EvalOptions{cp_rs.jump_len, cp_rs.n_resample},
                                                 progress);
      std::cout << "n " << r.n << "  mean mask coverage " << fmt("%.3f", r.mean_mask_coverage)
                << "\nacc_inpaint  " << fmt("%.3f", r.acc_inpaint) << "\nacc_generate "
                << fmt("%.3f", r.acc_generate) << "\ndelta        " << fmt("%+.3f", r.delta)
                << "\n(published reference: 0.95 vs 0.85, delta +0.10)\n";
      if (!cp_json.empty()) write_text(cp_json, compare_to_json(r));
    } else if (sm->parsed()) {
      const auto ckpt = load_checkpoint(sm_ckpt);
      const auto m = load_manifest(sm_manifest);
      const auto val = load_split(m, Split::kVal, 0);
      const auto schedule = make_schedule(ckpt.meta.schedule);
      std::vector<SurveyItem> reals, fakes;
      for (const auto& ex : val)
        reals.push_back({"real-" + std::to_string(ex.entry), m.entries[ex.entry].path,
                         ex.image, 0});
      const int pool = sm_pool > 0 ? sm_pool : sm_k + 2;
      for (int i = 0; i < pool; ++i) {
        const auto& ex = val[std::size_t(i) % val.size()];
        InpaintConfig icfg;
        icfg.jump_len = sm_rs.jump_len;
        icfg.n_resample = sm_rs.n_resample;
        icfg.seed = mix_seed(seed, "survey.inpaint", i);
        const Mask mask =
            random_mask(mix_seed(seed, "survey.mask", i), sm_mf.spec(), ex.image.resolution);
        const auto r = inpaint(ckpt.params, ex.image, mask, ex.label, schedule, icfg);
        fakes.push_back({"fake-" + std::to_string(i), m.entries[ex.entry].path, r.image,
                         icfg.seed});
        progress(std::size_t(i) + 1, std::size_t(pool));
      }
      const auto bundle = make_survey(reals, fakes, sm_n, sm_k, seed);
      write_survey_bundle(bundle, reals, fakes, sm_out, sm_key);
      std::cout << "wrote " << bundle.questions.size() << " questions to " << sm_out
                << ", key to " << sm_key << "\n";
    } else if (ss->parsed()) {
      const auto key = load_survey_key(ss_key);
      const auto bytes = read_file_bytes(ss_resp);
      const auto score =
          score_survey(key, parse_responses_csv(std::string(bytes.begin(), bytes.end())));
      std::cout << render_score_text(score);
      if (!ss_json.empty()) write_text(ss_json, score_to_json(score));
    } else if (sv->parsed()) {
      ServiceConfig cfg = ServiceConfig::from_env();
      if (!sv_ckpt.empty()) cfg.checkpoint = sv_ckpt;
      if (!sv_bind.empty()) cfg.bind = sv_bind;
      if (sv_workers > 0) cfg.workers = sv_workers;
      if (sv_pending >= 0) cfg.max_pending = sv_pending;
      try {
        cfg.validate();
      } catch (const Error& e) {
        throw UsageError(e.what());
      }
      serve(cfg);
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
