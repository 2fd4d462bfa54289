#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include <callipaint/classifier.hpp>
#include <callipaint/png_io.hpp>
#include <callipaint/survey.hpp>

#include "fixtures.hpp"

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(CALLIPAINT_CLI) + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

// Corpus, tiny checkpoint and classifier shared by the workflow cases.
struct Workspace {
  fixtures::TempDir dir{"cli"};
  bool ready = false;

  Workspace() {
    {
      std::ofstream spec(dir / "spec.json");
      spec << R"({"characters": "永和九年", "fonts": [)"
           << R"({"path": ")" << fixtures::font("MaShanZheng-subset.ttf").string()
           << R"(", "script": "regular", "style": "msz"},)"
           << R"({"path": ")" << fixtures::font("LiuJianMaoCao-subset.ttf").string()
           << R"(", "script": "cursive", "style": "ljmc"}], "seed": 2, "height": 16, "width": 16, "val_fraction": 0.25})";
    }
    ready = run("render-corpus --spec " + q(dir / "spec.json") + " --out " + q(dir / "corpus")) == 0 &&
            run("train --manifest " + q(dir / "corpus/manifest.jsonl") + " --out " +
                q(dir / "m.ckpt") +
                " --steps 3 --batch 2 --base-channels 4 --channel-mults 1,2 --time-embed-dim 8"
                " --groups 2 --timesteps 20 --beta-end 0.2 --seed 1") == 0 &&
            run("train-classifier --manifest " + q(dir / "corpus/manifest.jsonl") + " --out " +
                q(dir / "c.bin") + " --epochs 3 --seed 1") == 0;
  }
  fs::path operator/(const std::string& s) const { return dir / s; }
};

Workspace& ws() {
  static Workspace w;
  return w;
}

}  // namespace

TEST_CASE("usage errors exit with 1") {
  CHECK(run("") == 1);
  CHECK(run("no-such-command") == 1);
  CHECK(run("sample --bogus") == 1);
  CHECK(run("sample --checkpoint /nonexistent/x.ckpt --out /tmp/x.png --character a "
            "--script r --style s") == 1);
  CHECK(run("--help") == 0);
}

TEST_CASE("workflow builds") { REQUIRE(ws().ready); }

TEST_CASE("library failures exit with 2") {
  REQUIRE(ws().ready);
  CHECK(run("sample --checkpoint " + q(ws() / "m.ckpt") + " --out " + q(ws() / "x.png") +
            " --character 永 --script kaishu-typo --style msz") == 2);
  {
    std::ofstream junk(ws() / "junk.ckpt");
    junk << "not a checkpoint";
  }
  CHECK(run("sample --checkpoint " + q(ws() / "junk.ckpt") + " --out " + q(ws() / "x.png") +
            " --character 永 --script regular --style msz") == 2);
}

TEST_CASE("sample is reproducible per seed") {
  REQUIRE(ws().ready);
  const std::string base = "sample --checkpoint " + q(ws() / "m.ckpt") +
                           " --character 永 --script regular --style msz --seed 7 --out ";
  REQUIRE(run(base + q(ws() / "s1.png")) == 0);
  REQUIRE(run(base + q(ws() / "s2.png") + " --trace-dir " + q(ws() / "trace") +
              " --trace-stride 5") == 0);
  CHECK(slurp(ws() / "s1.png") == slurp(ws() / "s2.png"));
  CHECK(fs::exists(ws() / "trace/plan.json"));
}

TEST_CASE("inpainting with an empty mask returns the input file") {
  REQUIRE(ws().ready);
  const auto m = callipaint::load_manifest(ws() / "corpus/manifest.jsonl");
  const fs::path glyph = m.root / m.entries.at(0).path;
  callipaint::write_mask_png(ws() / "zero.png", callipaint::Mask::zeros({16, 16}));
  REQUIRE(run("inpaint --checkpoint " + q(ws() / "m.ckpt") + " --image " + q(glyph) +
              " --mask " + q(ws() / "zero.png") + " --character " + m.entries[0].character +
              " --script " + m.entries[0].script + " --style " + m.entries[0].style +
              " --seed 7 --jump-len 5 --n-resample 2 --out " + q(ws() / "ip.png")) == 0);
  CHECK(callipaint::read_image_png(ws() / "ip.png") == callipaint::read_image_png(glyph));
  CHECK(slurp(ws() / "ip.png") == slurp(glyph));
}

TEST_CASE("eval at zero coverage equals the classifier's gold accuracy") {
  REQUIRE(ws().ready);
  REQUIRE(run("eval --checkpoint " + q(ws() / "m.ckpt") + " --classifier " + q(ws() / "c.bin") +
              " --manifest " + q(ws() / "corpus/manifest.jsonl") +
              " --coverage 0 --out-json " + q(ws() / "eval.json") + " --out-text " +
              q(ws() / "eval.txt")) == 0);
  const auto j = nlohmann::json::parse(slurp(ws() / "eval.json"));
  const auto clf = callipaint::load_classifier(ws() / "c.bin");
  CHECK(j["total"]["script_accuracy"].get<double>() ==
        doctest::Approx(clf.val_script_accuracy).epsilon(1e-12));
  CHECK(j["total"]["character_accuracy"].get<double>() ==
        doctest::Approx(clf.val_character_accuracy).epsilon(1e-12));
  CHECK(slurp(ws() / "eval.txt").find("Total") != std::string::npos);
}

TEST_CASE("survey round trip through the command line") {
  REQUIRE(ws().ready);
  REQUIRE(run("survey-make --checkpoint " + q(ws() / "m.ckpt") + " --manifest " +
              q(ws() / "corpus/manifest.jsonl") + " --out " + q(ws() / "bundle") + " --key " +
              q(ws() / "key.json") + " --n-per-type 1 --k 2 --jump-len 5 --n-resample 1") == 0);
  CHECK(fs::exists(ws() / "bundle/questions.json"));
  const auto key = callipaint::load_survey_key(ws() / "key.json");
  std::ofstream csv(ws() / "resp.csv");
  csv << "question_id,choice\n";
  for (const auto& [id, e] : key.questions) csv << id << ',' << e.correct << '\n';
  csv.close();
  CHECK(run("survey-score --key " + q(ws() / "key.json") + " --responses " +
            q(ws() / "resp.csv") + " --out-json " + q(ws() / "score.json")) == 0);
  const auto j = nlohmann::json::parse(slurp(ws() / "score.json"));
  CHECK(j["total"]["accuracy"] == 1.0);
}
