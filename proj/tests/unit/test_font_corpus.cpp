#include <doctest.h>

#include <fstream>
#include <set>
#include <sstream>

#include <callipaint/corpus.hpp>
#include <callipaint/error.hpp>
#include <callipaint/font.hpp>
#include <callipaint/png_io.hpp>

#include "fixtures.hpp"

using namespace callipaint;
using fixtures::TempDir;

namespace {

const std::u32string kTen = U"永和九年天地人山水木";

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

CorpusSpec two_font_spec(std::u32string chars) {
  CorpusSpec spec;
  spec.groups.push_back({std::move(chars),
                         {{fixtures::font("MaShanZheng-subset.ttf"), "regular", "msz"},
                          {fixtures::font("LiuJianMaoCao-subset.ttf"), "cursive", "ljmc"}}});
  spec.val_fraction = 0.2;
  spec.seed = 3;
  return spec;
}

}  // namespace

TEST_CASE("space renders as blank background") {
  const auto img = render_glyph(U' ', fixtures::font("MaShanZheng-subset.ttf"), {32, 32});
  CHECK(img.range == PixelRange::kUnit8);
  CHECK(ink_coverage(img) == 0.0);
}

TEST_CASE("rendering is deterministic") {
  const auto f = Font::load(fixtures::font("LongCang-subset.ttf"));
  CHECK(render_glyph(U'永', f, {32, 32}) == render_glyph(U'永', f, {32, 32}));
}

TEST_CASE("CJK ink coverage regression band") {
  const auto img = render_glyph(U'永', fixtures::font("MaShanZheng-subset.ttf"), {32, 32});
  const double c = ink_coverage(img);
  CHECK(c > 0.02);
  CHECK(c < 0.6);
  CHECK(std::abs(c - 0.1631) <= 0.05);
}

TEST_CASE("every subset font covers the corpus characters") {
  for (const char* name : {"MaShanZheng-subset.ttf", "ZhiMangXing-subset.ttf",
                           "LongCang-subset.ttf", "LiuJianMaoCao-subset.ttf",
                           "YujiSyuku-subset.ttf", "YujiBoku-subset.ttf", "YujiMai-subset.ttf",
                           "ZenKurenaido-subset.ttf"}) {
    CAPTURE(name);
    const auto f = Font::load(fixtures::font(name));
    for (char32_t cp : std::u32string(U"永和九年天地人山水木日月火土石田"))
      CHECK(f.has_glyph(cp));
    CHECK_FALSE(f.has_glyph(U'A'));
  }
}

TEST_CASE("missing glyph and unreadable font are reported") {
  try {
    render_glyph(U'A', fixtures::font("MaShanZheng-subset.ttf"), {32, 32});
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kMissingGlyph);
  }
  try {
    Font::from_bytes({0, 1, 2, 3, 4, 5, 6, 7}, "junk");
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kUnreadableFont);
  }
}

TEST_CASE("utf8 helpers round trip") {
  const std::string s = "永和 A";
  const auto u = utf8_to_u32(s);
  REQUIRE(u.size() == 4);
  CHECK(u[0] == U'永');
  std::string back;
  for (char32_t c : u) back += u32_to_utf8(c);
  CHECK(back == s);
}

TEST_CASE("10 characters x 2 fonts split 16/4 and rebuild byte-identically") {
  TempDir a("corpus_a"), b("corpus_b");
  const auto spec = two_font_spec(kTen);
  const auto m = build_manifest(spec, a.path());
  CHECK(m.entries.size() == 20);
  CHECK(m.count(Split::kTrain) == 16);
  CHECK(m.count(Split::kVal) == 4);
  CHECK(m.vocab.character.size() == 10);
  CHECK(m.vocab.script == std::vector<std::string>{"cursive", "regular"});

  build_manifest(spec, b.path());
  CHECK(slurp(a / kManifestFileName) == slurp(b / kManifestFileName));

  const auto loaded = load_manifest(a / kManifestFileName);
  CHECK(loaded.vocab == m.vocab);
  CHECK(loaded.entries.size() == 20);
  const auto val = load_dataset(loaded, Split::kVal);
  CHECK(val.size() == 4);
  for (const auto& ex : val) {
    CHECK(ex.image.range == PixelRange::kModel);
    CHECK(ex.image.resolution == Resolution{32, 32});
  }
  const auto train = load_dataset(loaded, Split::kTrain, 9);
  CHECK(train.size() == 16);
  std::set<std::size_t> seen;
  for (const auto& ex : train) seen.insert(ex.entry);
  CHECK(seen.size() == 16);
}

TEST_CASE("a single pair is a legal manifest") {
  TempDir d("corpus_one");
  CorpusSpec spec;
  spec.groups.push_back({U"永", {{fixtures::font("LongCang-subset.ttf"), "semi-cursive", "lc"}}});
  const auto m = build_manifest(spec, d.path());
  CHECK(m.entries.size() == 1);
  CHECK(load_manifest(d / kManifestFileName).entries.size() == 1);
}

TEST_CASE("corpus spec file resolves relative font paths") {
  TempDir d("corpus_spec");
  {
    std::ofstream out(d / "spec.json");
    out << R"({"characters": "永和", "fonts": [{"path": ")"
        << fixtures::font("LongCang-subset.ttf").string()
        << R"(", "script": "semi-cursive", "style": "lc"}], "seed": 5, "height": 16, "width": 16})";
  }
  const auto spec = load_corpus_spec(d / "spec.json");
  REQUIRE(spec.groups.size() == 1);
  CHECK(spec.groups[0].characters == U"永和");
  CHECK(spec.seed == 5);
  CHECK(spec.resolution == Resolution{16, 16});
  const auto desk = load_corpus_spec(std::filesystem::path(CALLIPAINT_SOURCE_DIR) /
                                     "assets/corpus/desk.json");
  for (const auto& f : desk.groups.at(0).fonts) CHECK(std::filesystem::exists(f.font));
}

TEST_CASE("manifest validation rejects a combination shared across splits") {
  Manifest m;
  m.vocab = {{"a"}, {"r"}, {"s"}};
  m.entries = {{"x.png", "a", "r", "s", Split::kTrain}, {"y.png", "a", "r", "s", Split::kVal}};
  CHECK_THROWS_AS(m.validate(), Error);
  m.entries[1].character = "b";
  CHECK_THROWS_AS(m.validate(), Error);  // unknown character
}

TEST_CASE("vocabulary lookup names the failing field") {
  const Vocabularies v{{"a"}, {"regular"}, {"s"}};
  CHECK(v.resolve("a", "regular", "s") == ConditionLabel{0, 0, 0});
  try {
    v.resolve("a", "kaishu-typo", "s");
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kVocabulary);
    CHECK(std::string(e.what()).find("script") != std::string::npos);
  }
}

TEST_CASE("random masks") {
  const Resolution r{32, 32};
  SUBCASE("zero rectangles give an empty mask") {
    const auto m = random_mask(1, {0, 0, 0.25, 0.5}, r);
    CHECK(m.coverage() == 0.0);
  }
  SUBCASE("one half-side square covers exactly a quarter") {
    for (std::uint64_t s = 0; s < 20; ++s)
      CHECK(random_mask(s, {1, 1, 0.5, 0.5}, r).coverage() == 0.25);
  }
  SUBCASE("deterministic per seed") {
    const MaskSpec spec;
    CHECK(random_mask(42, spec, r) == random_mask(42, spec, r));
    int differ = 0;
    for (std::uint64_t s = 0; s < 10; ++s)
      differ += random_mask(s, spec, r) != random_mask(s + 100, spec, r);
    CHECK(differ > 5);
  }
  SUBCASE("coverage bounded by the rectangle sizes") {
    const MaskSpec spec{1, 3, 0.25, 0.5};
    for (std::uint64_t s = 0; s < 200; ++s) {
      const double c = random_mask(s, spec, r).coverage();
      CHECK(c >= 0.0625 - 1e-12);
      CHECK(c <= 3 * 0.25 + 1e-12);
    }
  }
  SUBCASE("invalid specs") {
    CHECK_THROWS_AS(random_mask(0, {2, 1, 0.25, 0.5}, r), Error);
    CHECK_THROWS_AS(random_mask(0, {1, 1, 0.6, 0.5}, r), Error);
    CHECK_THROWS_AS(random_mask(0, {-1, 1, 0.25, 0.5}, r), Error);
  }
}

TEST_CASE("compose condition image") {
  const Resolution r{32, 32};
  const auto base = to_unit8(fixtures::random_model_image(r, 1));
  const auto patch = to_unit8(fixtures::random_model_image(r, 2));
  CHECK(compose_condition_image(base, patch, Mask::zeros(r)) == base);
  CHECK(compose_condition_image(base, patch, Mask::ones(r)) == patch);
  Mask left(r);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 16; ++x) left.at(y, x) = 1;
  const auto out = compose_condition_image(base, patch, left);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x)
      CHECK(out.at(y, x) == (x < 16 ? patch.at(y, x) : base.at(y, x)));
  CHECK_THROWS_AS(compose_condition_image(base, patch, Mask::zeros({16, 16})), Error);
}
