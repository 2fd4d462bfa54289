#include "callipaint/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "callipaint/error.hpp"
#include "callipaint/font.hpp"
#include "callipaint/png_io.hpp"
#include "callipaint/rng.hpp"

namespace callipaint {
namespace {

using ojson = nlohmann::ordered_json;

int index_in(const std::vector<std::string>& v, const std::string& name) {
  auto it = std::find(v.begin(), v.end(), name);
  return it == v.end() ? -1 : static_cast<int>(it - v.begin());
}

std::string hex_code(char32_t cp) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "U+%04X", static_cast<unsigned>(cp));
  return buf;
}

std::string path_safe(const std::string& s) {
  std::string out;
  for (char c : s)
    out.push_back(std::isalnum(static_cast<unsigned char>(c)) || c == '-' ||
                          c == '_'
                      ? c
                      : '_');
  return out;
}

}  // namespace

ConditionLabel Vocabularies::resolve(const std::string& character_name,
                                     const std::string& script_name,
                                     const std::string& style_name) const {
  ConditionLabel l;
  l.character = index_in(character, character_name);
  require(l.character >= 0, ErrorKind::kVocabulary,
          "character: unknown name '" + character_name + "'");
  l.script = index_in(script, script_name);
  require(l.script >= 0, ErrorKind::kVocabulary,
          "script: unknown name '" + script_name + "'");
  l.style = index_in(style, style_name);
  require(l.style >= 0, ErrorKind::kVocabulary,
          "style: unknown name '" + style_name + "'");
  return l;
}

void Vocabularies::check(const ConditionLabel& l) const {
  require(l.character >= 0 && l.character < static_cast<int>(character.size()),
          ErrorKind::kOutOfRange, "character id out of vocabulary bounds");
  require(l.script >= 0 && l.script < static_cast<int>(script.size()),
          ErrorKind::kOutOfRange, "script id out of vocabulary bounds");
  require(l.style >= 0 && l.style < static_cast<int>(style.size()),
          ErrorKind::kOutOfRange, "style id out of vocabulary bounds");
}

void Vocabularies::validate() const {
  for (const auto* v : {&character, &script, &style}) {
    require(!v->empty(), ErrorKind::kVocabulary, "empty vocabulary");
    std::set<std::string> seen(v->begin(), v->end());
    require(seen.size() == v->size(), ErrorKind::kVocabulary,
            "duplicate vocabulary entry");
  }
}

const char* to_string(Split split) {
  return split == Split::kTrain ? "train" : "val";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "val") return Split::kVal;
  fail(ErrorKind::kInvalidArgument, "split must be 'train' or 'val', got '" + s + "'");
}

std::size_t Manifest::count(Split split) const {
  return static_cast<std::size_t>(std::count_if(
      entries.begin(), entries.end(),
      [&](const ManifestEntry& e) { return e.split == split; }));
}

void Manifest::validate() const {
  vocab.validate();
  require(resolution.height > 0 && resolution.width > 0,
          ErrorKind::kFormat, "manifest resolution must be positive");
  std::map<std::tuple<std::string, std::string, std::string>, Split> seen;
  for (const auto& e : entries) {
    label_of(e);
    auto key = std::make_tuple(e.character, e.script, e.style);
    auto [it, inserted] = seen.emplace(key, e.split);
    require(inserted || it->second == e.split, ErrorKind::kFormat,
            "combination (" + e.character + ", " + e.script + ", " + e.style +
                ") appears in both splits");
  }
}

CorpusSpec load_corpus_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::kIo, "cannot open corpus spec " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, "corpus spec: " + std::string(e.what()));
  }
  const auto base = path.parent_path();
  CorpusSpec spec;
  auto parse_group = [&](const nlohmann::json& g) {
    CorpusGroup group;
    group.characters = utf8_to_u32(g.at("characters").get<std::string>());
    for (const auto& f : g.at("fonts")) {
      std::filesystem::path fp = f.at("path").get<std::string>();
      if (fp.is_relative()) fp = base / fp;
      group.fonts.push_back({fp, f.at("script").get<std::string>(),
                             f.at("style").get<std::string>()});
    }
    return group;
  };
  try {
    if (j.contains("groups")) {
      for (const auto& g : j.at("groups")) spec.groups.push_back(parse_group(g));
    } else {
      spec.groups.push_back(parse_group(j));
    }
    spec.val_fraction = j.value("val_fraction", spec.val_fraction);
    spec.seed = j.value("seed", spec.seed);
    spec.resolution.height = j.value("height", spec.resolution.height);
    spec.resolution.width = j.value("width", spec.resolution.width);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, "corpus spec: " + std::string(e.what()));
  }
  return spec;
}

Manifest build_manifest(const CorpusSpec& spec,
                        const std::filesystem::path& out_dir) {
  require(!spec.groups.empty(), ErrorKind::kInvalidArgument,
          "corpus spec is empty");
  require(spec.val_fraction > 0.0 && spec.val_fraction < 1.0,
          ErrorKind::kInvalidArgument, "val fraction must lie in (0, 1)");

  struct Pair {
    char32_t cp;
    const FontSource* font;
  };
  std::vector<Pair> pairs;
  std::set<std::tuple<char32_t, std::string, std::string>> seen;
  for (const auto& g : spec.groups) {
    require(!g.characters.empty() && !g.fonts.empty(),
            ErrorKind::kInvalidArgument,
            "corpus group needs at least one character and one font");
    for (const auto& f : g.fonts)
      for (char32_t cp : g.characters) {
        auto key = std::make_tuple(cp, f.script, f.style);
        require(seen.insert(key).second, ErrorKind::kInvalidArgument,
                "duplicate corpus pair (" + hex_code(cp) + ", " + f.script +
                    ", " + f.style + ")");
        pairs.push_back({cp, &f});
      }
  }

  Manifest m;
  m.resolution = spec.resolution;
  m.root = out_dir;
  std::set<std::string> chars, scripts, styles;
  for (const auto& p : pairs) {
    chars.insert(u32_to_utf8(p.cp));
    scripts.insert(p.font->script);
    styles.insert(p.font->style);
  }
  m.vocab.character.assign(chars.begin(), chars.end());
  m.vocab.script.assign(scripts.begin(), scripts.end());
  m.vocab.style.assign(styles.begin(), styles.end());

  std::vector<std::size_t> order(pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng = Rng::substream(spec.seed, "corpus.split");
  std::shuffle(order.begin(), order.end(), rng.engine());
  const auto n_val = static_cast<std::size_t>(
      std::llround(spec.val_fraction * static_cast<double>(pairs.size())));
  std::vector<Split> split(pairs.size(), Split::kTrain);
  for (std::size_t k = 0; k < n_val && k < order.size(); ++k)
    split[order[k]] = Split::kVal;

  std::filesystem::create_directories(out_dir / "images");
  std::map<std::filesystem::path, Font> fonts;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    auto it = fonts.find(p.font->font);
    if (it == fonts.end())
      it = fonts.emplace(p.font->font, Font::load(p.font->font)).first;
    GlyphImage img;
    try {
      img = render_glyph(p.cp, it->second, spec.resolution);
    } catch (const Error& e) {
      throw Error(e.kind(), "rendering (" + hex_code(p.cp) + ", " +
                                p.font->font.filename().string() +
                                "): " + e.what());
    }
    const std::string rel = "images/" + path_safe(p.font->style) + "/" +
                            hex_code(p.cp).substr(2) + ".png";
    std::filesystem::create_directories((out_dir / rel).parent_path());
    write_image_png(out_dir / rel, img);
    m.entries.push_back({rel, u32_to_utf8(p.cp), p.font->script,
                         p.font->style, split[i]});
  }
  m.validate();
  save_manifest(m, out_dir / kManifestFileName);
  return m;
}

std::string manifest_to_jsonl(const Manifest& m) {
  std::ostringstream os;
  ojson header;
  header["vocab_character"] = m.vocab.character;
  header["vocab_script"] = m.vocab.script;
  header["vocab_style"] = m.vocab.style;
  header["height"] = m.resolution.height;
  header["width"] = m.resolution.width;
  os << header.dump() << "\n";
  for (const auto& e : m.entries) {
    ojson row;
    row["path"] = e.path;
    row["character"] = e.character;
    row["script"] = e.script;
    row["style"] = e.style;
    row["split"] = to_string(e.split);
    os << row.dump() << "\n";
  }
  return os.str();
}

void save_manifest(const Manifest& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorKind::kIo, "cannot write manifest " + path.string());
  out << manifest_to_jsonl(m);
}

Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::kIo, "cannot open manifest " + path.string());
  Manifest m;
  m.root = path.parent_path();
  std::string line;
  bool header = true;
  std::size_t lineno = 0;
  try {
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line);
      if (header) {
        m.vocab.character = j.at("vocab_character").get<std::vector<std::string>>();
        m.vocab.script = j.at("vocab_script").get<std::vector<std::string>>();
        m.vocab.style = j.at("vocab_style").get<std::vector<std::string>>();
        m.resolution = {j.at("height").get<int>(), j.at("width").get<int>()};
        header = false;
        continue;
      }
      m.entries.push_back({j.at("path").get<std::string>(),
                           j.at("character").get<std::string>(),
                           j.at("script").get<std::string>(),
                           j.at("style").get<std::string>(),
                           parse_split(j.at("split").get<std::string>())});
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, path.string() + ":" + std::to_string(lineno) +
                                 ": " + e.what());
  }
  require(!header, ErrorKind::kFormat, "manifest has no header line");
  m.validate();
  return m;
}

std::vector<Example> load_dataset(const Manifest& m, Split split,
                                  std::optional<std::uint64_t> shuffle_seed) {
  std::vector<Example> out;
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    const auto& e = m.entries[i];
    if (e.split != split) continue;
    const auto file = m.root / e.path;
    require(std::filesystem::exists(file), ErrorKind::kIo,
            "missing image file " + file.string());
    GlyphImage img = read_image_png(file);
    require(img.resolution == m.resolution, ErrorKind::kShapeMismatch,
            file.string() + ": resolution " + to_string(img.resolution) +
                " does not match manifest " + to_string(m.resolution));
    out.push_back({to_model(img), m.label_of(e), i});
  }
  if (shuffle_seed) {
    Rng rng = Rng::substream(*shuffle_seed, "corpus.shuffle");
    std::shuffle(out.begin(), out.end(), rng.engine());
  }
  return out;
}

Mask random_mask(std::uint64_t seed, const MaskSpec& spec, Resolution res) {
  require(spec.min_rects >= 0 && spec.min_rects <= spec.max_rects,
          ErrorKind::kInvalidArgument,
          "mask rectangle counts must satisfy 0 <= min <= max");
  require(spec.min_frac >= 0.0 && spec.min_frac <= spec.max_frac &&
              spec.max_frac <= 1.0,
          ErrorKind::kInvalidArgument,
          "mask fractions must satisfy 0 <= min <= max <= 1");
  Mask m = Mask::zeros(res);
  Rng rng = Rng::substream(seed, "corpus.mask");
  auto side = [&](int full) {
    const double f = spec.min_frac + (spec.max_frac - spec.min_frac) * rng.uniform();
    return std::clamp(static_cast<int>(std::lround(f * full)), 0, full);
  };
  const auto n_rects = rng.uniform_int(spec.min_rects, spec.max_rects);
  for (int r = 0; r < n_rects; ++r) {
    const int h = side(res.height);
    const int w = side(res.width);
    const int y0 = static_cast<int>(rng.uniform_int(0, res.height - h));
    const int x0 = static_cast<int>(rng.uniform_int(0, res.width - w));
    for (int y = y0; y < y0 + h; ++y)
      for (int x = x0; x < x0 + w; ++x) m.at(y, x) = 1;
  }
  return m;
}

GlyphImage compose_condition_image(const GlyphImage& base,
                                   const GlyphImage& patch,
                                   const Mask& patch_mask) {
  require(base.resolution == patch.resolution &&
              base.resolution == patch_mask.resolution,
          ErrorKind::kShapeMismatch,
          "compose: base, patch and mask must share one resolution");
  require(base.range == patch.range, ErrorKind::kInvalidArgument,
          "compose: base and patch must share a pixel range");
  GlyphImage out = base;
  for (std::size_t i = 0; i < out.pixels.size(); ++i)
    if (patch_mask.bits[i]) out.pixels[i] = patch.pixels[i];
  return out;
}

}  // namespace callipaint
