#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "callipaint/image.hpp"

namespace callipaint {

// (character, script, style) ids into the manifest vocabularies.
struct ConditionLabel {
  int character = 0;
  int script = 0;
  int style = 0;

  friend bool operator==(const ConditionLabel&, const ConditionLabel&) = default;
};

struct Vocabularies {
  std::vector<std::string> character;
  std::vector<std::string> script;
  std::vector<std::string> style;

  // Throws kVocabulary naming the field when a name is unknown.
  ConditionLabel resolve(const std::string& character_name,
                         const std::string& script_name,
                         const std::string& style_name) const;
  void check(const ConditionLabel& label) const;
  void validate() const;

  friend bool operator==(const Vocabularies&, const Vocabularies&) = default;
};

enum class Split { kTrain, kVal };
const char* to_string(Split split);
Split parse_split(const std::string& s);

struct ManifestEntry {
  std::string path;  // relative to the manifest's directory
  std::string character;
  std::string script;
  std::string style;
  Split split = Split::kTrain;
};

struct Manifest {
  Vocabularies vocab;
  Resolution resolution;
  std::vector<ManifestEntry> entries;
  std::filesystem::path root;  // directory that entry paths are relative to

  ConditionLabel label_of(const ManifestEntry& e) const {
    return vocab.resolve(e.character, e.script, e.style);
  }
  std::size_t count(Split split) const;
  // Structural invariants: vocabulary uniqueness, label resolution, and no
  // (character, script, style) combination shared across splits.
  void validate() const;
};

struct FontSource {
  std::filesystem::path font;
  std::string script;
  std::string style;
};

// One group of characters rendered with each of its fonts.
struct CorpusGroup {
  std::u32string characters;
  std::vector<FontSource> fonts;
};

struct CorpusSpec {
  std::vector<CorpusGroup> groups;
  double val_fraction = 0.2;
  std::uint64_t seed = 0;
  Resolution resolution{32, 32};
};

// Reads {"characters": "...", "fonts": [{"path","script","style"}], ...} or
// {"groups": [...]} with optional val_fraction / seed / height / width.
// Relative font paths resolve against `base_dir`.
CorpusSpec load_corpus_spec(const std::filesystem::path& path);

constexpr const char* kManifestFileName = "manifest.jsonl";

// Renders every (character, font) pair under out_dir/images and writes
// out_dir/manifest.jsonl.
Manifest build_manifest(const CorpusSpec& spec,
                        const std::filesystem::path& out_dir);

std::string manifest_to_jsonl(const Manifest& m);
void save_manifest(const Manifest& m, const std::filesystem::path& path);
Manifest load_manifest(const std::filesystem::path& path);

struct Example {
  GlyphImage image;  // model range
  ConditionLabel label;
  std::size_t entry = 0;  // index into Manifest::entries
};

// Manifest order when shuffle_seed is empty, else a seeded permutation.
std::vector<Example> load_dataset(const Manifest& m, Split split,
                                  std::optional<std::uint64_t> shuffle_seed = {});

struct MaskSpec {
  int min_rects = 1;
  int max_rects = 3;
  double min_frac = 0.25;
  double max_frac = 0.5;
};

// Union of a uniformly drawn number of axis-aligned rectangles in
// [min_rects, max_rects]; side lengths are drawn uniformly
// in [min_frac, max_frac] of the image side and rounded to whole pixels.
Mask random_mask(std::uint64_t seed, const MaskSpec& spec, Resolution res);

// patch where patch_mask = 1, base elsewhere.
GlyphImage compose_condition_image(const GlyphImage& base,
                                   const GlyphImage& patch,
                                   const Mask& patch_mask);

}  // namespace callipaint
