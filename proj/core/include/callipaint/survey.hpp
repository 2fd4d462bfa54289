#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "callipaint/image.hpp"

namespace callipaint {

struct SurveyItem {
  std::string id;
  std::string source;  // gold image the item derives from; reals are their own source
  GlyphImage image;
  std::uint64_t seed = 0;  // generation seed for inpainted items
};

struct SurveyOption {
  std::string item;
  std::string source;
  bool real = false;
  std::uint64_t seed = 0;

  friend bool operator==(const SurveyOption&, const SurveyOption&) = default;
};

struct SurveyQuestion {
  std::string id;
  int type = 1;  // 1: find the genuine one, 2: find the fake one
  std::vector<SurveyOption> options;
  int correct = 0;

  friend bool operator==(const SurveyQuestion&, const SurveyQuestion&) = default;
};

struct SurveyBundle {
  int k = 4;
  std::uint64_t seed = 0;
  std::vector<SurveyQuestion> questions;

  friend bool operator==(const SurveyBundle&, const SurveyBundle&) = default;
};

// Throws kInsufficientPool when a question cannot be filled with options
// from distinct sources.
SurveyBundle make_survey(const std::vector<SurveyItem>& real_pool,
                         const std::vector<SurveyItem>& fake_pool,
                         int n_per_type, int k, std::uint64_t seed);

std::string option_label(int index);

// Writes <dir>/<question>/<label>.png and <dir>/questions.json; the answer
// key goes to `key_path`, which must lie outside `dir`.
void write_survey_bundle(const SurveyBundle& bundle,
                         const std::vector<SurveyItem>& real_pool,
                         const std::vector<SurveyItem>& fake_pool,
                         const std::filesystem::path& dir,
                         const std::filesystem::path& key_path);

struct SurveyKeyEntry {
  int type = 1;
  int correct = 0;
};

struct SurveyKey {
  int k = 4;
  std::map<std::string, SurveyKeyEntry> questions;
};

SurveyKey key_of(const SurveyBundle& bundle);
std::string survey_key_json(const SurveyBundle& bundle);
SurveyKey parse_survey_key(const std::string& json_text);
SurveyKey load_survey_key(const std::filesystem::path& path);

struct SurveyResponse {
  std::string question;
  int choice = 0;
  std::string respondent;
  std::string group;
};

// CSV rows: question_id,choice[,respondent[,group]]. A header row starting
// with "question_id" is skipped. Choices are option letters or 0-based indices.
std::vector<SurveyResponse> parse_responses_csv(const std::string& text);

struct TypeScore {
  long answered = 0;
  long correct = 0;
  double accuracy = 0.0;
  double p_value = 1.0;
};

struct GroupScore {
  std::string group;
  TypeScore type1, type2, total;
};

struct SurveyScore {
  int k = 4;
  TypeScore type1, type2, total;
  std::vector<GroupScore> groups;  // present when any response carries a group
};

// Throws kInvalidArgument on unknown question ids, out-of-range choices and
// repeated (respondent, question) pairs.
SurveyScore score_survey(const SurveyKey& key,
                         const std::vector<SurveyResponse>& responses);

// Two-sided exact binomial test of `successes` out of `n` against p0 = 1/k:
// sums the probabilities of all outcomes no more likely than the observed one.
double binomial_two_sided_p(long n, long successes, int k);

std::string render_score_text(const SurveyScore& score);
std::string score_to_json(const SurveyScore& score);

}  // namespace callipaint
