#include "callipaint/survey.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "callipaint/error.hpp"
#include "callipaint/png_io.hpp"
#include "callipaint/rng.hpp"

namespace callipaint {
namespace {

const char* prompt_of(int type) {
  return type == 1 ? "Find the genuine calligraphy" : "Find the fake calligraphy";
}

// One odd item from `odd_pool`, k-1 others from `rest` with pairwise distinct
// sources, all sources distinct from the odd one's.
SurveyQuestion build_question(int type, const std::vector<SurveyItem>& odd_pool,
                              const std::vector<SurveyItem>& rest, int k, Rng& rng) {
  require(!odd_pool.empty(), ErrorKind::kInsufficientPool,
          std::string(type == 1 ? "real" : "inpainted") + " pool is empty");
  const auto& odd = odd_pool[rng.uniform_int(0, std::int64_t(odd_pool.size()) - 1)];
  std::vector<std::size_t> order(rest.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng.engine());
  std::set<std::string> used{odd.source};
  SurveyQuestion q;
  q.type = type;
  q.options.push_back({odd.id, odd.source, type == 1, odd.seed});
  for (std::size_t i : order) {
    if (int(q.options.size()) == k) break;
    if (!used.insert(rest[i].source).second) continue;
    q.options.push_back({rest[i].id, rest[i].source, type != 1, rest[i].seed});
  }
  require(int(q.options.size()) == k, ErrorKind::kInsufficientPool,
          std::string(type == 1 ? "inpainted" : "real") + " pool has too few distinct "
              "sources for " + std::to_string(k) + " options");
  std::shuffle(q.options.begin(), q.options.end(), rng.engine());
  for (int i = 0; i < k; ++i)
    if (q.options[i].item == odd.id) q.correct = i;
  return q;
}

const SurveyItem& find_item(const std::vector<SurveyItem>& pool, const std::string& id) {
  for (const auto& it : pool)
    if (it.id == id) return it;
  fail(ErrorKind::kInvalidArgument, "survey item '" + id + "' not found in its pool");
}

int parse_choice(const std::string& s, int k) {
  int idx = -1;
  if (s.size() == 1 && std::isalpha(static_cast<unsigned char>(s[0]))) {
    idx = std::toupper(static_cast<unsigned char>(s[0])) - 'A';
  } else {
    try {
      std::size_t used = 0;
      idx = std::stoi(s, &used);
      if (used != s.size()) idx = -1;
    } catch (const std::exception&) {
      idx = -1;
    }
  }
  require(idx >= 0 && (k <= 0 || idx < k), ErrorKind::kInvalidArgument,
          "invalid choice '" + s + "'");
  return idx;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

void finish(TypeScore& t, int k) {
  t.accuracy = t.answered > 0 ? double(t.correct) / double(t.answered) : 0.0;
  t.p_value = binomial_two_sided_p(t.answered, t.correct, k);
}

std::string fmt(double v, const char* f) {
  char buf[32];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

nlohmann::ordered_json type_json(const TypeScore& t) {
  return {{"answered", t.answered},
          {"correct", t.correct},
          {"accuracy", t.accuracy},
          {"p_value", t.p_value}};
}

}  // namespace

std::string option_label(int index) {
  require(index >= 0 && index < 26, ErrorKind::kOutOfRange, "option index out of range");
  return std::string(1, char('A' + index));
}

SurveyBundle make_survey(const std::vector<SurveyItem>& real_pool,
                         const std::vector<SurveyItem>& fake_pool, int n_per_type,
                         int k, std::uint64_t seed) {
  require(n_per_type >= 0, ErrorKind::kInvalidArgument,
          "questions per type must be non-negative");
  require(k >= 2 && k <= 26, ErrorKind::kInvalidArgument, "k must lie in [2, 26]");
  std::set<std::string> ids;
  for (const auto* pool : {&real_pool, &fake_pool})
    for (const auto& it : *pool)
      require(ids.insert(it.id).second, ErrorKind::kInvalidArgument,
              "duplicate survey item id '" + it.id + "'");
  SurveyBundle b;
  b.k = k;
  b.seed = seed;
  for (int i = 0; i < n_per_type; ++i) {
    Rng r1 = Rng::substream(seed, "survey.type1", i);
    b.questions.push_back(build_question(1, real_pool, fake_pool, k, r1));
    Rng r2 = Rng::substream(seed, "survey.type2", i);
    b.questions.push_back(build_question(2, fake_pool, real_pool, k, r2));
  }
  Rng order = Rng::substream(seed, "survey.order");
  std::shuffle(b.questions.begin(), b.questions.end(), order.engine());
  for (std::size_t i = 0; i < b.questions.size(); ++i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "q%03zu", i + 1);
    b.questions[i].id = buf;
  }
  return b;
}

void write_survey_bundle(const SurveyBundle& bundle,
                         const std::vector<SurveyItem>& real_pool,
                         const std::vector<SurveyItem>& fake_pool,
                         const std::filesystem::path& dir,
                         const std::filesystem::path& key_path) {
  namespace fs = std::filesystem;
  const auto abs_dir = fs::weakly_canonical(fs::absolute(dir));
  const auto abs_key = fs::weakly_canonical(fs::absolute(key_path));
  const auto rel = abs_key.lexically_relative(abs_dir);
  require(rel.empty() || *rel.begin() == "..", ErrorKind::kInvalidArgument,
          "answer key must be written outside the bundle directory");
  fs::create_directories(dir);
  nlohmann::ordered_json qs = nlohmann::ordered_json::array();
  for (const auto& q : bundle.questions) {
    fs::create_directories(dir / q.id);
    nlohmann::ordered_json opts = nlohmann::ordered_json::array();
    for (int i = 0; i < int(q.options.size()); ++i) {
      const auto& o = q.options[i];
      const auto& item = find_item(o.real ? real_pool : fake_pool, o.item);
      const std::string rel_path = q.id + "/" + option_label(i) + ".png";
      write_image_png(dir / rel_path, item.image);
      opts.push_back({{"label", option_label(i)}, {"image", rel_path}});
    }
    qs.push_back({{"id", q.id}, {"type", q.type}, {"prompt", prompt_of(q.type)},
                  {"options", opts}});
  }
  nlohmann::ordered_json j{{"k", bundle.k}, {"questions", qs}};
  const std::string text = j.dump(2) + "\n";
  write_file_bytes(dir / "questions.json",
                   std::vector<std::uint8_t>(text.begin(), text.end()));
  if (key_path.has_parent_path()) fs::create_directories(key_path.parent_path());
  const std::string key = survey_key_json(bundle);
  write_file_bytes(key_path, std::vector<std::uint8_t>(key.begin(), key.end()));
}

SurveyKey key_of(const SurveyBundle& bundle) {
  SurveyKey key;
  key.k = bundle.k;
  for (const auto& q : bundle.questions) key.questions[q.id] = {q.type, q.correct};
  return key;
}

std::string survey_key_json(const SurveyBundle& bundle) {
  nlohmann::ordered_json qs = nlohmann::ordered_json::array();
  for (const auto& q : bundle.questions) {
    nlohmann::ordered_json opts = nlohmann::ordered_json::array();
    for (int i = 0; i < int(q.options.size()); ++i) {
      const auto& o = q.options[i];
      opts.push_back({{"label", option_label(i)},
                      {"item", o.item},
                      {"source", o.source},
                      {"origin", o.real ? "real" : "inpainted"},
                      {"seed", o.seed}});
    }
    qs.push_back({{"id", q.id},
                  {"type", q.type},
                  {"correct", option_label(q.correct)},
                  {"options", opts}});
  }
  nlohmann::ordered_json j{{"k", bundle.k}, {"seed", bundle.seed}, {"questions", qs}};
  return j.dump(2) + "\n";
}

SurveyKey parse_survey_key(const std::string& text) {
  SurveyKey key;
  try {
    const auto j = nlohmann::json::parse(text);
    key.k = j.at("k").get<int>();
    for (const auto& q : j.at("questions")) {
      const auto id = q.at("id").get<std::string>();
      const int type = q.at("type").get<int>();
      require(type == 1 || type == 2, ErrorKind::kFormat,
              "question '" + id + "' has invalid type");
      const int correct = parse_choice(q.at("correct").get<std::string>(), key.k);
      require(key.questions.emplace(id, SurveyKeyEntry{type, correct}).second,
              ErrorKind::kFormat, "duplicate question id '" + id + "' in key");
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, std::string("answer key: ") + e.what());
  }
  return key;
}

SurveyKey load_survey_key(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return parse_survey_key(std::string(bytes.begin(), bytes.end()));
}

std::vector<SurveyResponse> parse_responses_csv(const std::string& text) {
  std::vector<SurveyResponse> out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::istringstream ls(line);
    std::string col;
    while (std::getline(ls, col, ',')) cols.push_back(trim(col));
    if (lineno == 1 && !cols.empty() && cols[0] == "question_id") continue;
    require(cols.size() >= 2 && cols.size() <= 4, ErrorKind::kFormat,
            "responses line " + std::to_string(lineno) + ": expected 2 to 4 columns");
    SurveyResponse r;
    r.question = cols[0];
    try {
      r.choice = parse_choice(cols[1], 0);
    } catch (const Error&) {
      fail(ErrorKind::kFormat, "responses line " + std::to_string(lineno) +
                                   ": invalid choice '" + cols[1] + "'");
    }
    if (cols.size() > 2) r.respondent = cols[2];
    if (cols.size() > 3) r.group = cols[3];
    out.push_back(std::move(r));
  }
  return out;
}

double binomial_two_sided_p(long n, long x, int k) {
  require(k >= 2, ErrorKind::kInvalidArgument, "k must be at least 2");
  require(n >= 0 && x >= 0 && x <= n, ErrorKind::kInvalidArgument,
          "successes must lie in [0, n]");
  if (n == 0) return 1.0;
  // Outcome weights C(n, c) (k-1)^(n-c) over k^n, exact while k^n fits.
  if (double(n) * std::log2(double(k)) < 63.0) {
    std::vector<unsigned long long> w(n + 1);
    unsigned long long binom = 1;
    for (long c = 0; c <= n; ++c) {
      unsigned long long pw = 1;
      for (long i = 0; i < n - c; ++i) pw *= static_cast<unsigned long long>(k - 1);
      w[c] = binom * pw;
      binom = static_cast<unsigned long long>(
          static_cast<unsigned __int128>(binom) * static_cast<unsigned long long>(n - c) /
          static_cast<unsigned long long>(c + 1));
    }
    unsigned long long total = 1;
    for (long i = 0; i < n; ++i) total *= static_cast<unsigned long long>(k);
    unsigned long long sum = 0;
    for (long c = 0; c <= n; ++c)
      if (w[c] <= w[x]) sum += w[c];
    return double(sum) / double(total);
  }
  const double p0 = 1.0 / k;
  auto logp = [&](long c) {
    return std::lgamma(double(n) + 1) - std::lgamma(double(c) + 1) -
           std::lgamma(double(n - c) + 1) + double(c) * std::log(p0) +
           double(n - c) * std::log1p(-p0);
  };
  const double lx = logp(x) + std::log1p(1e-7);
  double sum = 0;
  for (long c = 0; c <= n; ++c) {
    const double l = logp(c);
    if (l <= lx) sum += std::exp(l);
  }
  return std::min(1.0, sum);
}

SurveyScore score_survey(const SurveyKey& key,
                         const std::vector<SurveyResponse>& responses) {
  SurveyScore s;
  s.k = key.k;
  std::set<std::pair<std::string, std::string>> seen;
  std::vector<std::string> group_order;
  std::unordered_map<std::string, GroupScore> groups;
  bool any_group = false;
  for (const auto& r : responses) {
    const auto it = key.questions.find(r.question);
    require(it != key.questions.end(), ErrorKind::kInvalidArgument,
            "unknown question id '" + r.question + "'");
    require(r.choice >= 0 && r.choice < key.k, ErrorKind::kInvalidArgument,
            "choice out of range for question '" + r.question + "'");
    require(seen.emplace(r.respondent, r.question).second, ErrorKind::kInvalidArgument,
            "duplicate response to question '" + r.question + "'" +
                (r.respondent.empty() ? "" : " by '" + r.respondent + "'"));
    const bool ok = r.choice == it->second.correct;
    auto add = [&](TypeScore& t) {
      ++t.answered;
      t.correct += ok;
    };
    add(it->second.type == 1 ? s.type1 : s.type2);
    add(s.total);
    any_group = any_group || !r.group.empty();
    auto [g, inserted] = groups.try_emplace(r.group);
    if (inserted) {
      g->second.group = r.group;
      group_order.push_back(r.group);
    }
    add(it->second.type == 1 ? g->second.type1 : g->second.type2);
    add(g->second.total);
  }
  finish(s.type1, s.k);
  finish(s.type2, s.k);
  finish(s.total, s.k);
  if (any_group) {
    std::sort(group_order.begin(), group_order.end());
    for (const auto& name : group_order) {
      auto g = groups.at(name);
      finish(g.type1, s.k);
      finish(g.type2, s.k);
      finish(g.total, s.k);
      s.groups.push_back(std::move(g));
    }
  }
  return s;
}

std::string render_score_text(const SurveyScore& s) {
  std::ostringstream o;
  auto row = [&](const std::string& label, const TypeScore& t) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%-22s %8ld %8ld %9.3f %12s\n", label.c_str(),
                  t.answered, t.correct, t.accuracy, fmt(t.p_value, "%.4g").c_str());
    o << buf;
  };
  char head[128];
  std::snprintf(head, sizeof head, "%-22s %8s %8s %9s %12s\n", "question type",
                "answered", "correct", "accuracy", "p-value");
  o << head;
  row("type 1 (find genuine)", s.type1);
  row("type 2 (find fake)", s.type2);
  row("total", s.total);
  for (const auto& g : s.groups) {
    const std::string name = g.group.empty() ? "(none)" : g.group;
    o << "\ngroup " << name << '\n';
    row("type 1", g.type1);
    row("type 2", g.type2);
    row("total", g.total);
  }
  o << "\nchance level 1/" << s.k << "; p-values are two-sided exact binomial\n";
  o << "published reference: type 1 accuracy 0.24, type 2 accuracy 0.06\n";
  return o.str();
}

std::string score_to_json(const SurveyScore& s) {
  nlohmann::ordered_json j;
  j["k"] = s.k;
  j["type1"] = type_json(s.type1);
  j["type2"] = type_json(s.type2);
  j["total"] = type_json(s.total);
  nlohmann::ordered_json groups = nlohmann::ordered_json::array();
  for (const auto& g : s.groups)
    groups.push_back({{"group", g.group},
                      {"type1", type_json(g.type1)},
                      {"type2", type_json(g.type2)},
                      {"total", type_json(g.total)}});
  j["groups"] = groups;
  j["reference"] = {{"type1_accuracy", 0.24}, {"type2_accuracy", 0.06}};
  return j.dump(2) + "\n";
}

}  // namespace callipaint
