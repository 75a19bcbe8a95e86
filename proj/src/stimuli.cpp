#include "headprobe/stimuli.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "headprobe/error.hpp"

namespace headprobe {
namespace {

std::string read_text(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

[[noreturn]] void fail(std::string_view source, std::string_view set_id, std::string_view field,
                       std::string_view what) {
  throw IngestionError(std::string(source) + ": set " + std::string(set_id) + ", " +
                       std::string(field) + ": " + std::string(what));
}

ByteSpan read_span(const nlohmann::json& v, const std::string& text, std::string_view source,
                   std::string_view set_id, const std::string& field) {
  if (!v.is_array() || v.size() != 2 || !v[0].is_number_unsigned() || !v[1].is_number_unsigned()) {
    fail(source, set_id, field, "expected [begin, end] byte offsets");
  }
  ByteSpan s{v[0].get<std::size_t>(), v[1].get<std::size_t>()};
  if (s.begin >= s.end || s.end > text.size()) {
    fail(source, set_id, field,
         "span [" + std::to_string(s.begin) + ", " + std::to_string(s.end) +
             ") out of bounds for text of " + std::to_string(text.size()) + " bytes");
  }
  return s;
}

void check_set(const StimulusSet& set, std::string_view source) {
  const auto all = Condition::all();
  for (const Condition c : all) {
    const SentenceVariant& v = set.at(c);
    const std::string field = "variants[" + c.label() + "]";
    if (!(v.dependent.end <= v.distractor.begin && v.distractor.end <= v.verb.begin)) {
      fail(source, set.set_id, field, "spans must be ordered dependent < distractor < verb");
    }
    if (v.word(v.verb) != set.at(all[0]).word(set.at(all[0]).verb)) {
      fail(source, set.set_id, field + ".verb",
           "verb \"" + std::string(v.word(v.verb)) + "\" differs from \"" +
               std::string(set.at(all[0]).word(set.at(all[0]).verb)) + "\"");
    }
  }
  // Each noun word is shared by exactly the two conditions it defines.
  auto check_noun = [&](const char* name, auto span_of, bool Condition::*axis) {
    auto word = [&](Condition c) { return set.at(c).word(span_of(set.at(c))); };
    for (bool plausible : {true, false}) {
      Condition a{true, true}, b{true, false};
      if (axis == &Condition::dependent_plausible) {
        a = {plausible, true}, b = {plausible, false};
      } else {
        a = {true, plausible}, b = {false, plausible};
      }
      if (word(a) != word(b)) {
        fail(source, set.set_id, name,
             "\"" + std::string(word(a)) + "\" in " + a.label() + " but \"" +
                 std::string(word(b)) + "\" in " + b.label());
      }
    }
    Condition pl{true, true}, impl{true, true};
    (impl.*axis) = false;
    if (word(pl) == word(impl)) {
      fail(source, set.set_id, name,
           "plausible and implausible variants use the same word \"" + std::string(word(pl)) + "\"");
    }
  };
  check_noun("dependent", [](const SentenceVariant& v) { return v.dependent; },
             &Condition::dependent_plausible);
  check_noun("distractor", [](const SentenceVariant& v) { return v.distractor; },
             &Condition::distractor_plausible);
}

}  // namespace

std::string Condition::label() const {
  return std::string(dependent_plausible ? "pl" : "impl") + "-" +
         (distractor_plausible ? "pl" : "impl");
}

Condition Condition::parse(std::string_view label) {
  for (const Condition c : all()) {
    if (c.label() == label) return c;
  }
  throw ConfigError("unknown condition \"" + std::string(label) +
                    "\", expected pl-pl, pl-impl, impl-pl or impl-impl");
}

std::vector<StimulusSet> parse_stimuli(std::string_view json_text, std::string_view source) {
  std::vector<StimulusSet> sets;
  if (blank(json_text)) return sets;

  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw IngestionError(std::string(source) + ": " + e.what());
  }
  if (!doc.is_array()) throw IngestionError(std::string(source) + ": top level must be an array of sets");

  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& js = doc[i];
    const std::string fallback_id = "#" + std::to_string(i);
    if (!js.is_object()) fail(source, fallback_id, "set", "expected an object");
    if (!js.contains("set_id") || !(js["set_id"].is_string() || js["set_id"].is_number_integer())) {
      fail(source, fallback_id, "set_id", "missing or not a string");
    }
    StimulusSet set;
    set.set_id = js["set_id"].is_string() ? js["set_id"].get<std::string>() : js["set_id"].dump();
    if (std::any_of(sets.begin(), sets.end(), [&](const StimulusSet& s) { return s.set_id == set.set_id; })) {
      fail(source, set.set_id, "set_id", "duplicate set id");
    }
    if (!js.contains("variants") || !js["variants"].is_array() || js["variants"].size() != 4) {
      fail(source, set.set_id, "variants", "expected exactly 4 variants");
    }
    std::array<bool, 4> seen{};
    for (const auto& jv : js["variants"]) {
      if (!jv.is_object() || !jv.contains("condition") || !jv["condition"].is_string()) {
        fail(source, set.set_id, "variants.condition", "missing or not a string");
      }
      Condition c;
      try {
        c = Condition::parse(jv["condition"].get<std::string>());
      } catch (const ConfigError& e) {
        fail(source, set.set_id, "variants.condition", e.what());
      }
      const std::string field = "variants[" + c.label() + "]";
      if (seen[c.index()]) fail(source, set.set_id, field, "condition appears twice");
      seen[c.index()] = true;
      if (!jv.contains("text") || !jv["text"].is_string()) {
        fail(source, set.set_id, field + ".text", "missing or not a string");
      }
      SentenceVariant v;
      v.text = jv["text"].get<std::string>();
      for (const char* key : {"dependent", "distractor", "verb"}) {
        if (!jv.contains(key)) fail(source, set.set_id, field + "." + key, "missing");
      }
      v.dependent = read_span(jv["dependent"], v.text, source, set.set_id, field + ".dependent");
      v.distractor = read_span(jv["distractor"], v.text, source, set.set_id, field + ".distractor");
      v.verb = read_span(jv["verb"], v.text, source, set.set_id, field + ".verb");
      set.variants[c.index()] = std::move(v);
    }
    check_set(set, source);
    sets.push_back(std::move(set));
  }
  return sets;
}

std::vector<StimulusSet> load_stimuli(const std::filesystem::path& file) {
  return parse_stimuli(read_text(file), file.string());
}

AlignmentResult align_and_filter(const std::vector<StimulusSet>& sets, const Tokenizer& tokenizer) {
  AlignmentResult result;
  for (const StimulusSet& set : sets) {
    // Single-token screen over every target of every variant.
    std::string reason;
    for (const Condition c : Condition::all()) {
      const SentenceVariant& v = set.at(c);
      for (auto [name, span] : {std::pair{"dependent", v.dependent}, std::pair{"distractor", v.distractor},
                                std::pair{"verb", v.verb}}) {
        const bool leading_space = span.begin > 0 && v.text[span.begin - 1] == ' ';
        const std::string_view word = v.word(span);
        if (!tokenizer.single_token_id(word, leading_space)) {
          const auto n = tokenizer.encode((leading_space ? " " : "") + std::string(word)).size();
          reason = std::string(name) + " \"" + std::string(word) + "\" in " + c.label() + " encodes to " +
                   std::to_string(n) + " tokens";
          break;
        }
      }
      if (!reason.empty()) break;
    }
    if (!reason.empty()) {
      result.excluded.push_back({set.set_id, reason});
      continue;
    }

    AlignedSet aligned;
    aligned.set_id = set.set_id;
    for (const Condition c : Condition::all()) {
      const SentenceVariant& v = set.at(c);
      AlignedStimulus& a = aligned.variants[c.index()];
      a.ids = tokenizer.encode(v.text);
      std::vector<std::size_t> starts;
      std::size_t offset = 0;
      for (TokenId id : a.ids) {
        starts.push_back(offset);
        offset += tokenizer.token_bytes(id).size();
      }
      starts.push_back(offset);

      auto locate = [&](const char* name, const ByteSpan& span) {
        const bool leading_space = span.begin > 0 && v.text[span.begin - 1] == ' ';
        const std::size_t begin = span.begin - (leading_space ? 1 : 0);
        const auto expected = tokenizer.single_token_id(v.word(span), leading_space);
        for (std::size_t t = 0; t + 1 < starts.size(); ++t) {
          if (starts[t] == begin && starts[t + 1] == span.end && a.ids[t] == *expected) {
            return static_cast<int>(t);
          }
        }
        std::string near;
        for (std::size_t t = 0; t + 1 < starts.size(); ++t) {
          if (starts[t + 1] > begin && starts[t] < span.end + 1) {
            near += " [" + std::to_string(starts[t]) + "," + std::to_string(starts[t + 1]) + ")=\"" +
                    tokenizer.token_bytes(a.ids[t]) + "\"";
          }
        }
        throw AlignmentError("set " + set.set_id + ", " + c.label() + ": " + name + " span [" +
                             std::to_string(span.begin) + ", " + std::to_string(span.end) +
                             ") does not match a token boundary; overlapping tokens:" + near);
      };
      a.dependent_tok = locate("dependent", v.dependent);
      a.distractor_tok = locate("distractor", v.distractor);
      a.verb_tok = locate("verb", v.verb);
    }
    result.aligned.push_back(std::move(aligned));
  }
  return result;
}

std::vector<std::string> load_corpus(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open corpus " + file.string());
  std::vector<std::string> sentences;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!blank(line)) sentences.push_back(line);
  }
  if (sentences.empty()) throw ConfigError("corpus " + file.string() + " contains no sentences");
  return sentences;
}

std::vector<HumanConditionSummary> load_human_summary(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open " + file.string());
  std::vector<HumanConditionSummary> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (blank(line)) continue;
    if (line_no == 1 && line.rfind("condition", 0) == 0) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    auto where = [&] { return file.string() + ":" + std::to_string(line_no) + ": "; };
    if (cells.size() != 3) throw ParseError(where() + "expected condition,mean,se");
    try {
      HumanConditionSummary row;
      row.condition = Condition::parse(cells[0]);
      std::size_t used = 0;
      row.mean = std::stod(cells[1], &used);
      if (used != cells[1].size()) throw std::invalid_argument("mean");
      row.se = std::stod(cells[2], &used);
      if (used != cells[2].size()) throw std::invalid_argument("se");
      rows.push_back(row);
    } catch (const std::exception& e) {
      throw ParseError(where() + e.what());
    }
  }
  return rows;
}

}  // namespace headprobe
