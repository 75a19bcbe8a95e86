#pragma once

#include <array>
#include <compare>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "headprobe/tokenizer.hpp"

namespace headprobe {

/// One cell of the 2x2 design. Canonical order (a)-(d):
/// pl-pl, pl-impl, impl-pl, impl-impl (dependent first, distractor second).
struct Condition {
  bool dependent_plausible = true;
  bool distractor_plausible = true;

  auto operator<=>(const Condition&) const = default;

  /// 0..3 in canonical order.
  int index() const { return (dependent_plausible ? 0 : 2) + (distractor_plausible ? 0 : 1); }
  /// "pl-pl", "pl-impl", "impl-pl" or "impl-impl".
  std::string label() const;
  static Condition from_index(int i) { return {i < 2, i % 2 == 0}; }
  /// Throws ConfigError on an unknown label.
  static Condition parse(std::string_view label);
  static std::array<Condition, 4> all() {
    return {from_index(0), from_index(1), from_index(2), from_index(3)};
  }
};

/// Half-open byte range into a sentence's UTF-8 text.
struct ByteSpan {
  std::size_t begin = 0;
  std::size_t end = 0;

  bool operator==(const ByteSpan&) const = default;
};

struct SentenceVariant {
  std::string text;
  ByteSpan dependent;
  ByteSpan distractor;
  ByteSpan verb;

  std::string_view word(const ByteSpan& s) const {
    return std::string_view(text).substr(s.begin, s.end - s.begin);
  }
};

struct StimulusSet {
  std::string set_id;
  std::array<SentenceVariant, 4> variants;  // indexed by Condition::index()

  const SentenceVariant& at(Condition c) const { return variants[c.index()]; }
};

/// Reads the stimulus JSON (see docs/formats.md). An empty file yields an
/// empty list. Throws ConfigError if the file cannot be opened and
/// IngestionError (naming set_id and field) on schema or invariant violations.
std::vector<StimulusSet> load_stimuli(const std::filesystem::path& file);

/// Parses stimulus JSON already in memory; `source` is used in messages.
std::vector<StimulusSet> parse_stimuli(std::string_view json_text, std::string_view source = "<memory>");

struct AlignedStimulus {
  std::vector<TokenId> ids;
  int dependent_tok = 0;
  int distractor_tok = 0;
  int verb_tok = 0;
};

struct AlignedSet {
  std::string set_id;
  std::array<AlignedStimulus, 4> variants;  // indexed by Condition::index()

  const AlignedStimulus& at(Condition c) const { return variants[c.index()]; }
};

struct Exclusion {
  std::string set_id;
  std::string reason;
};

struct AlignmentResult {
  std::vector<AlignedSet> aligned;  // input order
  std::vector<Exclusion> excluded;
};

/// Drops every set in which any target word of any variant is not a single
/// token, then maps byte spans to token positions. Throws AlignmentError
/// when a single-token word does not fall on a token boundary in context.
AlignmentResult align_and_filter(const std::vector<StimulusSet>& sets, const Tokenizer& tokenizer);

/// Non-blank lines in order. Throws ConfigError if the file is missing or
/// holds no sentences.
std::vector<std::string> load_corpus(const std::filesystem::path& file);

struct HumanConditionSummary {
  Condition condition;
  double mean = 0.0;
  double se = 0.0;
};

/// CSV with header "condition,mean,se". Throws ParseError naming the line.
std::vector<HumanConditionSummary> load_human_summary(const std::filesystem::path& file);

}  // namespace headprobe
